"""Pair sampling from the multi-level replay memory, checked empirically.

Run: python3 demos/demo_replay_sampling.py
"""

import numpy as np

from parkbench.env import Mode, Transition
from parkbench.replay import MistakeNotebook
from parkbench.vehicle import Action


def fake_transition(mode):
    rng = np.random.default_rng(0)
    return Transition(obs=rng.uniform(-1, 1, 44), action=Action(0.1, 0.5),
                      reward=0.0, done=False, next_obs=rng.uniform(-1, 1, 44),
                      mode=mode)


def main():
    nb = MistakeNotebook()
    for _ in range(100):
        nb.push_normal(fake_transition(Mode.RL), "rl")
    for _ in range(50):
        nb.push_normal(fake_transition(Mode.HUMAN), "human")
    nb.commit_region(1,
                     [fake_transition(Mode.RL) for _ in range(30)],
                     [fake_transition(Mode.HUMAN_CORR) for _ in range(20)],
                     [])

    w_normal, region_weights = nb.region_weights()
    total = w_normal + sum(region_weights.values())
    print("=== Region weights (proportional to size) ===\n")
    print(f"normal region: {w_normal}  (100 rl + 50 human)")
    print(f"region 1:      {region_weights[1]}  (30 failed + 20 fix)")
    print(f"\nexpected P(normal) = {w_normal / total:.3f}, P(region 1) = "
          f"{region_weights[1] / total:.3f}")

    rng = np.random.default_rng(42)
    n = 50_000
    normal_hits = 0
    for _ in range(n):
        first, second = nb.sample_pair(rng)
        assert first.mode is Mode.RL
        if second.mode is Mode.HUMAN:
            normal_hits += 1
        else:
            assert second.mode in (Mode.RL_CORR, Mode.HUMAN_CORR)
    print(f"\nempirical P(normal) over {n} draws: {normal_hits / n:.3f}")

    print("\n=== Batches interleave the pairs ===\n")
    batch = nb.sample_batch(8, rng)
    for i in range(0, 8, 2):
        print(f"  pair {i // 2}: ({batch[i].mode.value}, {batch[i + 1].mode.value})")

    print("\n=== With nothing but rl data the sampler falls back ===\n")
    plain = MistakeNotebook()
    for _ in range(20):
        plain.push_normal(fake_transition(Mode.RL), "rl")
    fallback = plain.sample_batch(8, rng)
    print(f"  all {len(fallback)} draws mode=rl:",
          all(t.mode is Mode.RL for t in fallback))


if __name__ == "__main__":
    main()
