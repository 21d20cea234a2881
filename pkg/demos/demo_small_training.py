"""A tiny end-to-end training session with the scripted operator.

Twenty episodes is nowhere near convergence; this demo shows the
plumbing: corrections fill the notebook, losses flow, stats land on
disk, and the saved policy evaluates cleanly.

Run: python3 demos/demo_small_training.py
"""

import tempfile
from pathlib import Path

from parkbench.harness import TrainConfig, read_stats, run_training


def main():
    out = Path(tempfile.mkdtemp(prefix="parkbench-demo-"))
    config = TrainConfig(scenario="open-lot", episodes=20, max_env_steps=None,
                         seed=1, out_dir=str(out), intervenor="scripted",
                         warmup_steps=300, update_start_steps=200,
                         eval_trials=10, assist_every=4)
    print(f"training 20 episodes into {out} ...\n")
    summary = run_training(config)

    print("=== Summary ===\n")
    print(f"episodes:        {summary['episodes']}")
    print(f"env steps:       {summary['env_steps']}")
    print(f"episode endings: {summary['statuses']}")
    print(f"regions banked:  {summary['regions']}")
    print(f"learner updates: {summary['updates']}")
    ev = summary["eval"]
    print(f"eval (10 trials): PSR {ev['psr']:.0f}%  PCR {ev['pcr']:.0f}%  "
          f"PTR {ev['ptr']:.0f}%  PBR {ev['pbr']:.0f}%  gear shifts {ev['ngs']:.1f}")

    records, skipped = read_stats(out / "stats.jsonl")
    episodes = [r for r in records if r["type"] == "episode"]
    print(f"\nstats stream: {len(records)} records ({len(episodes)} episode lines, "
          f"{skipped} corrupt)")
    print("artifacts:", ", ".join(sorted(p.name for p in out.iterdir())))


if __name__ == "__main__":
    main()
