"""Policy evaluation: trial metrics over fresh episodes with mean actions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import EnvConfig, ParkingEnv, ParkingScene, RewardConfig, TerminationStatus
from ..vehicle import Action, VehicleParams


@dataclass
class EvalMetrics:
    """Success/collision/timeout/boundary rates (percent) and mean gear shifts.

    Every trial ends with exactly one status, so the four rates always
    sum to 100.
    """

    psr: float
    pcr: float
    ptr: float
    pbr: float
    ngs: float
    trials: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"psr": self.psr, "pcr": self.pcr, "ptr": self.ptr,
                "pbr": self.pbr, "ngs": self.ngs, "trials": len(self.trials)}


def count_gear_shifts(velocities, hysteresis: float = 0.01) -> int:
    """Sign changes of the commanded velocity, ignoring near-zero commands."""
    shifts = 0
    prev = 0
    for v in velocities:
        if abs(v) <= hysteresis:
            continue
        gear = 1 if v > 0 else -1
        if prev != 0 and gear != prev:
            shifts += 1
        prev = gear
    return shifts


def run_evaluation(scene: ParkingScene, policy, n_trials: int = 200, seed: int = 0,
                   params: VehicleParams | None = None,
                   env_config: EnvConfig | None = None,
                   reward: RewardConfig | None = None,
                   slot_index: int | None = None) -> EvalMetrics:
    """Run ``n_trials`` independent episodes with the given policy.

    ``policy`` maps an observation vector to an :class:`Action`; pass the
    learner's deterministic mean-action head for standard evaluation.
    Each trial uses a fresh environment seeded from ``seed`` and samples
    its slot unless ``slot_index`` pins one.
    """
    counts = dict.fromkeys(TerminationStatus, 0)
    trials = []
    for k in range(n_trials):
        env = ParkingEnv(scene, params or VehicleParams(), env_config, reward,
                         seed=seed + k)
        obs = env.reset(slot_index=slot_index)
        velocities = []
        steps = 0
        while not env.terminated:
            action = policy(obs)
            t = env.step(action)
            velocities.append(t.action.v)
            obs = t.next_obs
            steps += 1
        counts[env.status] += 1
        trials.append({"trial": k, "status": env.status.value, "steps": steps,
                       "gear_shifts": count_gear_shifts(velocities)})
    n = float(n_trials)
    ngs = float(np.mean([t["gear_shifts"] for t in trials])) if trials else 0.0
    return EvalMetrics(
        psr=100.0 * counts[TerminationStatus.ARRIVED] / n,
        pcr=100.0 * counts[TerminationStatus.COLLISION] / n,
        ptr=100.0 * counts[TerminationStatus.TIMEOUT] / n,
        pbr=100.0 * counts[TerminationStatus.OOB] / n,
        ngs=ngs,
        trials=trials,
    )
