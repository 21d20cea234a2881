"""Training driver: wires scenario, env, replay, learner, and scheduler."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..env import EnvConfig, ParkingEnv, RewardConfig
from ..learner import LearnerConfig, SoftActorCritic, save_params
from ..replay import MistakeNotebook
from ..scheduler import CorrectionSession, SessionConfig
from ..vehicle import Action
from .corrector import ScriptedIntervenor
from .evaluation import run_evaluation
from .scenario import resolve_scenario
from .stats import StatsLogger

INTERVENOR_MODES = ("none", "scripted", "interactive")


@dataclass
class TrainConfig:
    scenario: str = "open-lot"
    episodes: int | None = None          # stop after this many episodes
    max_env_steps: int | None = 50_000   # or after this many env steps
    batch_size: int = 32
    seed: int = 0
    out_dir: str = "runs/latest"
    intervenor: str = "scripted"
    n_min: int = 5
    t_tol: int = 120
    warmup_steps: int = 1500             # uniform-random actions at the start
    update_start_steps: int = 1000       # env steps before learner updates
    max_retries: int | None = 1
    assist_every: int = 2                # scripted takeover cadence (0 = never)
    checkpoint_every: int = 0            # episodes between param snapshots (0 = only final)
    eval_trials: int = 50
    rl_capacity: int = 100_000
    human_capacity: int = 20_000
    step_log_every: int = 1
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.batch_size % 2 != 0:
            raise ValueError(f"batch_size must be even, got {self.batch_size}")
        if self.intervenor not in INTERVENOR_MODES:
            raise ValueError(f"intervenor must be one of {INTERVENOR_MODES}")
        if self.episodes is None and self.max_env_steps is None:
            raise ValueError("need at least one of episodes / max_env_steps")


class TrainingPolicy:
    """Learner policy with a uniform-random warmup phase."""

    def __init__(self, learner: SoftActorCritic, warmup_steps: int, rng: np.random.Generator):
        self.learner = learner
        self.warmup_steps = warmup_steps
        self.rng = rng
        self.calls = 0

    def __call__(self, obs) -> Action:
        self.calls += 1
        if self.calls <= self.warmup_steps:
            return Action(self.rng.uniform(-self.learner.bounds[0], self.learner.bounds[0]),
                          self.rng.uniform(-self.learner.bounds[1], self.learner.bounds[1]))
        return self.learner.act(obs)


def build_training(config: TrainConfig, intervenor=None):
    """Construct the full training stack from a config.

    Returns (session, learner, policy, intervenor, env, notebook, scenario).
    An explicit ``intervenor`` overrides the config mode (the session
    server passes its interactive one through here).
    """
    scenario = resolve_scenario(config.scenario)
    scene = scenario.build_scene()
    env_cfg = EnvConfig(t_tol=config.t_tol)
    env = ParkingEnv(scene, scenario.vehicle, env_cfg, config.reward, seed=config.seed)
    notebook = MistakeNotebook(config.rl_capacity, config.human_capacity)
    learner = SoftActorCritic(env.observation_dim,
                              (scenario.vehicle.max_steer, scenario.vehicle.max_speed),
                              config.learner, seed=config.seed + 1)
    policy = TrainingPolicy(learner, config.warmup_steps,
                            np.random.default_rng(config.seed + 2))
    if intervenor is None and config.intervenor == "scripted":
        intervenor = ScriptedIntervenor(scene, scenario.vehicle, env_cfg,
                                        assist_every=config.assist_every,
                                        assist_max_steps=60)
    session = CorrectionSession(
        env, notebook,
        SessionConfig(n_min=config.n_min, batch_size=config.batch_size,
                      max_retries=config.max_retries,
                      update_start_steps=config.update_start_steps),
        seed=config.seed + 3)
    return session, learner, policy, intervenor, env, notebook, scenario


def run_training(config: TrainConfig, intervenor=None, on_step=None, on_episode=None,
                 on_reject=None) -> dict:
    """Train per the config; writes stats, checkpoints, and the replay dump.

    Returns a summary dict (also written to ``summary.json``). Partial
    outputs are flushed even when the run is interrupted.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    session, learner, policy, active, env, notebook, scenario = build_training(
        config, intervenor)
    session.on_reject = on_reject
    stats = StatsLogger(out / "stats.jsonl")
    cfg_record = asdict(config)
    cfg_record["learner"]["hidden"] = list(cfg_record["learner"]["hidden"])
    stats.log({"type": "config", **cfg_record})

    episodes_done = 0
    status_counts: dict[str, int] = {}

    def step_callback(sess, transition, learner_report):
        if on_step:
            on_step(sess, transition, learner_report)
        if config.step_log_every and sess.total_env_steps % config.step_log_every == 0:
            w_normal, region_w = notebook.region_weights()
            total_w = w_normal + sum(region_w.values())
            normal_valid = len(notebook.rl) > 0 and len(notebook.human) > 0
            record = {
                "type": "step",
                "episode": sess.episode_counter,
                "env_step": sess.total_env_steps,
                "mode": transition.mode,
                "reward": transition.reward,
                "done": transition.done,
                "rl_size": len(notebook.rl),
                "human_size": len(notebook.human),
                "regions": len(notebook.regions),
                "p_normal": (w_normal / total_w) if (normal_valid and total_w) else 0.0,
            }
            if learner_report is not None:
                record.update({k: learner_report[k] for k in
                               ("j_q1", "j_q2", "j_pi", "j_ae", "alpha")
                               if k in learner_report})
            stats.log(record)

    session.on_step = step_callback

    try:
        while True:
            if config.episodes is not None and episodes_done >= config.episodes:
                break
            if config.max_env_steps is not None and session.total_env_steps >= config.max_env_steps:
                break
            report = session.drive_episode(policy, active, learner)
            episodes_done += 1
            status = report.status.value if report.status else "none"
            status_counts[status] = status_counts.get(status, 0) + 1
            stats.log({
                "type": "episode",
                "episode": report.episode_id,
                "status": status,
                "steps": report.steps,
                "env_steps": report.env_steps,
                "correction_steps": report.correction_steps,
                "gear_shifts": report.gear_shifts,
                "regions_committed": report.regions_committed,
                "retries": report.retries,
                "discarded": report.discarded,
                "rl_size": len(notebook.rl),
                "human_size": len(notebook.human),
                "regions": len(notebook.regions),
                "total_env_steps": session.total_env_steps,
            })
            if on_episode:
                on_episode(session, report)
            if config.checkpoint_every and episodes_done % config.checkpoint_every == 0:
                save_params(learner, out / f"params_ep{episodes_done}.bin")
    finally:
        stats.close()
        save_params(learner, out / "params.bin")
        notebook.save(out / "notebook.bin")

    metrics = None
    if config.eval_trials:
        scene = env.scene
        metrics = run_evaluation(scene, lambda o: learner.act(o, deterministic=True),
                                 n_trials=config.eval_trials, seed=config.seed + 10_000,
                                 params=scenario.vehicle,
                                 env_config=env.config, reward=config.reward)
    summary = {
        "episodes": episodes_done,
        "env_steps": session.total_env_steps,
        "statuses": status_counts,
        "rl_size": len(notebook.rl),
        "human_size": len(notebook.human),
        "regions": len(notebook.regions),
        "updates": learner.updates_done,
        "eval": metrics.as_dict() if metrics else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
