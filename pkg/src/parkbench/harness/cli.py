"""Command-line surface: train, eval, serve, replay-dump, scenario-check.

The output root defaults to ``./runs`` and can be overridden with the
``PARKBENCH_OUT`` environment variable; per-run directories live inside.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..env import RewardConfig
from ..learner import LearnerConfig, load_params
from ..replay import MistakeNotebook
from .evaluation import run_evaluation
from .scenario import BUILTIN_SCENARIOS, resolve_scenario
from .training import TrainConfig, run_training


def _out_root() -> Path:
    return Path(os.environ.get("PARKBENCH_OUT", "runs"))


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="open-lot",
                   help=f"builtin name ({', '.join(BUILTIN_SCENARIOS)}) or a file path")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--max-env-steps", type=int, default=50_000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="run directory (default <root>/<name>)")
    p.add_argument("--intervenor", choices=("none", "scripted", "interactive"),
                   default="scripted")
    p.add_argument("--n-min", type=int, default=5)
    p.add_argument("--t-tol", type=int, default=120)
    p.add_argument("--warmup-steps", type=int, default=1500)
    p.add_argument("--update-start-steps", type=int, default=1000)
    p.add_argument("--max-retries", type=int, default=1)
    p.add_argument("--assist-every", type=int, default=2)
    p.add_argument("--eval-trials", type=int, default=50)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--tau", type=float, default=0.005)
    p.add_argument("--lambda-ae", type=float, default=1.0)
    p.add_argument("--target-entropy", type=float, default=-2.0)
    p.add_argument("--w-reward", type=float, default=0.1)


def _config_from_args(args, run_name: str) -> TrainConfig:
    out = args.out or str(_out_root() / run_name)
    return TrainConfig(
        scenario=args.scenario,
        episodes=args.episodes,
        max_env_steps=args.max_env_steps,
        batch_size=args.batch_size,
        seed=args.seed,
        out_dir=out,
        intervenor=args.intervenor,
        n_min=args.n_min,
        t_tol=args.t_tol,
        warmup_steps=args.warmup_steps,
        update_start_steps=args.update_start_steps,
        max_retries=args.max_retries,
        assist_every=args.assist_every,
        eval_trials=args.eval_trials,
        checkpoint_every=args.checkpoint_every,
        learner=LearnerConfig(lr=args.lr, gamma=args.gamma, tau=args.tau,
                              lambda_ae=args.lambda_ae,
                              target_entropy=args.target_entropy),
        reward=RewardConfig(w_reward=args.w_reward),
    )


def cmd_train(args) -> int:
    config = _config_from_args(args, f"train-{args.scenario}-seed{args.seed}")
    summary = run_training(config)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    scenario = resolve_scenario(args.scenario)
    scene = scenario.build_scene()
    learner = load_params(args.params)
    metrics = run_evaluation(scene, lambda o: learner.act(o, deterministic=True),
                             n_trials=args.trials, seed=args.seed,
                             params=scenario.vehicle)
    print(json.dumps(metrics.as_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    from .session import serve_session  # websockets import deferred to use

    config = _config_from_args(args, f"serve-{args.scenario}-seed{args.seed}")
    if args.intervenor != "interactive":
        config = TrainConfig(**{**config.__dict__, "intervenor": "interactive"})
    summary = serve_session(config, host=args.host, port=args.port,
                            realtime=not args.no_realtime,
                            disconnect_timeout=args.disconnect_timeout)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_replay_dump(args) -> int:
    nb = MistakeNotebook.load(args.notebook)
    stats = nb.stats()
    print(json.dumps(stats, indent=2))
    if args.regions:
        for r in nb.regions:
            print(f"region {r.episode_id}: fail={len(r.fail_rl)} "
                  f"fix_rl={len(r.fix_rl)} fix_human={len(r.fix_human)} weight={r.weight}")
    return 0


def cmd_scenario_check(args) -> int:
    scenario = resolve_scenario(args.scenario)
    scene = scenario.build_scene()
    occupied = int(scene.occupancy.cells.sum())
    total = scene.occupancy.width * scene.occupancy.height
    print(f"scenario {scenario.name!r}: OK")
    print(f"  slots:      {len(scenario.slots)}")
    print(f"  obstacles:  {len(scenario.obstacles)}")
    print(f"  grid:       {scene.occupancy.width} x {scene.occupancy.height} "
          f"at {scenario.grid_resolution} m ({100 * occupied / total:.1f}% occupied)")
    print(f"  fingerprint {scene.fingerprint[:16]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parkbench",
        description="Desk-scale parking RL workbench with correction-in-the-loop replay")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training session")
    _add_train_flags(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate saved policy parameters")
    p_eval.add_argument("params", help="path to a params.bin checkpoint")
    p_eval.add_argument("--scenario", default="open-lot")
    p_eval.add_argument("--trials", type=int, default=200)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(fn=cmd_eval)

    p_serve = sub.add_parser("serve", help="train with a live operator endpoint")
    _add_train_flags(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--no-realtime", action="store_true",
                         help="run as fast as possible instead of pacing to dt")
    p_serve.add_argument("--disconnect-timeout", type=float, default=120.0)
    p_serve.set_defaults(fn=cmd_serve)

    p_dump = sub.add_parser("replay-dump", help="inspect a saved replay notebook")
    p_dump.add_argument("notebook", help="path to a notebook.bin file")
    p_dump.add_argument("--regions", action="store_true", help="list every region")
    p_dump.set_defaults(fn=cmd_replay_dump)

    p_check = sub.add_parser("scenario-check", help="validate a scenario file")
    p_check.add_argument("scenario", help="builtin name or file path")
    p_check.set_defaults(fn=cmd_scenario_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
