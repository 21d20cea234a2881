"""Pilot run for the directional comparison: one seed, both arms."""

import json
import sys
import time

from parkbench.harness.training import TrainConfig, run_training

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 50_000

for arm in ("scripted", "none"):
    t0 = time.time()
    cfg = TrainConfig(scenario="open-lot", episodes=None, max_env_steps=steps,
                      seed=seed, out_dir=f"/tmp/pilot/{arm}-s{seed}",
                      intervenor=arm, warmup_steps=1500, update_start_steps=1000,
                      assist_every=7, eval_trials=50, max_retries=1)
    summary = run_training(cfg)
    summary["arm"] = arm
    summary["seed"] = seed
    summary["minutes"] = round((time.time() - t0) / 60, 1)
    print(json.dumps(summary), flush=True)
