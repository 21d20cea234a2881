import json
import math

import numpy as np
import pytest

from parkbench.env import Mode, ParkingEnv, TerminationStatus
from parkbench.errors import SchemaError
from parkbench.geometry import Pose2D
from parkbench.harness import (
    BUILTIN_SCENARIOS,
    ScriptedCorrector,
    ScriptedIntervenor,
    StatsLogger,
    TrainConfig,
    builtin_scenario,
    count_gear_shifts,
    load_scenario,
    read_stats,
    run_evaluation,
    run_training,
    save_scenario,
)
from parkbench.harness.cli import main as cli_main
from parkbench.harness.scenario import scenario_to_dict
from parkbench.replay import MistakeNotebook
from parkbench.vehicle import Action, VehicleParams


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def test_builtin_scenarios_load_and_build():
    for name in BUILTIN_SCENARIOS:
        scenario = builtin_scenario(name)
        scene = scenario.build_scene()
        assert len(scene.slots) >= 1
        assert scene.esdf.values.min() == 0.0  # walls rasterized


def test_minimal_scenario_all_clear_field(tmp_path):
    data = {
        "schema_version": "1.0",
        "name": "minimal",
        "units": {"angle": "radians", "length": "meters"},
        "boundary": [[-9, -9], [9, -9], [9, 9], [-9, 9]],
        "obstacles": [],
        "slots": [{"heading": 0.0,
                   "vertices": [[-2.7, -1.35], [2.7, -1.35], [2.7, 1.35], [-2.7, 1.35]]}],
        "vehicle": {"wheelbase": 2.7, "length": 4.5, "width": 1.9,
                    "rear_overhang": 1.0, "max_steer": 0.6, "max_speed": 1.5},
        "grid_resolution": 0.25,
        "seed": 0,
    }
    path = tmp_path / "minimal.json"
    path.write_text(json.dumps(data))
    scenario = load_scenario(path)
    scene = scenario.build_scene()
    # no obstacles: interior cells far from the walls read fully clear
    from parkbench.geometry import esdf_query
    assert esdf_query(scene.esdf, (0.0, 0.0)) == 1.0


def test_self_intersecting_obstacle_error_names_polygon(tmp_path):
    data = {
        "schema_version": "1.0",
        "name": "bad",
        "units": {"angle": "radians", "length": "meters"},
        "boundary": [[-9, -9], [9, -9], [9, 9], [-9, 9]],
        "obstacles": [{"name": "bowtie",
                       "vertices": [[0, 0], [2, 2], [2, 0], [0, 2]]}],
        "slots": [{"heading": 0.0,
                   "vertices": [[-2.7, -1.35], [2.7, -1.35], [2.7, 1.35], [-2.7, 1.35]]}],
        "vehicle": {"wheelbase": 2.7, "length": 4.5, "width": 1.9,
                    "rear_overhang": 1.0, "max_steer": 0.6, "max_speed": 1.5},
        "grid_resolution": 0.25,
        "seed": 0,
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError) as err:
        load_scenario(path)
    assert "bowtie" in str(err.value)


def test_schema_errors_carry_field_locations(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"schema_version": "1.0", "name": "x"}))
    with pytest.raises(SchemaError) as err:
        load_scenario(path)
    assert "boundary" in str(err.value)
    path.write_text("{not json")
    with pytest.raises(SchemaError) as err:
        load_scenario(path)
    assert "line 1" in str(err.value)


def test_newer_major_version_rejected(tmp_path):
    scenario = builtin_scenario("open-lot")
    data = scenario_to_dict(scenario)
    data["schema_version"] = "2.0"
    path = tmp_path / "future.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError) as err:
        load_scenario(path)
    assert "schema_version" in str(err.value)


def test_scenario_roundtrip_is_canonical(tmp_path):
    scenario = builtin_scenario("open-lot")
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_scenario(scenario, p1)
    save_scenario(load_scenario(p1), p2)
    assert p1.read_text() == p2.read_text()


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def test_stats_roundtrip(tmp_path):
    path = tmp_path / "stats.jsonl"
    records = [{"type": "step", "i": i, "x": i * 0.5} for i in range(20)]
    with StatsLogger(path) as logger:
        for r in records:
            logger.log(r)
    back, skipped = read_stats(path)
    assert back == records
    assert skipped == 0


def test_stats_skips_corrupt_lines(tmp_path):
    path = tmp_path / "stats.jsonl"
    with StatsLogger(path) as logger:
        logger.log({"a": 1})
        logger.log({"b": 2})
    raw = path.read_text().splitlines()
    raw.insert(1, "{corrupt!!")
    path.write_text("\n".join(raw) + "\n")
    back, skipped = read_stats(path)
    assert len(back) == 2
    assert skipped == 1


# ---------------------------------------------------------------------------
# evaluation metrics
# ---------------------------------------------------------------------------

def test_gear_shift_counting():
    assert count_gear_shifts([1.0, 1.0, -1.0, -1.0, 1.0]) == 2
    assert count_gear_shifts([1.0, 0.005, -1.0]) == 1  # hysteresis skips near-zero
    assert count_gear_shifts([0.0, 0.0]) == 0
    assert count_gear_shifts([-0.5, -0.2, -0.9]) == 0


def test_wall_policy_gives_full_collision_rate(open_scene):
    metrics = run_evaluation(open_scene, lambda obs: Action(0.0, 1.5),
                             n_trials=10, seed=3)
    # always driving straight at full speed: every trial ends in some failure,
    # never a success
    assert metrics.psr == 0.0
    assert metrics.pcr > 0.0
    assert metrics.psr + metrics.pcr + metrics.ptr + metrics.pbr == pytest.approx(100.0)


def test_metric_partition_invariant(open_scene):
    rng = np.random.default_rng(5)

    def jitter_policy(obs):
        return Action(rng.uniform(-0.6, 0.6), rng.uniform(-1.5, 1.5))

    metrics = run_evaluation(open_scene, jitter_policy, n_trials=25, seed=11)
    assert metrics.psr + metrics.pcr + metrics.ptr + metrics.pbr == pytest.approx(100.0)
    assert len(metrics.trials) == 25
    statuses = {t["status"] for t in metrics.trials}
    assert statuses <= {"arrived", "collision", "timeout", "oob"}


# ---------------------------------------------------------------------------
# scripted corrector
# ---------------------------------------------------------------------------

def corrector_env(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=0)
    return env, ScriptedCorrector(open_scene, env.params, env.config)


def place(env, pose):
    import dataclasses
    env._state = dataclasses.replace(env.state, pose=pose)
    env._obs_cache = env._observe(env._state)


def test_corrector_parks_from_canonical_offsets(open_scene):
    env, corr = corrector_env(open_scene)
    slot = open_scene.slots[0]
    axis = np.array([math.cos(slot.heading), math.sin(slot.heading)])
    lateral = np.array([-axis[1], axis[0]])
    for lat_sign in (1.0, -1.0):
        env.reset(slot_index=0, seed=1)
        pos = slot.center + 5.0 * axis + lat_sign * 2.0 * lateral
        place(env, Pose2D(pos[0], pos[1], slot.heading + lat_sign * math.radians(30)))
        corr.reset(0)
        status = None
        for _ in range(120):
            t = env.step(corr.action(env.state.pose))
            if t.done:
                status = t.status
                break
        assert status is TerminationStatus.ARRIVED


def test_corrector_actions_always_bounded(open_scene):
    env, corr = corrector_env(open_scene)
    env.reset(slot_index=0, seed=9)
    corr.reset(0)
    for _ in range(120):
        act = corr.action(env.state.pose)
        assert abs(act.delta) <= env.params.max_steer + 1e-12
        assert abs(act.v) <= env.params.max_speed + 1e-12
        if env.step(act).done:
            break


def test_corrector_pure_reverse_when_aligned(open_scene):
    env, corr = corrector_env(open_scene)
    slot = open_scene.slots[0]
    axis = np.array([math.cos(slot.heading), math.sin(slot.heading)])
    env.reset(slot_index=0, seed=13)
    pos = slot.center + 5.0 * axis
    place(env, Pose2D(pos[0], pos[1], slot.heading))
    corr.reset(0)
    assert corr.aligned(env.state.pose)
    actions = []
    for _ in range(120):
        a = corr.action(env.state.pose)
        actions.append(a)
        if env.step(a).done:
            break
    assert env.status is TerminationStatus.ARRIVED
    assert all(a.v < 0 for a in actions)            # straight reverse
    assert all(abs(a.delta) < 0.2 for a in actions)


def test_corrector_recommends_discard_when_boxed_in():
    from conftest import rect
    from parkbench.env import ParkingScene, ParkingSlot

    # a sealed pocket around the spawn area: the slot is unreachable
    boundary = rect(0, 0, 12, 12)
    walls = [rect(3.0, 0.0, 0.4, 11.5)]  # fence splitting the lot
    slot = ParkingSlot(rect(8.0, 0.0, 2.7, 1.35), heading=math.pi)
    scene = ParkingScene(boundary, walls, [slot], resolution=0.1)
    env = ParkingEnv(scene, VehicleParams(), seed=0)
    corr = ScriptedCorrector(scene, env.params, env.config, max_expansions=2000)
    env.reset(slot_index=0, seed=3)
    # force a spawn west of the fence
    place(env, Pose2D(-5.0, 0.0, 0.0))
    corr.reset(0)
    corr.action(env.state.pose)
    assert corr.recommends_discard


# ---------------------------------------------------------------------------
# training driver
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_training_smoke_and_determinism(tmp_path):
    def run(out):
        cfg = TrainConfig(scenario="open-lot", episodes=3, max_env_steps=None,
                          seed=7, out_dir=str(out), intervenor="scripted",
                          warmup_steps=100, update_start_steps=50,
                          eval_trials=0, assist_every=2)
        return run_training(cfg)

    s1 = run(tmp_path / "a")
    s2 = run(tmp_path / "b")
    assert s1 == s2
    stats_a = (tmp_path / "a" / "stats.jsonl").read_text()
    stats_b = (tmp_path / "b" / "stats.jsonl").read_text()
    # identical streams apart from the differing out_dir in the config line
    lines_a = stats_a.splitlines()[1:]
    lines_b = stats_b.splitlines()[1:]
    assert lines_a == lines_b
    records, skipped = read_stats(tmp_path / "a" / "stats.jsonl")
    assert skipped == 0
    episodes = [r for r in records if r["type"] == "episode"]
    assert len(episodes) == 3
    assert all("status" in e for e in episodes)
    assert (tmp_path / "a" / "params.bin").exists()
    assert (tmp_path / "a" / "notebook.bin").exists()
    # buffer sizes in the stream are consistent with commit events
    last = {"rl": 0, "human": 0, "regions": 0}
    for r in records:
        if r["type"] in ("step", "episode"):
            assert r["rl_size"] >= 0 and r["regions"] >= last["regions"] - 1
            last = {"rl": r["rl_size"], "human": r["human_size"], "regions": r["regions"]}


@pytest.mark.slow
def test_training_without_intervenor_fills_rl_buffer(tmp_path):
    cfg = TrainConfig(scenario="open-lot", episodes=3, max_env_steps=None,
                      seed=9, out_dir=str(tmp_path / "none"), intervenor="none",
                      warmup_steps=100, update_start_steps=1000, eval_trials=0)
    summary = run_training(cfg)
    assert summary["regions"] == 0
    assert summary["human_size"] == 0
    assert summary["rl_size"] > 0  # fallback path keeps all autonomous data


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=31)
    with pytest.raises(ValueError):
        TrainConfig(intervenor="magic")
    with pytest.raises(ValueError):
        TrainConfig(episodes=None, max_env_steps=None)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_scenario_check(capsys):
    assert cli_main(["scenario-check", "open-lot"]) == 0
    out = capsys.readouterr().out
    assert "open-lot" in out and "slots" in out


def test_cli_replay_dump(tmp_path, capsys):
    from test_replay import fill

    nb = MistakeNotebook()
    fill(nb, n_rl=5, n_human=2)
    path = tmp_path / "nb.bin"
    nb.save(path)
    assert cli_main(["replay-dump", str(path)]) == 0
    out = capsys.readouterr().out
    assert '"rl_size": 5' in out


@pytest.mark.slow
def test_cli_train_and_eval(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PARKBENCH_OUT", str(tmp_path))
    rc = cli_main(["train", "--episodes", "2", "--max-env-steps", "600",
                   "--warmup-steps", "50", "--update-start-steps", "100",
                   "--eval-trials", "2", "--seed", "3",
                   "--out", str(tmp_path / "cli-run")])
    assert rc == 0
    assert (tmp_path / "cli-run" / "params.bin").exists()
    capsys.readouterr()
    rc = cli_main(["eval", str(tmp_path / "cli-run" / "params.bin"),
                   "--trials", "3", "--seed", "1"])
    assert rc == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["psr"] + metrics["pcr"] + metrics["ptr"] + metrics["pbr"] == pytest.approx(100.0)
