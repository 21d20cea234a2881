"""Live session protocol tests with a headless scripted operator client."""

import json
import math
import threading
import time

import numpy as np
import pytest
from websockets.sync.client import connect

from parkbench.env import EnvConfig, ParkingEnv
from parkbench.geometry import Polygon, Pose2D
from parkbench.harness import TrainConfig, builtin_scenario
from parkbench.harness.corrector import ScriptedCorrector
from parkbench.harness.session import SessionServer, serve_session
from parkbench.vehicle import VehicleParams


class ServingFixture:
    """serve_session in a background thread against an ephemeral port."""

    def __init__(self, **config_overrides):
        base = dict(scenario="open-lot", episodes=None, max_env_steps=5000,
                    seed=21, intervenor="interactive", warmup_steps=10_000,
                    update_start_steps=10_000_000, eval_trials=0,
                    n_min=3, max_retries=None)
        base.update(config_overrides)
        self.config = TrainConfig(out_dir=self._tmp, **base)
        self.server = SessionServer("127.0.0.1", 0)
        self.server.start()
        self.stop_event = threading.Event()
        self.summary = None
        self.thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        self.summary = serve_session(self.config, realtime=False, lockstep=True,
                                     disconnect_timeout=3.0, decision_timeout=5.0,
                                     server=self.server, stop_event=self.stop_event)

    def start(self):
        self.thread.start()

    def stop(self):
        self.stop_event.set()
        self.server.mailbox.put({"kind": "resume"})
        self.thread.join(timeout=30)
        self.server.stop()

    @property
    def url(self):
        return f"ws://127.0.0.1:{self.server.port}"


@pytest.fixture
def serving(tmp_path):
    created = []

    def factory(**overrides):
        ServingFixture._tmp = str(tmp_path / f"serve{len(created)}")
        fx = ServingFixture(**overrides)
        created.append(fx)
        fx.start()
        return fx

    yield factory
    for fx in created:
        fx.stop()


def recv_until(ws, kind, limit=400, timeout=30):
    """Read frames until one of ``kind`` arrives; returns (msg, seen)."""
    seen = []
    for _ in range(limit):
        msg = json.loads(ws.recv(timeout=timeout))
        seen.append(msg)
        if msg["kind"] == kind:
            return msg, seen
    raise AssertionError(f"no {kind!r} within {limit} messages: "
                         f"{[m['kind'] for m in seen[-10:]]}")


def recv_state_where(ws, predicate, limit=600):
    seen = []
    for _ in range(limit):
        msg = json.loads(ws.recv(timeout=30))
        seen.append(msg)
        if msg["kind"] == "state" and predicate(msg):
            return msg, seen
    raise AssertionError(f"predicate never satisfied; last kinds: "
                         f"{[m['kind'] for m in seen[-10:]]}")


def test_connect_receives_scene_init_then_states(serving):
    fx = serving()
    with connect(fx.url) as ws:
        first = json.loads(ws.recv(timeout=30))
        assert first["kind"] == "scene_init"
        assert {"boundary", "obstacles", "slots", "vehicle_dims"} <= set(first)
        assert first["vehicle_dims"]["wheelbase"] == pytest.approx(2.7)
        state, _ = recv_until(ws, "state")
        assert {"episode", "step", "pose", "last_action", "mode", "phase",
                "reward_breakdown", "buffer_sizes"} <= set(state)


def test_take_control_reflected_in_state_stream(serving):
    fx = serving()
    with connect(fx.url) as ws:
        recv_until(ws, "state")
        ws.send(json.dumps({"kind": "take_control"}))
        msg, _ = recv_state_where(ws, lambda m: m["mode"] == "human")
        assert msg["phase"] == "autonomous"
        ws.send(json.dumps({"kind": "control", "steer": 0.0, "speed": -0.5}))
        msg, _ = recv_state_where(ws, lambda m: abs(m["last_action"][1] + 0.75) < 1e-6)
        assert msg["mode"] == "human"
        ws.send(json.dumps({"kind": "hand_back"}))
        msg, _ = recv_state_where(ws, lambda m: m["mode"] == "rl")
        assert msg["phase"] == "autonomous"


def test_illegal_event_rejected_with_error(serving):
    fx = serving()
    with connect(fx.url) as ws:
        recv_until(ws, "state")
        ws.send(json.dumps({"kind": "retry"}))  # not awaiting a decision
        msg, _ = recv_until(ws, "error")
        assert "illegal" in msg["detail"] or "retry" in msg["detail"]


def test_malformed_messages_answered_with_error(serving):
    fx = serving()
    with connect(fx.url) as ws:
        json.loads(ws.recv(timeout=30))
        ws.send("not json at all")
        msg, _ = recv_until(ws, "error", limit=50)
        assert "unparseable" in msg["detail"]
        ws.send(json.dumps({"kind": "mystery"}))
        msg, _ = recv_until(ws, "error", limit=50)
        assert "unknown" in msg["detail"]
        ws.send(json.dumps({"kind": "control", "steer": "left", "speed": 1}))
        msg, _ = recv_until(ws, "error", limit=50)
        assert "numeric" in msg["detail"]


class ProtocolOperator:
    """Headless scripted operator speaking the wire protocol."""

    def __init__(self, ws, scene_init):
        self.ws = ws
        self.params = VehicleParams(**scene_init["vehicle_dims"])
        boundary = Polygon(scene_init["boundary"])
        obstacles = [Polygon(o["vertices"]) for o in scene_init["obstacles"]]
        from parkbench.env import ParkingScene, ParkingSlot
        slots = [ParkingSlot(Polygon(s["vertices"]), s["heading"])
                 for s in scene_init["slots"]]
        self.scene = ParkingScene(boundary, obstacles, slots, resolution=0.1)
        self.corrector = ScriptedCorrector(self.scene, self.params, EnvConfig())

    def send(self, **msg):
        self.ws.send(json.dumps(msg))

    def drive_correction(self, state, slot_index=None, sabotage=False, limit=400):
        """Issue controls from the corrector until the correction ends.

        Returns the terminal state message. ``sabotage`` drives the wrong
        way to force a failed correction.
        """
        self.corrector.reset(0)
        for _ in range(limit):
            if state["kind"] == "state" and state["phase"] == "correcting":
                pose = Pose2D(*state["pose"])
                if sabotage:
                    act_delta, act_v = 0.0, 1.0  # charge forward, away or into walls
                else:
                    act = self.corrector.action(pose)
                    act_delta, act_v = act.delta, act.v
                self.send(kind="control",
                          steer=act_delta / self.params.max_steer,
                          speed=act_v / self.params.max_speed)
                if state.get("status"):
                    return state
            msg = json.loads(self.ws.recv(timeout=30))
            if msg["kind"] == "state":
                if msg["phase"] == "awaiting_decision" or msg.get("status"):
                    return msg
                state = msg
        raise AssertionError("correction did not finish")


@pytest.mark.slow
def test_full_protocol_conformance_session(serving):
    """take-control -> correct -> hand-back -> rollback-retry over the wire."""
    fx = serving(max_env_steps=100_000)
    with connect(fx.url) as ws:
        scene_init = json.loads(ws.recv(timeout=30))
        assert scene_init["kind"] == "scene_init"
        op = ProtocolOperator(ws, scene_init)

        # phase 1: take control during autonomous driving, steer a little,
        # then hand back (this refreshes the checkpoint)
        state, _ = recv_until(ws, "state")
        op.send(kind="take_control")
        state, _ = recv_state_where(ws, lambda m: m["mode"] == "human")
        for _ in range(3):
            op.send(kind="control", steer=0.2, speed=0.4)
            state, _ = recv_state_where(ws, lambda m: m["mode"] == "human")
        op.send(kind="hand_back")
        state, _ = recv_state_where(ws, lambda m: m["mode"] == "rl")
        buffers_after_handback = state["buffer_sizes"]
        assert buffers_after_handback["human"] >= 3

        # phase 2: wait for an autonomous failure and rollback into correction
        state, seen = recv_state_where(ws, lambda m: m["phase"] == "correcting",
                                       limit=3000)
        # every transition between phases respects the machine: autonomous
        # states only carry rl/human modes, correcting only *_corr
        for m in seen:
            if m["kind"] != "state":
                continue
            if m["phase"] == "autonomous":
                assert m["mode"] in ("rl", "human")
            elif m["phase"] == "correcting":
                assert m["mode"] in ("rl_corr", "human_corr")

        # phase 3: sabotage the first correction so it fails, then retry
        end = op.drive_correction(state, sabotage=True)
        assert end["phase"] == "awaiting_decision" or end.get("status") != "arrived"
        op.send(kind="retry")
        state, _ = recv_state_where(ws, lambda m: m["phase"] == "correcting")

        # phase 4: correct properly; the region must be committed
        regions_before = state["buffer_sizes"]["regions"]
        end = op.drive_correction(state)
        assert end.get("status") == "arrived"
        state, _ = recv_state_where(
            ws, lambda m: m["buffer_sizes"]["regions"] > regions_before, limit=50)


@pytest.mark.slow
def test_reconnect_mid_correction_resumes_within_two_states(serving):
    fx = serving(max_env_steps=100_000)
    with connect(fx.url) as ws:
        json.loads(ws.recv(timeout=30))
        recv_state_where(ws, lambda m: m["phase"] == "correcting", limit=3000)
        # drop the connection mid-correction; the loop must pause
    time.sleep(0.5)
    with connect(fx.url) as ws:
        first = json.loads(ws.recv(timeout=30))
        assert first["kind"] == "scene_init"
        second = json.loads(ws.recv(timeout=30))
        assert second["kind"] == "state"
        # control is live again: the loop keeps streaming states
        third = json.loads(ws.recv(timeout=30))
        assert third["kind"] in ("state", "metrics", "error")


def test_decision_honored_exactly_once(serving):
    fx = serving(max_env_steps=100_000)
    with connect(fx.url) as ws:
        scene_init = json.loads(ws.recv(timeout=30))
        op = ProtocolOperator(ws, scene_init)
        state, _ = recv_state_where(ws, lambda m: m["phase"] == "correcting",
                                    limit=3000)
        end = op.drive_correction(state, sabotage=True)
        # double-click discard: the first ends the attempt, the second must
        # be refused (no longer awaiting a decision)
        op.send(kind="discard")
        op.send(kind="discard")
        msg, _ = recv_until(ws, "error", limit=600)
        assert "discard" in msg["detail"] or "illegal" in msg["detail"]
