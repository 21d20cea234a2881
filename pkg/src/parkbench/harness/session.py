"""Live operator session: a WebSocket endpoint around the training loop.

Message protocol (JSON text frames, all numbers decimal, discriminated
by ``kind``):

server -> client
    scene_init  {boundary, obstacles, slots, vehicle_dims}
    state       {episode, step, pose, last_action, mode, phase,
                 reward_breakdown, buffer_sizes, status?}
    metrics     {losses, alpha, psr_so_far}
    error       {detail}

client -> server
    control     {steer: [-1,1], speed: [-1,1]}   (scaled by vehicle bounds)
    take_control | release_to_rl | hand_back | retry | discard
    pause | resume

Commands land in the scheduler's mailbox and are applied exactly once at
the next step boundary; events illegal for the current phase are refused
with an ``error`` frame and have no effect. On connect (or reconnect) the
server replays ``scene_init`` and the latest ``state`` so a client can
rebuild its view immediately. If the client disconnects mid-correction
the loop pauses until reconnect or a configurable timeout, after which
the attempt is discarded.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
import time

from websockets.asyncio.server import serve as ws_serve

from ..env import Mode, TerminationStatus
from ..scheduler import EVENTS, Intervenor, Mailbox, Phase
from ..vehicle import Action
from .stats import _plain
from .training import TrainConfig, build_training, run_training

log = logging.getLogger(__name__)

_CLIENT_KINDS = set(EVENTS) | {"control", "pause", "resume"}


class SessionServer:
    """WebSocket fan-out plus a thread-safe inbox for operator commands."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.port = port
        self.mailbox = Mailbox()
        self.scene_init: dict | None = None
        self._last_state: str | None = None
        self._clients: set = set()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stop: asyncio.Future | None = None
        self._started = threading.Event()
        self._thread: threading.Thread | None = None

    # ------------------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="session-server", daemon=True)
        self._thread.start()
        if not self._started.wait(10):
            raise RuntimeError("session server failed to start")

    def stop(self) -> None:
        if self._loop and self._stop and not self._stop.done():
            self._loop.call_soon_threadsafe(self._stop.set_result, None)
        if self._thread:
            self._thread.join(timeout=5)

    @property
    def has_clients(self) -> bool:
        return bool(self._clients)

    def send(self, message: dict) -> None:
        """Broadcast to all clients (thread-safe; drops when loop is down)."""
        data = json.dumps(_plain(message))
        if message.get("kind") == "state":
            self._last_state = data
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._broadcast, data)

    # ------------------------------------------------------------------

    def _run(self) -> None:
        asyncio.run(self._main())

    async def _main(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._stop = self._loop.create_future()
        async with ws_serve(self._handler, self.host, self.port) as server:
            self.port = server.sockets[0].getsockname()[1]
            self._started.set()
            await self._stop

    def _broadcast(self, data: str) -> None:
        for queue in list(self._clients):
            if not queue.full():
                queue.put_nowait(data)

    async def _handler(self, ws) -> None:
        # every frame for one client flows through one queue/sender pair,
        # which keeps per-connection ordering strict
        while self.scene_init is None:
            await asyncio.sleep(0.02)
        outbox: asyncio.Queue = asyncio.Queue(maxsize=4096)
        try:
            await ws.send(json.dumps(_plain(self.scene_init)))
            if self._last_state is not None:
                await ws.send(self._last_state)
            self._clients.add(outbox)
            sender = asyncio.ensure_future(self._sender(ws, outbox))
            try:
                async for raw in ws:
                    self._receive(outbox, raw)
            finally:
                self._clients.discard(outbox)
                sender.cancel()
        except Exception:
            self._clients.discard(outbox)

    @staticmethod
    async def _sender(ws, outbox: asyncio.Queue) -> None:
        try:
            while True:
                await ws.send(await outbox.get())
        except Exception:
            pass  # dead client; the handler cleans up

    def _receive(self, outbox: asyncio.Queue, raw) -> None:
        def reply_error(detail: str):
            if not outbox.full():
                outbox.put_nowait(json.dumps({"kind": "error", "detail": detail}))

        try:
            msg = json.loads(raw)
            kind = msg.get("kind")
        except (json.JSONDecodeError, AttributeError):
            reply_error("unparseable message")
            return
        if kind not in _CLIENT_KINDS:
            reply_error(f"unknown kind {kind!r}")
            return
        if kind == "control":
            steer = msg.get("steer")
            speed = msg.get("speed")
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in (steer, speed)):
                reply_error("control needs numeric steer/speed")
                return
            msg = {"kind": "control",
                   "steer": max(-1.0, min(1.0, float(steer))),
                   "speed": max(-1.0, min(1.0, float(speed)))}
        self.mailbox.put(msg)


class InteractiveIntervenor(Intervenor):
    """Routes live operator commands from the server into the episode loop."""

    enabled = True

    def __init__(self, server: SessionServer, params, dt: float = 0.1,
                 realtime: bool = True, lockstep: bool = False,
                 disconnect_timeout: float = 120.0,
                 decision_timeout: float = 120.0, stop_check=None):
        self.server = server
        self.params = params
        self.dt = dt
        self.realtime = realtime
        # lockstep mode holds each human-driven step until a fresh control
        # frame arrives; used by headless protocol clients that run the
        # loop far faster than real time
        self.lockstep = lockstep
        self.disconnect_timeout = disconnect_timeout
        self.decision_timeout = decision_timeout
        self.stop_check = stop_check or (lambda: False)
        self._control = Action(0.0, 0.0)
        self._control_fresh = False
        self._human_streak = 0
        self._paused = False
        self._decisions: list[str] = []
        self._pending_events: list[str] = []
        self._next_tick = None

    def episode_started(self, session, env) -> None:
        self._control = Action(0.0, 0.0)
        # leftover decisions (e.g. a double-clicked retry) become plain
        # events so the scheduler refuses them visibly
        self._pending_events.extend(self._decisions)
        self._decisions = []
        self._next_tick = None
        self._human_streak = 0

    def _drain(self) -> None:
        """Sort inbox messages; events wait for the next step boundary."""
        for msg in self.server.mailbox.drain():
            kind = msg["kind"]
            if kind == "control":
                self._control = Action(msg["steer"] * self.params.max_steer,
                                       msg["speed"] * self.params.max_speed)
                self._control_fresh = True
            elif kind == "pause":
                self._paused = True
            elif kind == "resume":
                self._paused = False
            elif kind in ("retry", "discard"):
                self._decisions.append(kind)
            else:
                self._pending_events.append(kind)

    def _pace(self) -> None:
        if not self.realtime:
            return
        now = time.monotonic()
        if self._next_tick is not None and now < self._next_tick:
            time.sleep(self._next_tick - now)
            now = self._next_tick
        self._next_tick = now + self.dt

    def step_commands(self, session, env) -> list[str]:
        self._pace()
        if session.mode in (Mode.RL, Mode.RL_CORR):
            self._human_streak = 0
        self._drain()
        disconnect_deadline = None
        while not self.stop_check():
            blocked = self._paused
            if session.phase is Phase.CORRECTING and not self.server.has_clients:
                if disconnect_deadline is None:
                    disconnect_deadline = time.monotonic() + self.disconnect_timeout
                if time.monotonic() >= disconnect_deadline:
                    log.warning("operator gone for %.0fs; letting the correction "
                                "run out for discard", self.disconnect_timeout)
                    break
                blocked = True
            elif disconnect_deadline is not None and self.server.has_clients:
                disconnect_deadline = None
            if not blocked:
                break
            time.sleep(0.05)
            self._drain()
        events = self._pending_events
        self._pending_events = []
        # decisions queued outside awaiting_decision are illegal there anyway;
        # pass them through so the scheduler refuses them visibly
        events.extend(d for d in self._decisions if session.phase is not Phase.AWAITING_DECISION)
        if session.phase is not Phase.AWAITING_DECISION:
            self._decisions = []
        return events

    def control(self, session, env) -> Action:
        # in lockstep mode wait for a fresh control, but never on the first
        # human step after a switch: the client only reacts once a state
        # showing the new mode has been broadcast
        if self.lockstep and self._human_streak > 0 and self.server.has_clients:
            deadline = time.monotonic() + 1.0
            while (not self._control_fresh and self.server.has_clients
                   and time.monotonic() < deadline and not self.stop_check()):
                self._drain()
                time.sleep(0.002)
        self._human_streak += 1
        self._control_fresh = False
        return self._control

    def decide_after_failed_correction(self, session, env) -> str:
        deadline = time.monotonic() + self.decision_timeout
        while time.monotonic() < deadline and not self.stop_check():
            self._drain()
            if self._decisions:
                return self._decisions.pop(0)
            time.sleep(0.02)
        return "discard"


def scene_init_message(scenario) -> dict:
    v = scenario.vehicle
    return {
        "kind": "scene_init",
        "boundary": [[float(x), float(y)] for x, y in scenario.boundary.vertices],
        "obstacles": [
            {"name": name, "vertices": [[float(x), float(y)] for x, y in poly.vertices]}
            for name, poly in scenario.obstacles
        ],
        "slots": [
            {"heading": float(slot.heading),
             "vertices": [[float(x), float(y)] for x, y in slot.polygon.vertices]}
            for slot in scenario.slots
        ],
        "vehicle_dims": {
            "wheelbase": v.wheelbase, "length": v.length, "width": v.width,
            "rear_overhang": v.rear_overhang, "max_steer": v.max_steer,
            "max_speed": v.max_speed,
        },
    }


def serve_session(config: TrainConfig, host: str = "127.0.0.1", port: int = 8765,
                  realtime: bool = True, lockstep: bool = False,
                  disconnect_timeout: float = 120.0, decision_timeout: float = 120.0,
                  server: SessionServer | None = None, stop_event=None) -> dict:
    """Run training with a live operator endpoint; blocks until done.

    ``stop_event`` (a ``threading.Event``) ends the run at the next
    episode boundary, which is how embedding tests shut the loop down.
    """
    from .scenario import resolve_scenario

    scenario = resolve_scenario(config.scenario)
    own_server = server is None
    if own_server:
        server = SessionServer(host, port)
        server.start()
    server.scene_init = scene_init_message(scenario)
    log.info("session server on ws://%s:%s", server.host, server.port)

    stop_check = (lambda: stop_event.is_set()) if stop_event is not None else (lambda: False)
    intervenor = InteractiveIntervenor(server, scenario.vehicle,
                                       realtime=realtime, lockstep=lockstep,
                                       disconnect_timeout=disconnect_timeout,
                                       decision_timeout=decision_timeout,
                                       stop_check=stop_check)

    arrived = {"n": 0, "total": 0}

    def on_step(session, transition, learner_report):
        nb = session.notebook
        state = {
            "kind": "state",
            "episode": session.episode_counter,
            "step": session.env.state.t,
            "pose": [session.env.state.pose.x, session.env.state.pose.y,
                     session.env.state.pose.psi],
            "last_action": [transition.action.delta, transition.action.v],
            "mode": transition.mode.value,
            "phase": session.phase.value,
            "reward_breakdown": transition.reward_breakdown,
            "buffer_sizes": {"rl": len(nb.rl), "human": len(nb.human),
                             "regions": len(nb.regions)},
        }
        if transition.status is not None:
            state["status"] = transition.status.value
        server.send(state)
        if learner_report is not None:
            server.send({
                "kind": "metrics",
                "losses": {k: learner_report[k] for k in ("j_q1", "j_q2", "j_pi", "j_ae")
                           if k in learner_report},
                "alpha": learner_report.get("alpha"),
                "psr_so_far": (100.0 * arrived["n"] / arrived["total"]
                               if arrived["total"] else 0.0),
            })

    def on_episode(session, report):
        arrived["total"] += 1
        if report.status is TerminationStatus.ARRIVED and not report.correction_steps:
            arrived["n"] += 1
        if stop_check():
            raise _StopServing

    def on_reject(event, error):
        server.send({"kind": "error", "detail": str(error)})

    session_summary = None
    try:
        session_summary = run_training(config, intervenor=intervenor,
                                       on_step=on_step, on_episode=on_episode,
                                       on_reject=on_reject)
    except _StopServing:
        session_summary = {"stopped": True}
    finally:
        if own_server:
            server.stop()
    return session_summary


class _StopServing(Exception):
    pass
