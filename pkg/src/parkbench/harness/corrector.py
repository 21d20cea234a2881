"""Scripted parking operator: a stand-in for the human in unattended runs.

The corrector plans a full rear-in maneuver with a weighted-A* search
over short constant-action motion primitives, using the same kinematic
model the environment integrates. Because the simulator is
deterministic, executing the planned action sequence reproduces the
planned poses, so one plan per attempt suffices; the plan is rebuilt
only when the vehicle is moved externally (rollback, takeover hand-off).

Primitives are collision-checked against the scene's clearance field
with a safety margin, the goal test uses the exact footprint/slot
overlap, and gear changes are penalized so maneuvers stay humanlike.
When the search cannot reach the slot within its expansion budget the
corrector recommends discarding the attempt.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from ..env import EnvConfig, ParkingScene
from ..geometry import Pose2D, esdf_query, footprint, overlap_score, wrap_angle
from ..scheduler import Intervenor
from ..vehicle import Action, VehicleParams, kinematic_step


class ScriptedCorrector:
    """Deterministic lattice-planning parking controller with scene knowledge."""

    def __init__(self, scene: ParkingScene, params: VehicleParams,
                 env_config: EnvConfig | None = None,
                 handback_lateral: float = 0.3,
                 handback_heading: float = math.radians(10.0),
                 clearance_margin: float = 0.12,
                 max_expansions: int = 12000):
        self.scene = scene
        self.params = params
        self.config = env_config or EnvConfig()
        self.dt = self.config.dt
        self.handback_lateral = handback_lateral
        self.handback_heading = handback_heading
        self.clearance_margin = clearance_margin
        self.max_expansions = max_expansions
        self._park_offset = params.length / 2.0 - params.rear_overhang
        self._primitives = self._build_primitives()
        self._probe_block = np.vstack([p["probes"] for p in self._primitives])
        self.reset(0)

    def _build_primitives(self):
        """Constant (steer, speed) pieces held for several steps, with their
        pose offsets and body probe points precomputed in the local frame."""
        xf, xr = self.params.length - self.params.rear_overhang, -self.params.rear_overhang
        hw = self.params.width / 2.0
        probe = np.array([
            (xr, -hw), (xf, -hw), (xf, hw), (xr, hw),
            ((xr + xf) / 2, -hw), ((xr + xf) / 2, hw),
            ((xr + 2 * xf) / 3, -hw), ((xr + 2 * xf) / 3, hw),
            (xf, 0.0), (xr, 0.0),
        ])
        prims = []
        fast_deltas = np.linspace(-self.params.max_steer, self.params.max_steer, 5)
        slow_deltas = np.array([-self.params.max_steer, 0.0, self.params.max_steer])
        for hold, speeds, deltas in ((5, (1.5, -1.5), fast_deltas),
                                     (3, (0.4, -0.4), slow_deltas)):
            for v in speeds:
                for delta in deltas:
                    seq = []
                    pose = Pose2D(0.0, 0.0, 0.0)
                    for _ in range(hold):
                        pose = kinematic_step(pose, Action(delta, v), self.dt, self.params)
                        seq.append(pose)
                    offsets = np.array([(p.x, p.y, p.psi) for p in seq])
                    # probe points of every substep pose, local frame
                    pts = []
                    for p in seq:
                        c, s = math.cos(p.psi), math.sin(p.psi)
                        rot = np.array([[c, -s], [s, c]])
                        pts.append(probe @ rot.T + [p.x, p.y])
                    prims.append({
                        "action": Action(float(delta), float(v)),
                        "hold": hold,
                        "end": offsets[-1],
                        "probes": np.vstack(pts),
                        "slow": hold == 3,
                    })
        return prims

    def reset(self, slot_index: int) -> None:
        slot = self.scene.slots[slot_index]
        self.slot_index = slot_index
        self.center = slot.center
        self.heading = slot.heading
        self.axis = np.array([math.cos(slot.heading), math.sin(slot.heading)])
        self.lateral = np.array([-self.axis[1], self.axis[0]])
        self.park_point = self.center - self._park_offset * self.axis
        self._plan_actions: list[Action] = []
        self._plan_poses: list[Pose2D] = []
        self._cursor = 0
        self._plan_failed = False

    # ------------------------------------------------------------------

    def frame_errors(self, pose: Pose2D) -> tuple[float, float, float]:
        """(along-axis s, lateral offset, heading error) of the rear axle."""
        rel = pose.position - self.center
        s = float(rel @ self.axis)
        e_lat = float(rel @ self.lateral)
        e_psi = wrap_angle(pose.psi - self.heading)
        return s, e_lat, e_psi

    def aligned(self, pose: Pose2D) -> bool:
        _, e_lat, e_psi = self.frame_errors(pose)
        return abs(e_lat) <= self.handback_lateral and abs(e_psi) <= self.handback_heading

    @property
    def recommends_discard(self) -> bool:
        return self._plan_failed

    def action(self, pose: Pose2D) -> Action:
        """Next planned action; replans when the pose left the plan."""
        if self._plan_failed:
            return Action(0.0, 0.0)  # hold still; the attempt will be discarded
        if self._cursor < len(self._plan_actions):
            expected = self._plan_poses[self._cursor]
            if (abs(expected.x - pose.x) < 1e-6 and abs(expected.y - pose.y) < 1e-6
                    and abs(wrap_angle(expected.psi - pose.psi)) < 1e-6):
                act = self._plan_actions[self._cursor]
                self._cursor += 1
                return act
        self._make_plan(pose)
        if self._cursor < len(self._plan_actions):
            act = self._plan_actions[self._cursor]
            self._cursor += 1
            return act
        self._plan_failed = True
        return Action(0.0, 0.0)

    # ------------------------------------------------------------------
    # planning
    # ------------------------------------------------------------------

    def _goal_reached(self, pose: Pose2D) -> bool:
        if np.linalg.norm(pose.position - self.park_point) > 0.6:
            return False
        if abs(wrap_angle(pose.psi - self.heading)) > math.radians(30):
            return False
        body = footprint(pose, self.params.length, self.params.width,
                         self.params.rear_overhang)
        slot_poly = self.scene.slots[self.slot_index].polygon
        return (overlap_score(body, slot_poly) > 0.92
                and abs(wrap_angle(pose.psi - self.heading)) < math.radians(60))

    def _make_plan(self, start: Pose2D) -> None:
        """Weighted A* over the primitive lattice from ``start``."""
        self._plan_actions = []
        self._plan_poses = []
        self._cursor = 0
        park = self.park_point
        margin = self.clearance_margin

        min_turn = self.params.wheelbase / math.tan(self.params.max_steer)
        slot_heading = self.heading

        def hkey(x, y, psi, gear):
            return (int(round(x / 0.35)), int(round(y / 0.35)),
                    int(round(psi / (math.pi / 12))))

        def heuristic(x, y, psi):
            dist = math.hypot(x - park[0], y - park[1])
            swing = abs(wrap_angle(psi - slot_heading)) * min_turn
            return 1.3 * max(dist, swing) / 0.15

        start_state = (start.x, start.y, start.psi, 0)
        best_g = {hkey(*start_state): 0.0}
        counter = 0
        nodes = [(start_state, -1, None, 0.0)]  # state, parent index, primitive, g
        heap = [(heuristic(start.x, start.y, start.psi), 0, 0)]
        expansions = 0
        goal_node = None
        while heap and expansions < self.max_expansions:
            _, _, idx = heapq.heappop(heap)
            state, _, _, g_here = nodes[idx]
            x, y, psi, gear = state
            if g_here > best_g.get(hkey(x, y, psi, gear), math.inf):
                continue  # superseded entry
            if self._goal_reached(Pose2D(x, y, psi)):
                goal_node = idx
                break
            expansions += 1
            c, s = math.cos(psi), math.sin(psi)
            rot = np.array([[c, -s], [s, c]])
            all_probes = self._probe_block @ rot.T + [x, y]
            clear = esdf_query(self.scene.esdf, all_probes)
            at = 0
            for prim in self._primitives:
                n = len(prim["probes"])
                blocked = clear[at:at + n].min() <= margin
                at += n
                if blocked:
                    continue
                ex, ey, epsi = prim["end"]
                nx = x + ex * c - ey * s
                ny = y + ex * s + ey * c
                npsi = wrap_angle(psi + epsi)
                new_gear = 1 if prim["action"].v > 0 else -1
                cost = prim["hold"] + (3.0 if (gear != 0 and new_gear != gear) else 0.0)
                ng = g_here + cost
                key = hkey(nx, ny, npsi, new_gear)
                if ng >= best_g.get(key, math.inf):
                    continue
                best_g[key] = ng
                counter += 1
                nodes.append(((nx, ny, npsi, new_gear), idx, prim, ng))
                heapq.heappush(heap, (ng + heuristic(nx, ny, npsi), counter, len(nodes) - 1))
        if goal_node is None:
            self._plan_failed = True
            return
        chain = []
        idx = goal_node
        while idx != -1:
            _, parent, prim, _ = nodes[idx]
            if prim is not None:
                chain.append(prim)
            idx = parent
        chain.reverse()
        pose = start
        for prim in chain:
            for _ in range(prim["hold"]):
                pose = kinematic_step(pose, prim["action"], self.dt, self.params)
                self._plan_actions.append(prim["action"])
                self._plan_poses.append(pose)
        # a plan longer than the step budget cannot finish; treat as failure
        if not self._plan_actions or len(self._plan_actions) > 115:
            self._plan_actions = []
            self._plan_poses = []
            self._plan_failed = True
            return
        # expected pose BEFORE each action is what action() checks; shift
        self._plan_poses = [start] + self._plan_poses[:-1]


class ScriptedIntervenor(Intervenor):
    """Drives corrections with :class:`ScriptedCorrector`; optionally takes
    over briefly at the start of every ``assist_every``-th episode and hands
    control back once aligned, which seeds the normal human buffer."""

    enabled = True

    def __init__(self, scene: ParkingScene, params: VehicleParams,
                 env_config: EnvConfig | None = None,
                 assist_every: int = 0, assist_max_steps: int = 30):
        self.corrector = ScriptedCorrector(scene, params, env_config)
        self.assist_every = assist_every
        self.assist_max_steps = assist_max_steps
        self._assist_planned = False
        self._assisting = False
        self._assist_steps = 0

    def episode_started(self, session, env) -> None:
        self.corrector.reset(env.state.target_slot_index)
        self._assist_planned = (self.assist_every > 0
                                and session.episode_counter % self.assist_every == 0)
        self._assisting = False
        self._assist_steps = 0

    def correction_started(self, session, env) -> None:
        self.corrector.reset(env.state.target_slot_index)

    def step_commands(self, session, env) -> list[str]:
        from ..scheduler import Phase
        if session.phase is not Phase.AUTONOMOUS:
            return []
        if self._assist_planned and not self._assisting:
            self._assist_planned = False
            self._assisting = True
            return ["take_control"]
        if self._assisting:
            self._assist_steps += 1
            done_aligning = (self._assist_steps > 1
                             and self.corrector.aligned(env.state.pose))
            if done_aligning or self._assist_steps >= self.assist_max_steps:
                self._assisting = False
                return ["hand_back"]
        return []

    def control(self, session, env) -> Action:
        return self.corrector.action(env.state.pose)

    def decide_after_failed_correction(self, session, env) -> str:
        # the controller is deterministic, so retrying an identical attempt
        # cannot improve on it
        return "discard"
