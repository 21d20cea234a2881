"""The parking MDP: episode lifecycle, observations, termination, reward.

The vehicle starts in a sector around the target slot and must reach an
overlap of more than 0.9 with the slot polygon while its heading error
stays below 75 degrees. Episodes also end on hard collision, on drifting
more than 15 m from the slot center, or after ``t_tol`` steps.

Reward is a weighted sum of eight terms, each recorded separately in the
transition's breakdown (pre-scale); the scalar reward is the breakdown
sum times ``w_reward``:

* ``success``  - terminal bonus on arrival
* ``union``    - increments of the best-so-far slot overlap, gated on a
                 valid heading (only positive progress pays out)
* ``collision``- terminal penalty when the footprint hits an obstacle
* ``soft``     - clearance shortfall of the worst footprint boundary
                 point over the intra-step motion (normalized ESDF - 1)
* ``outbound`` - terminal penalty when leaving the 15 m work radius
* ``stuck``    - penalty when the step displacement falls below 1 cm
* ``time``     - smooth time cost, -w_time * tanh(t / (10 * t_tol))
* ``outtime``  - terminal penalty on timeout
"""

from __future__ import annotations

import copy
import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, LifecycleError, SceneInfeasibleError, SnapshotMismatchError
from .geometry import (
    EsdfGrid,
    OccupancyGrid,
    Polygon,
    Pose2D,
    build_esdf,
    esdf_query,
    footprint,
    overlap_score,
    polygons_intersect,
    points_in_ring,
    rasterize_scene,
    ray_cast_fan,
    segments_of,
    wrap_angle,
    _boundary_template,
)
from .vehicle import Action, VehicleParams, kinematic_step, substep_rollout


class Mode(str, enum.Enum):
    """Who produced a transition, and in which loop phase."""

    RL = "rl"
    HUMAN = "human"
    RL_CORR = "rl_corr"
    HUMAN_CORR = "human_corr"


class TerminationStatus(str, enum.Enum):
    ARRIVED = "arrived"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    OOB = "oob"


#: Canonical order of the reward breakdown terms.
REWARD_TERMS = ("success", "union", "collision", "soft", "outbound", "stuck", "time", "outtime")


@dataclass(frozen=True)
class RewardConfig:
    """Reward constants; defaults are the workbench's standard set."""

    c_success: float = 50.0
    c_outbound: float = 10.0
    c_collision: float = 50.0
    c_stuck: float = 0.3
    c_outtime: float = 3.0
    w_union: float = 10.0
    w_time: float = 3.0
    w_soft: float = 0.3
    w_reward: float = 0.1


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    substeps: int = 10
    t_tol: int = 120
    n_rays: int = 36
    ray_max_range: float = 10.0
    oob_radius: float = 15.0
    reset_radius: float = 9.0
    reset_max_attempts: int = 1000
    boundary_points_per_edge: int = 20
    arrival_iou: float = 0.9
    heading_gate: float = math.radians(75.0)
    stuck_displacement: float = 0.01


@dataclass(frozen=True)
class ParkingSlot:
    polygon: Polygon
    heading: float

    @property
    def center(self) -> np.ndarray:
        return self.polygon.centroid


class ParkingScene:
    """Static scene: boundary, obstacles, slots, and derived grids.

    Immutable after construction; the occupancy raster treats both the
    obstacle polygons and the boundary exterior as occupied, and the
    normalized clearance field is derived once from it.
    """

    def __init__(self, boundary: Polygon, obstacles, slots,
                 resolution: float = 0.1, d0: float = 1.0):
        self.boundary = boundary
        self.obstacles = tuple(obstacles)
        self.slots = tuple(slots)
        if not self.slots:
            raise GeometryError("scene needs at least one parking slot")
        for i, slot in enumerate(self.slots):
            for obs in self.obstacles:
                if polygons_intersect(slot.polygon, obs):
                    raise GeometryError(f"slot {i} intersects an obstacle")
        self.resolution = resolution
        self.d0 = d0
        self.occupancy: OccupancyGrid = rasterize_scene(boundary, self.obstacles, resolution)
        self.esdf: EsdfGrid = build_esdf(self.occupancy, d0)
        self.ray_segments = segments_of(boundary, self.obstacles)
        self.fingerprint = self._fingerprint()

    def _fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.boundary.vertices).tobytes())
        for poly in self.obstacles:
            h.update(np.ascontiguousarray(poly.vertices).tobytes())
        for slot in self.slots:
            h.update(np.ascontiguousarray(slot.polygon.vertices).tobytes())
            h.update(np.float64(slot.heading).tobytes())
        h.update(np.float64(self.resolution).tobytes())
        h.update(np.float64(self.d0).tobytes())
        return h.hexdigest()

    def ray_cast(self, origin, angle: float, max_range: float) -> float:
        from .geometry import ray_cast
        return ray_cast(self.ray_segments, origin, angle, max_range)

    def footprint_collides(self, body: Polygon) -> bool:
        """Hard collision: body overlaps an obstacle or leaves the boundary."""
        if not points_in_ring(body.vertices, self.boundary.vertices).all():
            return True
        bx0, by0, bx1, by1 = body.bbox
        for obs in self.obstacles:
            ox0, oy0, ox1, oy1 = obs.bbox
            if bx1 < ox0 or ox1 < bx0 or by1 < oy0 or oy1 < by0:
                continue
            if polygons_intersect(body, obs):
                return True
        return False


@dataclass(frozen=True)
class EnvState:
    """Everything that evolves during an episode (the pose and counters)."""

    pose: Pose2D
    t: int
    best_iou: float
    last_displacement: float
    last_action: Action
    target_slot_index: int


@dataclass(frozen=True)
class EnvSnapshot:
    """Full restorable copy of the environment's mutable state."""

    fingerprint: str
    state: EnvState
    terminated: bool
    status: TerminationStatus | None
    rng_state: dict


@dataclass(frozen=True)
class Transition:
    """One environment step record; the atom of all replay memory."""

    obs: np.ndarray
    action: Action
    reward: float
    done: bool
    next_obs: np.ndarray
    mode: Mode
    status: TerminationStatus | None = None
    reward_breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.done and self.status is None:
            raise LifecycleError("terminal transition must carry a status")
        self.obs.flags.writeable = False
        self.next_obs.flags.writeable = False


class ParkingEnv:
    """Single-vehicle parking environment over a static scene."""

    def __init__(self, scene: ParkingScene, params: VehicleParams | None = None,
                 config: EnvConfig | None = None, reward: RewardConfig | None = None,
                 seed: int | None = None):
        self.scene = scene
        self.params = params or VehicleParams()
        self.config = config or EnvConfig()
        self.reward_config = reward or RewardConfig()
        self._rng = np.random.default_rng(seed)
        self._state: EnvState | None = None
        self._terminated = False
        self._status: TerminationStatus | None = None
        self._obs_cache: np.ndarray | None = None
        p = self.params
        self._boundary_template = _boundary_template(
            p.length, p.width, p.rear_overhang, self.config.boundary_points_per_edge)
        self._ray_offsets = np.arange(self.config.n_rays) * (2 * math.pi / self.config.n_rays)
        # single-slot caches keyed on object identity; step() reuses the same
        # Pose2D/EnvState across its internal queries
        self._fp_cache: tuple | None = None
        self._iou_cache: tuple | None = None
        self._status_cache: tuple | None = None

    # ------------------------------------------------------------------
    # observation layout
    # ------------------------------------------------------------------

    @property
    def observation_dim(self) -> int:
        # slot-relative pose (4) + last action (2) + rays + overlap + step fraction
        return 4 + 2 + self.config.n_rays + 1 + 1

    def _observe(self, state: EnvState) -> np.ndarray:
        cfg = self.config
        slot = self.scene.slots[state.target_slot_index]
        pose = state.pose
        rel = slot.center - pose.position
        c, s = math.cos(-pose.psi), math.sin(-pose.psi)
        dx = rel[0] * c - rel[1] * s
        dy = rel[0] * s + rel[1] * c
        dth = wrap_angle(slot.heading - pose.psi)
        angles = pose.psi + self._ray_offsets
        rays = ray_cast_fan(self.scene.ray_segments, pose.position, angles, cfg.ray_max_range)
        obs = np.empty(self.observation_dim)
        obs[0] = np.clip(dx / cfg.oob_radius, -1.0, 1.0)
        obs[1] = np.clip(dy / cfg.oob_radius, -1.0, 1.0)
        obs[2] = math.sin(dth)
        obs[3] = math.cos(dth)
        obs[4] = state.last_action.delta / self.params.max_steer
        obs[5] = state.last_action.v / self.params.max_speed
        obs[6:6 + cfg.n_rays] = rays / cfg.ray_max_range
        obs[6 + cfg.n_rays] = self._slot_overlap(pose, state.target_slot_index)
        obs[7 + cfg.n_rays] = min(state.t / cfg.t_tol, 1.0)
        return obs

    # ------------------------------------------------------------------
    # geometry helpers
    # ------------------------------------------------------------------

    def _footprint(self, pose: Pose2D) -> Polygon:
        cached = self._fp_cache
        if cached is not None and cached[0] is pose:
            return cached[1]
        p = self.params
        fp = footprint(pose, p.length, p.width, p.rear_overhang)
        self._fp_cache = (pose, fp)
        return fp

    def body_center(self, pose: Pose2D) -> np.ndarray:
        p = self.params
        off = p.length / 2.0 - p.rear_overhang
        return pose.position + off * pose.heading_vector()

    def _slot_overlap(self, pose: Pose2D, slot_index: int) -> float:
        cached = self._iou_cache
        if cached is not None and cached[0] is pose and cached[1] == slot_index:
            return cached[2]
        iou = overlap_score(self._footprint(pose), self.scene.slots[slot_index].polygon)
        self._iou_cache = (pose, slot_index, iou)
        return iou

    def heading_error(self, pose: Pose2D, slot_index: int) -> float:
        return abs(wrap_angle(pose.psi - self.scene.slots[slot_index].heading))

    def check_arrival(self, pose: Pose2D, slot_index: int) -> bool:
        """Overlap strictly above 0.9 and heading error strictly below the gate."""
        cfg = self.config
        if self.heading_error(pose, slot_index) >= cfg.heading_gate:
            return False
        return self._slot_overlap(pose, slot_index) > cfg.arrival_iou

    def check_oob(self, pose: Pose2D, slot_index: int) -> bool:
        """Body center strictly more than ``oob_radius`` from the slot center."""
        d = np.linalg.norm(self.body_center(pose) - self.scene.slots[slot_index].center)
        return bool(d > self.config.oob_radius)

    def _classify(self, state: EnvState) -> TerminationStatus | None:
        # precedence: collision > arrived > oob > timeout
        cached = self._status_cache
        if cached is not None and cached[0] is state:
            return cached[1]
        if self.scene.footprint_collides(self._footprint(state.pose)):
            status = TerminationStatus.COLLISION
        elif self.check_arrival(state.pose, state.target_slot_index):
            status = TerminationStatus.ARRIVED
        elif self.check_oob(state.pose, state.target_slot_index):
            status = TerminationStatus.OOB
        elif state.t >= self.config.t_tol:
            status = TerminationStatus.TIMEOUT
        else:
            status = None
        self._status_cache = (state, status)
        return status

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def reset(self, slot_index: int | None = None, seed: int | None = None) -> np.ndarray:
        """Sample a collision-free start pose in the sector around the slot.

        Position is drawn area-uniformly from the half-disc of radius
        ``reset_radius`` opened around the slot heading; yaw is uniform on
        (-pi, pi]. Rejection-sampled against collisions.
        """
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if slot_index is None:
            slot_index = int(self._rng.integers(len(self.scene.slots)))
        if not (0 <= slot_index < len(self.scene.slots)):
            raise ValueError(f"slot_index {slot_index} out of range")
        slot = self.scene.slots[slot_index]
        cfg = self.config
        for _ in range(cfg.reset_max_attempts):
            r = cfg.reset_radius * math.sqrt(self._rng.uniform())
            phi = slot.heading + self._rng.uniform(-math.pi / 2, math.pi / 2)
            yaw = self._rng.uniform(-math.pi, math.pi)
            pose = Pose2D(slot.center[0] + r * math.cos(phi),
                          slot.center[1] + r * math.sin(phi), yaw)
            if not self.scene.footprint_collides(self._footprint(pose)):
                break
        else:
            raise SceneInfeasibleError(
                f"no collision-free start pose near slot {slot_index} "
                f"after {cfg.reset_max_attempts} attempts")
        state = EnvState(pose=pose, t=0,
                         best_iou=self._slot_overlap(pose, slot_index),
                         last_displacement=0.0,
                         last_action=Action(0.0, 0.0),
                         target_slot_index=slot_index)
        self._state = state
        self._terminated = False
        self._status = None
        self._obs_cache = self._observe(state)
        return self._obs_cache

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise LifecycleError("reset() must be called first")
        return self._state

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def status(self) -> TerminationStatus | None:
        return self._status

    @property
    def current_obs(self) -> np.ndarray:
        if self._obs_cache is None:
            raise LifecycleError("reset() must be called first")
        return self._obs_cache

    def step(self, action: Action, mode: Mode = Mode.RL) -> Transition:
        """Advance one step; returns the complete transition record."""
        if self._state is None:
            raise LifecycleError("reset() must be called before step()")
        if self._terminated:
            raise LifecycleError(f"episode already terminated with status {self._status}")
        cfg = self.config
        prev = self._state
        act = action.clamped(self.params)
        substates = substep_rollout(prev.pose, act, cfg.dt, cfg.substeps, self.params)
        new_pose = kinematic_step(prev.pose, act, cfg.dt, self.params)
        displacement = math.hypot(new_pose.x - prev.pose.x, new_pose.y - prev.pose.y)
        iou = self._slot_overlap(new_pose, prev.target_slot_index)
        heading_ok = self.heading_error(new_pose, prev.target_slot_index) < cfg.heading_gate
        best = max(prev.best_iou, iou) if heading_ok else prev.best_iou
        new_state = EnvState(pose=new_pose, t=prev.t + 1, best_iou=best,
                             last_displacement=displacement, last_action=act,
                             target_slot_index=prev.target_slot_index)
        status = self._classify(new_state)
        reward, breakdown = self.compute_reward(prev, act, substates, new_state)
        prev_obs = self._obs_cache
        next_obs = self._observe(new_state)
        self._state = new_state
        self._status = status
        self._terminated = status is not None
        self._obs_cache = next_obs
        return Transition(obs=prev_obs, action=act, reward=reward,
                          done=status is not None, next_obs=next_obs, mode=mode,
                          status=status, reward_breakdown=breakdown)

    # ------------------------------------------------------------------
    # reward
    # ------------------------------------------------------------------

    def compute_reward(self, prev: EnvState, action: Action, substates,
                       new: EnvState) -> tuple[float, dict]:
        """All reward terms for the ``prev -> new`` step.

        Pure in its arguments (plus the static scene), so replaying a
        step after a rollback reproduces the reward bit-for-bit.
        """
        cfg = self.config
        rw = self.reward_config
        slot_index = prev.target_slot_index
        status = self._classify(new)
        iou = self._slot_overlap(new.pose, slot_index)
        heading_ok = self.heading_error(new.pose, slot_index) < cfg.heading_gate

        terms = dict.fromkeys(REWARD_TERMS, 0.0)
        if status is TerminationStatus.ARRIVED:
            terms["success"] = rw.c_success
        if heading_ok and iou > prev.best_iou:
            terms["union"] = rw.w_union * (iou - prev.best_iou)
        if status is TerminationStatus.COLLISION:
            terms["collision"] = -rw.c_collision
        terms["soft"] = rw.w_soft * (self._min_substate_clearance(substates) - 1.0)
        if status is TerminationStatus.OOB:
            terms["outbound"] = -rw.c_outbound
        if new.last_displacement < cfg.stuck_displacement:
            terms["stuck"] = -rw.c_stuck
        terms["time"] = -rw.w_time * math.tanh(new.t / (10.0 * cfg.t_tol))
        if status is TerminationStatus.TIMEOUT:
            terms["outtime"] = -rw.c_outtime
        total = rw.w_reward * math.fsum(terms.values())
        return total, terms

    def _min_substate_clearance(self, substates) -> float:
        template = self._boundary_template
        pts = np.empty((len(substates) * len(template), 2))
        n = len(template)
        for i, pose in enumerate(substates):
            c, s = math.cos(pose.psi), math.sin(pose.psi)
            rot = np.array([[c, -s], [s, c]])
            pts[i * n:(i + 1) * n] = template @ rot.T + [pose.x, pose.y]
        return float(np.min(esdf_query(self.scene.esdf, pts)))

    # ------------------------------------------------------------------
    # snapshot / restore
    # ------------------------------------------------------------------

    def snapshot(self) -> EnvSnapshot:
        """Capture everything needed to replay from here bit-exactly."""
        if self._state is None:
            raise LifecycleError("cannot snapshot before reset()")
        return EnvSnapshot(fingerprint=self.scene.fingerprint,
                           state=self._state,
                           terminated=self._terminated,
                           status=self._status,
                           rng_state=copy.deepcopy(self._rng.bit_generator.state))

    def restore(self, snap: EnvSnapshot) -> None:
        if snap.fingerprint != self.scene.fingerprint:
            raise SnapshotMismatchError("snapshot belongs to a different scene")
        self._state = snap.state
        self._terminated = snap.terminated
        self._status = snap.status
        self._rng.bit_generator.state = copy.deepcopy(snap.rng_state)
        self._obs_cache = self._observe(snap.state)
