"""Correction-in-the-loop episode state machine.

An episode runs in one of three phases:

* ``autonomous`` - the policy (or a human who took over) drives; RL
  transitions accumulate in a pending buffer instead of going straight
  to replay. A checkpoint (full env snapshot plus the pending-buffer
  cursor) is taken at episode start and refreshed on every hand-back.
* ``correcting`` - entered by rolling the simulator back to the
  checkpoint after a failed autonomous segment was extracted; control
  starts with the human and may be passed to the policy and back.
* ``awaiting_decision`` - a correction attempt ended without arrival;
  the operator either retries from the same checkpoint or discards.

Only corrections that end with ``arrived`` and contain at least one fix
transition are committed to the notebook as a correction region. A
successful autonomous episode commits its pending RL transitions to the
normal buffer instead. If no intervenor is available the loop degrades
to ordinary off-policy training: every finished episode's pending RL
transitions are committed and no regions are ever created.
"""

from __future__ import annotations

import dataclasses
import enum
import queue
from dataclasses import dataclass, field

import numpy as np

from .env import Mode, ParkingEnv, TerminationStatus, Transition
from .errors import IllegalEventError, LifecycleError, NotEnoughDataError
from .geometry import Pose2D
from .replay import MistakeNotebook
from .vehicle import Action, inverse_kinematics


class Phase(str, enum.Enum):
    IDLE = "idle"
    AUTONOMOUS = "autonomous"
    CORRECTING = "correcting"
    AWAITING_DECISION = "awaiting_decision"


#: Operator events the session understands.
EVENTS = ("take_control", "release_to_rl", "hand_back", "retry", "discard")


@dataclass(frozen=True)
class Checkpoint:
    """Single rollback point: env snapshot plus pending-buffer cursor."""

    pose: Pose2D
    sim_time: float
    obs: np.ndarray
    step_index: int
    pending_cursor: int
    env_snapshot: object


@dataclass
class EpisodeReport:
    episode_id: int
    status: TerminationStatus | None = None
    steps: int = 0
    env_steps: int = 0
    correction_steps: int = 0
    gear_shifts: int = 0
    rl_committed: int = 0
    human_committed: int = 0
    regions_committed: int = 0
    retries: int = 0
    discarded: bool = False


@dataclass(frozen=True)
class SessionConfig:
    n_min: int = 5
    batch_size: int = 32
    max_retries: int | None = None
    update_start_steps: int = 0   # env steps before learner updates begin


class Mailbox:
    """Thread-safe inbox the episode loop drains exactly once per step."""

    def __init__(self):
        self._q: queue.Queue = queue.Queue()

    def put(self, item) -> None:
        self._q.put(item)

    def drain(self) -> list:
        items = []
        while True:
            try:
                items.append(self._q.get_nowait())
            except queue.Empty:
                return items


class Intervenor:
    """Human stand-in interface; the default is a disabled no-op."""

    enabled = False

    def episode_started(self, session, env) -> None:
        pass

    def correction_started(self, session, env) -> None:
        pass

    def step_commands(self, session, env) -> list[str]:
        """Events to apply at this step boundary."""
        return []

    def control(self, session, env) -> Action:
        """Action while a human mode is active."""
        return Action(0.0, 0.0)

    def decide_after_failed_correction(self, session, env) -> str:
        return "discard"


def detect_failure(transition: Transition) -> bool:
    """Terminal transition with a non-arrival status."""
    return bool(transition.done) and transition.status in (
        TerminationStatus.COLLISION, TerminationStatus.TIMEOUT, TerminationStatus.OOB)


class CorrectionSession:
    """Drives episodes against one env/notebook pair and owns the phases."""

    def __init__(self, env: ParkingEnv, notebook: MistakeNotebook,
                 config: SessionConfig | None = None, seed: int | None = None,
                 on_step=None, on_episode=None):
        self.env = env
        self.notebook = notebook
        self.config = config or SessionConfig()
        self.rng = np.random.default_rng(seed)
        self.on_step = on_step        # (session, transition, learner_report)
        self.on_episode = on_episode  # (session, report)
        self.on_reject = None         # (event, error) for refused operator events
        self.phase = Phase.IDLE
        self.mode = Mode.RL
        self.checkpoint: Checkpoint | None = None
        self.pending_rl: list[Transition] = []
        self.pending_human: list[Transition] = []
        self.correction_fail: list[Transition] = []
        self.correction_fix_h: list[Transition] = []
        self.correction_fix_rl: list[Transition] = []
        self.episode_counter = 0
        self.total_env_steps = 0
        self.retries = 0
        self._report: EpisodeReport | None = None

    # ------------------------------------------------------------------
    # checkpoints and rollback
    # ------------------------------------------------------------------

    def set_checkpoint(self) -> Checkpoint:
        """Capture the single rollback point (requires autonomous RL mode)."""
        if self.mode is not Mode.RL or self.phase is not Phase.AUTONOMOUS:
            raise LifecycleError(
                f"checkpoint requires autonomous rl mode, have {self.phase.value}/{self.mode.value}")
        env = self.env
        self.checkpoint = Checkpoint(
            pose=env.state.pose,
            sim_time=env.state.t * env.config.dt,
            obs=env.current_obs,
            step_index=env.state.t,
            pending_cursor=len(self.pending_rl),
            env_snapshot=env.snapshot(),
        )
        return self.checkpoint

    def extract_failed_segment(self) -> list[Transition]:
        """Slice the post-checkpoint RL segment out of the pending buffer."""
        if self.checkpoint is None:
            raise LifecycleError("no checkpoint to slice from")
        cursor = self.checkpoint.pending_cursor
        segment = self.pending_rl[cursor:]
        if len(segment) <= self.config.n_min:
            raise LifecycleError(
                f"failed segment of {len(segment)} steps is not longer than n_min={self.config.n_min}")
        self.correction_fail = segment
        self.pending_rl = []
        return segment

    def rollback(self) -> None:
        """Restore the checkpoint and restart control in human-correction mode."""
        if self.checkpoint is None:
            raise LifecycleError("no checkpoint to roll back to")
        self.env.restore(self.checkpoint.env_snapshot)
        self.phase = Phase.CORRECTING
        self.mode = Mode.HUMAN_CORR
        self.correction_fix_h = []
        self.correction_fix_rl = []

    # ------------------------------------------------------------------
    # operator events
    # ------------------------------------------------------------------

    def handle_event(self, event: str) -> None:
        if event not in EVENTS:
            raise IllegalEventError(f"unknown event {event!r}")
        phase, mode = self.phase, self.mode
        if event == "take_control":
            if phase is Phase.AUTONOMOUS and mode is Mode.RL:
                self.mode = Mode.HUMAN
            elif phase is Phase.CORRECTING and mode is Mode.RL_CORR:
                self.mode = Mode.HUMAN_CORR
            else:
                self._reject(event)
        elif event == "release_to_rl":
            if phase is Phase.CORRECTING and mode is Mode.HUMAN_CORR:
                self.mode = Mode.RL_CORR
            else:
                self._reject(event)
        elif event == "hand_back":
            if phase is Phase.AUTONOMOUS and mode is Mode.HUMAN:
                for t in self.pending_human:
                    self.notebook.push_normal(t, "human")
                if self._report:
                    self._report.human_committed += len(self.pending_human)
                self.pending_human = []
                self.mode = Mode.RL
                self.set_checkpoint()
            else:
                self._reject(event)
        elif event == "retry":
            if phase is Phase.AWAITING_DECISION:
                self.retries += 1
                if self._report:
                    self._report.retries += 1
                self.rollback()
            else:
                self._reject(event)
        elif event == "discard":
            if phase is Phase.AWAITING_DECISION:
                self.correction_fail = []
                self.correction_fix_h = []
                self.correction_fix_rl = []
                if self._report:
                    self._report.discarded = True
                self.phase = Phase.IDLE
            else:
                self._reject(event)

    def _reject(self, event: str):
        raise IllegalEventError(
            f"event {event!r} illegal in phase={self.phase.value} mode={self.mode.value}")

    # ------------------------------------------------------------------
    # correction acceptance
    # ------------------------------------------------------------------

    def finalize_correction(self, final_status: TerminationStatus) -> bool:
        """Commit the region when the correction arrived, else await a decision."""
        if self.phase is not Phase.CORRECTING:
            raise LifecycleError("finalize_correction outside correcting phase")
        fix_count = len(self.correction_fix_h) + len(self.correction_fix_rl)
        accepted = final_status is TerminationStatus.ARRIVED and fix_count > 0
        if accepted:
            self.notebook.commit_region(self.episode_counter, self.correction_fail,
                                        self.correction_fix_h, self.correction_fix_rl)
            if self._report:
                self._report.regions_committed += 1
            self.correction_fail = []
            self.correction_fix_h = []
            self.correction_fix_rl = []
            self.phase = Phase.IDLE
        else:
            self.phase = Phase.AWAITING_DECISION
        return accepted

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def _apply_step(self, action: Action) -> Transition:
        """Step the env under the current mode and file the transition.

        Human-driven steps store the action recovered from the executed
        pose pair, so human data shares the policy's action space.
        """
        env = self.env
        mode = self.mode
        if mode in (Mode.HUMAN, Mode.HUMAN_CORR):
            q_t = env.state.pose
            t = env.step(action, mode)
            ik = inverse_kinematics(q_t, env.state.pose, env.params, env.config.dt)
            t = dataclasses.replace(t, action=ik.action)
        else:
            t = env.step(action, mode)
        if self.phase is Phase.AUTONOMOUS:
            if mode is Mode.RL:
                self.pending_rl.append(t)
            else:
                self.pending_human.append(t)
        elif self.phase is Phase.CORRECTING:
            if mode is Mode.RL_CORR:
                self.correction_fix_rl.append(t)
            else:
                self.correction_fix_h.append(t)
        self.total_env_steps += 1
        return t

    def _commit_pending_rl(self) -> None:
        for t in self.pending_rl:
            self.notebook.push_normal(t, "rl")
        if self._report:
            self._report.rl_committed += len(self.pending_rl)
        self.pending_rl = []

    # ------------------------------------------------------------------
    # episode driver
    # ------------------------------------------------------------------

    def drive_episode(self, policy, intervenor: Intervenor | None = None,
                      learner=None, slot_index: int | None = None,
                      train: bool = True) -> EpisodeReport:
        """Run one full episode of the correction loop.

        ``policy`` maps an observation vector to an ``Action``. The
        intervenor (when enabled) supplies operator events, human control,
        and retry/discard decisions. When a learner is given, one batch is
        sampled and one update applied per environment step.
        """
        cfg = self.config
        self.episode_counter += 1
        self.retries = 0
        self.pending_rl = []
        self.pending_human = []
        self.correction_fail = []
        self.correction_fix_h = []
        self.correction_fix_rl = []
        self.phase = Phase.AUTONOMOUS
        self.mode = Mode.RL
        self.env.reset(slot_index=slot_index)
        self.set_checkpoint()
        report = EpisodeReport(episode_id=self.episode_counter)
        self._report = report
        active = intervenor if (intervenor is not None and intervenor.enabled) else None
        if active:
            active.episode_started(self, self.env)
        prev_gear = 0
        final_status: TerminationStatus | None = None

        while True:
            if self.phase in (Phase.AUTONOMOUS, Phase.CORRECTING):
                if active:
                    for event in active.step_commands(self, self.env):
                        try:
                            self.handle_event(event)
                        except IllegalEventError as err:
                            if self.on_reject:
                                self.on_reject(event, err)
                            else:
                                raise
                if self.mode in (Mode.RL, Mode.RL_CORR):
                    action = policy(self.env.current_obs)
                else:
                    action = active.control(self, self.env) if active else Action(0.0, 0.0)
                t = self._apply_step(action)
                report.env_steps += 1
                if self.phase is Phase.CORRECTING:
                    report.correction_steps += 1
                else:
                    report.steps += 1
                if abs(t.action.v) > 0.01:
                    gear = 1 if t.action.v > 0 else -1
                    if prev_gear != 0 and gear != prev_gear:
                        report.gear_shifts += 1
                    prev_gear = gear
                learner_report = None
                if learner is not None and train and self.total_env_steps >= cfg.update_start_steps:
                    try:
                        batch = self.notebook.sample_batch(cfg.batch_size, self.rng)
                    except NotEnoughDataError:
                        batch = None
                    if batch is not None:
                        learner_report = learner.update(batch)
                if self.on_step:
                    self.on_step(self, t, learner_report)
                if not t.done:
                    continue
                final_status = t.status
                if self.phase is Phase.AUTONOMOUS:
                    if self._finish_autonomous(t, active):
                        break
                else:
                    accepted = self.finalize_correction(t.status)
                    if accepted:
                        break
            elif self.phase is Phase.AWAITING_DECISION:
                decision = self._decide(active)
                self.handle_event(decision)
                if decision == "discard":
                    break
            else:
                break

        report.status = final_status
        self._report = None
        if self.on_episode:
            self.on_episode(self, report)
        return report

    def _finish_autonomous(self, t: Transition, active: Intervenor | None) -> bool:
        """Episode-end bookkeeping; returns True when the episode is over."""
        if not detect_failure(t):
            self._commit_pending_rl()
            self.phase = Phase.IDLE
            return True
        if active is None:
            # ordinary off-policy training: failures stay in the data too
            self._commit_pending_rl()
            self.phase = Phase.IDLE
            return True
        cursor = self.checkpoint.pending_cursor if self.checkpoint else 0
        if len(self.pending_rl) - cursor > self.config.n_min:
            self.extract_failed_segment()
            self.rollback()
            active.correction_started(self, self.env)
            return False
        self.pending_rl = []
        self.phase = Phase.IDLE
        return True

    def _decide(self, active: Intervenor | None) -> str:
        if active is None:
            return "discard"
        if self.config.max_retries is not None and self.retries >= self.config.max_retries:
            return "discard"
        return active.decide_after_failed_correction(self, self.env)


def drive_episode(policy, intervenor, env: ParkingEnv, replay: MistakeNotebook,
                  learner=None, config: SessionConfig | None = None,
                  seed: int | None = None) -> EpisodeReport:
    """One-shot convenience wrapper around :class:`CorrectionSession`."""
    session = CorrectionSession(env, replay, config, seed=seed)
    return session.drive_episode(policy, intervenor, learner)
