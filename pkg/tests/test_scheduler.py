import math

import numpy as np
import pytest

from parkbench.env import Mode, ParkingEnv, TerminationStatus, Transition
from parkbench.errors import IllegalEventError, LifecycleError
from parkbench.harness.corrector import ScriptedIntervenor
from parkbench.replay import MistakeNotebook
from parkbench.scheduler import (
    CorrectionSession,
    Intervenor,
    Phase,
    SessionConfig,
    detect_failure,
    drive_episode,
)
from parkbench.vehicle import Action, VehicleParams

from conftest import make_open_scene
from test_replay import make_transition


@pytest.fixture
def session(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=3)
    return CorrectionSession(env, MistakeNotebook(), SessionConfig(), seed=5)


def begin(session, seed=11):
    """Start an episode manually (mirrors drive_episode's preamble)."""
    session.pending_rl = []
    session.pending_human = []
    session.correction_fail = []
    session.correction_fix_h = []
    session.correction_fix_rl = []
    session.phase = Phase.AUTONOMOUS
    session.mode = Mode.RL
    session.episode_counter += 1
    session.env.reset(slot_index=0, seed=seed)
    session.set_checkpoint()


def random_policy(rng):
    def act(obs):
        return Action(rng.uniform(-0.6, 0.6), rng.uniform(-1.5, 1.5))
    return act


# ---------------------------------------------------------------------------
# detect_failure
# ---------------------------------------------------------------------------

def test_detect_failure_matrix():
    fail = make_transition(Mode.RL, done=True)  # collision status
    assert detect_failure(fail)
    arrived = Transition(obs=np.zeros(4), action=Action(0, 0), reward=1.0, done=True,
                         next_obs=np.zeros(4), mode=Mode.RL,
                         status=TerminationStatus.ARRIVED)
    assert not detect_failure(arrived)
    running = make_transition(Mode.RL, done=False)
    assert not detect_failure(running)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_at_reset_has_zero_cursor(session):
    begin(session)
    cp = session.checkpoint
    assert cp.pending_cursor == 0
    assert cp.step_index == 0
    assert cp.pose == session.env.state.pose


def test_checkpoint_requires_rl_mode(session):
    begin(session)
    session.mode = Mode.HUMAN
    with pytest.raises(LifecycleError):
        session.set_checkpoint()


def test_later_checkpoint_replaces_earlier(session):
    begin(session)
    first = session.checkpoint
    session._apply_step(Action(0.1, 0.5))
    session.set_checkpoint()
    assert session.checkpoint is not first
    assert session.checkpoint.step_index == 1
    assert session.checkpoint.pending_cursor == 1


def test_checkpoint_after_hand_back_records_cursor(session):
    begin(session)
    for _ in range(5):
        session._apply_step(Action(0.0, 0.3))
    session.handle_event("take_control")
    for _ in range(3):
        session._apply_step(Action(0.0, 0.3))
    session.handle_event("hand_back")
    assert session.checkpoint.pending_cursor == 5
    assert len(session.notebook.human) == 3
    assert session.pending_human == []
    assert session.mode is Mode.RL


# ---------------------------------------------------------------------------
# rollback
# ---------------------------------------------------------------------------

def test_rollback_restores_pose_and_counters(session):
    begin(session)
    cp = session.checkpoint
    for _ in range(8):
        session._apply_step(Action(0.2, 1.0))
    assert session.env.state.t == 8
    session.rollback()
    assert session.env.state.pose == cp.pose
    assert session.env.state.t == cp.step_index
    assert session.phase is Phase.CORRECTING
    assert session.mode is Mode.HUMAN_CORR


def test_rollback_replay_reproduces_failure_bit_exact(session):
    begin(session)
    rng = np.random.default_rng(17)
    actions = [Action(rng.uniform(-0.6, 0.6), rng.uniform(-1.5, 1.5)) for _ in range(12)]
    first = [session.env.step(a, Mode.RL) for a in actions]
    session.rollback()
    second = [session.env.step(a, Mode.RL) for a in actions]
    for a, b in zip(first, second):
        assert a.reward == b.reward
        assert np.array_equal(a.next_obs, b.next_obs)


def test_rollback_without_checkpoint_raises(session):
    with pytest.raises(LifecycleError):
        session.rollback()


# ---------------------------------------------------------------------------
# failed-segment extraction
# ---------------------------------------------------------------------------

def test_extraction_slices_from_cursor(session):
    begin(session)
    import dataclasses
    session.pending_rl = [make_transition(Mode.RL, tag=i) for i in range(30)]
    session.checkpoint = dataclasses.replace(session.checkpoint, pending_cursor=0)
    seg = session.extract_failed_segment()
    assert len(seg) == 30
    assert session.pending_rl == []


def test_extraction_respects_n_min(session):
    begin(session)
    import dataclasses
    session.pending_rl = [make_transition(Mode.RL, tag=i) for i in range(24)]
    session.checkpoint = dataclasses.replace(session.checkpoint, pending_cursor=20)
    with pytest.raises(LifecycleError):
        session.extract_failed_segment()  # 4 <= n_min = 5
    session.pending_rl = [make_transition(Mode.RL, tag=i) for i in range(26)]
    seg = session.extract_failed_segment()
    assert len(seg) == 6
    assert [t.obs[0] for t in seg] == [20, 21, 22, 23, 24, 25]


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

def test_event_legality_matrix(session):
    begin(session)
    # autonomous + rl
    with pytest.raises(IllegalEventError):
        session.handle_event("release_to_rl")
    with pytest.raises(IllegalEventError):
        session.handle_event("hand_back")
    with pytest.raises(IllegalEventError):
        session.handle_event("retry")
    with pytest.raises(IllegalEventError):
        session.handle_event("discard")
    session.handle_event("take_control")
    assert session.mode is Mode.HUMAN
    with pytest.raises(IllegalEventError):
        session.handle_event("take_control")
    session.handle_event("hand_back")
    assert session.mode is Mode.RL
    with pytest.raises(IllegalEventError):
        session.handle_event("unknown_event")


def test_release_to_rl_tags_rl_corr(session):
    begin(session)
    for _ in range(8):
        session._apply_step(Action(0.0, 1.0))
    session.extract_failed_segment()
    session.rollback()
    session._apply_step(Action(0.0, -0.5))
    session.handle_event("release_to_rl")
    assert session.mode is Mode.RL_CORR
    t = session._apply_step(Action(0.0, -0.5))
    assert t.mode is Mode.RL_CORR
    assert len(session.correction_fix_rl) == 1
    assert len(session.correction_fix_h) == 1
    session.handle_event("take_control")
    assert session.mode is Mode.HUMAN_CORR


def test_retry_returns_to_same_checkpoint(session):
    begin(session)
    cp_pose = session.checkpoint.pose
    for _ in range(8):
        session._apply_step(Action(0.1, 1.0))
    session.extract_failed_segment()
    session.rollback()
    session._apply_step(Action(0.0, -0.5))
    assert session.finalize_correction(TerminationStatus.COLLISION) is False
    assert session.phase is Phase.AWAITING_DECISION
    session.handle_event("retry")
    assert session.phase is Phase.CORRECTING
    assert session.env.state.pose == cp_pose
    assert session.correction_fix_h == []          # fix buffers cleared
    assert len(session.correction_fail) == 8       # failed segment kept


def test_discard_drops_attempt(session):
    begin(session)
    for _ in range(8):
        session._apply_step(Action(0.1, 1.0))
    session.extract_failed_segment()
    session.rollback()
    session._apply_step(Action(0.0, -0.5))
    session.finalize_correction(TerminationStatus.TIMEOUT)
    session.handle_event("discard")
    assert session.phase is Phase.IDLE
    assert session.correction_fail == []
    assert len(session.notebook.regions) == 0


# ---------------------------------------------------------------------------
# finalize_correction
# ---------------------------------------------------------------------------

def test_accepted_correction_commits_region(session):
    begin(session)
    for _ in range(8):
        session._apply_step(Action(0.0, 1.0))
    session.extract_failed_segment()
    session.rollback()
    for _ in range(6):
        session._apply_step(Action(0.0, -0.5))
    accepted = session.finalize_correction(TerminationStatus.ARRIVED)
    assert accepted
    assert len(session.notebook.regions) == 1
    region = session.notebook.regions[0]
    assert len(region.fail_rl) == 8
    assert len(region.fix_human) == 6
    assert all(t.mode is Mode.HUMAN_CORR for t in region.fix_human)


def test_zero_fix_correction_rejected(session):
    begin(session)
    for _ in range(8):
        session._apply_step(Action(0.0, 1.0))
    session.extract_failed_segment()
    session.rollback()
    accepted = session.finalize_correction(TerminationStatus.ARRIVED)
    assert not accepted
    assert session.phase is Phase.AWAITING_DECISION


def test_non_arrival_correction_rejected(session):
    begin(session)
    for _ in range(8):
        session._apply_step(Action(0.0, 1.0))
    session.extract_failed_segment()
    session.rollback()
    session._apply_step(Action(0.0, -0.5))
    assert session.finalize_correction(TerminationStatus.COLLISION) is False


# ---------------------------------------------------------------------------
# drive_episode end-to-end
# ---------------------------------------------------------------------------

def test_pure_rl_episode_commits_to_buffer(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=23)
    nb = MistakeNotebook()
    session = CorrectionSession(env, nb, SessionConfig(), seed=29)
    report = session.drive_episode(random_policy(np.random.default_rng(31)), None)
    assert report.status is not None
    assert len(nb.rl) == report.steps  # every pending transition committed
    assert len(nb.regions) == 0
    assert report.env_steps == report.steps


def test_mode_tags_consistent_through_episode(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=37)
    nb = MistakeNotebook()
    session = CorrectionSession(env, nb, SessionConfig(), seed=41)
    seen = []
    session.on_step = lambda s, t, lr: seen.append((s.phase, t.mode))
    intervenor = ScriptedIntervenor(open_scene, env.params, env.config)
    session.drive_episode(random_policy(np.random.default_rng(43)), intervenor)
    for phase, mode in seen:
        if phase is Phase.AUTONOMOUS:
            assert mode in (Mode.RL, Mode.HUMAN)
        else:
            assert mode in (Mode.RL_CORR, Mode.HUMAN_CORR)


def test_failed_episode_with_corrector_commits_region(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=47)
    nb = MistakeNotebook()
    session = CorrectionSession(env, nb, SessionConfig(max_retries=1), seed=53)
    intervenor = ScriptedIntervenor(open_scene, env.params, env.config)
    policy = random_policy(np.random.default_rng(59))
    regions_before = 0
    failures_seen = 0
    for _ in range(8):
        report = session.drive_episode(policy, intervenor)
        if report.status is not TerminationStatus.ARRIVED or report.correction_steps:
            failures_seen += 1
            # failed episodes with long-enough segments must yield a region
            # (the scripted corrector almost always succeeds on the open lot)
    assert failures_seen > 0
    assert len(nb.regions) >= 1
    for region in nb.regions:
        assert region.fail_rl and region.fix_pool


def test_episode_report_counts_are_consistent(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=61)
    nb = MistakeNotebook()
    session = CorrectionSession(env, nb, SessionConfig(max_retries=1), seed=67)
    intervenor = ScriptedIntervenor(open_scene, env.params, env.config)
    report = session.drive_episode(random_policy(np.random.default_rng(71)), intervenor)
    assert report.env_steps == report.steps + report.correction_steps
    assert report.env_steps <= session.total_env_steps


def test_no_transition_in_both_buffer_and_region(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=73)
    nb = MistakeNotebook()
    session = CorrectionSession(env, nb, SessionConfig(max_retries=1), seed=79)
    intervenor = ScriptedIntervenor(open_scene, env.params, env.config)
    policy = random_policy(np.random.default_rng(83))
    for _ in range(6):
        session.drive_episode(policy, intervenor)
    buffer_ids = {id(t) for t in nb.rl} | {id(t) for t in nb.human}
    region_ids = set()
    for r in nb.regions:
        region_ids |= {id(t) for t in r.fail_rl + r.fix_rl + r.fix_human}
    assert not (buffer_ids & region_ids)


def test_drive_episode_wrapper(open_scene):
    env = ParkingEnv(open_scene, VehicleParams(), seed=89)
    nb = MistakeNotebook()
    report = drive_episode(random_policy(np.random.default_rng(97)), None, env, nb)
    assert report.status is not None
