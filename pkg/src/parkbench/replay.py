"""Multi-level replay memory: normal buffers plus per-episode correction regions.

The "mistake notebook" keeps three kinds of experience apart:

* two capacity-bounded FIFO buffers of ordinary transitions, one for
  autonomous (``rl``) steps and one for human-driven (``human``) steps;
* immutable per-episode correction regions, each pairing a failed
  autonomous segment with the human/policy segments that fixed it.

Mini-batches are assembled from *pairs*: a region is drawn with
probability proportional to its size, then one transition is drawn
uniformly from each side of the pair (rl x human for the normal region,
fail x fix for a correction region). With no human or correction data
the sampler degrades to plain uniform draws from the rl buffer.

Persistence format (little-endian, documented field by field)::

    header:  magic b"PBNB" | version u16 | rl_capacity u64 | human_capacity u64
             | rl_count u64 | human_count u64 | region_count u64
    then:    rl transitions, human transitions (oldest first)
    region:  episode_id u64 | fail u64 | fix_rl u64 | fix_human u64
             | that many transitions in the listed order
    transition (length-prefixed with u32 byte size):
             obs_dim u32 | obs f64*dim | action f64*2 (steer, velocity)
             | reward f64 | done u8 | status u8 (0 none, 1 arrived,
             2 collision, 3 timeout, 4 oob) | mode u8 (0 rl, 1 human,
             2 rl_corr, 3 human_corr) | next_obs_dim u32 | next_obs f64*dim
             | 8 breakdown f64 in REWARD_TERMS order

Floats round-trip bit-exactly (raw IEEE-754 payloads).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .env import REWARD_TERMS, Mode, TerminationStatus, Transition
from .errors import (
    BufferModeError,
    InvalidRegionError,
    NotEnoughDataError,
    StoreError,
    VersionError,
)
from .vehicle import Action

_MAGIC = b"PBNB"
_VERSION = 1

_MODE_CODE = {Mode.RL: 0, Mode.HUMAN: 1, Mode.RL_CORR: 2, Mode.HUMAN_CORR: 3}
_MODE_FROM = {v: k for k, v in _MODE_CODE.items()}
_STATUS_CODE = {None: 0, TerminationStatus.ARRIVED: 1, TerminationStatus.COLLISION: 2,
                TerminationStatus.TIMEOUT: 3, TerminationStatus.OOB: 4}
_STATUS_FROM = {v: k for k, v in _STATUS_CODE.items()}


class RingBuffer:
    """Bounded FIFO with O(1) append and random access."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._head = 0  # index of the oldest element once full

    def append(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._head] = item
            self._head = (self._head + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int):
        if not 0 <= i < len(self._items):
            raise IndexError(i)
        return self._items[(self._head + i) % len(self._items)] \
            if len(self._items) == self.capacity else self._items[i]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class CorrectionRegion:
    """One notebook page: a failed segment and the segments that fixed it."""

    episode_id: int
    fail_rl: tuple
    fix_rl: tuple
    fix_human: tuple

    @property
    def weight(self) -> int:
        return len(self.fail_rl) + len(self.fix_rl) + len(self.fix_human)

    @property
    def fix_pool(self) -> tuple:
        return self.fix_rl + self.fix_human


class MistakeNotebook:
    """Normal rl/human buffers plus the committed correction regions."""

    def __init__(self, rl_capacity: int = 100_000, human_capacity: int = 20_000):
        self.rl = RingBuffer(rl_capacity)
        self.human = RingBuffer(human_capacity)
        self.regions: list[CorrectionRegion] = []

    # ------------------------------------------------------------------
    # inserts
    # ------------------------------------------------------------------

    def push_normal(self, transition: Transition, which: str) -> None:
        """Append to a normal buffer; the transition mode must match."""
        if which == "rl":
            if transition.mode is not Mode.RL:
                raise BufferModeError(f"rl buffer rejects mode {transition.mode.value}")
            self.rl.append(transition)
        elif which == "human":
            if transition.mode is not Mode.HUMAN:
                raise BufferModeError(f"human buffer rejects mode {transition.mode.value}")
            self.human.append(transition)
        else:
            raise ValueError(f"unknown buffer {which!r}")

    def commit_region(self, episode_id: int, fail_rl, fix_human, fix_rl) -> CorrectionRegion:
        """Freeze an accepted correction episode into the notebook.

        Requires a nonempty failed segment and a nonempty fix pool, with
        the mode tags each side is supposed to carry.
        """
        fail_rl = tuple(fail_rl)
        fix_human = tuple(fix_human)
        fix_rl = tuple(fix_rl)
        if not fail_rl:
            raise InvalidRegionError("correction region needs a nonempty failed segment")
        if not (fix_human or fix_rl):
            raise InvalidRegionError("correction region needs a nonempty fix segment")
        if any(t.mode is not Mode.RL for t in fail_rl):
            raise InvalidRegionError("failed segment must carry mode=rl transitions")
        if any(t.mode is not Mode.HUMAN_CORR for t in fix_human):
            raise InvalidRegionError("human fix segment must carry mode=human_corr")
        if any(t.mode is not Mode.RL_CORR for t in fix_rl):
            raise InvalidRegionError("policy fix segment must carry mode=rl_corr")
        region = CorrectionRegion(episode_id, fail_rl, fix_rl, fix_human)
        self.regions.append(region)
        return region

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def region_weights(self) -> tuple[int, dict[int, int]]:
        """Size of the normal region and of every correction region."""
        w_normal = len(self.rl) + len(self.human)
        return w_normal, {r.episode_id: r.weight for r in self.regions}

    def _valid_regions(self) -> list[tuple[object, int]]:
        omega: list[tuple[object, int]] = []
        if len(self.rl) > 0 and len(self.human) > 0:
            omega.append(("normal", len(self.rl) + len(self.human)))
        for r in self.regions:
            if r.fail_rl and r.fix_pool:
                omega.append((r, r.weight))
        return omega

    def sample_pair(self, rng: np.random.Generator) -> tuple[Transition, Transition]:
        """Draw one evidence pair; regions chosen proportionally to size."""
        omega = self._valid_regions()
        if not omega:
            raise NotEnoughDataError("no valid sampling regions")
        total = sum(w for _, w in omega)
        pick = int(rng.integers(total))
        for tag, w in omega:
            if pick < w:
                break
            pick -= w
        if tag == "normal":
            first = self.rl[int(rng.integers(len(self.rl)))]
            second = self.human[int(rng.integers(len(self.human)))]
        else:
            first = tag.fail_rl[int(rng.integers(len(tag.fail_rl)))]
            pool = tag.fix_pool
            second = pool[int(rng.integers(len(pool)))]
        return first, second

    def sample_batch(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Assemble a batch of interleaved pairs, or fall back to plain draws.

        When neither human data nor valid correction regions exist the
        batch is filled with uniform draws from the rl buffer.
        """
        if batch_size % 2 != 0:
            raise ValueError(f"batch size must be even, got {batch_size}")
        if self._valid_regions():
            batch = []
            for _ in range(batch_size // 2):
                a, b = self.sample_pair(rng)
                batch.append(a)
                batch.append(b)
            return batch
        if len(self.rl) > 0:
            return [self.rl[int(rng.integers(len(self.rl)))] for _ in range(batch_size)]
        raise NotEnoughDataError("replay memory is empty")

    def stats(self) -> dict:
        w_normal, per_region = self.region_weights()
        return {
            "rl_size": len(self.rl),
            "human_size": len(self.human),
            "region_count": len(self.regions),
            "w_normal": w_normal,
            "region_weights": per_region,
        }

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<HQQQQQ", _VERSION, self.rl.capacity, self.human.capacity,
                                len(self.rl), len(self.human), len(self.regions)))
            for t in self.rl:
                _write_transition(f, t)
            for t in self.human:
                _write_transition(f, t)
            for r in self.regions:
                f.write(struct.pack("<QQQQ", r.episode_id, len(r.fail_rl),
                                    len(r.fix_rl), len(r.fix_human)))
                for t in r.fail_rl + r.fix_rl + r.fix_human:
                    _write_transition(f, t)

    @classmethod
    def load(cls, path) -> "MistakeNotebook":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != _MAGIC:
                raise StoreError(f"not a notebook file (magic {magic!r})")
            header = f.read(struct.calcsize("<HQQQQQ"))
            version, rl_cap, h_cap, rl_n, h_n, n_regions = struct.unpack("<HQQQQQ", header)
            if version != _VERSION:
                raise VersionError(f"notebook format v{version}, expected v{_VERSION}")
            nb = cls(rl_cap, h_cap)
            for _ in range(rl_n):
                nb.rl.append(_read_transition(f))
            for _ in range(h_n):
                nb.human.append(_read_transition(f))
            for _ in range(n_regions):
                episode_id, n_fail, n_fix_rl, n_fix_h = struct.unpack("<QQQQ", _read_exact(f, 32))
                fail = tuple(_read_transition(f) for _ in range(n_fail))
                fix_rl = tuple(_read_transition(f) for _ in range(n_fix_rl))
                fix_h = tuple(_read_transition(f) for _ in range(n_fix_h))
                nb.regions.append(CorrectionRegion(episode_id, fail, fix_rl, fix_h))
            return nb


def _write_transition(f, t: Transition) -> None:
    obs = np.asarray(t.obs, dtype="<f8")
    nxt = np.asarray(t.next_obs, dtype="<f8")
    payload = b"".join([
        struct.pack("<I", obs.size), obs.tobytes(),
        struct.pack("<dd", t.action.delta, t.action.v),
        struct.pack("<d?BB", t.reward, t.done, _STATUS_CODE[t.status], _MODE_CODE[t.mode]),
        struct.pack("<I", nxt.size), nxt.tobytes(),
        struct.pack("<8d", *(t.reward_breakdown.get(k, 0.0) for k in REWARD_TERMS)),
    ])
    f.write(struct.pack("<I", len(payload)))
    f.write(payload)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise StoreError("truncated notebook file")
    return data


def _read_transition(f) -> Transition:
    (size,) = struct.unpack("<I", _read_exact(f, 4))
    buf = memoryview(_read_exact(f, size))
    off = 0
    (obs_dim,) = struct.unpack_from("<I", buf, off); off += 4
    obs = np.frombuffer(buf, dtype="<f8", count=obs_dim, offset=off).copy(); off += obs_dim * 8
    delta, v = struct.unpack_from("<dd", buf, off); off += 16
    reward, done, status_code, mode_code = struct.unpack_from("<d?BB", buf, off); off += 11
    (nxt_dim,) = struct.unpack_from("<I", buf, off); off += 4
    nxt = np.frombuffer(buf, dtype="<f8", count=nxt_dim, offset=off).copy(); off += nxt_dim * 8
    terms = struct.unpack_from("<8d", buf, off); off += 64
    if off != size:
        raise StoreError(f"transition record size mismatch ({off} != {size})")
    return Transition(obs=obs, action=Action(delta, v), reward=reward, done=done,
                      next_obs=nxt, mode=_MODE_FROM[mode_code],
                      status=_STATUS_FROM[status_code],
                      reward_breakdown=dict(zip(REWARD_TERMS, terms)))
