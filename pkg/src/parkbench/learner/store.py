"""Versioned binary checkpoints for learner parameters and optimizer state.

Layout (little-endian)::

    magic b"PBPM" | version u16 | meta_len u32 | meta (UTF-8 JSON)
    | tensor_count u32 | records...
    record: name_len u16 | name UTF-8 | ndim u8 | dims u32* | payload f64*

The metadata block carries the learner configuration, the Adam step
counters, and the sampler RNG state, so a reload continues a run
bit-exactly. Loading reads the whole file before touching anything; a
truncated or mismatched file leaves no partial state behind.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from ..errors import StoreError, VersionError
from .nets import Adam
from .sac import LearnerConfig, SoftActorCritic

_MAGIC = b"PBPM"
_VERSION = 1


def _opt_tensors(name: str, opt: Adam) -> dict[str, np.ndarray]:
    out = {}
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        out[f"opt.{name}.m{i}"] = m
        out[f"opt.{name}.v{i}"] = v
    return out


def _all_tensors(learner: SoftActorCritic) -> dict[str, np.ndarray]:
    tensors = dict(learner.params.named_tensors())
    tensors.update(_opt_tensors("actor", learner.opt_actor))
    tensors.update(_opt_tensors("critic", learner.opt_critic))
    tensors.update(_opt_tensors("ae", learner.opt_ae))
    tensors.update(_opt_tensors("alpha", learner.opt_alpha))
    return tensors


def save_params(learner: SoftActorCritic, path) -> None:
    cfg = asdict(learner.config)
    cfg["hidden"] = list(cfg["hidden"])
    meta = {
        "config": cfg,
        "obs_dim": learner.obs_dim,
        "bounds": list(map(float, learner.bounds)),
        "updates_done": learner.updates_done,
        "adam_steps": {
            "actor": learner.opt_actor.t,
            "critic": learner.opt_critic.t,
            "ae": learner.opt_ae.t,
            "alpha": learner.opt_alpha.t,
        },
        "rng_state": learner._rng.bit_generator.state,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    tensors = _all_tensors(learner)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<HI", _VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise StoreError("truncated checkpoint file")
    return data


def load_params(path) -> SoftActorCritic:
    """Rebuild a learner from a checkpoint; fails cleanly on bad files."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise StoreError("not a parameter checkpoint")
        version, meta_len = struct.unpack("<HI", _read_exact(f, 6))
        if version != _VERSION:
            raise VersionError(f"checkpoint format v{version}, expected v{_VERSION}")
        meta = json.loads(_read_exact(f, meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        loaded: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(_read_exact(f, size * 8), dtype="<f8").reshape(shape).copy()
            loaded[name] = arr

    cfg_map = dict(meta["config"])
    cfg_map["hidden"] = tuple(cfg_map["hidden"])
    learner = SoftActorCritic(meta["obs_dim"], tuple(meta["bounds"]),
                              LearnerConfig(**cfg_map))
    expected = _all_tensors(learner)
    missing = set(expected) - set(loaded)
    extra = set(loaded) - set(expected)
    if missing or extra:
        raise StoreError(f"tensor set mismatch (missing {sorted(missing)[:3]}, "
                         f"extra {sorted(extra)[:3]})")
    for name, dst in expected.items():
        src = loaded[name]
        if dst.shape != src.shape:
            raise StoreError(f"tensor {name} shape {src.shape}, expected {dst.shape}")
        dst[...] = src
    steps = meta["adam_steps"]
    learner.opt_actor.t = steps["actor"]
    learner.opt_critic.t = steps["critic"]
    learner.opt_ae.t = steps["ae"]
    learner.opt_alpha.t = steps["alpha"]
    learner.updates_done = meta["updates_done"]
    learner._rng.bit_generator.state = meta["rng_state"]
    return learner
