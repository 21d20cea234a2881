"""Append-only JSONL training statistics.

One JSON object per line; per-step and per-episode records share the
stream and are told apart by their ``type`` field. Records carry no
wall-clock fields, so two runs with the same seed produce identical
streams. Corrupt lines are skipped on read with a warning.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

log = logging.getLogger(__name__)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return value.item()
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value  # str enums
    return value


class StatsLogger:
    """Buffered line-delimited JSON writer."""

    def __init__(self, path, flush_every: int = 256):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")
        self._pending = 0
        self.flush_every = flush_every

    def log(self, record: dict) -> None:
        self._fh.write(json.dumps(_plain(record)) + "\n")
        self._pending += 1
        if self._pending >= self.flush_every:
            self.flush()

    def flush(self) -> None:
        self._fh.flush()
        self._pending = 0

    def close(self) -> None:
        self.flush()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_stats(path) -> tuple[list[dict], int]:
    """All parseable records plus the count of skipped corrupt lines."""
    records = []
    skipped = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                skipped += 1
                log.warning("skipping corrupt stats line %d in %s", lineno, path)
    if skipped:
        log.warning("%d corrupt lines skipped in %s", skipped, path)
    return records, skipped
