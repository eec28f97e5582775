"""Seeded random streams.

Every simulation takes an explicit :class:`numpy.random.Generator`. Streams
are backed by the counter-based Philox bit generator and are derived from a
master seed plus an integer key path, so replicate ``i`` of a run always gets
the same stream no matter how the replicates are scheduled.
"""
from __future__ import annotations

import numpy as np


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Return the stream identified by ``(seed, *key)``.

    Distinct key paths give statistically independent streams; the same key
    path always gives the same stream.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def replicate_streams(seed: int, reps: int, *prefix: int) -> list[np.random.Generator]:
    return [make_stream(seed, *prefix, i) for i in range(reps)]


def stream_id(seed: int, *key: int) -> int:
    """A 64-bit integer fingerprint of a stream, used in manifests and CSVs."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
