"""Deterministic per-point random substreams.

Every (seed, stream key, point index) triple owns its own generator, so the
draws for a grid point never depend on how points are split across workers.
"""

from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed


def _point_block(seed, key, indices, trials):
    return np.stack(
        [
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key) + (int(i),))).standard_normal(trials)
            for i in indices
        ]
    )


def point_draws(seed, key, n_points, trials, n_jobs=1):
    """Standard-normal draws of shape ``(n_points, trials)``.

    Row ``i`` comes from the substream ``(seed, *key, i)``; trial ``j`` is the
    ``j``-th draw of that substream.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n_jobs in (None, 1) or n_points < 2:
        return _point_block(seed, key, range(n_points), trials)
    chunks = np.array_split(np.arange(n_points), min(n_points, abs(int(n_jobs)) if n_jobs != -1 else n_points))
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_point_block)(seed, key, chunk, trials) for chunk in chunks if chunk.size
    )
    return np.concatenate(blocks, axis=0)
