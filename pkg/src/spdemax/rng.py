"""Reproducible per-path random streams.

Every Monte Carlo sample ``i`` of a run with master seed ``s`` draws its
normals from its own Philox stream keyed by ``(s, i)``.  A sample therefore
sees the same numbers no matter how the run is blocked, ordered or
parallelised, which is what makes common-random-number coupling between
estimators possible.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for sample ``index`` of master seed ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class NormalStreams:
    """Lazily advanced standard-normal streams for a block of samples.

    Draws are consumed sequentially per sample, so drawing ``n`` then ``k``
    values gives the same numbers as drawing ``n + k`` at once.
    """

    def __init__(self, seed: int, indices: Sequence[int]):
        self.indices = np.asarray(indices, dtype=np.int64)
        self._gens = [stream(seed, int(i)) for i in self.indices]

    def __len__(self) -> int:
        return len(self._gens)

    def draw(self, n: int, rows=None) -> np.ndarray:
        """Next ``n`` normals for each selected row; shape (rows, n)."""
        if rows is None:
            rows = range(len(self._gens))
        rows = list(rows)
        out = np.empty((len(rows), n))
        for k, r in enumerate(rows):
            out[k] = self._gens[r].standard_normal(n)
        return out


def normal_block(seed: int, indices: Sequence[int], n: int) -> np.ndarray:
    """First ``n`` normals of each listed sample stream; shape (len(indices), n)."""
    return NormalStreams(seed, indices).draw(n)


def sample_blocks(n_samples: int, block: int):
    """Yield consecutive index ranges covering ``range(n_samples)``."""
    for start in range(0, n_samples, block):
        yield np.arange(start, min(start + block, n_samples))
