"""Pointwise variation of sampled cumulation series.

For finitely sampled series the partition supremum defining the variation
collapses to the sum over consecutive samples (refinement can only increase
a telescoped sum), so that is the discrete semantics used here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ZetaSeries:
    """Sampled per-element cumulation variable.

    times : (m,) strictly increasing sample times
    values: (m, n_elem) scalar variant or (m, n_elem, 2) vector variant
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.shape[0] != t.size:
            raise ValueError("values must have one row per sample time")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        if v.ndim not in (2, 3):
            raise ValueError("values must be (m, n_elem) or (m, n_elem, 2)")

    @property
    def n_samples(self) -> int:
        return self.times.size


def essential_variation(series: ZetaSeries, from_idx: int = 0,
                        to_idx: int | None = None) -> np.ndarray:
    """Per-element total variation over the sample range [from_idx, to_idx].

    Additive over concatenated ranges at any split index, and nonincreasing
    under subsampling (triangle inequality).
    """
    m = series.n_samples
    if to_idx is None:
        to_idx = m - 1
    if not (0 <= from_idx <= to_idx <= m - 1):
        raise IndexError(f"bad sample range [{from_idx}, {to_idx}] for {m} samples")
    vals = np.asarray(series.values, dtype=float)[from_idx:to_idx + 1]
    if vals.shape[0] < 2:
        return np.zeros(vals.shape[1])
    diffs = np.diff(vals, axis=0)
    if diffs.ndim == 3:
        return np.linalg.norm(diffs, axis=-1).sum(axis=0)
    return np.abs(diffs).sum(axis=0)
