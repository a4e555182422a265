from __future__ import annotations

import numpy as np
import pytest

from viscofatigue.variation_utils import ZetaSeries, essential_variation


def test_scalar_series_total_variation():
    s = ZetaSeries(times=np.array([0.0, 1.0, 2.0]),
                   values=np.array([[0.0], [2.0], [1.0]]))
    assert essential_variation(s)[0] == 3.0


def test_vector_series_euclidean_norm():
    s = ZetaSeries(times=np.array([0.0, 1.0]),
                   values=np.array([[[0.0, 0.0]], [[3.0, 4.0]]]))
    assert essential_variation(s)[0] == 5.0


def test_additivity_any_split(rng):
    m, ne = 30, 7
    s = ZetaSeries(times=np.arange(m, dtype=float),
                   values=rng.standard_normal((m, ne, 2)))
    total = essential_variation(s)
    for split in range(m):
        left = essential_variation(s, 0, split)
        right = essential_variation(s, split, m - 1)
        assert np.array_equal(left + right, total) or \
            np.max(np.abs(left + right - total)) <= 1e-15 * (1 + total.max())


def test_refinement_monotonicity(rng):
    m, ne = 40, 5
    full = ZetaSeries(times=np.arange(m, dtype=float),
                      values=rng.standard_normal((m, ne, 2)))
    v_full = essential_variation(full)
    for _ in range(25):
        keep = np.sort(rng.choice(m, size=rng.integers(2, m), replace=False))
        sub = ZetaSeries(times=full.times[keep], values=full.values[keep])
        v_sub = essential_variation(sub)
        assert np.all(v_sub <= v_full + 1e-12)


def test_trace_cumulation_identity(ref_trace):
    # the recorded history equals the variation of the recorded zeta series
    s = ZetaSeries(times=ref_trace.times, values=ref_trace.zetas)
    var = essential_variation(s)
    final = ref_trace.Vs[-1] - ref_trace.Vs[0]
    assert np.max(np.abs(var - final)) <= 1e-12 * (1.0 + final.max())


def test_errors():
    s = ZetaSeries(times=np.array([0.0, 1.0]), values=np.zeros((2, 3)))
    with pytest.raises(IndexError):
        essential_variation(s, 0, 5)
    with pytest.raises(IndexError):
        essential_variation(s, -1, 1)
    with pytest.raises(ValueError):
        ZetaSeries(times=np.array([0.0, 0.0]), values=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ZetaSeries(times=np.array([0.0, 1.0]), values=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ZetaSeries(times=np.array([0.0]), values=np.zeros(1))
