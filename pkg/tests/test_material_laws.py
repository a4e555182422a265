from __future__ import annotations

import numpy as np
import pytest

from viscofatigue.material_laws import (MaterialLaws, eval_f, eval_g,
                                        eval_g_zeta, eval_mu,
                                        zeta_increment_norm)


def test_smoothstep_midpoint():
    laws = MaterialLaws(mu_min=1.0, mu_max=10.0)
    val, der = eval_mu(laws, 0.5)
    assert val == pytest.approx(5.5, abs=1e-14)
    assert der == pytest.approx(13.5, abs=1e-14)


def test_mu_clamps_below_and_above():
    laws = MaterialLaws(mu_min=1.0, mu_max=10.0)
    val, der = eval_mu(laws, -3.0)
    assert (val, der) == (1.0, 0.0)
    v1, _ = eval_mu(laws, 1.0)
    v2, _ = eval_mu(laws, 2.0)
    assert v1 == v2 == 10.0


def test_linear_mu_endpoint_slopes():
    # one-sided derivative of the restriction to [0, 1]; zero strictly outside
    laws = MaterialLaws(mu_kind="linear", mu_min=1.0, mu_max=10.0)
    assert eval_mu(laws, 0.0)[1] == 9.0
    assert eval_mu(laws, 1.0)[1] == 9.0
    assert eval_mu(laws, 1.0 + 1e-9)[1] == 0.0
    assert eval_mu(laws, -1e-9)[1] == 0.0
    assert eval_mu(laws, 0.5)[0] == pytest.approx(5.5)


def test_mu_monotone_random_pairs(rng):
    for laws in (MaterialLaws(), MaterialLaws(mu_kind="linear")):
        a = rng.uniform(-0.5, 1.5, size=200)
        b = a + rng.uniform(0.0, 1.0, size=200)
        va, _ = eval_mu(laws, a)
        vb, _ = eval_mu(laws, b)
        assert np.all(vb >= va - 1e-15)


def test_mu_derivative_finite_difference(rng):
    h = 1e-6
    for laws in (MaterialLaws(mu_min=0.5, mu_max=4.0),
                 MaterialLaws(mu_kind="linear", mu_min=0.5, mu_max=4.0)):
        samples = rng.uniform(-0.5, 1.5, size=200)
        keep = (np.abs(samples) > 2 * h) & (np.abs(samples - 1.0) > 2 * h)
        samples = samples[keep][:50]
        for a in samples:
            _, der = eval_mu(laws, float(a))
            fd = (eval_mu(laws, a + h)[0] - eval_mu(laws, a - h)[0]) / (2 * h)
            assert abs(der - fd) <= 1e-6


def test_f_linear_clamped_values():
    laws = MaterialLaws(f0=1.0, f_k=0.5, f_inf=0.1)
    assert eval_f(laws, 0.0) == (1.0, -0.5)
    val, slope = eval_f(laws, 10.0)
    assert (val, slope) == (0.1, 0.0)


def test_f_exponential_monotone(rng):
    laws = MaterialLaws(f_kind="exponential", f0=1.0, f_k=2.0, f_inf=0.1)
    assert eval_f(laws, 1e9)[0] == pytest.approx(0.1)
    pairs = rng.uniform(0.0, 20.0, size=(100, 2))
    for v1, v2 in pairs:
        lo, hi = min(v1, v2), max(v1, v2)
        assert eval_f(laws, hi)[0] <= eval_f(laws, lo)[0] + 1e-15


def test_f_rejects_negative_cumulation():
    with pytest.raises(ValueError):
        eval_f(MaterialLaws(), -0.5)


def test_f_lipschitz_constant_bounds_increments(rng):
    for laws in (MaterialLaws(f0=2.0, f_k=0.7, f_inf=0.2),
                 MaterialLaws(f_kind="exponential", f0=2.0, f_k=0.7, f_inf=0.2)):
        L = laws.f_lipschitz_constant()
        v = rng.uniform(0.0, 30.0, size=(1000, 2))
        f1, _ = eval_f(laws, v[:, 0])
        f2, _ = eval_f(laws, v[:, 1])
        dv = np.abs(v[:, 0] - v[:, 1])
        mask = dv > 0
        assert np.all(np.abs(f1 - f2)[mask] <= L * dv[mask] * (1 + 1e-12))


def test_zeta_strain_variant():
    laws = MaterialLaws(g_kind="one", zeta_variant="vector")
    z = eval_g_zeta(laws, 0.3, np.array([2.0, 0.0]))
    assert np.allclose(z, [2.0, 0.0])


def test_zeta_energy_density_variant():
    laws = MaterialLaws(mu_min=1.0, mu_max=10.0, g_kind="equals_mu",
                        zeta_variant="scalar_power", theta=2.0)
    z = eval_g_zeta(laws, 1.0, np.array([1.0, 1.0]))
    assert z == pytest.approx(20.0)


def test_zeta_zero_gradient():
    for laws in (MaterialLaws(zeta_variant="vector"),
                 MaterialLaws(zeta_variant="scalar_power", theta=1.5)):
        z = eval_g_zeta(laws, 0.4, np.zeros(2))
        assert np.all(np.asarray(z) == 0.0)


def test_zeta_increment_norms():
    laws_v = MaterialLaws(zeta_variant="vector")
    assert zeta_increment_norm(laws_v, np.array([[0.0, 0.0]]),
                               np.array([[3.0, 4.0]]))[0] == 5.0
    laws_s = MaterialLaws(zeta_variant="scalar_power")
    assert zeta_increment_norm(laws_s, np.array([2.0]), np.array([1.0]))[0] == 1.0


def test_g_kinds():
    assert eval_g(MaterialLaws(g_kind="one"), 0.7) == (1.0, 0.0)
    laws = MaterialLaws(g_kind="equals_mu", mu_min=1.0, mu_max=10.0)
    assert eval_g(laws, 0.5) == eval_mu(laws, 0.5)
    laws2 = MaterialLaws(g_kind="smoothstep", g_min=2.0, g_max=4.0)
    val, der = eval_g(laws2, 0.5)
    assert val == pytest.approx(3.0)
    assert der == pytest.approx(3.0)


def test_law_validation():
    with pytest.raises(ValueError):
        MaterialLaws(mu_min=0.0)
    with pytest.raises(ValueError):
        MaterialLaws(mu_min=2.0, mu_max=1.0)
    with pytest.raises(ValueError):
        MaterialLaws(f_inf=2.0, f0=1.0)
    with pytest.raises(ValueError):
        MaterialLaws(mu_kind="cubic")
    with pytest.raises(ValueError):
        MaterialLaws(zeta_variant="scalar_power", theta=5.0)
    with pytest.raises(ValueError):
        MaterialLaws(f_k=-1.0)
