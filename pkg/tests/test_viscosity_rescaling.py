from __future__ import annotations

import numpy as np
import pytest

from viscofatigue.config import load_config, build_problem
from viscofatigue.evolution_driver import LoadProgram, run_evolution
from viscofatigue.material_laws import MaterialLaws, eval_f
from viscofatigue.mesh_fe import build_fe_operators, build_structured_mesh
from viscofatigue.variation_utils import ZetaSeries, essential_variation
from viscofatigue.viscosity_rescaling import (arc_length_rescale, h1_norm,
                                              jump_profile, lumped_l2_norm,
                                              sweep_compare, w1p_norm)


@pytest.fixture(scope="module")
def jump_setup():
    """Ramp run with a pre-fatigued band: a localized, well-resolved jump."""
    mesh = build_structured_mesh(8, 8, dirichlet_sides=("left", "right"))
    ops = build_fe_operators(mesh)
    laws = MaterialLaws(mu_min=1.0, mu_max=10.0, f0=1.0, f_k=0.1, f_inf=0.05)
    load = LoadProgram(profile=mesh.nodes[:, 0], schedule="ramp", T=1.0, rate=1.0)
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    V0 = 3.0 * centroids[:, 0]
    return ops, laws, load, V0


def test_rescale_rejects_small_exponent(ref_trace):
    with pytest.raises(ValueError):
        arc_length_rescale(ref_trace, p=1.5)


def test_elastic_run_rescales_to_identity(ops8):
    laws = MaterialLaws(f0=1e6, f_inf=1e5)
    load = LoadProgram(profile=ops8.mesh.nodes[:, 0], schedule="ramp",
                       T=2.0, rate=0.0)
    tr = run_evolution(ops8, laws, load, k=16, eps=0.1, alpha0=0.9)
    resc = arc_length_rescale(tr)
    assert np.allclose(resc.s, resc.t, atol=1e-15)
    assert resc.S_eps == pytest.approx(2.0)
    assert not resc.plateau_intervals


def test_single_moving_step_additivity(ref_trace):
    # rebuild the arc length by hand: tau + damage H1 + displacement W1p
    resc = arc_length_rescale(ref_trace, p=4.0)
    ops = ref_trace.ops
    tau = ref_trace.tau
    expected = 0.0
    for i in range(1, ref_trace.k + 1):
        da = ref_trace.alphas[i] - ref_trace.alphas[i - 1]
        du = ref_trace.us[i] - ref_trace.us[i - 1]
        expected += tau + h1_norm(da, ops) + w1p_norm(du, ops, 4.0)
    assert resc.S_eps == pytest.approx(expected, rel=1e-14)
    assert resc.S_eps >= ref_trace.load.T


def test_lipschitz_contract_all_pairs(ref_trace):
    resc = arc_length_rescale(ref_trace, p=4.0)
    ops = ref_trace.ops
    n = resc.n_samples
    for i in range(n):
        for j in range(i + 1, n):
            ds = resc.s[j] - resc.s[i]
            total = (resc.t[j] - resc.t[i]
                     + h1_norm(resc.alphas[j] - resc.alphas[i], ops)
                     + w1p_norm(resc.us[j] - resc.us[i], ops, 4.0))
            assert total <= ds * (1.0 + 1e-10)
    assert np.all(np.diff(resc.t) >= 0.0)
    assert np.max(resc.tdot) <= 1.0 + 1e-12


def test_sweep_elastic_all_measures_vanish(ops8):
    laws = MaterialLaws(f0=1e6, f_inf=1e5)
    load = LoadProgram(profile=ops8.mesh.nodes[:, 0], schedule="triangle",
                       T=1.0, amplitude=0.2, period=0.5)
    entries = []
    for eps in (0.2, 0.1):
        tr = run_evolution(ops8, laws, load, k=20, eps=eps, alpha0=0.9)
        entries.append(arc_length_rescale(tr))
    rep = sweep_compare(entries)
    for e in rep.entries:
        assert e.instability_measure == 0.0
        assert e.plateau_measure == 0.0
    assert rep.instability_nonincreasing is True


def test_sweep_single_entry_degenerates(ref_trace):
    rep = sweep_compare([arc_length_rescale(ref_trace)])
    assert len(rep.entries) == 1
    assert rep.instability_nonincreasing is None
    assert rep.arclength_ratio == 1.0


def test_sweep_incompatible_configs_rejected(ref_trace, ops8):
    laws = MaterialLaws(f0=1e6, f_inf=1e5)
    other_load = LoadProgram(profile=ops8.mesh.nodes[:, 0], schedule="ramp",
                             T=2.0, rate=0.1)
    other = run_evolution(ops8, laws, other_load, k=10, eps=0.05, alpha0=0.9)
    with pytest.raises(ValueError):
        sweep_compare([arc_length_rescale(ref_trace),
                       arc_length_rescale(other)])


def test_sweep_instability_decreases_with_viscosity(config_dir):
    cfg = load_config(config_dir / "fatigue_sweep.cfg")
    ops, laws, load, solver = build_problem(cfg)
    entries = []
    for eps in cfg["run.eps"]:
        tr = run_evolution(ops, laws, load, k=cfg["run.steps"], eps=eps,
                           alpha0=cfg["run.alpha0"], solver_cfg=solver)
        entries.append(arc_length_rescale(tr, p=cfg["rescale.p"],
                                          delta=cfg["rescale.delta"]))
    rep = sweep_compare(entries)
    vals = [e.instability_measure for e in rep.entries]
    assert vals[0] > vals[1] > vals[2] > 0.0
    assert rep.instability_nonincreasing is True
    assert all(e.fatigue_gap_proxy >= 0.0 for e in rep.entries)


def test_fatigue_weight_refinement_bound(ref_trace, rng):
    # the weight from the fully-resolved cumulation never exceeds the weight
    # from any coarser sampling of the same series
    resc = arc_length_rescale(ref_trace)
    series = ZetaSeries(times=resc.s, values=resc.zetas)
    v_fine = essential_variation(series)
    f_fine, _ = eval_f(ref_trace.laws, v_fine)
    m = resc.n_samples
    for _ in range(10):
        keep = np.sort(rng.choice(np.arange(1, m - 1),
                                  size=rng.integers(1, m - 2), replace=False))
        keep = np.concatenate([[0], keep, [m - 1]])
        sub = ZetaSeries(times=resc.s[keep], values=resc.zetas[keep])
        f_coarse, _ = eval_f(ref_trace.laws, essential_variation(sub))
        assert np.all(f_fine <= f_coarse + 1e-14)


def test_jump_profile_refinement(jump_setup):
    ops, laws, load, V0 = jump_setup
    residuals = {}
    for k in (250, 500):
        tr = run_evolution(ops, laws, load, k=k, eps=0.05, alpha0=0.95, V0=V0)
        resc = arc_length_rescale(tr, p=4.0, delta=0.1)
        assert resc.plateau_intervals
        lo, hi = resc.plateau_intervals[0]
        prof = jump_profile(resc, lo, hi)
        assert prof.rho[0] == 0.0
        assert np.all(np.diff(prof.rho) > 0)
        residuals[k] = prof.max_residual
    assert residuals[500] <= 5e-2
    assert residuals[500] < residuals[250]


def test_jump_profile_guards(jump_setup, ref_trace):
    ops, laws, load, V0 = jump_setup
    tr = run_evolution(ops, laws, load, k=250, eps=0.05, alpha0=0.95, V0=V0)
    resc = arc_length_rescale(tr, p=4.0, delta=0.1)
    lo, hi = resc.plateau_intervals[0]
    with pytest.raises(ValueError):
        jump_profile(resc, 0.0, 0.5)  # outside any plateau
    # frozen damage: an elastic run has no plateau at all, and a constant
    # stretch inside a plateau is refused
    with pytest.raises(ValueError):
        jump_profile(resc, lo, lo + 1e-9)  # fewer than 3 samples


def test_jump_profile_uniform_state_affine(ops8, ref_laws):
    # spatially uniform jump: all damage increments are parallel, so the
    # inner reparametrisation is smooth and the transition law is exact
    load = LoadProgram(profile=ops8.mesh.nodes[:, 0], schedule="ramp",
                       T=1.0, rate=1.0)
    tr = run_evolution(ops8, ref_laws, load, k=500, eps=0.05, alpha0=0.95)
    resc = arc_length_rescale(tr, p=4.0, delta=0.1)
    lo, hi = resc.plateau_intervals[0]
    prof = jump_profile(resc, lo, hi)
    assert prof.max_residual <= 1e-10
    # damage profile over the inner variable: monotone, strictly moving
    perstep = np.diff(prof.alpha_sharp.min(axis=1))
    assert np.all(perstep < 0.0)
