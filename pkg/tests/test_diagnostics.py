from __future__ import annotations

import numpy as np
import pytest

from viscofatigue.diagnostics import (energy_balance_residual, kkt_residuals,
                                      psi_of_density, stability_psi)
from viscofatigue.energy_forms import dissipation_load, grad_alpha_energy, make_state
from viscofatigue.evolution_driver import LoadProgram, run_evolution
from viscofatigue.incremental_step import (StepInputs, StepResult,
                                           alternate_minimize, solve_equilibrium)
from viscofatigue.material_laws import MaterialLaws
from viscofatigue.mesh_fe import build_fe_operators, build_structured_mesh


def test_kkt_report_elastic_step(ops8):
    laws = MaterialLaws(f0=1e6, f_inf=1e5)
    alpha_prev = np.full(ops8.n_nodes, 0.9)
    inputs = StepInputs(alpha_prev=alpha_prev,
                        V_prev=np.zeros(ops8.n_triangles),
                        zeta_prev=np.zeros((ops8.n_triangles, 2)),
                        w_bc=0.5 * ops8.mesh.nodes[:, 0], eps=0.1, tau=0.01)
    res = alternate_minimize(inputs, ops8, laws)
    rep = kkt_residuals(res, inputs, ops8, laws)
    assert rep.eq_residual == 0.0
    assert rep.max_sign_violation == 0.0
    assert rep.complementarity_max == 0.0
    assert rep.lower_active_count == 0


def test_kkt_sign_violation_detects_nonstationary_free_node(ops8, ref_laws):
    # hand-built: a free node whose driving force is not balanced
    alpha_prev = np.full(ops8.n_nodes, 0.9)
    alpha = alpha_prev.copy()
    alpha[40] = 0.5  # strictly between the bounds, but no force balance
    u = solve_equilibrium(alpha, 0.5 * ops8.mesh.nodes[:, 0], ops8, ref_laws)
    inputs = StepInputs(alpha_prev=alpha_prev,
                        V_prev=np.zeros(ops8.n_triangles),
                        zeta_prev=np.zeros((ops8.n_triangles, 2)),
                        w_bc=0.5 * ops8.mesh.nodes[:, 0], eps=0.1, tau=0.01)
    fake = StepResult(alpha=alpha, u=u,
                      zeta=np.zeros((ops8.n_triangles, 2)),
                      V=np.zeros(ops8.n_triangles), am_iterations=1,
                      lower_bound_active=np.array([], dtype=int),
                      objective_decrease=0.0)
    rep = kkt_residuals(fake, inputs, ops8, ref_laws)
    G = grad_alpha_energy(make_state(alpha, u, ops8), ops8, ref_laws)
    F = dissipation_load(inputs.V_prev, ops8, ref_laws)
    d = G - F + (inputs.eps / inputs.tau) * ops8.lumped_mass * (alpha - alpha_prev)
    assert rep.max_sign_violation == pytest.approx(abs(d[40]))
    assert rep.max_sign_violation > 0.1


def test_psi_two_node_toy():
    assert psi_of_density(np.array([2.0, -7.0]), np.array([0.5, 0.5])) \
        == pytest.approx(np.sqrt(2.0))


def test_psi_zero_on_stable_state(ops8, ref_laws):
    # no load: driving force is the (negative) dissipation threshold alone
    alpha = np.full(ops8.n_nodes, 0.8)
    u = np.zeros(ops8.n_nodes)
    V = np.zeros(ops8.n_triangles)
    assert stability_psi(alpha, u, V, ops8, ref_laws) == 0.0


def test_psi_positive_part_duality(rng):
    # the supremum over random nonpositive unit directions never exceeds psi
    # and is attained at minus the normalized positive part
    m = rng.uniform(0.1, 1.0, 50)
    d = rng.standard_normal(50) * 2.0
    psi = psi_of_density(d, m)
    g = m * d  # pairing <g, beta> = sum m d beta
    best = 0.0
    for _ in range(10_000):
        beta = -np.abs(rng.standard_normal(50))
        beta /= np.sqrt(np.dot(m, beta * beta))
        best = max(best, float(-np.dot(g, beta)))
    assert best <= psi + 1e-12
    dpos = np.maximum(d, 0.0)
    beta_star = -dpos / np.sqrt(np.dot(m, dpos * dpos))
    best = max(best, float(-np.dot(g, beta_star)))
    assert abs(best - psi) <= 1e-6


def test_psi_matches_viscous_rate_on_reference_run(ref_trace):
    # identity between the stability value and the viscous rate norm at
    # damaging steps with inactive lower bound
    checked = 0
    for i in range(1, ref_trace.k + 1):
        a = ref_trace.eps_alphadot[i]
        b = ref_trace.psi[i]
        if a > 0 and ref_trace.lower_active_count[i] == 0:
            assert abs(a - b) <= 1e-4 * (a + b + 1e-12)
            checked += 1
    assert checked >= 5


def test_balance_elastic_stationary(ops8):
    laws = MaterialLaws(f0=1e6, f_inf=1e5)
    load = LoadProgram(profile=ops8.mesh.nodes[:, 0], schedule="ramp",
                       T=1.0, rate=0.0)
    tr = run_evolution(ops8, laws, load, k=10, eps=0.1, alpha0=0.9)
    rep = energy_balance_residual(tr, 0, 10)
    assert rep.dissipated_total == 0.0
    assert rep.viscous_total == 0.0
    assert rep.residual == pytest.approx(0.0, abs=1e-14)


def test_balance_additive_over_nested_intervals(ref_trace):
    k = ref_trace.k
    full = energy_balance_residual(ref_trace, 0, k)
    for mid in (17, k // 2, 83):
        left = energy_balance_residual(ref_trace, 0, mid)
        right = energy_balance_residual(ref_trace, mid, k)
        assert abs(full.residual - (left.residual + right.residual)) \
            <= 1e-12 * (1.0 + abs(full.residual))
        assert left.dissipated_total + right.dissipated_total \
            == pytest.approx(full.dissipated_total, abs=1e-15)


def test_balance_index_validation(ref_trace):
    with pytest.raises(IndexError):
        energy_balance_residual(ref_trace, 5, 5)
    with pytest.raises(IndexError):
        energy_balance_residual(ref_trace, -1, 5)
    with pytest.raises(IndexError):
        energy_balance_residual(ref_trace, 0, ref_trace.k + 1)


def test_recast_balance_matches_within_identity_gap(ref_trace):
    # replacing the viscous term by the rate-times-stability integrand
    # reproduces the balance up to the accumulated identity gap
    std = energy_balance_residual(ref_trace, 0, ref_trace.k)
    recast = energy_balance_residual(ref_trace, 0, ref_trace.k,
                                     viscous_via_psi=True)
    tau = ref_trace.tau
    bound = 0.0
    for i in range(1, ref_trace.k + 1):
        a = ref_trace.eps_alphadot[i]
        b = ref_trace.psi[i]
        bound += tau * (a / ref_trace.eps) * abs(a - b)
    assert abs(recast.residual - std.residual) <= bound + 1e-12


def test_driver_records_match_diagnostics(ref_trace):
    # spot check: recorded kkt and psi columns are recomputable
    i = 40
    ops, laws = ref_trace.ops, ref_trace.laws
    psi = stability_psi(ref_trace.alphas[i], ref_trace.us[i],
                        ref_trace.Vs[i - 1], ops, laws)
    assert psi == pytest.approx(ref_trace.psi[i], rel=1e-12, abs=1e-15)
