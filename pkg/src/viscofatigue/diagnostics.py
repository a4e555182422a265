"""Per-step and per-run verification: Kuhn-Tucker residuals, energy balance,
and the stability functional.

All reports are pure functions of recorded states.  The stability value is
the lumped-L2 norm of the positive part of the damage driving force beyond
the fatigue threshold; it vanishes exactly on first-order stable states and
matches the viscous rate norm at converged damaging steps whose lower bound
is inactive.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .energy_forms import dissipation_load, grad_alpha_energy, make_state, total_energy
from .incremental_step import ACTIVE_TOL, StepInputs, StepResult
from .material_laws import MaterialLaws
from .mesh_fe import FeOperators

if TYPE_CHECKING:  # avoids a runtime import cycle with the driver
    from .evolution_driver import EvolutionTrace


@dataclass(frozen=True)
class KktReport:
    """First-order optimality residuals of one accepted step."""

    eq_residual: float
    max_sign_violation: float
    complementarity_max: float
    lower_active_count: int


@dataclass(frozen=True)
class BalanceReport:
    """Terms of the discrete energy-dissipation balance on a grid interval."""

    energy_start: float
    energy_end: float
    dissipated_total: float
    viscous_total: float
    work_total: float
    residual: float


def energy_of(alpha: np.ndarray, u: np.ndarray, ops: FeOperators,
              laws: MaterialLaws):
    return total_energy(make_state(alpha, u, ops), ops, laws)


def driving_force_density(alpha: np.ndarray, u: np.ndarray, V: np.ndarray,
                          ops: FeOperators, laws: MaterialLaws) -> np.ndarray:
    """Nodal density (G - F)/m of the damage driving force beyond threshold."""
    G = grad_alpha_energy(make_state(alpha, u, ops), ops, laws)
    F = dissipation_load(V, ops, laws)
    return (G - F) / ops.lumped_mass


def psi_of_density(density: np.ndarray, mass: np.ndarray) -> float:
    """Weighted norm of the positive part of a nodal density."""
    dpos = np.maximum(density, 0.0)
    return float(np.sqrt(np.dot(mass, dpos * dpos)))


def stability_psi(alpha: np.ndarray, u: np.ndarray, V: np.ndarray,
                  ops: FeOperators, laws: MaterialLaws) -> float:
    """Lumped-L2 norm of the positive part of the driving-force density.

    Realizes the supremum of <-(G - F), beta> over nonpositive beta with
    unit lumped-L2 norm (the maximizer is minus the normalized positive
    part), and equals the lumped-L2 distance of G - F from the nonpositive
    cone.
    """
    d = driving_force_density(alpha, u, V, ops, laws)
    return psi_of_density(d, ops.lumped_mass)


def kkt_residuals(step: StepResult, inputs: StepInputs, ops: FeOperators,
                  laws: MaterialLaws) -> KktReport:
    """Residuals of the discrete Euler conditions at an accepted step.

    eq_residual is |<G, adot> + R(adot) + eps*||adot||^2| normalized by the
    sum of the three magnitudes (0 when all vanish).  Sign violations are
    classified nodewise: |d| on free nodes, the positive part of d at the
    active upper bound, the negative part at the active lower bound.
    """
    m = ops.lumped_mass
    tau = inputs.tau
    G = grad_alpha_energy(make_state(step.alpha, step.u, ops, step.V), ops, laws)
    F = dissipation_load(inputs.V_prev, ops, laws)
    dalpha = step.alpha - inputs.alpha_prev
    adot = dalpha / tau

    s1 = float(np.dot(G, adot))
    s2 = float(-np.dot(F, adot))
    s3 = inputs.eps * float(np.dot(m, adot * adot))
    denom = abs(s1) + abs(s2) + abs(s3)
    eq_residual = abs(s1 + s2 + s3) / denom if denom > 0.0 else 0.0

    d = G - F + (inputs.eps / tau) * m * dalpha
    at_up = step.alpha >= inputs.alpha_prev - ACTIVE_TOL
    at_lo = step.alpha <= ACTIVE_TOL
    pinched = at_up & at_lo
    free = ~(at_up | at_lo)
    viol = np.zeros_like(d)
    viol[free] = np.abs(d[free])
    up_only = at_up & ~pinched
    lo_only = at_lo & ~pinched
    viol[up_only] = np.maximum(d[up_only], 0.0)
    viol[lo_only] = np.maximum(-d[lo_only], 0.0)
    max_sign = float(viol.max()) if viol.size else 0.0

    comp = np.abs(d[free] * (inputs.alpha_prev - step.alpha)[free])
    comp_max = float(comp.max()) if comp.size else 0.0

    return KktReport(eq_residual=eq_residual, max_sign_violation=max_sign,
                     complementarity_max=comp_max,
                     lower_active_count=int(np.count_nonzero(at_lo)))


def energy_balance_residual(trace: "EvolutionTrace", i1: int, i2: int,
                            viscous_via_psi: bool = False) -> BalanceReport:
    """Energy-dissipation balance over grid interval [i1, i2].

    residual = (E_end + dissipated + viscous) - (E_start + work), with every
    term computed by the exact discrete quadrature of the recorded run.
    With viscous_via_psi the viscous term is replaced by the reparametrisation
    -invariant form sum tau * ||adot|| * Psi.
    """
    if not (0 <= i1 < i2 <= trace.k):
        raise IndexError(f"bad grid interval [{i1}, {i2}] for k={trace.k}")
    sl = slice(i1 + 1, i2 + 1)
    e_start = float(trace.E_elastic[i1] + trace.E_gradient[i1])
    e_end = float(trace.E_elastic[i2] + trace.E_gradient[i2])
    diss = float(trace.diss_inc[sl].sum())
    if viscous_via_psi:
        visc = float((trace.eps_alphadot[sl] / trace.eps
                      * trace.psi[sl]).sum() * trace.tau)
    else:
        visc = float(trace.visc_inc[sl].sum())
    work = float(trace.work_inc[sl].sum())
    residual = (e_end + diss + visc) - (e_start + work)
    return BalanceReport(energy_start=e_start, energy_end=e_end,
                         dissipated_total=diss, viscous_total=visc,
                         work_total=work, residual=residual)
