"""Arc-length reparametrisation, cross-viscosity comparison, jump profiles.

A completed evolution is rescaled onto the arc-length variable built from
time plus the accumulated discrete H1 variation of damage and W^{1,p}
variation of displacement.  Slow time becomes 1-Lipschitz; viscous jumps
unfold into plateau intervals where the original time is nearly frozen.
Comparing rescaled evolutions across the viscosity parameter exposes the
concentration of instability onto plateaus as the viscosity vanishes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy_forms import dissipation_load, grad_alpha_energy, make_state
from .evolution_driver import EvolutionTrace
from .material_laws import MaterialLaws
from .mesh_fe import FeOperators

PSI_FLOOR = 1e-10


def lumped_l2_norm(v: np.ndarray, ops: FeOperators) -> float:
    return float(np.sqrt(np.dot(ops.lumped_mass, v * v)))


def h1_norm(v: np.ndarray, ops: FeOperators) -> float:
    """Lumped L2 part plus stiffness seminorm."""
    return float(np.sqrt(np.dot(ops.lumped_mass, v * v) + v @ (ops.stiffness @ v)))


def w1p_norm(v: np.ndarray, ops: FeOperators, p: float) -> float:
    """Discrete W^{1,p}: lumped nodal p-norm plus element gradient p-norm."""
    grads = np.einsum("tdi,ti->td", ops.elem_grad, v[ops.mesh.triangles])
    gnorm = np.linalg.norm(grads, axis=1)
    total = float(np.dot(ops.lumped_mass, np.abs(v) ** p)
                  + np.dot(ops.mesh.areas, gnorm ** p))
    return total ** (1.0 / p)


@dataclass
class RescaledEvolution:
    """Evolution resampled on its arc-length grid (one sample per step).

    s increases by tau + ||dalpha||_H1 + ||du||_W1p on each step, so the
    Lipschitz contract holds with equality per increment by construction.
    Plateau intervals are maximal runs of steps whose discrete time rate
    tau/ds does not exceed delta.
    """

    eps: float
    p: float
    delta: float
    s: np.ndarray               # (k+1,)
    t: np.ndarray               # (k+1,)
    alphas: np.ndarray
    us: np.ndarray
    Vs: np.ndarray
    zetas: np.ndarray
    psi: np.ndarray             # (k+1,) stability at each sample
    tdot: np.ndarray            # (k,) discrete time rate per s-interval
    plateau_steps: np.ndarray   # (k,) bool
    plateau_intervals: tuple[tuple[float, float], ...]
    S_eps: float
    meta: dict
    ops: FeOperators
    laws: MaterialLaws

    @property
    def n_samples(self) -> int:
        return self.s.size


def arc_length_rescale(trace: EvolutionTrace, p: float = 4.0,
                       delta: float = 0.1) -> RescaledEvolution:
    """Reparametrise a completed trace by its discrete arc length."""
    if p < 2:
        raise ValueError("norm exponent p must be >= 2")
    ops = trace.ops
    k = trace.k
    tau = trace.tau
    ds = np.empty(k)
    for i in range(1, k + 1):
        da = trace.alphas[i] - trace.alphas[i - 1]
        du = trace.us[i] - trace.us[i - 1]
        ds[i - 1] = tau + h1_norm(da, ops) + w1p_norm(du, ops, p)
    s = np.concatenate([[0.0], np.cumsum(ds)])
    tdot = tau / ds

    plateau = tdot <= delta
    intervals: list[tuple[float, float]] = []
    start = None
    for i in range(k):
        if plateau[i] and start is None:
            start = s[i]
        if not plateau[i] and start is not None:
            intervals.append((start, s[i]))
            start = None
    if start is not None:
        intervals.append((start, s[k]))

    meta = {
        "k": k, "T": trace.load.T, "eps": trace.eps,
        "n_nodes": ops.n_nodes, "n_triangles": ops.n_triangles,
        "schedule": trace.load.schedule,
        "amplitude": trace.load.amplitude, "rate": trace.load.rate,
        "period": trace.load.period,
        "zeta_variant": trace.laws.zeta_variant,
    }
    return RescaledEvolution(
        eps=trace.eps, p=p, delta=delta, s=s, t=trace.times.copy(),
        alphas=trace.alphas.copy(), us=trace.us.copy(), Vs=trace.Vs.copy(),
        zetas=trace.zetas.copy(), psi=trace.psi.copy(), tdot=tdot,
        plateau_steps=plateau, plateau_intervals=tuple(intervals),
        S_eps=float(s[-1]), meta=meta, ops=ops, laws=trace.laws)


@dataclass(frozen=True)
class SweepEntry:
    eps: float
    S_eps: float
    plateau_measure: float
    instability_measure: float
    fatigue_gap_proxy: float


@dataclass(frozen=True)
class SweepReport:
    """Cross-viscosity comparison of rescaled evolutions (sorted by eps desc)."""

    entries: tuple[SweepEntry, ...]
    instability_nonincreasing: bool | None
    arclength_ratio: float


def _fatigue_gap_proxy(resc: RescaledEvolution) -> float:
    """Largest elementwise gap f(coarse variation) - f(fine variation).

    Coarsening the sample set can only lower the accumulated variation and
    hence raise the fatigue weight; the reported maximum over a 2x coarsening
    is a finite-viscosity proxy for the open limit-weight gap, >= 0 always.
    """
    from .material_laws import eval_f
    from .variation_utils import ZetaSeries, essential_variation

    idx = np.arange(0, resc.n_samples, 2)
    if idx[-1] != resc.n_samples - 1:
        idx = np.append(idx, resc.n_samples - 1)
    series = ZetaSeries(times=resc.s, values=resc.zetas)
    v_fine = essential_variation(series)
    coarse = ZetaSeries(times=resc.s[idx], values=resc.zetas[idx])
    v_coarse = essential_variation(coarse)
    f_fine, _ = eval_f(resc.laws, v_fine)
    f_coarse, _ = eval_f(resc.laws, v_coarse)
    return float(np.max(f_coarse - f_fine, initial=0.0))


def sweep_compare(rescaled: list[RescaledEvolution],
                  delta: float | None = None) -> SweepReport:
    """Plateau and instability measures per viscosity, with monotonicity flag.

    The instability measure integrates the stability value over off-plateau
    samples (discrete time rate above delta); as the viscosity shrinks it
    should not grow, since instability concentrates on the plateaus.
    """
    if not rescaled:
        raise ValueError("need at least one rescaled evolution")
    ref = rescaled[0].meta
    for r in rescaled[1:]:
        same = {key: r.meta[key] for key in r.meta if key not in ("eps", "k")}
        ref_same = {key: ref[key] for key in ref if key not in ("eps", "k")}
        if same != ref_same:
            raise ValueError("rescaled evolutions come from incompatible configs")
    entries = []
    for r in sorted(rescaled, key=lambda r: -r.eps):
        d = delta if delta is not None else r.delta
        ds = np.diff(r.s)
        off = r.tdot > d
        instability = float(np.sum(r.psi[1:][off] * ds[off]))
        plateau_measure = float(np.sum(ds[~off]))
        entries.append(SweepEntry(eps=r.eps, S_eps=r.S_eps,
                                  plateau_measure=plateau_measure,
                                  instability_measure=instability,
                                  fatigue_gap_proxy=_fatigue_gap_proxy(r)))
    if len(entries) >= 2:
        vals = [e.instability_measure for e in entries]
        noninc = all(b <= a * (1.0 + 1e-9) + 1e-15
                     for a, b in zip(vals[:-1], vals[1:]))
    else:
        noninc = None
    smax = max(e.S_eps for e in entries)
    smin = min(e.S_eps for e in entries)
    return SweepReport(entries=tuple(entries),
                       instability_nonincreasing=noninc,
                       arclength_ratio=smax / smin)


@dataclass(frozen=True)
class JumpProfile:
    """Transition profile across one plateau interval.

    rho is the inner reparametrisation (midpoint quadrature of the damage
    rate over the stability value); alpha_sharp are the damage samples on
    the rho grid.  residuals holds the normalized per-interval defect of the
    unit-viscosity transition equation.
    """

    s_samples: np.ndarray
    rho: np.ndarray
    alpha_sharp: np.ndarray
    residuals: np.ndarray
    max_residual: float


def jump_profile(resc: RescaledEvolution, s_lo: float, s_hi: float,
                 psi_floor: float = PSI_FLOOR) -> JumpProfile:
    """Profile of the transition on [s_lo, s_hi], which must lie in a plateau.

    Preconditions: every step interval inside is plateau-flagged, the damage
    moves on every subsample, and the stability value stays above psi_floor
    (the reparametrisation divides by it).
    """
    if not any(lo <= s_lo and s_hi <= hi for lo, hi in resc.plateau_intervals):
        raise ValueError(
            f"[{s_lo}, {s_hi}] is not inside a detected plateau interval "
            f"(plateaus: {resc.plateau_intervals})")
    i_lo = int(np.searchsorted(resc.s, s_lo, side="left"))
    i_hi = int(np.searchsorted(resc.s, s_hi, side="right")) - 1
    if i_hi - i_lo < 2:
        raise ValueError("interval contains fewer than 3 samples")

    ops = resc.ops
    idx = np.arange(i_lo, i_hi + 1)
    dalpha_norms = np.array([
        lumped_l2_norm(resc.alphas[j] - resc.alphas[j - 1], ops)
        for j in idx[1:]])
    if np.any(dalpha_norms == 0.0):
        raise ValueError("damage is frozen on a subsample: the transition is "
                         "trivial there and the profile is undefined")
    psi = resc.psi[idx]
    if np.any(psi <= psi_floor):
        raise ValueError(
            f"stability value <= floor {psi_floor:g} inside the interval; "
            "the inner reparametrisation would divide by (near) zero")

    psi_mid = 0.5 * (psi[:-1] + psi[1:])
    drho = dalpha_norms / psi_mid
    rho = np.concatenate([[0.0], np.cumsum(drho)])

    # Residual of the unit-viscosity transition law per rho-interval:
    # |<G - F, d(alpha)/d(rho)> + ||d(alpha)/d(rho)||^2| at the midpoint.
    m = ops.lumped_mass
    residuals = np.empty(drho.size)
    for jj, j in enumerate(idx[1:]):
        adot = (resc.alphas[j] - resc.alphas[j - 1]) / drho[jj]
        d_prev = _driving_vector(resc, j - 1)
        d_curr = _driving_vector(resc, j)
        d_mid = 0.5 * (d_prev + d_curr)
        s1 = float(np.dot(d_mid, adot))
        s2 = float(np.dot(m, adot * adot))
        residuals[jj] = abs(s1 + s2) / (abs(s1) + abs(s2) + 1e-300)
    return JumpProfile(s_samples=resc.s[idx], rho=rho,
                       alpha_sharp=resc.alphas[idx].copy(),
                       residuals=residuals,
                       max_residual=float(residuals.max()))


def _driving_vector(resc: RescaledEvolution, j: int) -> np.ndarray:
    """Damage driving force G - F at sample j (weight from the prior cumulation)."""
    ops, laws = resc.ops, resc.laws
    state = make_state(resc.alphas[j], resc.us[j], ops)
    G = grad_alpha_energy(state, ops, laws)
    V = resc.Vs[max(j - 1, 0)]
    return G - dissipation_load(V, ops, laws)
