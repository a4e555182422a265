"""One viscous time increment: equilibrium solve, damage subproblem, history.

The increment alternates two exact substeps until stagnation: a linear
equilibrium solve at frozen damage, and a bound-constrained minimisation of
the damage energy plus fatigue dissipation plus viscous penalty at frozen
displacement.  The damage solver is projected gradient with backtracking
(monotone descent) interleaved with active-set Newton refinement, so the
stationary point satisfies the nodewise Kuhn-Tucker conditions to solver
tolerance; for a convex (linear shear modulus) subproblem it reproduces the
global minimiser.

Meshes at desk scale use dense linear algebra (LAPACK) for the reduced
systems; larger meshes fall back to sparse factorizations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy_forms import dissipation_load, make_state, total_energy
from .material_laws import MaterialLaws, eval_g_zeta, eval_mu, eval_mu_second
from .mesh_fe import FeOperators, element_gradients

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-12
ACTIVE_TOL = 1e-10
DENSE_NODE_LIMIT = 1500


class EquilibriumError(RuntimeError):
    """Equilibrium solve failed its residual contract."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and caps for one incremental step.

    tol_pg is relative to a per-solve gradient scale; tol_kkt is the
    nodewise sign tolerance used by the diagnostics.
    """

    tol_pg: float = 1e-11
    tol_stag: float = 1e-9
    tol_kkt: float = 1e-8
    max_pg_iters: int = 4000
    max_am_sweeps: int = 300


@dataclass
class StepInputs:
    """Data carried from the previous grid node into one increment."""

    alpha_prev: np.ndarray
    V_prev: np.ndarray
    zeta_prev: np.ndarray
    w_bc: np.ndarray
    eps: float
    tau: float

    def __post_init__(self) -> None:
        if self.eps <= 0 or self.tau <= 0:
            raise ValueError("eps and tau must be > 0")
        if np.any(self.alpha_prev < -ACTIVE_TOL) or np.any(self.alpha_prev > 1 + ACTIVE_TOL):
            raise ValueError("alpha_prev out of [0, 1]")
        if np.any(self.V_prev < 0):
            raise ValueError("V_prev must be >= 0")


@dataclass
class StepResult:
    """Converged increment: fields, history, and solve accounting."""

    alpha: np.ndarray
    u: np.ndarray
    zeta: np.ndarray
    V: np.ndarray
    am_iterations: int
    lower_bound_active: np.ndarray
    objective_decrease: float
    pg_norm: float = 0.0
    flags: tuple[str, ...] = ()


@dataclass
class BoundSolveInfo:
    iterations: int
    pg_norm: float
    converged: bool
    newton_steps: int = 0


def projected_gradient_vector(x: np.ndarray, g: np.ndarray,
                              lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Nodewise first-order violation: g on free nodes, its infeasible part at bounds."""
    pg = g.copy()
    at_lo = x <= lo + BOUND_TOL
    at_hi = x >= hi - BOUND_TOL
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi] = np.maximum(g[at_hi], 0.0)
    # nodes pinched between equal bounds are fully determined
    pg[at_lo & at_hi] = 0.0
    return pg


def _solve_reduced(H, g_f: np.ndarray, free: np.ndarray,
                   damping: float, mass: np.ndarray) -> np.ndarray | None:
    """Direction solving (H_ff + damping diag(m_f)) d = -g_f; None on failure."""
    if sp.issparse(H):
        Hff = H[np.ix_(free, free)].tocsc()
        if damping > 0.0:
            Hff = Hff + sp.diags(damping * mass[free])
        try:
            d = spla.spsolve(Hff, -g_f)
        except RuntimeError:
            return None
    else:
        Hff = H[np.ix_(free, free)]
        if damping > 0.0:
            Hff = Hff + np.diag(damping * mass[free])
        try:
            d = np.linalg.solve(Hff, -g_f)
        except np.linalg.LinAlgError:
            return None
    if not np.all(np.isfinite(d)):
        return None
    return d


def solve_bound_constrained(obj: Callable[[np.ndarray], float],
                            grad: Callable[[np.ndarray], np.ndarray],
                            hess: Callable[[np.ndarray], object],
                            lo: np.ndarray, hi: np.ndarray, x0: np.ndarray,
                            cfg: SolverConfig,
                            mass: np.ndarray | None = None) -> tuple[np.ndarray, BoundSolveInfo]:
    """Minimise a smooth objective over the box [lo, hi].

    Each iteration first attempts a damped active-set Newton step on the
    free nodes (Levenberg loop against indefinite model Hessians) and falls
    back to a monotone projected-gradient step with a spectral step length
    and Armijo backtracking.  If the projected gradient already vanishes at
    x0, x0 is returned unchanged (no spurious perturbation).
    """
    n = x0.size
    if mass is None:
        mass = np.ones(n)
    x = np.clip(x0, lo, hi)
    g = grad(x)
    scale = 1.0 + float(np.max(np.abs(g)))
    tol = cfg.tol_pg * scale
    pg = projected_gradient_vector(x, g, lo, hi)
    pg_norm = float(np.max(np.abs(pg)))
    if pg_norm <= tol:
        return np.clip(x0, lo, hi), BoundSolveInfo(0, pg_norm, True)

    J = obj(x)
    step = 1.0 / scale
    x_old: np.ndarray | None = None
    g_old: np.ndarray | None = None
    newton_steps = 0
    stalls = 0

    for it in range(1, cfg.max_pg_iters + 1):
        pg_norm_before = pg_norm
        did_newton = False
        at_lo = x <= lo + ACTIVE_TOL
        at_hi = x >= hi - ACTIVE_TOL
        free = np.nonzero(~(at_lo | at_hi))[0]
        if free.size:
            H = hess(x)
            for damping in (0.0, 1.0, 1e2, 1e4):
                d = _solve_reduced(H, g[free], free, damping, mass)
                if d is None or np.dot(d, g[free]) >= 0:
                    continue
                t = 1.0
                for _ in range(12):
                    xt = x.copy()
                    xt[free] += t * d
                    np.clip(xt, lo, hi, out=xt)
                    Jt = obj(xt)
                    accept = Jt < J
                    gt = None
                    if not accept and t == 1.0 and Jt <= J + 1e-12 * (1.0 + abs(J)):
                        # fp-flat objective near the solution: accept on a
                        # solid projected-gradient contraction instead
                        gt = grad(xt)
                        pgt = projected_gradient_vector(xt, gt, lo, hi)
                        accept = float(np.max(np.abs(pgt))) <= 0.5 * pg_norm
                    if accept:
                        x_old, g_old = x, g
                        x, J = xt, Jt
                        g = grad(x) if gt is None else gt
                        did_newton = True
                        newton_steps += 1
                        break
                    t *= 0.5
                if did_newton:
                    break
        if not did_newton:
            # spectral (BB) step length, safeguarded
            if x_old is not None and g_old is not None:
                dx = x - x_old
                dg = g - g_old
                denom = float(np.dot(dx, dg))
                if denom > 1e-300:
                    step = float(np.dot(dx, dx)) / denom
            step = min(max(step, 1e-12 / scale), 1e12 / scale)
            t = step
            accepted = False
            for _ in range(30):
                xt = np.clip(x - t * g, lo, hi)
                dxt = xt - x
                if not np.any(dxt):
                    break
                Jt = obj(xt)
                if Jt <= J + 1e-4 * float(np.dot(g, dxt)):
                    x_old, g_old = x, g
                    x, J = xt, Jt
                    g = grad(x)
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                # no feasible descent along the gradient path
                pg = projected_gradient_vector(x, g, lo, hi)
                pg_norm = float(np.max(np.abs(pg)))
                break
        pg = projected_gradient_vector(x, g, lo, hi)
        pg_norm = float(np.max(np.abs(pg)))
        if pg_norm <= tol:
            return x, BoundSolveInfo(it, pg_norm, True, newton_steps)
        # roundoff floor: near the solution the iteration stops contracting
        if pg_norm <= 1e3 * tol and pg_norm >= 0.9 * pg_norm_before:
            stalls += 1
            if stalls >= 3:
                break
        elif pg_norm < 0.9 * pg_norm_before:
            stalls = 0

    # Final active-set polish: classify bounds by KKT signs, solve the
    # reduced system, accept only if it lands feasible with clean signs.
    for _ in range(8):
        at_lo = (x <= lo + ACTIVE_TOL) & (g >= -tol)
        at_hi = (x >= hi - ACTIVE_TOL) & (g <= tol) & ~at_lo
        free = np.nonzero(~(at_lo | at_hi))[0]
        if free.size == 0:
            break
        xt = x.copy()
        xt[at_lo] = lo[at_lo]
        xt[at_hi] = hi[at_hi]
        d = _solve_reduced(hess(x), grad(xt)[free], free, 0.0, mass)
        if d is None:
            break
        xt[free] += d
        if np.any(xt < lo - BOUND_TOL) or np.any(xt > hi + BOUND_TOL):
            break
        np.clip(xt, lo, hi, out=xt)
        Jt = obj(xt)
        if Jt > J + tol:
            break
        x, J = xt, Jt
        g = grad(x)
        pg = projected_gradient_vector(x, g, lo, hi)
        pg_norm = float(np.max(np.abs(pg)))
        if pg_norm <= tol:
            return x, BoundSolveInfo(cfg.max_pg_iters, pg_norm, True, newton_steps)

    return x, BoundSolveInfo(cfg.max_pg_iters, pg_norm, pg_norm <= tol, newton_steps)


def assemble_weighted_stiffness(alpha: np.ndarray, ops: FeOperators,
                                laws: MaterialLaws) -> sp.csr_matrix:
    """Sparse stiffness with elementwise coefficient mu(abar_e)."""
    abar = ops.elem_average(alpha)
    mu, _ = eval_mu(laws, abar)
    tris = ops.mesh.triangles
    ke = mu[:, None, None] * ops.elem_stiffness
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)),
                      shape=(ops.n_nodes, ops.n_nodes)).tocsr()
    A.sum_duplicates()
    return A


def solve_equilibrium(alpha: np.ndarray, w_bc: np.ndarray, ops: FeOperators,
                      laws: MaterialLaws) -> np.ndarray:
    """Displacement with div(mu(alpha) grad u) = 0 and u = w on the Dirichlet set."""
    mesh = ops.mesh
    n = ops.n_nodes
    dir_idx = mesh.dirichlet_nodes
    free_idx = mesh.free_nodes
    u = np.zeros(n)
    u[dir_idx] = w_bc[dir_idx]
    if free_idx.size == 0:
        return u
    abar = ops.elem_average(alpha)
    mu, _ = eval_mu(laws, abar)
    if n <= DENSE_NODE_LIMIT:
        A = ops.assemble_dense(mu)
        Aff = A[np.ix_(free_idx, free_idx)]
        b = -(A[np.ix_(free_idx, dir_idx)] @ u[dir_idx])
        u[free_idx] = np.linalg.solve(Aff, b)
    else:
        A = assemble_weighted_stiffness(alpha, ops, laws)
        Aff = A[np.ix_(free_idx, free_idx)].tocsc()
        b = -(A[np.ix_(free_idx, dir_idx)] @ u[dir_idx])
        u[free_idx] = spla.spsolve(Aff, b)
    resid = float(np.linalg.norm(Aff @ u[free_idx] - b))
    if not np.isfinite(resid) or resid > 1e-10 * (1.0 + float(np.linalg.norm(b))):
        raise EquilibriumError(
            f"equilibrium residual {resid:.3e} exceeds contract "
            f"(mu >= mu_min > 0 should make the system SPD)")
    return u


def _damage_problem(grad_u: np.ndarray, inputs: StepInputs, ops: FeOperators,
                    laws: MaterialLaws):
    """Objective, gradient and model Hessian of the damage subproblem at fixed u."""
    tris = ops.mesh.triangles
    areas = ops.mesh.areas
    gsq = np.einsum("td,td->t", grad_u, grad_u)
    F = dissipation_load(inputs.V_prev, ops, laws)
    w = inputs.eps / inputs.tau
    m = ops.lumped_mass
    K = ops.stiffness
    a_prev = inputs.alpha_prev
    n = ops.n_nodes
    dense = n <= DENSE_NODE_LIMIT
    if dense:
        base = K.toarray() + np.diag(w * m)
    half_area_gsq = 0.5 * areas * gsq
    third_area_gsq = half_area_gsq / 3.0

    def obj(a: np.ndarray) -> float:
        abar = a[tris].mean(axis=1)
        mu, _ = eval_mu(laws, abar)
        elastic = float(np.dot(half_area_gsq, mu))
        grad_term = 0.5 * float(a @ (K @ a))
        da = a - a_prev
        diss = -float(np.dot(F, da))
        visc = 0.5 * w * float(np.dot(m, da * da))
        return elastic + grad_term + diss + visc

    def grad(a: np.ndarray) -> np.ndarray:
        abar = a[tris].mean(axis=1)
        _, dmu = eval_mu(laws, abar)
        G = ops.scatter_vertex(third_area_gsq * dmu)
        G += K @ a
        return G - F + w * m * (a - a_prev)

    if dense:
        flat = ops.scatter_flat

        def hess(a: np.ndarray) -> np.ndarray:
            abar = a[tris].mean(axis=1)
            d2mu = eval_mu_second(laws, abar)
            block = (areas * gsq * d2mu) / 18.0
            H = base.copy()
            H.ravel()[:] += np.bincount(flat, weights=np.repeat(block, 9),
                                        minlength=n * n)
            return H
    else:
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        base_sp = (K + sp.diags(w * m)).tocsr()

        def hess(a: np.ndarray) -> sp.spmatrix:
            abar = a[tris].mean(axis=1)
            d2mu = eval_mu_second(laws, abar)
            block = (areas * gsq * d2mu) / 18.0
            Hel = sp.coo_matrix((np.repeat(block, 9), (rows, cols)),
                                shape=(n, n)).tocsr()
            return base_sp + Hel

    return obj, grad, hess


def solve_damage_subproblem(u: np.ndarray, inputs: StepInputs, ops: FeOperators,
                            laws: MaterialLaws,
                            cfg: SolverConfig | None = None,
                            warm_start: np.ndarray | None = None
                            ) -> tuple[np.ndarray, BoundSolveInfo]:
    """Damage update at fixed displacement: box constraints 0 <= a <= alpha_prev."""
    cfg = cfg or SolverConfig()
    grad_u = element_gradients(ops, u)
    obj, grad, hess = _damage_problem(grad_u, inputs, ops, laws)
    lo = np.zeros(ops.n_nodes)
    hi = inputs.alpha_prev
    x0 = inputs.alpha_prev if warm_start is None else warm_start
    alpha, info = solve_bound_constrained(obj, grad, hess, lo, hi, x0, cfg,
                                          mass=ops.lumped_mass)
    if not info.converged:
        logger.warning("damage subproblem hit iteration cap: pg_norm=%.3e", info.pg_norm)
    return alpha, info


def update_history(zeta_prev: np.ndarray, zeta_new: np.ndarray,
                   V_prev: np.ndarray) -> np.ndarray:
    """Cumulation update V + |zeta_new - zeta_prev| (elementwise norm)."""
    zp = np.asarray(zeta_prev, dtype=float)
    zn = np.asarray(zeta_new, dtype=float)
    V = np.asarray(V_prev, dtype=float)
    if zp.shape != zn.shape:
        raise ValueError(f"zeta shapes differ: {zp.shape} vs {zn.shape}")
    if np.any(V < 0):
        raise ValueError("V_prev must be >= 0")
    diff = zn - zp
    inc = np.linalg.norm(diff, axis=-1) if diff.ndim == 2 else np.abs(diff)
    if inc.shape != V.shape:
        raise ValueError(f"zeta/V shapes inconsistent: {inc.shape} vs {V.shape}")
    return V + inc


def joint_objective(alpha: np.ndarray, u: np.ndarray, inputs: StepInputs,
                    ops: FeOperators, laws: MaterialLaws) -> float:
    """Incremental functional E + D + viscous penalty at a candidate pair."""
    e = total_energy(make_state(alpha, u, ops), ops, laws).total
    da = alpha - inputs.alpha_prev
    F = dissipation_load(inputs.V_prev, ops, laws)
    diss = -float(np.dot(F, da))
    visc = 0.5 * (inputs.eps / inputs.tau) * float(np.dot(ops.lumped_mass, da * da))
    return e + diss + visc


def alternate_minimize(inputs: StepInputs, ops: FeOperators, laws: MaterialLaws,
                       cfg: SolverConfig | None = None) -> StepResult:
    """Alternate equilibrium and damage solves until damage stagnates.

    The result satisfies the equilibrium contract and the nodewise damage
    KKT conditions simultaneously; the final equilibrium is refreshed so the
    displacement is consistent with the returned damage field.
    """
    cfg = cfg or SolverConfig()
    alpha = inputs.alpha_prev.copy()
    u = solve_equilibrium(alpha, inputs.w_bc, ops, laws)
    obj_start = joint_objective(alpha, u, inputs, ops, laws)

    flags: list[str] = []
    am_iterations = 0
    info = BoundSolveInfo(0, 0.0, True)
    stale_u = False
    for _ in range(cfg.max_am_sweeps):
        am_iterations += 1
        if stale_u:
            u = solve_equilibrium(alpha, inputs.w_bc, ops, laws)
            stale_u = False
        alpha_new, info = solve_damage_subproblem(u, inputs, ops, laws, cfg,
                                                  warm_start=alpha)
        if not info.converged:
            flags.append("damage_cap")
        delta = float(np.max(np.abs(alpha_new - alpha))) if alpha.size else 0.0
        moved = delta > 0.0
        alpha = alpha_new
        stale_u = moved
        if delta <= cfg.tol_stag:
            break
    else:
        flags.append("am_cap")
    if stale_u:
        u = solve_equilibrium(alpha, inputs.w_bc, ops, laws)

    grad_u = element_gradients(ops, u)
    abar = ops.elem_average(alpha)
    zeta = eval_g_zeta(laws, abar, grad_u)
    V = update_history(inputs.zeta_prev, zeta, inputs.V_prev)
    obj_end = joint_objective(alpha, u, inputs, ops, laws)
    decrease = obj_start - obj_end
    if decrease < -1e-12 * (1.0 + abs(obj_start)):
        flags.append("objective_increase")

    lower_active = np.nonzero(alpha <= ACTIVE_TOL)[0]
    return StepResult(alpha=alpha, u=u, zeta=zeta, V=V,
                      am_iterations=am_iterations,
                      lower_bound_active=lower_active,
                      objective_decrease=decrease,
                      pg_norm=info.pg_norm,
                      flags=tuple(flags))
