"""Brute-force certification of the damage subproblem on tiny convex instances.

With a linear shear modulus the damage subproblem is a box-constrained
convex quadratic; on instances with at most 8 unknowns every lower/upper/free
pattern can be enumerated and the global minimiser certified exactly.  The
batch check feeds the same instances to the production bound-constrained
solver and compares nodewise.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .incremental_step import SolverConfig, solve_bound_constrained

MAX_ORACLE_SIZE = 8
PSD_TOL = 1e-10


@dataclass(frozen=True)
class OracleProblem:
    """Dense encoding min 1/2 a^T Q a + c^T a over lo <= a <= hi.

    Q bundles the damage-gradient stiffness and the viscous lumped-mass
    diagonal; c bundles the (linear-law) elastic coefficient, minus the
    dissipation load, minus the viscous anchor term.
    """

    Q: np.ndarray
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mass: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = self.c.size
        if self.Q.shape != (n, n):
            raise ValueError("Q/c shapes inconsistent")
        if n > MAX_ORACLE_SIZE:
            raise ValueError(f"oracle limited to n <= {MAX_ORACLE_SIZE} (3^n enumeration)")
        if not np.allclose(self.Q, self.Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        eigmin = float(np.linalg.eigvalsh(self.Q).min())
        if eigmin < -PSD_TOL:
            raise ValueError(f"Q must be PSD within {PSD_TOL} (min eig {eigmin:.3e})")
        if np.any(self.lo > self.hi):
            raise ValueError("lo must be <= hi")

    @property
    def n(self) -> int:
        return self.c.size

    def objective(self, a: np.ndarray) -> float:
        return 0.5 * float(a @ self.Q @ a) + float(self.c @ a)

    def gradient(self, a: np.ndarray) -> np.ndarray:
        return self.Q @ a + self.c


def oracle_damage_step(problem: OracleProblem, tol: float = 1e-9) -> np.ndarray:
    """Global minimiser by exhaustive active-set enumeration (3^n patterns).

    Per pattern: fix bound variables, solve the reduced system, keep the
    point only if primal-feasible with correct multiplier signs; return the
    feasible KKT point of least objective.  Singular reduced systems are
    skipped (with Q PD this cannot exclude the optimum).
    """
    n = problem.n
    Q, c, lo, hi = problem.Q, problem.c, problem.lo, problem.hi
    best: np.ndarray | None = None
    best_obj = np.inf
    for pattern in product((0, 1, 2), repeat=n):
        pat = np.asarray(pattern)
        x = np.where(pat == 0, lo, np.where(pat == 2, hi, 0.0))
        free = np.nonzero(pat == 1)[0]
        if free.size:
            Qff = Q[np.ix_(free, free)]
            rhs = -(c[free] + Q[free] @ x - Qff @ x[free])
            try:
                xf = np.linalg.solve(Qff, rhs)
            except np.linalg.LinAlgError:
                continue
            x[free] = xf
            if np.any(xf < lo[free] - tol) or np.any(xf > hi[free] + tol):
                continue
        g = problem.gradient(x)
        ok = True
        for i in range(n):
            if pat[i] == 0 and g[i] < -tol:
                ok = False
            elif pat[i] == 2 and g[i] > tol:
                ok = False
            elif pat[i] == 1 and abs(g[i]) > max(tol, 1e-8 * (1 + abs(g[i]))):
                ok = False
            if not ok:
                break
        if not ok:
            continue
        x = np.clip(x, lo, hi)
        val = problem.objective(x)
        if val < best_obj:
            best_obj = val
            best = x
    if best is None:
        raise RuntimeError("no feasible KKT pattern found (Q not PD enough?)")
    return best


def solve_with_main_solver(problem: OracleProblem,
                           cfg: SolverConfig | None = None) -> np.ndarray:
    """Run the production bound-constrained solver on a dense instance."""
    cfg = cfg or SolverConfig()
    Qs = sp.csr_matrix(problem.Q)

    def obj(a: np.ndarray) -> float:
        return problem.objective(a)

    def grad(a: np.ndarray) -> np.ndarray:
        return problem.gradient(a)

    def hess(_: np.ndarray) -> sp.spmatrix:
        return Qs

    mass = problem.mass if problem.mass is not None else np.ones(problem.n)
    x, _ = solve_bound_constrained(obj, grad, hess, problem.lo, problem.hi,
                                   problem.hi.copy(), cfg, mass=mass)
    return x


def generate_instances(seed: int, count: int,
                       n_range: tuple[int, int] = (2, 6)) -> list[OracleProblem]:
    """Seeded random convex instances with the damage-subproblem structure.

    Q = chain-graph stiffness (symmetric M-matrix, zero row sums) plus a
    positive viscous diagonal; c = elastic coefficient (>= 0, linear law)
    minus dissipation load minus viscous anchor.
    """
    rng = np.random.default_rng(seed)
    lo_n, hi_n = n_range
    problems = []
    for _ in range(count):
        n = int(rng.integers(lo_n, hi_n + 1))
        K = np.zeros((n, n))
        for i in range(n - 1):
            w = rng.uniform(0.5, 2.0)
            K[i, i] += w
            K[i + 1, i + 1] += w
            K[i, i + 1] -= w
            K[i + 1, i] -= w
        m = rng.uniform(0.1, 1.0, size=n)
        ratio = rng.uniform(0.5, 20.0)  # eps/tau
        Q = K + np.diag(ratio * m)
        alpha_prev = rng.uniform(0.0, 1.0, size=n)
        b = rng.uniform(0.0, 3.0, size=n) * m  # elastic slope, linear law
        F = rng.uniform(0.05, 1.5) * m        # dissipation load
        c = b - F - ratio * m * alpha_prev
        problems.append(OracleProblem(Q=Q, c=c, lo=np.zeros(n),
                                      hi=alpha_prev, mass=m))
    return problems


def oracle_batch_check(seed: int, count: int,
                       cfg: SolverConfig | None = None,
                       tol: float = 1e-8) -> dict:
    """Compare the main solver against the enumeration oracle instance by instance."""
    problems = generate_instances(seed, count)
    mismatches = 0
    worst = 0.0
    per_instance = []
    for idx, prob in enumerate(problems):
        ref = oracle_damage_step(prob)
        got = solve_with_main_solver(prob, cfg)
        err = float(np.max(np.abs(ref - got))) if prob.n else 0.0
        worst = max(worst, err)
        ok = err <= tol
        if not ok:
            mismatches += 1
        per_instance.append({"index": idx, "n": prob.n, "max_abs_diff": err, "ok": ok})
    return {
        "seed": seed,
        "count": count,
        "tolerance": tol,
        "mismatches": mismatches,
        "worst_diff": worst,
        "instances": per_instance,
    }
