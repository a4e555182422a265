"""Full discrete-time evolution on a uniform grid with boundary-load program.

The driver runs the viscous incremental steps in sequence, records every
field and accounting quantity (energies, dissipated/viscous/work increments,
Kuhn-Tucker residuals, stability values), and supports interpolation between
grid nodes, checkpointing, and bit-identical resume.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics
from .incremental_step import (SolverConfig, StepInputs, alternate_minimize,
                               solve_equilibrium)
from .material_laws import MaterialLaws, eval_g_zeta, eval_mu, zeta_increment_norm
from .mesh_fe import FeOperators, Mesh, build_fe_operators, element_gradients

logger = logging.getLogger(__name__)

SCHEDULES = ("ramp", "triangle", "sine")


@dataclass(frozen=True)
class LoadProgram:
    """Boundary datum w(t) = W(t) * profile, with W piecewise C^1 on [0, T].

    profile is a nodal field (only its Dirichlet values constrain u; the full
    field enters the boundary-work pairing).  Schedules: ramp W = rate*t;
    triangle / sine oscillate between +-amplitude with the given period,
    starting at 0 and peaking at a quarter period.
    """

    profile: np.ndarray
    schedule: str
    T: float
    rate: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self) -> None:
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.T <= 0:
            raise ValueError("final time T must be > 0")
        if self.schedule in ("triangle", "sine") and self.period <= 0:
            raise ValueError("period must be > 0")
        self.profile.setflags(write=False)

    def factor(self, t) -> np.ndarray:
        """Scalar load factor W(t), vectorized over t."""
        t = np.asarray(t, dtype=float)
        if self.schedule == "ramp":
            out = self.rate * t
        elif self.schedule == "sine":
            out = self.amplitude * np.sin(2.0 * np.pi * t / self.period)
        else:  # triangle, sine-phased: 0 -> +A -> 0 -> -A -> 0
            phase = np.mod(t / self.period, 1.0)
            out = self.amplitude * np.where(
                phase < 0.25, 4.0 * phase,
                np.where(phase < 0.75, 2.0 - 4.0 * phase, 4.0 * phase - 4.0))
        return out if out.ndim else float(out)

    def boundary_values(self, t: float) -> np.ndarray:
        return self.factor(t) * self.profile


@dataclass
class EvolutionTrace:
    """Complete record of one discrete evolution (arrays indexed by grid node).

    Increment arrays hold 0.0 at index 0.  Flags are per-step tuples; any
    solver trouble is recorded there, never dropped.
    """

    ops: FeOperators
    laws: MaterialLaws
    load: LoadProgram
    eps: float
    k: int
    solver_cfg: SolverConfig
    times: np.ndarray
    alphas: np.ndarray          # (k+1, n_nodes)
    us: np.ndarray              # (k+1, n_nodes)
    zetas: np.ndarray           # (k+1, n_elem[, 2])
    Vs: np.ndarray              # (k+1, n_elem)
    E_elastic: np.ndarray
    E_gradient: np.ndarray
    diss_inc: np.ndarray
    visc_inc: np.ndarray
    work_inc: np.ndarray
    kkt_eq: np.ndarray
    kkt_sign: np.ndarray
    kkt_comp: np.ndarray
    psi: np.ndarray
    eps_alphadot: np.ndarray
    am_iters: np.ndarray
    lower_active_count: np.ndarray
    objective_decrease: np.ndarray
    pg_norm: np.ndarray
    step_flags: list[tuple[str, ...]]
    completed_steps: int = 0

    @property
    def tau(self) -> float:
        return self.load.T / self.k

    @property
    def n_nodes(self) -> int:
        return self.ops.n_nodes

    def total_work(self, i1: int = 0, i2: int | None = None) -> float:
        i2 = self.k if i2 is None else i2
        return float(self.work_inc[i1 + 1:i2 + 1].sum())


@dataclass(frozen=True)
class TraceSnapshot:
    """Interpolated fields at one time: piecewise-constant and affine values."""

    t: float
    upper: dict
    lower: dict
    affine: dict
    V: np.ndarray


def _allocate_trace(ops: FeOperators, laws: MaterialLaws, load: LoadProgram,
                    eps: float, k: int, cfg: SolverConfig) -> EvolutionTrace:
    n = ops.n_nodes
    ne = ops.n_triangles
    zeta_shape = (k + 1, ne, 2) if laws.zeta_variant == "vector" else (k + 1, ne)
    return EvolutionTrace(
        ops=ops, laws=laws, load=load, eps=eps, k=k, solver_cfg=cfg,
        times=np.linspace(0.0, load.T, k + 1),
        alphas=np.zeros((k + 1, n)), us=np.zeros((k + 1, n)),
        zetas=np.zeros(zeta_shape), Vs=np.zeros((k + 1, ne)),
        E_elastic=np.zeros(k + 1), E_gradient=np.zeros(k + 1),
        diss_inc=np.zeros(k + 1), visc_inc=np.zeros(k + 1),
        work_inc=np.zeros(k + 1),
        kkt_eq=np.zeros(k + 1), kkt_sign=np.zeros(k + 1), kkt_comp=np.zeros(k + 1),
        psi=np.zeros(k + 1), eps_alphadot=np.zeros(k + 1),
        am_iters=np.zeros(k + 1, dtype=np.int64),
        lower_active_count=np.zeros(k + 1, dtype=np.int64),
        objective_decrease=np.zeros(k + 1), pg_norm=np.zeros(k + 1),
        step_flags=[() for _ in range(k + 1)])


def _record_initial(trace: EvolutionTrace, alpha0: np.ndarray,
                    u0: np.ndarray | None, V0: np.ndarray | None) -> None:
    ops, laws, load = trace.ops, trace.laws, trace.load
    if u0 is None:
        u0 = solve_equilibrium(alpha0, load.boundary_values(0.0), ops, laws)
    if V0 is None:
        V0 = np.zeros(ops.n_triangles)
    if np.any(np.asarray(V0) < 0):
        raise ValueError("initial cumulation must be >= 0")
    grad_u0 = element_gradients(ops, u0)
    trace.alphas[0] = alpha0
    trace.us[0] = u0
    trace.zetas[0] = eval_g_zeta(laws, ops.elem_average(alpha0), grad_u0)
    trace.Vs[0] = V0
    eb = diagnostics.energy_of(alpha0, u0, ops, laws)
    trace.E_elastic[0] = eb.elastic
    trace.E_gradient[0] = eb.gradient
    trace.psi[0] = diagnostics.stability_psi(alpha0, u0, V0, ops, laws)
    trace.completed_steps = 0


def _work_increment(ops: FeOperators, laws: MaterialLaws, alpha: np.ndarray,
                    grad_u: np.ndarray, dw: np.ndarray) -> float:
    """tau * <mu(abar) grad(u), grad(w_dot)> with the upper-constant fields."""
    mu, _ = eval_mu(laws, ops.elem_average(alpha))
    grad_dw = element_gradients(ops, dw)
    return float(np.dot(ops.mesh.areas, mu * np.einsum("td,td->t", grad_u, grad_dw)))


def _advance(trace: EvolutionTrace, i: int) -> None:
    """Compute grid node i from node i-1 and record all accounting."""
    ops, laws, load = trace.ops, trace.laws, trace.load
    tau = trace.tau
    w_i = load.boundary_values(trace.times[i])
    inputs = StepInputs(alpha_prev=trace.alphas[i - 1], V_prev=trace.Vs[i - 1],
                        zeta_prev=trace.zetas[i - 1], w_bc=w_i,
                        eps=trace.eps, tau=tau)
    res = alternate_minimize(inputs, ops, laws, trace.solver_cfg)

    flags = list(res.flags)
    if np.any(res.alpha > inputs.alpha_prev + 1e-12):
        flags.append("irreversibility_violation")
    if np.any(res.V < trace.Vs[i - 1] - 1e-15):
        flags.append("history_decrease")

    trace.alphas[i] = res.alpha
    trace.us[i] = res.u
    trace.zetas[i] = res.zeta
    trace.Vs[i] = res.V

    eb = diagnostics.energy_of(res.alpha, res.u, ops, laws)
    trace.E_elastic[i] = eb.elastic
    trace.E_gradient[i] = eb.gradient

    dalpha = res.alpha - inputs.alpha_prev
    m = ops.lumped_mass
    F = diagnostics.dissipation_load(inputs.V_prev, ops, laws)
    trace.diss_inc[i] = float(-np.dot(F, dalpha))
    trace.visc_inc[i] = (trace.eps / tau) * float(np.dot(m, dalpha * dalpha))
    dw = w_i - load.boundary_values(trace.times[i - 1])
    grad_u_i = element_gradients(ops, res.u)
    trace.work_inc[i] = _work_increment(ops, laws, res.alpha, grad_u_i, dw)

    report = diagnostics.kkt_residuals(res, inputs, ops, laws)
    trace.kkt_eq[i] = report.eq_residual
    trace.kkt_sign[i] = report.max_sign_violation
    trace.kkt_comp[i] = report.complementarity_max
    trace.psi[i] = diagnostics.stability_psi(res.alpha, res.u, inputs.V_prev,
                                             ops, laws)
    adot = dalpha / tau
    trace.eps_alphadot[i] = trace.eps * float(np.sqrt(np.dot(m, adot * adot)))
    trace.am_iters[i] = res.am_iterations
    trace.lower_active_count[i] = res.lower_bound_active.size
    trace.objective_decrease[i] = res.objective_decrease
    trace.pg_norm[i] = res.pg_norm
    trace.step_flags[i] = tuple(flags)
    trace.completed_steps = i


def run_evolution(ops: FeOperators, laws: MaterialLaws, load: LoadProgram,
                  k: int, eps: float,
                  alpha0: np.ndarray | float = 1.0,
                  u0: np.ndarray | None = None,
                  V0: np.ndarray | None = None,
                  solver_cfg: SolverConfig | None = None) -> EvolutionTrace:
    """Run the k-step evolution on the uniform grid t_i = i*T/k."""
    if k < 1:
        raise ValueError("step count k must be >= 1")
    if eps <= 0:
        raise ValueError("viscosity eps must be > 0")
    cfg = solver_cfg or SolverConfig()
    if np.isscalar(alpha0):
        alpha0 = np.full(ops.n_nodes, float(alpha0))
    alpha0 = np.asarray(alpha0, dtype=float)
    if np.any(alpha0 < 0) or np.any(alpha0 > 1):
        raise ValueError("alpha0 must lie in [0, 1]")

    trace = _allocate_trace(ops, laws, load, eps, k, cfg)
    if trace.tau > eps:
        logger.warning("time step tau=%.3g exceeds viscosity eps=%.3g; "
                       "the viscous bounds assume tau <= eps", trace.tau, eps)
    _record_initial(trace, alpha0, u0, V0)
    for i in range(1, k + 1):
        _advance(trace, i)
    return trace


def interpolate_trace(trace: EvolutionTrace, t: float) -> TraceSnapshot:
    """Piecewise-constant upper/lower and piecewise-affine fields at time t.

    The interpolated cumulation is V_lower + |zeta_affine(t) - zeta_lower|,
    which is affine in t on each interval and telescopes exactly through the
    grid nodes.  At grid nodes all three interpolations coincide.
    """
    T = trace.load.T
    if not (0.0 <= t <= T):
        raise ValueError(f"t={t} outside [0, {T}]")
    tau = trace.tau

    def fields(j: int) -> dict:
        return {"alpha": trace.alphas[j].copy(), "u": trace.us[j].copy(),
                "zeta": trace.zetas[j].copy()}

    j = int(np.round(t / tau))
    if 0 <= j <= trace.k and abs(t - trace.times[j]) <= 1e-9 * tau:
        node = fields(j)
        return TraceSnapshot(t=t, upper=fields(j), lower=fields(j),
                             affine=node, V=trace.Vs[j].copy())

    i = min(int(np.ceil(t / tau)), trace.k)
    theta = (t - trace.times[i - 1]) / tau
    lower = fields(i - 1)
    upper = fields(i)
    affine = {key: (1.0 - theta) * lower[key] + theta * upper[key]
              for key in ("alpha", "u", "zeta")}
    V = trace.Vs[i - 1] + zeta_increment_norm(trace.laws, lower["zeta"],
                                              affine["zeta"])
    return TraceSnapshot(t=t, upper=upper, lower=lower, affine=affine, V=V)


# Checkpoint format: a single .npz holding every nodal/element array of the
# partial trace plus a JSON header with mesh, law, load and solver settings.
CHECKPOINT_VERSION = 1

_ARRAY_FIELDS = ("times", "alphas", "us", "zetas", "Vs", "E_elastic",
                 "E_gradient", "diss_inc", "visc_inc", "work_inc", "kkt_eq",
                 "kkt_sign", "kkt_comp", "psi", "eps_alphadot", "am_iters",
                 "lower_active_count", "objective_decrease", "pg_norm")


def save_checkpoint(trace: EvolutionTrace, path: str) -> None:
    """Serialize the trace (all completed steps) for bit-identical resume."""
    mesh = trace.ops.mesh
    header = {
        "version": CHECKPOINT_VERSION,
        "eps": trace.eps,
        "k": trace.k,
        "completed_steps": trace.completed_steps,
        "laws": {f: getattr(trace.laws, f) for f in trace.laws.__dataclass_fields__},
        "load": {"schedule": trace.load.schedule, "T": trace.load.T,
                 "rate": trace.load.rate, "amplitude": trace.load.amplitude,
                 "period": trace.load.period},
        "solver": {f: getattr(trace.solver_cfg, f)
                   for f in trace.solver_cfg.__dataclass_fields__},
        "flags": [list(f) for f in trace.step_flags],
        "edge_tags": list(mesh.edge_tags),
    }
    arrays = {name: getattr(trace, name) for name in _ARRAY_FIELDS}
    arrays.update(mesh_nodes=mesh.nodes, mesh_triangles=mesh.triangles,
                  mesh_areas=mesh.areas, mesh_boundary_edges=mesh.boundary_edges,
                  mesh_dirichlet=mesh.dirichlet_nodes,
                  load_profile=trace.load.profile,
                  header=np.frombuffer(json.dumps(header, sort_keys=True).encode(),
                                       dtype=np.uint8))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str) -> EvolutionTrace:
    """Rebuild a (possibly partial) trace from a checkpoint file."""
    data = np.load(path, allow_pickle=False)
    header = json.loads(bytes(data["header"]).decode())
    if header["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    mesh = Mesh(nodes=data["mesh_nodes"].copy(),
                triangles=data["mesh_triangles"].copy(),
                areas=data["mesh_areas"].copy(),
                boundary_edges=data["mesh_boundary_edges"].copy(),
                edge_tags=tuple(header["edge_tags"]),
                dirichlet_nodes=data["mesh_dirichlet"].copy())
    ops = build_fe_operators(mesh)
    laws = MaterialLaws(**header["laws"])
    load = LoadProgram(profile=data["load_profile"].copy(), **header["load"])
    cfg = SolverConfig(**header["solver"])
    trace = _allocate_trace(ops, laws, load, header["eps"], header["k"], cfg)
    for name in _ARRAY_FIELDS:
        getattr(trace, name)[...] = data[name]
    trace.step_flags = [tuple(f) for f in header["flags"]]
    trace.completed_steps = header["completed_steps"]
    return trace


def resume_evolution(path: str) -> EvolutionTrace:
    """Continue a checkpointed run to its final step, bit-identically."""
    trace = load_checkpoint(path)
    for i in range(trace.completed_steps + 1, trace.k + 1):
        _advance(trace, i)
    return trace
