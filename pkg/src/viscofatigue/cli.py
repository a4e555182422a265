"""Command-line entry points: simulate, sweep, verify, oracle-check.

All file outputs are deterministic for a fixed config, seed and platform:
floats are rendered with full round-trip precision, manifests echo the
fully-resolved configuration (defaults included) in sorted order, and no
timestamps or environment state leak into any artifact.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import ConfigError, RunConfig, build_problem, load_config, resolve_config
from .evolution_driver import EvolutionTrace, run_evolution
from .material_laws import eval_f
from .mesh_fe import element_gradients
from .smallscale_oracle import oracle_batch_check
from .variation_utils import ZetaSeries, essential_variation
from .viscosity_rescaling import arc_length_rescale, h1_norm, sweep_compare, w1p_norm
from .vtk_io import write_snapshot_vtk

WORKERS_ENV = "VISCOFATIGUE_WORKERS"

CSV_COLUMNS = ("step", "t", "E_elastic", "E_gradient", "diss_inc", "visc_inc",
               "work_inc", "balance_residual_running", "min_alpha", "max_V",
               "kkt_eq", "kkt_sign", "am_iters", "psi", "eps_alphadot_lumped",
               "lower_active_count")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x) + 0.0)


def write_trace_csv(trace: EvolutionTrace, path: Path) -> None:
    """Fixed-schema per-step CSV of one evolution."""
    e0 = trace.E_elastic[0] + trace.E_gradient[0]
    running = 0.0
    rows = [",".join(CSV_COLUMNS)]
    for i in range(trace.k + 1):
        ei = trace.E_elastic[i] + trace.E_gradient[i]
        running += float(trace.diss_inc[i] + trace.visc_inc[i] - trace.work_inc[i])
        resid = (ei - e0) + running
        row = (i, trace.times[i], trace.E_elastic[i], trace.E_gradient[i],
               trace.diss_inc[i], trace.visc_inc[i], trace.work_inc[i],
               resid, trace.alphas[i].min(), trace.Vs[i].max(),
               trace.kkt_eq[i], trace.kkt_sign[i], trace.am_iters[i],
               trace.psi[i], trace.eps_alphadot[i],
               trace.lower_active_count[i])
        rows.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(rows) + "\n")


def write_snapshot(trace: EvolutionTrace, i: int, path: Path) -> None:
    ops, laws = trace.ops, trace.laws
    grad_u = element_gradients(ops, trace.us[i])
    f_of_v, _ = eval_f(laws, trace.Vs[i])
    write_snapshot_vtk(
        path, ops.mesh,
        point_data={"alpha": trace.alphas[i], "u": trace.us[i]},
        cell_data={"V": trace.Vs[i], "f_of_V": f_of_v,
                   "grad_u_norm": np.linalg.norm(grad_u, axis=1)})


def write_manifest(cfg: RunConfig, out_dir: Path) -> None:
    (out_dir / "manifest.txt").write_text("\n".join(cfg.manifest_lines()) + "\n")


def _balance_lines(report) -> list[str]:
    return [f"energy_start = {_fmt(report.energy_start)}",
            f"energy_end = {_fmt(report.energy_end)}",
            f"dissipated_total = {_fmt(report.dissipated_total)}",
            f"viscous_total = {_fmt(report.viscous_total)}",
            f"work_total = {_fmt(report.work_total)}",
            f"residual = {_fmt(report.residual)}"]


def _run_one(cfg: RunConfig, eps: float) -> EvolutionTrace:
    ops, laws, load, solver = build_problem(cfg)
    return run_evolution(ops, laws, load, k=cfg["run.steps"], eps=eps,
                         alpha0=cfg["run.alpha0"],
                         V0=np.full(ops.n_triangles, cfg["run.V0"]),
                         solver_cfg=solver)


def _write_run_outputs(trace: EvolutionTrace, out_dir: Path, tag: str,
                       snapshot_every: int) -> None:
    suffix = f"_eps{tag}" if tag else ""
    write_trace_csv(trace, out_dir / f"trace{suffix}.csv")
    if snapshot_every > 0:
        steps = sorted(set(range(0, trace.k + 1, snapshot_every)) | {trace.k})
        for i in steps:
            write_snapshot(trace, i, out_dir / f"snapshot{suffix}_{i:06d}.vtk")


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> int:
    eps_list = cfg["run.eps"]
    if len(eps_list) != 1:
        raise ConfigError(
            f"run.eps: simulate requires a single viscosity, got {len(eps_list)}; "
            "use the sweep subcommand or override with --eps")
    trace = _run_one(cfg, eps_list[0])
    write_manifest(cfg, out_dir)
    _write_run_outputs(trace, out_dir, "", cfg["output.snapshot_every"])
    report = diagnostics.energy_balance_residual(trace, 0, trace.k)
    (out_dir / "balance.txt").write_text("\n".join(_balance_lines(report)) + "\n")
    print(f"simulate: {trace.k} steps, final min alpha "
          f"{_fmt(trace.alphas[-1].min())}, balance residual {_fmt(report.residual)}")
    return 0


def _sweep_worker(args: tuple) -> tuple:
    values, eps, out_dir_str, snapshot_every = args
    cfg = RunConfig(values=values)
    trace = _run_one(cfg, eps)
    resc = arc_length_rescale(trace, p=cfg["rescale.p"], delta=cfg["rescale.delta"])
    out_dir = Path(out_dir_str)
    tag = repr(float(eps))
    _write_run_outputs(trace, out_dir, tag, snapshot_every)
    rows = ["s,t,min_alpha,psi,plateau"]
    flags = np.zeros(resc.n_samples, dtype=int)
    for lo, hi in resc.plateau_intervals:
        flags[(resc.s >= lo) & (resc.s <= hi)] = 1
    for j in range(resc.n_samples):
        rows.append(",".join([_fmt(resc.s[j]), _fmt(resc.t[j]),
                              _fmt(resc.alphas[j].min()), _fmt(resc.psi[j]),
                              str(int(flags[j]))]))
    (out_dir / f"rescaled_eps{tag}.csv").write_text("\n".join(rows) + "\n")
    return eps, resc


def cmd_sweep(cfg: RunConfig, out_dir: Path) -> int:
    eps_list = cfg["run.eps"]
    write_manifest(cfg, out_dir)
    jobs = [(cfg.values, eps, str(out_dir), cfg["output.snapshot_every"])
            for eps in eps_list]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(job) for job in jobs]
    rescaled = [r for _, r in sorted(results, key=lambda pair: -pair[0])]
    report = sweep_compare(rescaled, delta=cfg["rescale.delta"])
    payload = {
        "entries": [{"eps": e.eps, "S_eps": e.S_eps,
                     "plateau_measure": e.plateau_measure,
                     "instability_measure": e.instability_measure,
                     "fatigue_gap_proxy": e.fatigue_gap_proxy}
                    for e in report.entries],
        "instability_nonincreasing": report.instability_nonincreasing,
        "arclength_ratio": report.arclength_ratio,
    }
    (out_dir / "sweep_report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"sweep: {len(eps_list)} viscosities, instability nonincreasing: "
          f"{report.instability_nonincreasing}, arc-length ratio "
          f"{_fmt(report.arclength_ratio)}")
    return 0


def _verify_gates(cfg: RunConfig, trace: EvolutionTrace) -> list[tuple[str, bool, str]]:
    """Every invariant/diagnostic gate on one completed run."""
    gates: list[tuple[str, bool, str]] = []
    k = trace.k
    ops = trace.ops

    incr = (trace.alphas[1:] - trace.alphas[:-1]).max() if k else 0.0
    gates.append(("irreversibility", incr <= 1e-12,
                  f"max nodal alpha increase {_fmt(incr)}"))
    amin, amax = float(trace.alphas.min()), float(trace.alphas.max())
    gates.append(("alpha_bounds", amin >= -1e-12 and amax <= 1 + 1e-12,
                  f"alpha range [{_fmt(amin)}, {_fmt(amax)}]"))
    vdec = float((trace.Vs[1:] - trace.Vs[:-1]).min()) if k else 0.0
    gates.append(("history_monotone", vdec >= -1e-15,
                  f"min elementwise V increment {_fmt(vdec)}"))

    inactive = trace.lower_active_count[1:] == 0
    eq = trace.kkt_eq[1:][inactive]
    eq_max = float(eq.max()) if eq.size else 0.0
    gates.append(("euler_equality", eq_max <= 1e-6,
                  f"max normalized residual {_fmt(eq_max)} over "
                  f"{int(inactive.sum())} lower-inactive steps"))
    sign_max = float(trace.kkt_sign.max())
    gates.append(("kkt_signs", sign_max <= 1e-6,
                  f"max nodewise sign violation {_fmt(sign_max)}"))

    gaps = []
    for i in range(1, k + 1):
        if trace.eps_alphadot[i] > 0 and trace.lower_active_count[i] == 0:
            a, b = trace.eps_alphadot[i], trace.psi[i]
            gaps.append(abs(a - b) / (a + b + 1e-12))
    psi_max = max(gaps) if gaps else 0.0
    gates.append(("psi_viscosity_identity", psi_max <= 1e-4,
                  f"max normalized gap {_fmt(psi_max)} over {len(gaps)} damaging steps"))

    mid = k // 2
    if 0 < mid < k:
        full = diagnostics.energy_balance_residual(trace, 0, k).residual
        left = diagnostics.energy_balance_residual(trace, 0, mid).residual
        right = diagnostics.energy_balance_residual(trace, mid, k).residual
        gap = abs(full - (left + right))
        ok = gap <= 1e-12 * (1.0 + abs(full) + abs(left) + abs(right))
        gates.append(("balance_telescoping", ok,
                      f"|R(0,T) - R(0,t) - R(t,T)| = {_fmt(gap)}"))

    resc = arc_length_rescale(trace, p=cfg["rescale.p"], delta=cfg["rescale.delta"])
    ds = np.diff(resc.s)
    worst = 0.0
    for i in range(1, k + 1):
        da = trace.alphas[i] - trace.alphas[i - 1]
        du = trace.us[i] - trace.us[i - 1]
        total = trace.tau + h1_norm(da, ops) + w1p_norm(du, ops, cfg["rescale.p"])
        worst = max(worst, abs(total - ds[i - 1]) / ds[i - 1])
    lip = float(resc.tdot.max())
    ok = worst <= 1e-12 and lip <= 1.0 + 1e-10 and bool(np.all(np.diff(resc.t) >= 0))
    gates.append(("arclength_contract", ok,
                  f"max increment defect {_fmt(worst)}, max discrete time rate {_fmt(lip)}"))

    series = ZetaSeries(times=trace.times, values=trace.zetas)
    var = essential_variation(series)
    V0 = trace.Vs[0]
    gap = float(np.max(np.abs(V0 + var - trace.Vs[-1])))
    ok = gap <= 1e-12 * (1.0 + float(trace.Vs[-1].max()))
    gates.append(("cumulation_identity", ok,
                  f"max |V0 + variation - V_final| = {_fmt(gap)}"))

    flagged = [i for i, f in enumerate(trace.step_flags) if f]
    gates.append(("solver_flags", not flagged,
                  f"{len(flagged)} flagged steps " +
                  (f"(first: {flagged[0]}: {trace.step_flags[flagged[0]]})"
                   if flagged else "")))
    return gates


def cmd_verify(cfg: RunConfig, out_dir: Path) -> int:
    eps_list = cfg["run.eps"]
    if len(eps_list) != 1:
        raise ConfigError("run.eps: verify requires a single viscosity")
    trace = _run_one(cfg, eps_list[0])
    write_manifest(cfg, out_dir)
    gates = _verify_gates(cfg, trace)
    lines = []
    failed = 0
    for name, ok, detail in gates:
        status = "PASS" if ok else "FAIL"
        if not ok:
            failed += 1
        lines.append(f"{status} {name}: {detail}")
    (out_dir / "verify_report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    print(f"verify: {len(gates) - failed}/{len(gates)} gates passed")
    return 1 if failed else 0


def cmd_oracle_check(seed: int, count: int, out_dir: Path | None) -> int:
    report = oracle_batch_check(seed=seed, count=count)
    lines = [f"instance {r['index']:04d}: n={r['n']} "
             f"max_abs_diff={_fmt(r['max_abs_diff'])} "
             f"{'ok' if r['ok'] else 'MISMATCH'}"
             for r in report["instances"]]
    lines.append(f"summary: seed={report['seed']} count={report['count']} "
                 f"mismatches={report['mismatches']} "
                 f"worst_diff={_fmt(report['worst_diff'])} "
                 f"tolerance={_fmt(report['tolerance'])}")
    text = "\n".join(lines) + "\n"
    if out_dir is not None:
        (out_dir / "oracle_summary.txt").write_text(text)
    sys.stdout.write(text)
    return 1 if report["mismatches"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viscofatigue",
        description="Quasistatic gradient-damage evolutions with fatigue: "
                    "viscous incremental runs, viscosity sweeps, invariant "
                    "verification, and solver certification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, need_config=True):
        if need_config:
            p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--eps", help="override run.eps (comma list)")
        p.add_argument("--steps", type=int, help="override run.steps")
        p.add_argument("--seed", type=int, help="override seed")
        p.add_argument("--snapshot-every", type=int,
                       help="override output.snapshot_every")

    add_common(sub.add_parser("simulate", help="run one evolution"))
    add_common(sub.add_parser("sweep", help="run one evolution per viscosity"))
    add_common(sub.add_parser("verify", help="run and gate every invariant"))
    oc = sub.add_parser("oracle-check", help="certify the damage solver on "
                                             "seeded convex instances")
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--count", type=int, default=100)
    oc.add_argument("--out-dir", help="optional output directory")
    return parser


def _overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if getattr(args, "eps", None):
        overrides["run.eps"] = tuple(float(e) for e in args.eps.split(","))
    if getattr(args, "steps", None):
        overrides["run.steps"] = args.steps
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "snapshot_every", None) is not None:
        overrides["output.snapshot_every"] = args.snapshot_every
    return overrides


def run_cli(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle-check":
            out_dir = None
            if args.out_dir:
                out_dir = Path(args.out_dir)
                out_dir.mkdir(parents=True, exist_ok=True)
            return cmd_oracle_check(args.seed, args.count, out_dir)
        cfg = load_config(args.config, overrides=_overrides_from(args))
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    return run_cli(argv)
