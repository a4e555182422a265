"""Run configuration: flat namespaced key/value files with documented defaults.

The format is plain text, one `key = value` per line, `#` comments.  Every
key has a default; unknown keys and malformed values are rejected with the
exact key and reason.  A resolved configuration can be rendered back to the
same format (the run manifest), defaults included, in sorted key order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .incremental_step import SolverConfig
from .material_laws import MaterialLaws
from .mesh_fe import SIDES, FeOperators, Mesh, build_fe_operators, build_structured_mesh


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(part) for part in s.split(",") if part.strip())


def _parse_str_list(s: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in s.split(",") if part.strip())


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "mesh.nx": (int, 8),
    "mesh.ny": (int, 8),
    "mesh.x0": (float, 0.0),
    "mesh.y0": (float, 0.0),
    "mesh.x1": (float, 1.0),
    "mesh.y1": (float, 1.0),
    "mesh.dirichlet_sides": (_parse_str_list, ("left", "right")),
    "laws.mu.kind": (str, "smoothstep"),
    "laws.mu.min": (float, 1.0),
    "laws.mu.max": (float, 10.0),
    "laws.f.kind": (str, "linear_clamped"),
    "laws.f.f0": (float, 1.0),
    "laws.f.k": (float, 0.1),
    "laws.f.inf": (float, 0.05),
    "laws.g.kind": (str, "one"),
    "laws.g.min": (float, 1.0),
    "laws.g.max": (float, 1.0),
    "laws.zeta.variant": (str, "vector"),
    "laws.zeta.theta": (float, 1.0),
    "load.profile": (str, "x1"),
    "load.schedule": (str, "ramp"),
    "load.rate": (float, 1.0),
    "load.amplitude": (float, 0.0),
    "load.period": (float, 1.0),
    "run.T": (float, 1.0),
    "run.steps": (int, 100),
    "run.eps": (_parse_float_list, (0.1,)),
    "run.alpha0": (float, 1.0),
    "run.V0": (float, 0.0),
    "solver.tol_pg": (float, 1e-11),
    "solver.tol_stag": (float, 1e-9),
    "solver.tol_kkt": (float, 1e-8),
    "solver.max_pg_iters": (int, 4000),
    "solver.max_am_sweeps": (int, 300),
    "rescale.p": (float, 4.0),
    "rescale.delta": (float, 0.1),
    "output.snapshot_every": (int, 0),
    "seed": (int, 0),
}

PROFILES = ("x1", "x2")


@dataclass(frozen=True)
class RunConfig:
    """Fully-resolved configuration (every key present)."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def manifest_lines(self) -> list[str]:
        """The resolved configuration in file format, sorted by key."""
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, tuple):
                rendered = ",".join(repr(v) if isinstance(v, float) else str(v)
                                    for v in val)
            elif isinstance(val, float):
                rendered = repr(val)
            else:
                rendered = str(val)
            lines.append(f"{key} = {rendered}")
        return lines


def parse_config_text(text: str) -> dict:
    """Parse raw `key = value` lines into typed values against the schema."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            raw[key] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(
                f"line {lineno}: key {key!r}: cannot parse {value!r} ({exc})") from exc
    return raw


def resolve_config(raw: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Apply defaults, overrides, and cross-key validation."""
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for source in (raw or {}), (overrides or {}):
        for key, val in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val

    if values["run.steps"] < 1:
        raise ConfigError("run.steps: step count must be >= 1")
    if values["run.T"] <= 0:
        raise ConfigError("run.T: final time must be > 0")
    if not values["run.eps"] or any(e <= 0 for e in values["run.eps"]):
        raise ConfigError("run.eps: every viscosity value must be > 0")
    if not (0.0 <= values["run.alpha0"] <= 1.0):
        raise ConfigError("run.alpha0: initial damage must lie in [0, 1]")
    if values["run.V0"] < 0:
        raise ConfigError("run.V0: initial cumulation must be >= 0")
    if values["load.profile"] not in PROFILES:
        raise ConfigError(f"load.profile: must be one of {PROFILES}")
    if values["rescale.p"] < 2:
        raise ConfigError("rescale.p: norm exponent must be >= 2")
    for side in values["mesh.dirichlet_sides"]:
        if side not in SIDES:
            raise ConfigError(f"mesh.dirichlet_sides: unknown side {side!r}")
    # law invariants are enforced by the MaterialLaws constructor
    try:
        build_laws_from(values)
    except ValueError as exc:
        raise ConfigError(f"laws.*: {exc}") from exc
    return RunConfig(values=values)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    text = Path(path).read_text()
    return resolve_config(parse_config_text(text), overrides)


def build_laws_from(values: dict) -> MaterialLaws:
    return MaterialLaws(
        mu_kind=values["laws.mu.kind"],
        mu_min=values["laws.mu.min"], mu_max=values["laws.mu.max"],
        f_kind=values["laws.f.kind"], f0=values["laws.f.f0"],
        f_k=values["laws.f.k"], f_inf=values["laws.f.inf"],
        g_kind=values["laws.g.kind"],
        g_min=values["laws.g.min"], g_max=values["laws.g.max"],
        zeta_variant=values["laws.zeta.variant"],
        theta=values["laws.zeta.theta"])


def build_mesh_from(cfg: RunConfig) -> Mesh:
    return build_structured_mesh(
        cfg["mesh.nx"], cfg["mesh.ny"],
        domain=(cfg["mesh.x0"], cfg["mesh.y0"], cfg["mesh.x1"], cfg["mesh.y1"]),
        dirichlet_sides=cfg["mesh.dirichlet_sides"])


def build_problem(cfg: RunConfig) -> tuple[FeOperators, MaterialLaws, "LoadProgram", SolverConfig]:
    """Operators, laws, load program and solver settings from a config."""
    from .evolution_driver import LoadProgram

    mesh = build_mesh_from(cfg)
    ops = build_fe_operators(mesh)
    laws = build_laws_from(cfg.values)
    profile = mesh.nodes[:, 0] if cfg["load.profile"] == "x1" else mesh.nodes[:, 1]
    load = LoadProgram(profile=profile, schedule=cfg["load.schedule"],
                       T=cfg["run.T"], rate=cfg["load.rate"],
                       amplitude=cfg["load.amplitude"], period=cfg["load.period"])
    solver = SolverConfig(tol_pg=cfg["solver.tol_pg"],
                          tol_stag=cfg["solver.tol_stag"],
                          tol_kkt=cfg["solver.tol_kkt"],
                          max_pg_iters=cfg["solver.max_pg_iters"],
                          max_am_sweeps=cfg["solver.max_am_sweeps"])
    return ops, laws, load, solver
