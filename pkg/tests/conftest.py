from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from viscofatigue.config import load_config, build_problem
from viscofatigue.evolution_driver import run_evolution
from viscofatigue.mesh_fe import build_fe_operators, build_structured_mesh
from viscofatigue.material_laws import MaterialLaws

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def ops8():
    mesh = build_structured_mesh(8, 8, dirichlet_sides=("left", "right"))
    return build_fe_operators(mesh)


@pytest.fixture(scope="session")
def ops4_full():
    mesh = build_structured_mesh(4, 4,
                                 dirichlet_sides=("left", "right", "bottom", "top"))
    return build_fe_operators(mesh)


@pytest.fixture(scope="session")
def ref_laws() -> MaterialLaws:
    return MaterialLaws(mu_min=1.0, mu_max=10.0,
                        f0=1.0, f_k=0.1, f_inf=0.05)


@pytest.fixture(scope="session")
def ref_trace():
    """The bundled reference fatigue run (8x8, eps=0.1, 100 steps)."""
    cfg = load_config(CONFIG_DIR / "fatigue.cfg")
    ops, laws, load, solver = build_problem(cfg)
    return run_evolution(ops, laws, load, k=cfg["run.steps"],
                         eps=cfg["run.eps"][0], alpha0=cfg["run.alpha0"],
                         solver_cfg=solver)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260810)
