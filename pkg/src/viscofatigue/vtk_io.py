"""Legacy-VTK ASCII writers for meshes and field snapshots.

Unstructured-grid format, triangle cells (type 5), nodal scalars under
POINT_DATA and elementwise scalars under CELL_DATA.  Floats are written
with full round-trip precision so identical runs produce byte-identical
files.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh_fe import Mesh


def _fmt(x: float) -> str:
    return repr(float(x) + 0.0)


def _grid_lines(mesh: Mesh, title: str) -> list[str]:
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    for x, y in mesh.nodes:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0.0")
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend(["5"] * mesh.n_triangles)
    return lines


def _scalar_lines(name: str, values: np.ndarray) -> list[str]:
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines.extend(_fmt(v) for v in values)
    return lines


def write_mesh_vtk(path: str | Path, mesh: Mesh) -> None:
    """Geometry-only legacy VTK file."""
    lines = _grid_lines(mesh, "mesh")
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshot_vtk(path: str | Path, mesh: Mesh,
                       point_data: dict[str, np.ndarray],
                       cell_data: dict[str, np.ndarray]) -> None:
    """Mesh plus named nodal and elementwise scalar fields."""
    lines = _grid_lines(mesh, "snapshot")
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            if len(values) != mesh.n_nodes:
                raise ValueError(f"point field {name!r} has wrong length")
            lines.extend(_scalar_lines(name, values))
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_triangles}")
        for name, values in cell_data.items():
            if len(values) != mesh.n_triangles:
                raise ValueError(f"cell field {name!r} has wrong length")
            lines.extend(_scalar_lines(name, values))
    Path(path).write_text("\n".join(lines) + "\n")
