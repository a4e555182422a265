"""Structured 2D triangulations and P1 finite-element operators.

The reference configuration is a rectangle split into right triangles
(nonobtuse, so the stiffness matrix is an M-matrix).  Boundary edges are
tagged Dirichlet or Neumann side by side; tag interfaces therefore fall on
cell corners.  Meshes and operators are immutable after construction and
safe to share between concurrent evolutions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SIDES = ("left", "right", "bottom", "top")

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

_AREA_TOL = 1e-14


class MeshError(ValueError):
    """Invalid mesh geometry, topology or boundary tagging."""


@dataclass(frozen=True)
class Mesh:
    """Triangulated rectangle with a Dirichlet/Neumann boundary partition.

    nodes          : (n_nodes, 2) coordinates
    triangles      : (n_tri, 3) node indices, positively oriented
    areas          : (n_tri,) signed areas, all > 0
    boundary_edges : (n_edges, 2) node index pairs on the boundary
    edge_tags      : (n_edges,) strings, DIRICHLET or NEUMANN
    dirichlet_nodes: sorted node indices lying on Dirichlet edges (nonempty)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    areas: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: tuple[str, ...]
    dirichlet_nodes: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.areas <= _AREA_TOL):
            raise MeshError("degenerate triangle: area <= tolerance")
        if self.dirichlet_nodes.size == 0:
            raise MeshError("dirichlet_nodes must be nonempty")
        for arr in (self.nodes, self.triangles, self.areas,
                    self.boundary_edges, self.dirichlet_nodes):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def free_nodes(self) -> np.ndarray:
        """Node indices not constrained by the Dirichlet datum (for u)."""
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.nonzero(mask)[0]


@dataclass(frozen=True)
class FeOperators:
    """Assembled P1 operators: stiffness, lumped mass, element gradients.

    stiffness  : (n, n) sparse CSR, K[i,j] = sum_e |T_e| grad(phi_i).grad(phi_j)
    lumped_mass: (n,) with m[i] = sum of |T_e|/3 over elements containing i
    elem_grad  : (n_tri, 2, 3) maps nodal values to the constant gradient

    elem_stiffness and scatter_flat are assembly caches: the unweighted
    element stiffness blocks |T_e| G_e^T G_e and their flattened (row, col)
    targets, so coefficient-weighted reassembly is a single bincount.
    """

    mesh: Mesh
    stiffness: sp.csr_matrix
    lumped_mass: np.ndarray
    elem_grad: np.ndarray
    elem_stiffness: np.ndarray
    scatter_flat: np.ndarray

    def __post_init__(self) -> None:
        self.lumped_mass.setflags(write=False)
        self.elem_grad.setflags(write=False)
        self.elem_stiffness.setflags(write=False)
        self.scatter_flat.setflags(write=False)

    def assemble_dense(self, coeff: np.ndarray) -> np.ndarray:
        """Dense sum_e coeff_e * (element stiffness block), shape (n, n)."""
        n = self.n_nodes
        vals = (coeff[:, None, None] * self.elem_stiffness).ravel()
        return np.bincount(self.scatter_flat, weights=vals,
                           minlength=n * n).reshape(n, n)

    def scatter_vertex(self, coeff: np.ndarray) -> np.ndarray:
        """Nodal vector G[i] = sum over elements containing i of coeff_e."""
        G = np.bincount(self.mesh.triangles.ravel(),
                        weights=np.repeat(coeff, 3), minlength=self.n_nodes)
        return G

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_triangles(self) -> int:
        return self.mesh.n_triangles

    def elem_average(self, nodal: np.ndarray) -> np.ndarray:
        """Nodal average over each triangle (one-point quadrature weight)."""
        return nodal[self.mesh.triangles].mean(axis=1)


def build_structured_mesh(nx: int, ny: int,
                          domain: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0),
                          dirichlet_sides: tuple[str, ...] = ("left", "right")) -> Mesh:
    """Right-triangle split of an nx-by-ny structured grid on a rectangle.

    domain is (x0, y0, x1, y1).  Sides named in dirichlet_sides carry the
    Dirichlet tag, the remaining sides are Neumann.  Each cell is split
    along its lower-left/upper-right diagonal, which keeps every triangle
    nonobtuse for any cell aspect ratio.
    """
    if nx < 1 or ny < 1:
        raise MeshError("cell counts nx, ny must be >= 1")
    sides = tuple(dirichlet_sides)
    if not sides:
        raise MeshError("dirichlet_sides must be nonempty")
    for s in sides:
        if s not in SIDES:
            raise MeshError(f"unknown side {s!r}; expected one of {SIDES}")

    x0, y0, x1, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError("domain extents must satisfy x1 > x0 and y1 > y0")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    t = 0
    for j in range(ny):
        for i in range(nx):
            ll, lr = nid(i, j), nid(i + 1, j)
            ul, ur = nid(i, j + 1), nid(i + 1, j + 1)
            tris[t] = (ll, lr, ur)
            tris[t + 1] = (ll, ur, ul)
            t += 2

    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    side_nodes = {
        "left": [nid(0, j) for j in range(ny + 1)],
        "right": [nid(nx, j) for j in range(ny + 1)],
        "bottom": [nid(i, 0) for i in range(nx + 1)],
        "top": [nid(i, ny) for i in range(nx + 1)],
    }
    edges = []
    tags = []
    for name, chain in side_nodes.items():
        tag = DIRICHLET if name in sides else NEUMANN
        for a, b in zip(chain[:-1], chain[1:]):
            edges.append((a, b))
            tags.append(tag)
    boundary_edges = np.asarray(edges, dtype=np.int64)
    edge_tags = tuple(tags)

    dir_nodes = sorted({n for name in sides for n in side_nodes[name]})

    return Mesh(nodes=nodes, triangles=tris, areas=areas,
                boundary_edges=boundary_edges, edge_tags=edge_tags,
                dirichlet_nodes=np.asarray(dir_nodes, dtype=np.int64))


def build_fe_operators(mesh: Mesh) -> FeOperators:
    """Assemble stiffness, lumped mass and per-element gradient maps."""
    n = mesh.n_nodes
    nt = mesh.n_triangles
    tris = mesh.triangles
    p = mesh.nodes[tris]  # (nt, 3, 2)
    areas = mesh.areas
    if np.any(areas <= _AREA_TOL):
        raise MeshError("degenerate triangle: area <= tolerance")

    # b_i = y_j - y_k, c_i = x_k - x_j (cyclic); grad(phi_i) = (b_i, c_i)/(2A)
    ynext = p[:, [1, 2, 0], 1]
    yprev = p[:, [2, 0, 1], 1]
    xnext = p[:, [1, 2, 0], 0]
    xprev = p[:, [2, 0, 1], 0]
    b = ynext - yprev
    c = xprev - xnext
    inv2A = 1.0 / (2.0 * areas)
    elem_grad = np.stack([b * inv2A[:, None], c * inv2A[:, None]], axis=1)

    # K_e = |T_e| G_e^T G_e
    ke = areas[:, None, None] * np.einsum("tdi,tdj->tij", elem_grad, elem_grad)
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()

    m = np.zeros(n)
    np.add.at(m, tris.ravel(), np.repeat(areas / 3.0, 3))

    return FeOperators(mesh=mesh, stiffness=K, lumped_mass=m,
                       elem_grad=elem_grad, elem_stiffness=ke,
                       scatter_flat=(rows * n + cols))


def element_gradients(ops: FeOperators, field: np.ndarray) -> np.ndarray:
    """Constant gradient of a P1 nodal field on each triangle, shape (n_tri, 2)."""
    field = np.asarray(field, dtype=float)
    if field.shape != (ops.n_nodes,):
        raise ValueError(f"field length {field.shape} does not match node count {ops.n_nodes}")
    return np.einsum("tdi,ti->td", ops.elem_grad, field[ops.mesh.triangles])
