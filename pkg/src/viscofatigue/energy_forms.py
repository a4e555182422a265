"""Total energy, its damage-gradient, and the fatigue dissipation potential.

Discrete conventions, fixed across the whole artifact: one-point quadrature
(nodal average) for every nonlinear-coefficient integral, exact integration
for the stiffness and area weights, lumped mass for every L2 pairing.  This
keeps the nodal damage gradient the exact algebraic gradient of the energy,
which the Kuhn-Tucker diagnostics rely on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .material_laws import MaterialLaws, eval_f, eval_mu
from .mesh_fe import FeOperators, element_gradients

ALPHA_BOUND_TOL = 1e-10
BETA_SIGN_TOL = 1e-12


@dataclass
class DiscreteState:
    """One snapshot of the coupled fields.

    alpha : nodal damage in [0, 1] (up to solver tolerance)
    u     : nodal displacement, Dirichlet rows fixed to the boundary datum
    grad_u: cached per-element displacement gradients, (n_tri, 2)
    V     : per-element cumulation, >= 0
    """

    alpha: np.ndarray
    u: np.ndarray
    grad_u: np.ndarray
    V: np.ndarray

    def validate(self, ops: FeOperators) -> None:
        if np.any(self.alpha < -ALPHA_BOUND_TOL) or np.any(self.alpha > 1.0 + ALPHA_BOUND_TOL):
            raise ValueError("alpha out of [0, 1] beyond tolerance")
        if np.any(self.V < 0):
            raise ValueError("cumulation V must be >= 0 elementwise")
        if not np.allclose(self.grad_u, element_gradients(ops, self.u),
                           rtol=0.0, atol=1e-12):
            raise ValueError("grad_u inconsistent with u")


def make_state(alpha: np.ndarray, u: np.ndarray, ops: FeOperators,
               V: np.ndarray | None = None) -> DiscreteState:
    """Build a state with the element gradients cached from u."""
    alpha = np.asarray(alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    if V is None:
        V = np.zeros(ops.n_triangles)
    return DiscreteState(alpha=alpha, u=u,
                         grad_u=element_gradients(ops, u),
                         V=np.asarray(V, dtype=float))


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    gradient: float

    @property
    def total(self) -> float:
        return self.elastic + self.gradient


def total_energy(state: DiscreteState, ops: FeOperators, laws: MaterialLaws) -> EnergyBreakdown:
    """Stored energy: 1/2 int mu(a)|grad u|^2 + 1/2 int |grad a|^2."""
    abar = ops.elem_average(state.alpha)
    mu, _ = eval_mu(laws, abar)
    gsq = np.einsum("td,td->t", state.grad_u, state.grad_u)
    elastic = 0.5 * float(np.dot(ops.mesh.areas, mu * gsq))
    gradient = 0.5 * float(state.alpha @ (ops.stiffness @ state.alpha))
    return EnergyBreakdown(elastic=elastic, gradient=gradient)


def grad_alpha_energy(state: DiscreteState, ops: FeOperators, laws: MaterialLaws) -> np.ndarray:
    """Nodal gradient of total_energy in alpha, exact under the same quadrature.

    G[i] = sum_{e ni i} (|T_e|/3) * 1/2 mu'(abar_e) |grad u_e|^2 + (K alpha)[i].
    """
    abar = ops.elem_average(state.alpha)
    _, dmu = eval_mu(laws, abar)
    gsq = np.einsum("td,td->t", state.grad_u, state.grad_u)
    coeff = (ops.mesh.areas / 3.0) * 0.5 * dmu * gsq
    G = np.zeros(ops.n_nodes)
    np.add.at(G, ops.mesh.triangles.ravel(), np.repeat(coeff, 3))
    G += ops.stiffness @ state.alpha
    return G


def dissipation_load(V: np.ndarray, ops: FeOperators, laws: MaterialLaws) -> np.ndarray:
    """Assembled nodal load F[i] = sum_{e ni i} (|T_e|/3) f(V_e)."""
    fval, _ = eval_f(laws, np.asarray(V, dtype=float))
    coeff = (ops.mesh.areas / 3.0) * fval
    F = np.zeros(ops.n_nodes)
    np.add.at(F, ops.mesh.triangles.ravel(), np.repeat(coeff, 3))
    return F


def dissipation_R(beta: np.ndarray, V: np.ndarray, ops: FeOperators,
                  laws: MaterialLaws) -> float:
    """Dissipation potential -int f(V) beta for a damage rate beta <= 0."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta > BETA_SIGN_TOL):
        raise ValueError("dissipation rate beta must be <= 0 nodewise")
    F = dissipation_load(V, ops, laws)
    return float(-np.dot(F, beta))
