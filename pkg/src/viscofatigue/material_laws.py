"""Constitutive laws: shear modulus, fatigue weight, and cumulated-variable map.

All laws are pure functions of immutable parameters.  The shear modulus is
clamped constant outside [0, 1]; the fatigue weight f is Lipschitz and
nonincreasing with f(0) > 0; the cumulated variable is either the weighted
strain vector g(a)*grad(u) or the scalar g(a)*|grad(u)|^theta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MU_KINDS = ("smoothstep", "linear")
F_KINDS = ("linear_clamped", "exponential")
G_KINDS = ("one", "equals_mu", "smoothstep")
ZETA_VARIANTS = ("vector", "scalar_power")

THETA_MAX = 4.0


@dataclass(frozen=True)
class MaterialLaws:
    """Parameter bundle for the laws mu, f, g and the cumulation variant.

    mu: nondecreasing on [0,1], constant outside; mu_min > 0.
    f : value in [f_inf, f0], slope <= 0.
        linear_clamped: f(V) = max(f0 - f_k*V, f_inf); exponential:
        f(V) = f_inf + (f0 - f_inf)*exp(-f_k*V).
    g : Lipschitz-differentiable weight on [0,1].
    zeta_variant "vector": zeta = g(a)*grad(u); "scalar_power":
        zeta = g(a)*|grad(u)|^theta with theta in [1, THETA_MAX].
    """

    mu_kind: str = "smoothstep"
    mu_min: float = 1.0
    mu_max: float = 10.0
    f_kind: str = "linear_clamped"
    f0: float = 1.0
    f_k: float = 0.1
    f_inf: float = 0.05
    g_kind: str = "one"
    g_min: float = 1.0
    g_max: float = 1.0
    zeta_variant: str = "vector"
    theta: float = 1.0

    def __post_init__(self) -> None:
        if self.mu_kind not in MU_KINDS:
            raise ValueError(f"mu_kind must be one of {MU_KINDS}")
        if self.f_kind not in F_KINDS:
            raise ValueError(f"f_kind must be one of {F_KINDS}")
        if self.g_kind not in G_KINDS:
            raise ValueError(f"g_kind must be one of {G_KINDS}")
        if self.zeta_variant not in ZETA_VARIANTS:
            raise ValueError(f"zeta_variant must be one of {ZETA_VARIANTS}")
        if not self.mu_min > 0:
            raise ValueError("mu_min must be > 0")
        if self.mu_max < self.mu_min:
            raise ValueError("mu_max must be >= mu_min")
        if not self.f0 > 0:
            raise ValueError("f0 must be > 0")
        if self.f_inf < 0 or self.f_inf > self.f0:
            raise ValueError("f_inf must lie in [0, f0]")
        if self.f_k < 0:
            raise ValueError("f_k must be >= 0")
        if self.zeta_variant == "scalar_power" and not (1.0 <= self.theta <= THETA_MAX):
            raise ValueError(f"theta must lie in [1, {THETA_MAX}]")

    def f_lipschitz_constant(self) -> float:
        """Reported global Lipschitz constant of f."""
        if self.f_kind == "linear_clamped":
            return self.f_k
        return self.f_k * (self.f0 - self.f_inf)


def _smoothstep(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.clip(s, 0.0, 1.0)
    return 3.0 * s * s - 2.0 * s ** 3, 6.0 * s * (1.0 - s)


def eval_mu(laws: MaterialLaws, alpha) -> tuple[np.ndarray, np.ndarray]:
    """Shear modulus and its derivative at alpha (clamped, vectorized).

    The derivative at the endpoints of [0, 1] is the one-sided derivative of
    the restriction to [0, 1]; strictly outside the interval it is 0.
    """
    a = np.asarray(alpha, dtype=float)
    span = laws.mu_max - laws.mu_min
    if laws.mu_kind == "smoothstep":
        h, hp = _smoothstep(a)
        val = laws.mu_min + span * h
        der = span * np.where((a > 0.0) & (a < 1.0), hp, 0.0)
    else:  # linear
        val = laws.mu_min + span * np.clip(a, 0.0, 1.0)
        der = np.where((a >= 0.0) & (a <= 1.0), span, 0.0)
    if np.isscalar(alpha):
        return float(val), float(der)
    return val, der


def eval_mu_second(laws: MaterialLaws, alpha) -> np.ndarray:
    """Second derivative of mu where defined (a.e.); 0 outside (0, 1).

    Used only to build Newton model Hessians, never in energy values.
    """
    a = np.asarray(alpha, dtype=float)
    span = laws.mu_max - laws.mu_min
    if laws.mu_kind == "smoothstep":
        out = span * np.where((a > 0.0) & (a < 1.0), 6.0 - 12.0 * a, 0.0)
    else:
        out = np.zeros_like(a)
    if np.isscalar(alpha):
        return float(out)
    return out


def eval_f(laws: MaterialLaws, V) -> tuple[np.ndarray, np.ndarray]:
    """Fatigue weight and its slope at cumulation V >= 0 (vectorized)."""
    v = np.asarray(V, dtype=float)
    if np.any(v < 0):
        raise ValueError("cumulation V must be >= 0")
    if laws.f_kind == "linear_clamped":
        raw = laws.f0 - laws.f_k * v
        val = np.maximum(raw, laws.f_inf)
        slope = np.where(raw > laws.f_inf, -laws.f_k, 0.0)
    else:  # exponential
        e = np.exp(-laws.f_k * v)
        val = laws.f_inf + (laws.f0 - laws.f_inf) * e
        slope = -laws.f_k * (laws.f0 - laws.f_inf) * e
    if np.isscalar(V):
        return float(val), float(slope)
    return val, slope


def eval_g(laws: MaterialLaws, alpha) -> tuple[np.ndarray, np.ndarray]:
    """Cumulation weight g and derivative at alpha (clamped, vectorized)."""
    if laws.g_kind == "one":
        a = np.asarray(alpha, dtype=float)
        val, der = np.ones_like(a), np.zeros_like(a)
        if np.isscalar(alpha):
            return 1.0, 0.0
        return val, der
    if laws.g_kind == "equals_mu":
        return eval_mu(laws, alpha)
    a = np.asarray(alpha, dtype=float)
    span = laws.g_max - laws.g_min
    h, hp = _smoothstep(a)
    val = laws.g_min + span * h
    der = span * np.where((a > 0.0) & (a < 1.0), hp, 0.0)
    if np.isscalar(alpha):
        return float(val), float(der)
    return val, der


def eval_g_zeta(laws: MaterialLaws, alpha_elem, grad_u_elem) -> np.ndarray:
    """Cumulated variable per element.

    Vector variant returns g(a)*grad(u) with shape (..., 2); scalar variant
    returns g(a)*|grad(u)|^theta with shape (...,).  Accepts a single element
    (scalar alpha, 2-vector gradient) or per-element arrays.
    """
    a = np.asarray(alpha_elem, dtype=float)
    grad = np.asarray(grad_u_elem, dtype=float)
    gval, _ = eval_g(laws, a)
    gval = np.asarray(gval, dtype=float)
    if laws.zeta_variant == "vector":
        return gval[..., None] * grad
    norms = np.linalg.norm(grad, axis=-1)
    return gval * norms ** laws.theta


def zeta_increment_norm(laws: MaterialLaws, zeta_a: np.ndarray, zeta_b: np.ndarray) -> np.ndarray:
    """Per-element norm of a zeta difference (Euclidean or absolute value)."""
    d = np.asarray(zeta_b, dtype=float) - np.asarray(zeta_a, dtype=float)
    if laws.zeta_variant == "vector":
        return np.linalg.norm(d, axis=-1)
    return np.abs(d)
