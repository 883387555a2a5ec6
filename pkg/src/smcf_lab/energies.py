"""Gradient-dependent energies ``I(u) = int g(Q(grad u))`` and their Ito calculus.

For a convex nondecreasing ``g`` on [1, inf) the drift of ``I`` along the
viscous flow splits into four nonnegative integrals (see
:func:`dissipation_terms`); :func:`ito_drift_prediction` evaluates the same
drift from the Hessian of ``f(p) = g(Q(p))`` without regrouping.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryBundle, frob_sq, geometry_bundle, hv, tangential_square, vHv
from .grid import GridSpec, integrate

__all__ = [
    "EnergyFunctional",
    "DIRICHLET",
    "AREA",
    "GSQUARE",
    "max_excess",
    "g_max_excess",
    "evaluate",
    "dissipation_terms",
    "ito_drift_prediction",
    "martingale_coefficient",
]


def g_max_excess(M: float, r, deriv: int = 0):
    """C^1 ramp that vanishes up to ``M``, is quadratic on (M, M+1), linear after.

    ``deriv`` selects the value (0), first (1) or second (2) derivative; the
    second derivative jumps at both knots and is taken from the right.
    """
    r = np.asarray(r, dtype=float)
    s = r - M
    if deriv == 0:
        return np.where(s <= 0, 0.0, np.where(s < 1, s * s, 2 * s - 1))
    if deriv == 1:
        return np.where(s <= 0, 0.0, np.where(s < 1, 2 * s, 2.0))
    if deriv == 2:
        return np.where((s > 0) & (s < 1), 2.0, 0.0)
    raise ValueError("deriv must be 0, 1 or 2")


@dataclass(frozen=True)
class EnergyFunctional:
    """One of ``dirichlet`` (g = r^2, reported minus the constant 1), ``area``
    (g = r), ``gsquare`` (g = r^2) or ``maxexcess`` (g = g_M)."""

    kind: str
    M: float | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "area", "gsquare", "maxexcess"):
            raise ValueError(f"unknown energy kind {self.kind!r}")
        if self.kind == "maxexcess" and (self.M is None or self.M < 1):
            raise ValueError("maxexcess requires M >= 1")

    @property
    def description(self) -> str:
        return {
            "dirichlet": "int |grad u|^2",
            "area": "int Q (graph area)",
            "gsquare": "int Q^2",
            "maxexcess": f"int g_M(Q), M={self.M}",
        }[self.kind]

    def g(self, r, deriv: int = 0):
        r = np.asarray(r, dtype=float)
        if self.kind in ("dirichlet", "gsquare"):
            return (r * r, 2 * r, np.full_like(r, 2.0))[deriv]
        if self.kind == "area":
            return (r, np.ones_like(r), np.zeros_like(r))[deriv]
        return g_max_excess(self.M, r, deriv)


DIRICHLET = EnergyFunctional("dirichlet")
AREA = EnergyFunctional("area")
GSQUARE = EnergyFunctional("gsquare")


def max_excess(M: float) -> EnergyFunctional:
    return EnergyFunctional("maxexcess", M)


def _bundle(u, grid, epsilon=0.0):
    return u if isinstance(u, GeometryBundle) else geometry_bundle(u, grid, epsilon)


def evaluate(func: EnergyFunctional, u, grid: GridSpec):
    """Quadrature of ``g(Q(grad u))``; the Dirichlet kind integrates ``|grad u|^2`` directly."""
    b = _bundle(u, grid)
    if func.kind == "dirichlet":
        return integrate(np.sum(b.grad**2, axis=-1), grid)
    return integrate(func.g(b.q), grid)


def dissipation_terms(u, grid: GridSpec, epsilon: float, func: EnergyFunctional) -> dict:
    """The four nonnegative groups whose sum is minus the drift of ``I``.

    viscous     eps * int g'' |Hv|^2 + g'/Q (|H|^2 - |Hv|^2)
    mcf         1/2 int g(Q) |div v|^2
    tangential  int (g'/Q - g/(2Q^2)) (|H|^2 - 2|Hv|^2 + (v.Hv)^2)
    curvature   int g'' (|Hv|^2 - (v.Hv)^2)
    """
    b = _bundle(u, grid)
    q = b.q
    g0, g1, g2 = func.g(q, 0), func.g(q, 1), func.g(q, 2)
    h2 = frob_sq(b.hess)
    hv2 = np.sum(hv(b.hess, b.v) ** 2, axis=-1)
    vhv2 = vHv(b.hess, b.v) ** 2
    return {
        "viscous": epsilon * integrate(g2 * hv2 + g1 / q * (h2 - hv2), grid),
        "mcf": 0.5 * integrate(g0 * b.divv**2, grid),
        "tangential": integrate((g1 / q - g0 / (2 * q * q)) * tangential_square(b.hess, b.v), grid),
        "curvature": integrate(g2 * (hv2 - vhv2), grid),
    }


def ito_drift_prediction(u, grid: GridSpec, epsilon: float, func: EnergyFunctional):
    """dt-coefficient of ``dI`` from the energy Ito formula with ``f = g o Q``.

    ``-eps int Hf H : H - 1/2 int f |div v|^2 + int H P : (f/(2Q^2) P - Hf) H``
    with ``P = I - v v^T`` and ``Hf = g'' v v^T + g' P / Q``.
    """
    b = _bundle(u, grid)
    q = b.q[..., None, None]
    v = b.v
    n = grid.dim
    vv = v[..., :, None] * v[..., None, :]
    proj = np.eye(n) - vv
    f = func.g(b.q)[..., None, None]
    hf = func.g(b.q, 2)[..., None, None] * vv + func.g(b.q, 1)[..., None, None] * proj / q
    H = b.hess
    viscous = np.einsum("...ij,...jk,...ik->...", hf, H, H)
    X = f / (2 * q * q) * proj - hf
    third = np.sum((H @ proj) * (X @ H), axis=(-2, -1))
    integrand = -epsilon * viscous - 0.5 * f[..., 0, 0] * b.divv**2 + third
    return integrate(integrand, grid)


def martingale_coefficient(u, grid: GridSpec, func: EnergyFunctional):
    """dW-coefficient of ``dI``: ``-int g(Q) div v``."""
    b = _bundle(u, grid)
    return -integrate(func.g(b.q) * b.divv, grid)
