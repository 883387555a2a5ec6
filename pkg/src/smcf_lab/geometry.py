"""Pointwise graph geometry: area element, horizontal normal, curvature terms.

Shapes follow :mod:`smcf_lab.grid` (components on trailing axes).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, divergence, gradient, hessian, jacobian, laplacian

__all__ = [
    "GeometryBundle",
    "geometry_bundle",
    "area_element",
    "normal_projection",
    "vHv",
    "hv",
    "frob_sq",
    "ito_drift",
    "correction_term",
    "mean_curvature_term",
    "identity_residuals",
    "symmetric_product_check",
    "decay_coefficient",
]


def area_element(p: np.ndarray) -> np.ndarray:
    """Q(p) = sqrt(1 + |p|^2) over the trailing component axis."""
    return np.sqrt(1.0 + np.sum(np.square(p), axis=-1))


def normal_projection(p: np.ndarray) -> np.ndarray:
    """v(p) = p / Q(p)."""
    return p / area_element(p)[..., None]


def hv(hess: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", hess, v)


def vHv(hess: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", v, hess, v)


def frob_sq(a: np.ndarray) -> np.ndarray:
    return np.sum(np.square(a), axis=(-2, -1))


def correction_term(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Ito-Stratonovich correction ``v^T (D^2 u) v / 2``."""
    v = normal_projection(gradient(u, grid))
    return 0.5 * vHv(hessian(u, grid), v)


def ito_drift(u: np.ndarray, grid: GridSpec, epsilon: float = 0.0) -> np.ndarray:
    """Drift of the Ito form: ``(1 + eps) Lap u - v^T (D^2 u) v / 2``."""
    return (1.0 + epsilon) * laplacian(u, grid) - correction_term(u, grid)


@dataclass(frozen=True)
class GeometryBundle:
    """Derived fields of one snapshot of ``u``; all computed from the same array."""

    grad: np.ndarray
    hess: np.ndarray
    q: np.ndarray
    v: np.ndarray
    divv: np.ndarray
    drift: np.ndarray


def geometry_bundle(u: np.ndarray, grid: GridSpec, epsilon: float = 0.0) -> GeometryBundle:
    grad = gradient(u, grid)
    hess = hessian(u, grid)
    q = area_element(grad)
    v = grad / q[..., None]
    lap = np.trace(hess, axis1=-2, axis2=-1)
    drift = (1.0 + epsilon) * lap - 0.5 * vHv(hess, v)
    return GeometryBundle(grad, hess, q, v, divergence(v, grid), drift)


def mean_curvature_term(u: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """``Q div v`` evaluated two ways.

    Returns ``(direct, via_identity)`` where ``direct`` differences the
    evaluated ``v`` field and ``via_identity = Lap u - v^T (D^2 u) v``.
    """
    grad = gradient(u, grid)
    q = area_element(grad)
    v = grad / q[..., None]
    direct = q * divergence(v, grid)
    via_identity = laplacian(u, grid) - vHv(hessian(u, grid), v)
    return direct, via_identity


def tangential_square(hess: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``|D^2u|^2 - 2|D^2u v|^2 + |v^T D^2u v|^2``; a Frobenius square."""
    return frob_sq(hess) - 2 * np.sum(hv(hess, v) ** 2, axis=-1) + vHv(hess, v) ** 2


def identity_residuals(u: np.ndarray, grid: GridSpec) -> dict[str, float]:
    """Sup-norm residuals of two pointwise identities of graph geometry.

    ``mcfIdentity`` compares the two evaluations of ``Q div v``;
    ``secondFundamentalForm`` compares the tangential square with
    ``Q^2 Dv : Dv^T``, where ``Dv`` is the discrete Jacobian of ``v``.
    """
    direct, via = mean_curvature_term(u, grid)
    grad = gradient(u, grid)
    hess = hessian(u, grid)
    q = area_element(grad)
    v = grad / q[..., None]
    dv = jacobian(v, grid)
    sff = q**2 * np.einsum("...ij,...ji->...", dv, dv)
    return {
        "mcfIdentity": float(np.max(np.abs(direct - via))),
        "secondFundamentalForm": float(np.max(np.abs(tangential_square(hess, v) - sff))),
    }


def _check_symmetric(a: np.ndarray, name: str):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError(f"{name} must be symmetric")


def symmetric_product_check(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Return ``AB : CA`` for symmetric ``A`` and positive semidefinite ``B, C``."""
    a, b, c = (np.asarray(m, dtype=float) for m in (a, b, c))
    for m, name in ((a, "A"), (b, "B"), (c, "C")):
        _check_symmetric(m, name)
    for m, name in ((b, "B"), (c, "C")):
        scale = max(1.0, np.abs(m).max())
        if np.linalg.eigvalsh(m).min() < -1e-10 * scale:
            raise ValueError(f"{name} must be positive semidefinite")
    return float(np.sum((a @ b) * (c @ a)))


def decay_coefficient(lip: float) -> float:
    """Hessian weight ``(3 + 4L^2) / (2 (1 + L^2)^2)`` in the Dirichlet decay bound."""
    return (3 + 4 * lip**2) / (2 * (1 + lip**2) ** 2)
