"""Periodic grids on the unit torus and second-order difference operators.

Field layout
------------
A scalar field on an ``n``-dimensional grid is an array whose last ``n`` axes
are the spatial axes, in row-major index order. Vector fields append one
component axis, tensor fields two::

    scalar  (..., N, ..., N)
    vector  (..., N, ..., N, n)
    tensor  (..., N, ..., N, n, n)

Leading axes are batch axes (independent sample paths); every operator acts on
them elementwise, so a block of paths can be advanced together.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "GridSpec",
    "make_grid",
    "gradient",
    "hessian",
    "divergence",
    "jacobian",
    "laplacian",
    "integrate",
    "spatial_mean",
    "norm",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``res`` points per axis on the torus [0, 1)^dim."""

    dim: int
    res: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.res < 8 or self.res % 2:
            raise ValueError(f"res must be even and >= 8, got {self.res}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.res

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.res,) * self.dim

    @property
    def size(self) -> int:
        return self.res**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one broadcastable array per axis (``i * h``)."""
        x = np.arange(self.res) / self.res
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the negative discrete Laplacian on the rfftn grid.

        ``(2/h^2) * sum_i (1 - cos(2 pi k_i h))`` for every retained wavevector.
        """
        h = self.spacing
        full = np.fft.fftfreq(self.res, d=h)
        half = np.fft.rfftfreq(self.res, d=h)
        axes = [full] * (self.dim - 1) + [half]
        ks = np.meshgrid(*axes, indexing="ij")
        return sum((2.0 / h**2) * (1.0 - np.cos(2 * np.pi * k * h)) for k in ks)


def make_grid(dim: int, res: int) -> GridSpec:
    return GridSpec(dim, res)


def _shift(u, grid: GridSpec, axis: int, step: int):
    # value at x + step*h*e_axis
    return np.roll(u, -step, axis=grid.spatial_axes[axis])


def _d1(u, grid: GridSpec, axis: int):
    return (_shift(u, grid, axis, 1) - _shift(u, grid, axis, -1)) / (2 * grid.spacing)


def _d2(u, grid: GridSpec, axis: int):
    return (_shift(u, grid, axis, 1) - 2 * u + _shift(u, grid, axis, -1)) / grid.spacing**2


def _d11(u, grid: GridSpec, i: int, j: int):
    up = _shift(u, grid, i, 1)
    dn = _shift(u, grid, i, -1)
    return (
        _shift(up, grid, j, 1) - _shift(up, grid, j, -1) - _shift(dn, grid, j, 1) + _shift(dn, grid, j, -1)
    ) / (4 * grid.spacing**2)


def gradient(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Central differences along each axis, stacked on a trailing axis."""
    return np.stack([_d1(u, grid, i) for i in range(grid.dim)], axis=-1)


def hessian(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Second differences; mixed entries use the 4-point cross stencil once."""
    n = grid.dim
    out = np.empty(u.shape + (n, n))
    for i in range(n):
        out[..., i, i] = _d2(u, grid, i)
        for j in range(i + 1, n):
            out[..., i, j] = out[..., j, i] = _d11(u, grid, i, j)
    return out


def divergence(w: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sum(_d1(w[..., i], grid, i) for i in range(grid.dim))


def jacobian(w: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``J[..., i, j] = d_j w_i`` by central differences of each component."""
    return np.stack([gradient(w[..., i], grid) for i in range(grid.dim)], axis=-2)


def laplacian(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sum(_d2(u, grid, i) for i in range(grid.dim))


def integrate(f: np.ndarray, grid: GridSpec) -> np.ndarray | float:
    """Node-sum quadrature ``h^n * sum f`` over the spatial axes of a scalar field."""
    return grid.cell_volume * np.sum(f, axis=grid.spatial_axes)


def spatial_mean(f: np.ndarray, grid: GridSpec) -> np.ndarray | float:
    return np.mean(f, axis=grid.spatial_axes)


def norm(u: np.ndarray, grid: GridSpec, kind: str = "L2", rank: int = 0):
    """L2, Linf, H1 or H2 norm over the torus.

    ``rank`` is the field rank (0 scalar, 1 vector, 2 tensor); the Sobolev
    norms are defined for scalar fields only. Leading batch axes are kept.
    """
    if rank not in (0, 1, 2):
        raise ValueError(f"rank must be 0, 1 or 2, got {rank}")
    if kind in ("H1", "H2") and rank != 0:
        raise TypeError(f"{kind} norm is only defined for scalar fields")
    axes = tuple(range(-grid.dim - rank, 0))
    if kind == "Linf":
        # pointwise Euclidean (vector) or Frobenius (tensor) magnitude
        mag = np.sqrt(np.sum(np.square(u), axis=axes[grid.dim:])) if rank else np.abs(u)
        return np.max(mag, axis=grid.spatial_axes)
    sq = grid.cell_volume * np.sum(np.square(u), axis=axes)
    if kind == "L2":
        return np.sqrt(sq)
    if kind in ("H1", "H2"):
        sq = sq + norm(gradient(u, grid), grid, "L2", 1) ** 2
        if kind == "H2":
            sq = sq + norm(hessian(u, grid), grid, "L2", 2) ** 2
        return np.sqrt(sq)
    raise ValueError(f"unknown norm kind {kind!r}")
