"""Real trigonometric basis, spectral projection and smoothing, and the
variational operators of the gradient equation.

The basis is orthonormal for the discrete inner product ``<f, g> = h^n sum f g``:
the constant, ``sqrt(2) cos(2 pi k.x)`` and ``sqrt(2) sin(2 pi k.x)`` for one
representative ``k`` of every ``+-k`` pair, with the sine dropped and the
``sqrt(2)`` removed for the self-conjugate wavevectors (all components 0 or N/2).
Modes are sorted by ``lambda = 1 + 4 pi^2 |k|^2``, ties broken
lexicographically on ``k`` with the cosine first.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import ConfigError, SimConfig
from .geometry import area_element, hv, ito_drift
from .grid import GridSpec, gradient, hessian, integrate, laplacian, norm
from .noise import NoisePath
from .stepper import PathResult, simulate_block

__all__ = [
    "SpectralBasis",
    "spectral_basis",
    "spectral_project",
    "smooth",
    "variational_pairing_A",
    "coercivity_gap",
    "coercivity_tolerance",
    "growth_bound_check",
    "galerkin_dt_bound",
    "galerkin_simulate",
]


@dataclass(frozen=True)
class SpectralBasis:
    grid: GridSpec
    k: np.ndarray       # (modes, dim) signed frequencies
    kind: np.ndarray    # 0 constant, 1 cosine, 2 sine
    lam: np.ndarray

    def __len__(self) -> int:
        return len(self.lam)

    @property
    def fft_index(self) -> tuple[np.ndarray, ...]:
        """Index of each mode's ``k`` in an ``fftn`` array."""
        return tuple((self.k % self.grid.res).T)

    @property
    def neg_index(self) -> tuple[np.ndarray, ...]:
        return tuple(((-self.k) % self.grid.res).T)

    @property
    def scale(self) -> np.ndarray:
        """``sqrt(2)`` for paired modes, 1 for self-conjugate ones."""
        selfconj = np.all((self.k % self.grid.res) == ((-self.k) % self.grid.res), axis=1)
        return np.where(selfconj, 1.0, math.sqrt(2.0))

    def discrete_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of minus the discrete Laplacian on each mode."""
        h = self.grid.spacing
        return (2.0 / h**2) * np.sum(1.0 - np.cos(2 * np.pi * self.k * h), axis=1)

    def analysis(self, u: np.ndarray, K: int | None = None) -> np.ndarray:
        """Coefficients ``<u, e_k>`` of the first ``K`` modes (batch axes lead)."""
        K = len(self) if K is None else K
        g = self.grid
        uh = np.fft.fftn(u, axes=g.spatial_axes) / g.size
        idx = tuple(i[:K] for i in self.fft_index)
        c = uh[(Ellipsis,) + idx]
        kind = self.kind[:K]
        return np.where(kind == 2, -c.imag, c.real) * self.scale[:K]

    def synthesis(self, coef: np.ndarray) -> np.ndarray:
        """Grid field ``sum_k coef_k e_k`` for the leading ``coef.shape[-1]`` modes."""
        K = coef.shape[-1]
        g = self.grid
        spec = np.zeros(coef.shape[:-1] + g.shape, dtype=complex)
        kind = self.kind[:K]
        half = coef * self.scale[:K] / np.where(self.scale[:K] > 1, 2.0, 1.0)
        val = np.where(kind == 2, -1j * half, half + 0j)
        pos = tuple(i[:K] for i in self.fft_index)
        neg = tuple(i[:K] for i in self.neg_index)
        paired = self.scale[:K] > 1
        # self-conjugate modes are written once, paired ones at k and -k
        np.add.at(spec, (Ellipsis,) + pos, val)
        np.add.at(spec, (Ellipsis,) + tuple(i[paired] for i in neg), np.conj(val[..., paired]))
        return np.fft.ifftn(spec * g.size, axes=g.spatial_axes).real


@lru_cache(maxsize=16)
def spectral_basis(grid: GridSpec) -> SpectralBasis:
    N = grid.res
    # descending so the positive member of each +-k pair is met first
    rng = range(N // 2, -N // 2, -1)
    entries = []
    seen = set()
    for k in itertools.product(rng, repeat=grid.dim):
        key = tuple(c % N for c in k)
        neg = tuple((-c) % N for c in k)
        if neg in seen:
            continue
        seen.add(key)
        lam = 1.0 + 4 * np.pi**2 * sum(c * c for c in k)
        if not any(k):
            entries.append((lam, k, 0))
        elif key == neg:
            entries.append((lam, k, 1))
        else:
            entries.append((lam, k, 1))
            entries.append((lam, k, 2))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    return SpectralBasis(
        grid,
        np.array([e[1] for e in entries], dtype=int).reshape(len(entries), grid.dim),
        np.array([e[2] for e in entries]),
        np.array([e[0] for e in entries]),
    )


def _masks(basis: SpectralBasis, K: int):
    g = basis.grid
    re = np.zeros(g.shape)
    im = np.zeros(g.shape)
    for arr, kinds in ((re, (0, 1)), (im, (2,))):
        sel = np.isin(basis.kind[:K], kinds)
        for idx in (basis.fft_index, basis.neg_index):
            arr[tuple(i[:K][sel] for i in idx)] = 1.0
    return re, im


def spectral_project(u: np.ndarray, grid: GridSpec, K: int) -> np.ndarray:
    """Keep the ``K`` smallest-lambda real modes (constant included)."""
    basis = spectral_basis(grid)
    if not 1 <= K <= len(basis):
        raise ValueError(f"K must lie in [1, {len(basis)}]")
    if K == len(basis):
        return np.array(u, dtype=float, copy=True)
    re, im = _masks(basis, K)
    uh = np.fft.fftn(u, axes=grid.spatial_axes)
    return np.fft.ifftn(uh.real * re + 1j * uh.imag * im, axes=grid.spatial_axes).real


def _lambda_grid(grid: GridSpec) -> np.ndarray:
    freqs = np.meshgrid(*([np.fft.fftfreq(grid.res, 1.0 / grid.res)] * (grid.dim - 1)
                          + [np.fft.rfftfreq(grid.res, 1.0 / grid.res)]), indexing="ij")
    return 1.0 + 4 * np.pi**2 * sum(f * f for f in freqs)


def smooth(u: np.ndarray, grid: GridSpec, eps_s: float) -> np.ndarray:
    """Spectral mollifier: mode ``k`` is multiplied by ``exp(-eps_s lambda_k)``."""
    if eps_s < 0:
        raise ValueError("eps_s must be >= 0")
    if eps_s == 0:
        return np.array(u, dtype=float, copy=True)
    axes = grid.spatial_axes
    uh = np.fft.rfftn(u, axes=axes)
    return np.fft.irfftn(uh * np.exp(-eps_s * _lambda_grid(grid)), s=grid.shape, axes=axes)


def variational_pairing_A(u: np.ndarray, w: np.ndarray, grid: GridSpec, epsilon: float,
                          correction: bool = True) -> float:
    """``<A_eps(grad u), grad w> = -int ((1 + eps) Lap u - v.(D^2u)v / 2) Lap w``."""
    if correction:
        drift = ito_drift(u, grid, epsilon)
    else:
        drift = (1.0 + epsilon) * laplacian(u, grid)
    return -integrate(drift * laplacian(w, grid), grid)


def coercivity_gap(u: np.ndarray, grid: GridSpec, epsilon: float) -> float:
    """``2 <A_eps(grad u), grad u> + |D^2u v|^2_L2 + 2 eps |Lap u|^2_L2``; nonpositive in the continuum."""
    p = gradient(u, grid)
    v = p / area_element(p)[..., None]
    b = hv(hessian(u, grid), v)
    lap = laplacian(u, grid)
    return (2 * variational_pairing_A(u, u, grid, epsilon) + integrate(np.sum(b * b, axis=-1), grid)
            + 2 * epsilon * integrate(lap * lap, grid))


def coercivity_tolerance(u: np.ndarray, grid: GridSpec, C: float = 1.0) -> float:
    """``tol_G = C h^2 |grad Lap u|^2_L2``: the commutation error of the discrete integration by parts."""
    return C * grid.spacing**2 * norm(gradient(laplacian(u, grid), grid), grid, "L2", 1) ** 2


def growth_bound_check(u: np.ndarray, grid: GridSpec, epsilon: float) -> dict:
    """Ratios of ``|A|^2`` and ``|B|^2`` to ``|grad u|^2_H1`` with the admissible constant."""
    p = gradient(u, grid)
    hs = hessian(u, grid)
    denom = norm(p, grid, "L2", 1) ** 2 + norm(hs, grid, "L2", 2) ** 2
    bound = 2 * (1 + epsilon) ** 2 + 1
    if denom == 0:
        return {"A_ratio": 0.0, "B_ratio": 0.0, "bound": bound, "ok": True}
    v = p / area_element(p)[..., None]
    a = ito_drift(u, grid, epsilon)
    b = hv(hs, v)
    ra = integrate(a * a, grid) / denom
    rb = integrate(np.sum(b * b, axis=-1), grid) / denom
    return {"A_ratio": float(ra), "B_ratio": float(rb), "bound": bound, "ok": bool(ra <= bound and rb <= bound)}


def galerkin_dt_bound(grid: GridSpec, K: int, epsilon: float) -> float:
    """Explicit step bound ``1 / ((1 + eps) mu_max)`` on the retained discrete eigenvalues.

    With all modes retained this equals the nodal bound ``h^2 / (4 n (1 + eps))``.
    """
    mu = spectral_basis(grid).discrete_eigenvalues()[:K].max()
    return math.inf if mu == 0 else 1.0 / ((1 + epsilon) * mu)


def _galerkin_step(basis: SpectralBasis, K: int):
    def step(u, grid, epsilon, dt, dW, correction=True):
        dW = np.asarray(dW, dtype=float)[..., None]
        coef = basis.analysis(u, K)
        drift = ito_drift(u, grid, epsilon) if correction else (1 + epsilon) * laplacian(u, grid)
        q = area_element(gradient(u, grid))
        coef = coef + dt * basis.analysis(drift, K) + dW * basis.analysis(q, K)
        return basis.synthesis(coef)
    return step


def galerkin_simulate(config: SimConfig, K: int, path_id: int, noise: NoisePath | None = None,
                      force: bool = False) -> PathResult:
    """Euler-Maruyama on the first ``K`` mode coefficients; nonlinear terms are evaluated on the grid."""
    grid = config.grid
    basis = spectral_basis(grid)
    if not 1 <= K <= len(basis):
        raise ValueError(f"K must lie in [1, {len(basis)}]")
    bound = galerkin_dt_bound(grid, K, config.epsilon)
    if config.dt > bound * (1 + 1e-12) and not force:
        raise ConfigError(f"dt={config.dt:g} violates the Galerkin stability bound {bound:.6g} for K={K}")
    from .config import initial_condition

    u0 = basis.synthesis(basis.analysis(initial_condition(config, path_id), K))
    return simulate_block(config, [path_id], noise=None if noise is None else [noise], u0=u0[None],
                          step_fn=_galerkin_step(basis, K))[0]
