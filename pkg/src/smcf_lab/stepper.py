"""Time stepping of the viscous stochastic mean curvature flow of graphs.

Ito form integrated by the default schemes::

    du = [(1 + eps) Lap u - v.(D^2u)v / 2] dt + Q(grad u) dW

The Stratonovich-Heun scheme integrates the Stratonovich form
``du = [eps Lap u + Q div v] dt + Q o dW`` and carries no correction term, so
agreement between the two pins the correction. All steppers accept a batch of
paths (leading axes of ``u``) with one increment per path.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, initial_condition
from .energies import GSQUARE, dissipation_terms, g_max_excess
from .geometry import area_element, frob_sq, geometry_bundle, vHv
from .grid import GridSpec, divergence, gradient, hessian, integrate, jacobian, laplacian, spatial_mean
from .noise import NoisePath, sample_increments

__all__ = [
    "SchemeKind",
    "PathState",
    "EnergyTrace",
    "PathResult",
    "step_explicit_em",
    "step_semi_implicit",
    "step_stratonovich_heun",
    "step",
    "simulate_block",
    "simulate_path",
    "TRACE_COLUMNS",
]


class SchemeKind(str, enum.Enum):
    ExplicitEM = "ExplicitEM"
    SemiImplicitSpectral = "SemiImplicitSpectral"
    StratonovichHeun = "StratonovichHeun"


@dataclass
class PathState:
    u: np.ndarray
    t_index: int = 0
    dt: float = 0.0

    @property
    def time(self) -> float:
        return self.t_index * self.dt


def _noise(dW, u, grid: GridSpec):
    dW = np.asarray(dW, dtype=float)
    return dW.reshape(dW.shape + (1,) * grid.dim)


def step_explicit_em(u, grid: GridSpec, epsilon: float, dt: float, dW, correction: bool = True):
    """``u + dt * ito_drift(u) + dW * Q(grad u)``; ``correction=False`` drops ``-v.Hv/2``."""
    p = gradient(u, grid)
    q = area_element(p)
    drift = (1.0 + epsilon) * laplacian(u, grid)
    if correction:
        drift = drift - 0.5 * vHv(hessian(u, grid), p / q[..., None])
    return u + dt * drift + _noise(dW, u, grid) * q


def step_semi_implicit(u, grid: GridSpec, epsilon: float, dt: float, dW, correction: bool = True):
    """Implicit ``(1 + eps) Lap`` by diagonalisation on the Fourier grid, the rest explicit."""
    p = gradient(u, grid)
    q = area_element(p)
    rhs = u + _noise(dW, u, grid) * q
    if correction:
        rhs = rhs - dt * 0.5 * vHv(hessian(u, grid), p / q[..., None])
    a = dt * (1.0 + epsilon) * grid.laplacian_symbol
    axes = grid.spatial_axes
    # u+ = rhs - a/(1+a) rhs in Fourier space; exact on constant fields
    damp = np.fft.irfftn(np.fft.rfftn(rhs, axes=axes) * (a / (1.0 + a)), s=grid.shape, axes=axes)
    return rhs - damp


def _strat_drift(u, grid, epsilon):
    p = gradient(u, grid)
    q = area_element(p)
    return epsilon * laplacian(u, grid) + q * divergence(p / q[..., None], grid), q


def step_stratonovich_heun(u, grid: GridSpec, epsilon: float, dt: float, dW, correction: bool = True):
    """Predictor-corrector on the Stratonovich form (``correction`` is ignored)."""
    dW = _noise(dW, u, grid)
    a0, b0 = _strat_drift(u, grid, epsilon)
    pred = u + dt * a0 + dW * b0
    a1, b1 = _strat_drift(pred, grid, epsilon)
    return u + dt * 0.5 * (a0 + a1) + dW * 0.5 * (b0 + b1)


_STEPPERS = {
    SchemeKind.ExplicitEM: step_explicit_em,
    SchemeKind.SemiImplicitSpectral: step_semi_implicit,
    SchemeKind.StratonovichHeun: step_stratonovich_heun,
}


def step(scheme, state: PathState, epsilon: float, dt: float, dW, correction: bool = True) -> PathState:
    grid = GridSpec(state.u.ndim, state.u.shape[-1])
    u = _STEPPERS[SchemeKind(scheme)](state.u, grid, epsilon, dt, dW, correction)
    return PathState(u, state.t_index + 1, dt)


# in-memory trace columns; the CSV writes a fixed subset
TRACE_COLUMNS = (
    "t", "W", "dirichlet", "area", "gsquare", "maxexcess", "hess_l2sq", "hess_l2sq_cum", "grad_linf",
    "mean_u", "l2dev_sq", "area_diss", "area_diss_cum", "drift_pred", "drift_pred_cum",
    "h1_dev_from_W",
)


@dataclass
class EnergyTrace:
    path_id: int
    columns: dict[str, np.ndarray] = field(repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.columns["t"]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]


@dataclass
class PathResult:
    path_id: int
    u_final: np.ndarray = field(repr=False)
    trace: EnergyTrace = field(repr=False)
    max_grad: float
    initial_grad: float
    diverged: bool = False
    diverged_step: int | None = None
    W_final: float = 0.0


def _diagnostics(u, grid: GridSpec, epsilon: float, level_m: np.ndarray) -> dict[str, np.ndarray]:
    """Per-path functionals of one snapshot; ``level_m`` is the g_M threshold per path."""
    b = geometry_bundle(u, grid, epsilon)
    q = b.q
    grad_sq = np.sum(b.grad**2, axis=-1)
    h2 = frob_sq(b.hess)
    dv = jacobian(b.v, grid)
    sff = np.einsum("...ij,...ji->...", dv, dv)
    mean_u = spatial_mean(u, grid)
    dev = u - mean_u.reshape(mean_u.shape + (1,) * grid.dim)
    lm = level_m.reshape(level_m.shape + (1,) * grid.dim)
    # Dirichlet energy differs from int Q^2 by a constant, so they share a drift
    dissipation = sum(dissipation_terms(b, grid, epsilon, GSQUARE).values())
    return {
        "dirichlet": integrate(grad_sq, grid),
        "area": integrate(q, grid),
        "gsquare": integrate(q * q, grid),
        "maxexcess": integrate(g_max_excess(lm, q), grid),
        "hess_l2sq": integrate(h2, grid),
        "grad_linf": np.sqrt(np.max(grad_sq, axis=grid.spatial_axes)),
        "mean_u": mean_u,
        "l2dev_sq": integrate(dev**2, grid),
        "area_diss": 0.5 * integrate(q * b.divv**2 + q * sff, grid),
        "drift_pred": -dissipation,
    }


def _h1_dev(cols: dict[str, np.ndarray]) -> np.ndarray:
    """``||u(t) - W(t) - alpha||_H1`` with alpha the final spatial mean of ``u - W``."""
    offset = cols["mean_u"] - cols["W"]
    alpha = offset[..., -1:]
    return np.sqrt(cols["l2dev_sq"] + (offset - alpha) ** 2 + cols["dirichlet"])


def simulate_block(
    config: SimConfig,
    path_ids,
    *,
    noise: list[NoisePath] | None = None,
    u0: np.ndarray | None = None,
    correction: bool = True,
    scheme: str | None = None,
    record: bool = True,
    step_fn=None,
) -> list[PathResult]:
    """Advance the paths ``path_ids`` together and record their traces.

    ``noise`` overrides the configured Brownian paths (one per id, step
    ``config.dt``); ``u0`` overrides the initial data (shape ``(len(ids),) + grid.shape``);
    ``step_fn`` replaces the configured scheme (same signature as the steppers).
    """
    path_ids = list(path_ids)
    grid = config.grid
    steps = config.steps
    dt = config.dt
    eps = config.epsilon
    stepper = step_fn or _STEPPERS[SchemeKind(scheme or config.scheme)]
    if noise is None:
        noise = [sample_increments(config.base_seed, pid, max(steps, 1), dt, config.max_refine_level)
                 for pid in path_ids]
    if any(len(nz.increments) < steps for nz in noise):
        raise ValueError("noise paths are shorter than the configured horizon")
    dW = np.stack([nz.increments[:steps] for nz in noise], axis=-1) if steps else np.zeros((0, len(path_ids)))
    u = np.stack([initial_condition(config, pid) for pid in path_ids]) if u0 is None else np.array(u0, dtype=float)
    B = len(path_ids)
    init_grad = np.sqrt(np.max(np.sum(gradient(u, grid) ** 2, axis=-1), axis=grid.spatial_axes))
    level_m = area_element(init_grad[:, None])

    samples = config.sample_steps
    S = len(samples)
    cols = {name: np.full((B, S), np.nan) for name in TRACE_COLUMNS if name != "h1_dev_from_W"}
    cols["t"][:] = samples * dt
    W = np.zeros(B)
    diverged = np.zeros(B, dtype=bool)
    div_step = np.full(B, -1)
    max_grad = init_grad.copy()
    cum = {"hess_l2sq": np.zeros(B), "area_diss": np.zeros(B), "drift_pred": np.zeros(B)}

    diag = _diagnostics(u, grid, eps, level_m) if record else None
    si = 0
    for n in range(steps + 1):
        if record and si < S and samples[si] == n:
            live = ~diverged
            for k, val in diag.items():
                cols[k][live, si] = val[live]
            for k, val in cum.items():
                cols[k + "_cum"][live, si] = val[live]
            cols["W"][live, si] = W[live]
            si += 1
        if n == steps:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            u = stepper(u, grid, eps, dt, dW[n], correction)
            g = np.sqrt(np.max(np.sum(gradient(u, grid) ** 2, axis=-1), axis=grid.spatial_axes))
        W = W + dW[n]
        # a field whose squared gradient overflows is as lost as one holding NaNs
        bad = ~(np.all(np.isfinite(u), axis=grid.spatial_axes) & np.isfinite(g)) & ~diverged
        if bad.any():
            diverged |= bad
            div_step[bad] = n + 1
        # lost paths are parked at zero so they cannot overflow the batch again
        u[diverged] = 0.0
        g[diverged] = 0.0
        max_grad = np.where(diverged, max_grad, np.maximum(max_grad, g))
        if record:
            with np.errstate(over="ignore", invalid="ignore"):
                new = _diagnostics(u, grid, eps, level_m)
            for k in cum:
                cum[k] = cum[k] + 0.5 * dt * (diag[k] + new[k])
            diag = new

    if record:
        cols["h1_dev_from_W"] = _h1_dev(cols)
    results = []
    for i, pid in enumerate(path_ids):
        trace = EnergyTrace(pid, {k: v[i].copy() for k, v in cols.items()}) if record else None
        results.append(PathResult(
            pid, u[i].copy(), trace, float(max_grad[i]), float(init_grad[i]),
            bool(diverged[i]), int(div_step[i]) if diverged[i] else None, float(W[i]),
        ))
    return results


def simulate_path(config: SimConfig, path_id: int, **kwargs) -> PathResult:
    if "u0" in kwargs and kwargs["u0"] is not None:
        kwargs["u0"] = np.asarray(kwargs["u0"])[None]
    if "noise" in kwargs and kwargs["noise"] is not None:
        kwargs["noise"] = [kwargs["noise"]]
    return simulate_block(config, [path_id], **kwargs)[0]
