"""Monte Carlo ensembles and the statistical verdicts built on them.

Paths are simulated in fixed blocks of ``BLOCK_SIZE`` consecutive ids, so the
arithmetic done for any path never depends on how many workers share the
load. Every verdict follows the same convention: ``passed`` iff
``statistic <= threshold``, and the detail string carries what is needed to
recompute both from the raw traces.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SimConfig
from .geometry import decay_coefficient
from .grid import integrate
from .noise import refine, sample_increments
from .stepper import PathResult, SchemeKind, _STEPPERS, simulate_block

__all__ = [
    "BLOCK_SIZE",
    "DIVERGENCE_LIMIT",
    "STAT_COLUMNS",
    "Verdict",
    "EnsembleResult",
    "run_ensemble",
    "ensemble_stats",
    "supermartingale_test",
    "quantified_decay_test",
    "area_inequality_test",
    "drift_prediction_test",
    "max_principle_test",
    "max_excess_test",
    "LargeTimeAnalysis",
    "large_time_analysis",
    "ViscositySweep",
    "viscosity_sweep",
    "moment_bound_test",
    "StrongStudy",
    "ito_strat_study",
]

BLOCK_SIZE = 8
DIVERGENCE_LIMIT = 0.05
MIN_PATHS = 50
STAT_COLUMNS = ("W", "dirichlet", "area", "gsquare", "maxexcess", "hess_l2sq_cum", "grad_linf", "h1_dev_from_W")


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: str = ""

    def __post_init__(self):
        if self.passed != bool(self.statistic <= self.threshold):
            raise ValueError(f"verdict {self.name}: passed flag disagrees with statistic <= threshold")

    @classmethod
    def judge(cls, name: str, statistic: float, threshold: float, detail: str = "") -> "Verdict":
        statistic, threshold = float(statistic), float(threshold)
        return cls(name, bool(statistic <= threshold), statistic, threshold, detail)

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "statistic": self.statistic,
                "threshold": self.threshold, "detail": self.detail}

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'} {self.name}: statistic={self.statistic:.6g} "
                f"threshold={self.threshold:.6g}{' (' + self.detail + ')' if self.detail else ''}")


@dataclass
class EnsembleResult:
    config: SimConfig
    per_path: list[PathResult] = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def valid_paths(self) -> list[PathResult]:
        return [p for p in self.per_path if not p.diverged]

    @property
    def n_diverged(self) -> int:
        return sum(p.diverged for p in self.per_path)

    @property
    def valid(self) -> bool:
        return self.n_diverged <= DIVERGENCE_LIMIT * len(self.per_path)

    @property
    def times(self) -> np.ndarray:
        return self.per_path[0].trace.times

    def column(self, name: str) -> np.ndarray:
        """(valid paths, samples) matrix of one trace column."""
        rows = [p.trace[name] for p in self.valid_paths]
        return np.array(rows) if rows else np.empty((0, len(self.times)))

    @property
    def stats(self) -> dict[str, dict[str, np.ndarray]]:
        return ensemble_stats(self)


def _run_blocks(config: SimConfig, blocks: list[list[int]]) -> list[PathResult]:
    out = []
    for b in blocks:
        out.extend(simulate_block(config, b))
    return out


def run_ensemble(config: SimConfig, workers: int | None = None) -> EnsembleResult:
    """Simulate paths ``0..M-1`` and merge them in id order."""
    workers = config.worker_count if workers is None else workers
    ids = list(range(config.ensemble_size))
    blocks = [ids[i:i + BLOCK_SIZE] for i in range(0, len(ids), BLOCK_SIZE)]
    start = time.perf_counter()
    if workers <= 1 or len(blocks) == 1:
        paths = _run_blocks(config, blocks)
    else:
        shards = [blocks[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = [p for chunk in pool.map(_run_blocks, [config] * len(shards), shards) for p in chunk]
    paths.sort(key=lambda p: p.path_id)
    meta = {
        "configHash": config.config_hash(),
        "baseSeed": config.base_seed,
        "pathIds": [0, config.ensemble_size - 1],
        "nDiverged": sum(p.diverged for p in paths),
        "wallTime": time.perf_counter() - start,
    }
    return EnsembleResult(config, paths, meta)


def _mean_se(x: np.ndarray, axis: int = 0):
    n = x.shape[axis]
    if n == 0:
        nan = np.full(np.delete(x.shape, axis), np.nan)
        return nan, nan.copy(), nan.copy()
    mean = x.mean(axis=axis)
    var = x.var(axis=axis, ddof=1) if n > 1 else np.zeros_like(mean)
    return mean, var, np.sqrt(var / n)


def ensemble_stats(result: EnsembleResult, columns=STAT_COLUMNS) -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for name in columns:
        x = result.column(name)
        mean, var, se = _mean_se(x)
        out[name] = {"mean": mean, "var": var, "se": se, "n_valid": np.full(mean.shape, x.shape[0])}
    return out


def _require_paths(result: EnsembleResult, minimum: int = MIN_PATHS):
    n = len(result.valid_paths)
    if n < minimum:
        raise ValueError(f"need at least {minimum} valid paths, have {n}")


def _paired_sup(values: np.ndarray):
    """max over pairs i < j of mean(F_j - F_i) - 3 SE, with the maximising pair."""
    n, s = values.shape
    best, arg = -np.inf, (0, 0)
    for i in range(s - 1):
        d = values[:, i + 1:] - values[:, i:i + 1]
        mean = d.mean(axis=0)
        se = d.std(axis=0, ddof=1) / math.sqrt(n)
        crit = mean - 3 * se
        j = int(np.argmax(crit))
        if crit[j] > best:
            best, arg = float(crit[j]), (i, i + 1 + j)
    return best, arg


def supermartingale_test(result: EnsembleResult, functional: str, tol_bias: float | None = None,
                         q: float = 1.0, min_paths: int = MIN_PATHS) -> Verdict:
    """Paired test of ``E F(t2) <= E F(t1)`` over all recorded ``t1 < t2`` with ``F = I^q``.

    statistic = max over pairs of ``D - 3 SE``; threshold = ``tolBias * E F(0)``.
    """
    _require_paths(result, min_paths)
    tol_bias = result.config.tolerances.tolBias if tol_bias is None else tol_bias
    f = result.column(functional) ** q
    threshold = tol_bias * float(f[:, 0].mean())
    if f.shape[1] < 2:
        return Verdict.judge(f"supermartingale[{functional},q={q:g}]", 0.0, threshold, "single sample")
    stat, (i, j) = _paired_sup(f)
    t = result.times
    return Verdict.judge(f"supermartingale[{functional},q={q:g}]", stat, threshold,
                         f"worst pair t1={t[i]:.6g} t2={t[j]:.6g}, n={f.shape[0]}")


def _running_test(name: str, excess: np.ndarray, times: np.ndarray, threshold: float, extra: str = "") -> Verdict:
    """max over t of ``mean(excess_t) - 3 SE_t`` for a per-path excess matrix."""
    mean, _, se = _mean_se(excess)
    crit = mean - 3 * se
    k = int(np.argmax(crit))
    detail = f"worst t={times[k]:.6g} mean={mean[k]:.6g} se={se[k]:.3g}, n={excess.shape[0]}{extra}"
    return Verdict.judge(name, crit[k], threshold, detail)


def quantified_decay_test(result: EnsembleResult, L: float | None = None, tol_bias: float | None = None,
                          min_paths: int = MIN_PATHS) -> Verdict:
    """``E|grad u(t)|^2 + c_L E int_0^t |D^2u|^2 <= E|grad u0|^2`` at every recorded time."""
    _require_paths(result, min_paths)
    tol_bias = result.config.tolerances.tolBias if tol_bias is None else tol_bias
    if L is None:
        L = max(p.initial_grad for p in result.valid_paths)
    c = decay_coefficient(L)
    d = result.column("dirichlet")
    h = result.column("hess_l2sq_cum")
    if not np.all(np.isfinite(h)):
        raise ValueError("Hessian integral was not recorded")
    excess = d + c * h - d[:, :1]
    return _running_test("quantified_decay", excess, result.times, tol_bias * float(d[:, 0].mean()),
                         f", L={L:.6g} c_L={c:.6g}")


def area_inequality_test(result: EnsembleResult, tol_bias: float | None = None,
                         min_paths: int = MIN_PATHS) -> Verdict:
    """``E int Q(t) + 1/2 E int_0^t int Q (|div v|^2 + Dv:Dv^T) <= E int Q(0)``."""
    _require_paths(result, min_paths)
    tol_bias = result.config.tolerances.tolBias if tol_bias is None else tol_bias
    a = result.column("area")
    excess = a + result.column("area_diss_cum") - a[:, :1]
    return _running_test("area_inequality", excess, result.times, tol_bias * float(a[:, 0].mean()))


def drift_prediction_test(result: EnsembleResult, window: float | None = None, allowance: float | None = None,
                          min_paths: int = MIN_PATHS) -> Verdict:
    """Realized Dirichlet increment over ``[0, window]`` against the time-integrated drift.

    Per path ``X = D(window) - D(0) - int_0^window drift_pred``, the stochastic
    integral plus discretisation error. statistic = ``|mean X| - 3 SE``. The
    default O(dt) allowance is ``dt * kappa * |E[D(window) - D(0)]|`` with
    ``kappa = |E drift_pred(0)| / E D(0)``, the initial relative dissipation
    rate, i.e. the relative energy change of one step.
    """
    _require_paths(result, min_paths)
    cfg = result.config
    window = cfg.analysis.driftWindow if window is None else window
    t = result.times
    k = int(np.argmin(np.abs(t - window)))
    if abs(t[k] - window) > 1e-9 * max(1.0, window):
        raise ValueError(f"window {window} is not a recorded time")
    d = result.column("dirichlet")
    realized = d[:, k] - d[:, 0]
    predicted = result.column("drift_pred_cum")[:, k]
    x = realized - predicted
    mean, _, se = _mean_se(x)
    p0 = float(result.column("drift_pred")[:, 0].mean())
    if allowance is None:
        d0 = float(d[:, 0].mean())
        kappa = abs(p0) / d0 if d0 > 0 else 0.0
        allowance = cfg.dt * kappa * abs(float(realized.mean()))
    detail = (f"realized={realized.mean():.6g} predicted={predicted.mean():.6g} se={se:.3g}, "
              f"predicted rate at t=0 {p0:.6g}, realized mean rate {realized.mean() / t[k]:.6g}")
    return Verdict.judge("drift_prediction", abs(mean) - 3 * se, allowance, detail)


def max_principle_test(result: EnsembleResult, L: float | None = None, tol_mp: float | None = None) -> Verdict:
    """Pathwise ``max_t |grad u|_inf <= L (1 + tolMP)``; ``L`` defaults to each path's initial value."""
    tol_mp = result.config.tolerances.tolMP if tol_mp is None else tol_mp
    worst, who = 0.0, None
    vacuous = True
    for p in result.per_path:
        lip = p.initial_grad if L is None else L
        if lip <= 1e-12:
            continue
        vacuous = False
        r = (p.max_grad - lip) / lip
        if p.diverged:
            r = math.inf
        if who is None or r > worst:
            worst, who = r, p.path_id
    if vacuous:
        return Verdict.judge("max_principle", 0.0, tol_mp, "vacuous: zero initial gradient")
    over = sum(p.diverged or p.max_grad > (p.initial_grad if L is None else L) * (1 + tol_mp)
               for p in result.per_path)
    return Verdict.judge("max_principle", worst, tol_mp,
                         f"worst path {who}, {over} of {len(result.per_path)} paths above the bound")


def max_excess_test(result: EnsembleResult, threshold: float = 1e-12) -> Verdict:
    """``int g_M(Q)`` with ``M`` the initial Q-level stays zero along every path."""
    vals = [float(np.max(p.trace["maxexcess"])) if not p.diverged else math.inf for p in result.per_path]
    k = int(np.argmax(vals))
    return Verdict.judge("max_excess", vals[k], threshold, f"worst path {result.per_path[k].path_id}")


def moment_bound_test(result: EnsembleResult, q: float, K: float | None = None) -> Verdict:
    """``E sup_t |grad u|^{2q} <= K E |grad u0|^{2q}`` (structural check, K is not sharp)."""
    if not 1 <= q < 2:
        raise ValueError("q must lie in [1, 2)")
    K = result.config.tolerances.K_moment if K is None else K
    d = result.column("dirichlet") ** q
    base = float(d[:, 0].mean())
    top = float(d.max(axis=1).mean())
    ratio = top / base if base > 0 else 0.0
    return Verdict.judge(f"moment_bound[q={q:g}]", ratio, K, f"E sup={top:.6g} E initial={base:.6g}")


@dataclass
class LargeTimeAnalysis:
    alpha: np.ndarray
    tgrid: np.ndarray
    curve: np.ndarray
    se: np.ndarray
    strictly_decreasing: bool
    verdict: Verdict


def large_time_analysis(result: EnsembleResult, tgrid=None) -> LargeTimeAnalysis:
    """Mean-free part of ``u - W`` against its final value.

    ``alpha`` is the final spatial mean of ``u - W``; ``curve[j]`` is the
    ensemble mean of ``sup_{t in [T_j, T_end]} |u - W - alpha|_{H1}``.
    """
    tgrid = np.asarray(result.config.analysis.tgrid if tgrid is None else tgrid, dtype=float)
    t = result.times
    if t[-1] < tgrid.max() * (1 - 1e-12):
        raise ValueError(f"horizon {t[-1]} is shorter than max(Tgrid) = {tgrid.max()}")
    paths = result.valid_paths
    alpha = np.array([p.trace["mean_u"][-1] - p.trace["W"][-1] for p in paths])
    dev = result.column("h1_dev_from_W")
    sups = np.array([[dev[i, t >= T - 1e-12].max() for T in tgrid] for i in range(len(paths))])
    curve, _, se = _mean_se(sups)
    if len(tgrid) > 1:
        steps = np.diff(sups, axis=1)
        m, _, s = _mean_se(steps)
        crit = m - 3 * s
        strict = bool(np.all(m + 3 * s < 0))
        j = int(np.argmax(crit))
        verdict = Verdict.judge("large_time_decay", crit[j], 0.0,
                                f"curve={np.array2string(curve, precision=4)}, worst step {j}")
    else:
        strict = False
        verdict = Verdict.judge("large_time_decay", 0.0, 0.0, "single T")
    return LargeTimeAnalysis(alpha, tgrid, curve, se, strict, verdict)


@dataclass
class ViscositySweep:
    epsilons: np.ndarray
    distance: np.ndarray
    se: np.ndarray
    per_path: np.ndarray = field(repr=False)
    exponent: float
    strictly_decreasing: bool
    verdict: Verdict

    def rows(self):
        return [{"epsilon": float(e), "distance": float(d), "se": float(s)}
                for e, d, s in zip(self.epsilons, self.distance, self.se)]


def _sweep_block(config: SimConfig, epsilons, path_ids):
    from .config import initial_condition

    grid = config.grid
    stepper = _STEPPERS[SchemeKind(config.scheme)]
    steps, dt = config.steps, config.dt
    dW = np.stack([sample_increments(config.base_seed, pid, max(steps, 1), dt, config.max_refine_level).increments
                   for pid in path_ids], axis=-1)
    u0 = np.stack([initial_condition(config, pid) for pid in path_ids])
    us = [u0.copy() for _ in epsilons]
    ref = len(epsilons) - 1
    best = np.zeros((len(epsilons), len(path_ids)))
    for n in range(steps):
        for e, eps in enumerate(epsilons):
            us[e] = stepper(us[e], grid, eps, dt, dW[n])
        for e in range(ref):
            dist = np.sqrt(integrate((us[e] - us[ref]) ** 2, grid))
            best[e] = np.maximum(best[e], dist)
    return best


def viscosity_sweep(config: SimConfig, epsilons=None, workers: int | None = None) -> ViscositySweep:
    """Coupled-noise distances ``E max_t |u^eps(t) - u^0(t)|_L2`` for descending ``epsilons``."""
    eps = [float(e) for e in (config.analysis.epsilons if epsilons is None else epsilons)]
    if eps != sorted(eps, reverse=True) or eps[-1] != 0.0:
        raise ValueError("epsilons must be sorted descending and end with 0")
    workers = config.worker_count if workers is None else workers
    ids = list(range(config.ensemble_size))
    blocks = [ids[i:i + BLOCK_SIZE] for i in range(0, len(ids), BLOCK_SIZE)]
    if workers <= 1:
        parts = [_sweep_block(config, eps, b) for b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_block, [config] * len(blocks), [eps] * len(blocks), blocks))
    per_path = np.concatenate(parts, axis=1).T  # (paths, eps)
    dist, _, se = _mean_se(per_path)
    if len(eps) > 1:
        m, _, s = _mean_se(np.diff(per_path, axis=1))
        crit = m - 3 * s
        j = int(np.argmax(crit))
        strict = bool(np.all(m < 0))
        verdict = Verdict.judge("viscosity_sweep", crit[j], 0.0, f"distances={np.array2string(dist, precision=4)}")
    else:
        strict = True
        verdict = Verdict.judge("viscosity_sweep", 0.0, 0.0, "reference only")
    pos = [(e, d) for e, d in zip(eps, dist) if e > 0 and d > 0]
    exponent = float(np.polyfit(np.log([e for e, _ in pos]), np.log([d for _, d in pos]), 1)[0]) \
        if len(pos) >= 2 else math.nan
    return ViscositySweep(np.array(eps), dist, se, per_path, exponent, strict, verdict)


@dataclass
class StrongStudy:
    dts: np.ndarray
    distance: np.ndarray
    order: float
    correction: bool


def ito_strat_study(config: SimConfig, levels: int = 4, horizon: float = 0.1, paths=range(8),
                    correction: bool = True, dt0: float | None = None) -> StrongStudy:
    """Coupled strong distance between explicit Ito EM and Stratonovich Heun on dyadic steps.

    The coarsest step ``dt0`` defaults to the largest ``horizon / 2^m`` within
    the explicit stability bound; finer steps share the same Brownian path
    through :func:`refine`. Distance = ensemble mean of the final-time sup-norm
    gap; ``order`` is the least-squares slope in log-log.
    """
    from .config import explicit_dt_bound, initial_condition

    grid = config.grid
    if dt0 is None:
        bound = explicit_dt_bound(config.dim, config.res, config.epsilon)
        dt0 = horizon / 2 ** math.ceil(math.log2(horizon / bound))
    steps0 = int(round(horizon / dt0))
    paths = list(paths)
    u0 = np.stack([initial_condition(config, pid) for pid in paths])
    coarse = [sample_increments(config.base_seed, pid, steps0, dt0, levels - 1) for pid in paths]
    dts, dist = [], []
    for lev in range(levels):
        noise = [refine(nz, 2**lev) if lev else nz for nz in coarse]
        dt = noise[0].dt
        dW = np.stack([nz.increments for nz in noise], axis=-1)
        a = u0.copy()
        b = u0.copy()
        for n in range(dW.shape[0]):
            a = _STEPPERS[SchemeKind.ExplicitEM](a, grid, config.epsilon, dt, dW[n], correction)
            b = _STEPPERS[SchemeKind.StratonovichHeun](b, grid, config.epsilon, dt, dW[n])
        dts.append(dt)
        dist.append(float(np.mean(np.max(np.abs(a - b), axis=grid.spatial_axes))))
    order = float(np.polyfit(np.log(dts), np.log(dist), 1)[0])
    return StrongStudy(np.array(dts), np.array(dist), order, correction)


def with_paths(result: EnsembleResult, paths: list[PathResult]) -> EnsembleResult:
    """Copy of ``result`` with its paths replaced (used for negative controls)."""
    return replace(result, per_path=list(paths))


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
