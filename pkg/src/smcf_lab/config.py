"""Simulation configuration: JSON schema, defaults, validation and initial data."""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .grid import GridSpec, gradient, norm
from .noise import INITIAL_DATA_STREAM, philox_normals

__all__ = [
    "ConfigError",
    "SCHEMES",
    "InitialDatum",
    "Tolerances",
    "Analysis",
    "SimConfig",
    "parse_config",
    "explicit_dt_bound",
    "initial_condition",
]

SCHEMES = ("ExplicitEM", "SemiImplicitSpectral", "StratonovichHeun")
EXPLICIT_SCHEMES = ("ExplicitEM", "StratonovichHeun")
MAX_SAMPLES = 2048


class ConfigError(ValueError):
    pass


def explicit_dt_bound(dim: int, res: int, epsilon: float) -> float:
    """Largest admissible step ``0.5 h^2 / (2 n (1 + eps))`` for explicit schemes."""
    h = 1.0 / res
    return 0.5 * h**2 / (2 * dim * (1 + epsilon))


@dataclass(frozen=True)
class InitialDatum:
    """``fourier``: ``constant + sum_j sin[j-1] sin(2 pi j x_1) + cos[j-1] cos(2 pi j x_1)``
    plus explicit ``terms`` ``{"k": [...], "sin": a, "cos": b}``.
    ``randomLipschitz``: random trigonometric polynomial with wavevectors
    ``|k_i| <= modes``, rescaled per path so that the grid sup of the gradient is ``L``.
    """

    family: str = "fourier"
    sin: tuple[float, ...] = ()
    cos: tuple[float, ...] = ()
    terms: tuple[tuple[tuple[int, ...], float, float], ...] = ()
    constant: float = 0.0
    L: float | None = None
    modes: int = 3

    def to_dict(self) -> dict:
        d = {"family": self.family, "constant": self.constant}
        if self.family == "fourier":
            d.update(sin=list(self.sin), cos=list(self.cos))
            d["terms"] = [{"k": list(k), "sin": a, "cos": b} for k, a, b in self.terms]
        else:
            d.update(L=self.L, modes=self.modes)
        return d


@dataclass(frozen=True)
class Tolerances:
    tolMP: float = 0.02
    tolBias: float = 0.01
    K_moment: float = 10.0


@dataclass(frozen=True)
class Analysis:
    """Knobs of the post-processing experiments driven from the CLI."""

    tgrid: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05, 0.0)
    q: tuple[float, ...] = (1.0, 1.5)
    galerkinModes: tuple[int, ...] = (3, 9, 17)
    driftWindow: float = 0.05


@dataclass(frozen=True)
class SimConfig:
    dim: int = 1
    res: int = 128
    epsilon: float = 0.0
    dt: float = 1e-3
    horizon: float = 1.0
    scheme: str = "SemiImplicitSpectral"
    sample_stride: int = 1
    initial: InitialDatum = field(default_factory=InitialDatum)
    ensemble_size: int = 100
    base_seed: int = 0
    max_refine_level: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    worker_count: int = 1
    analysis: Analysis = field(default_factory=Analysis)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dim, self.res)

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def sample_steps(self) -> np.ndarray:
        """Step indices at which traces are recorded (always includes 0 and the last step)."""
        idx = np.arange(0, self.steps + 1, self.sample_stride)
        if idx[-1] != self.steps:
            idx = np.append(idx, self.steps)
        return idx

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self, include_runtime: bool = False) -> dict:
        d = {
            "dim": self.dim,
            "res": self.res,
            "epsilon": self.epsilon,
            "dt": self.dt,
            "T": self.horizon,
            "scheme": self.scheme,
            "sampleStride": self.sample_stride,
            "initial": self.initial.to_dict(),
            "M": self.ensemble_size,
            "baseSeed": self.base_seed,
            "maxRefineLevel": self.max_refine_level,
            "tolerances": asdict(self.tolerances),
            "analysis": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.analysis).items()},
        }
        if include_runtime:
            d["workerCount"] = self.worker_count
        return d

    def echo(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        """Hash of the scientific content; the worker count is excluded."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_TOP_KEYS = {
    "dim", "res", "epsilon", "dt", "T", "scheme", "sampleStride", "initial", "M", "baseSeed",
    "maxRefineLevel", "tolerances", "workerCount", "analysis",
}
_INITIAL_KEYS = {"family", "sin", "cos", "terms", "constant", "L", "modes"}


def _strict(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _parse_initial(d: dict, dim: int) -> InitialDatum:
    _strict(d, _INITIAL_KEYS, "initial")
    family = d.get("family", "fourier")
    if family == "fourier":
        terms = []
        for t in d.get("terms", []):
            _strict(t, {"k", "sin", "cos"}, "initial.terms[]")
            k = tuple(int(c) for c in t["k"])
            if len(k) != dim:
                raise ConfigError(f"term wavevector {k} does not match dim={dim}")
            terms.append((k, float(t.get("sin", 0.0)), float(t.get("cos", 0.0))))
        return InitialDatum(
            "fourier",
            tuple(float(a) for a in d.get("sin", [])),
            tuple(float(b) for b in d.get("cos", [])),
            tuple(terms),
            float(d.get("constant", 0.0)),
        )
    if family == "randomLipschitz":
        lip = d.get("L")
        if lip is None or not float(lip) > 0:
            raise ConfigError("randomLipschitz requires L > 0")
        modes = int(d.get("modes", 3))
        if modes < 1:
            raise ConfigError("modes must be >= 1")
        return InitialDatum("randomLipschitz", constant=float(d.get("constant", 0.0)), L=float(lip), modes=modes)
    raise ConfigError(f"unknown initial family {family!r}")


def parse_config(text, force: bool = False) -> SimConfig:
    """Parse and validate a JSON config (string or already-decoded dict).

    ``force`` skips the explicit-scheme step-size check; for negative tests only.
    """
    d = json.loads(text) if isinstance(text, (str, bytes)) else dict(text)
    _strict(d, _TOP_KEYS, "config")
    try:
        dim = int(d.get("dim", 1))
        res = int(d.get("res", 128))
        try:
            GridSpec(dim, res)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        epsilon = float(d.get("epsilon", 0.0))
        if epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        scheme = d.get("scheme", "SemiImplicitSpectral")
        if scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        bound = explicit_dt_bound(dim, res, epsilon)
        if "dt" in d:
            dt = float(d["dt"])
        else:
            dt = bound if scheme in EXPLICIT_SCHEMES else 1e-3
        if not dt > 0:
            raise ConfigError("dt must be positive")
        if scheme in EXPLICIT_SCHEMES and dt > bound * (1 + 1e-12) and not force:
            raise ConfigError(
                f"dt={dt:g} violates the explicit stability bound 0.5*h^2/(2n(1+eps)) = {bound:.6g}"
            )
        horizon = float(d.get("T", 1.0))
        if horizon < 0:
            raise ConfigError("T must be >= 0")
        steps = horizon / dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ConfigError(f"T={horizon:g} is not an integer multiple of dt={dt:g}")
        steps = int(round(steps))
        stride = int(d.get("sampleStride", max(1, math.ceil(steps / (MAX_SAMPLES - 1)))))
        if stride < 1:
            raise ConfigError("sampleStride must be >= 1")
        initial = _parse_initial(d.get("initial", {"family": "fourier", "sin": [0.5]}), dim)
        m = int(d.get("M", 100))
        if m < 1:
            raise ConfigError("M must be >= 1")
        tol = d.get("tolerances", {})
        _strict(tol, {"tolMP", "tolBias", "K_moment"}, "tolerances")
        tolerances = Tolerances(**{k: float(v) for k, v in tol.items()})
        an = d.get("analysis", {})
        _strict(an, {f for f in Analysis.__dataclass_fields__}, "analysis")
        analysis = Analysis(**{
            k: (tuple(int(x) for x in v) if k == "galerkinModes" else tuple(float(x) for x in v))
            if isinstance(v, list) else float(v)
            for k, v in an.items()
        })
        level = int(d.get("maxRefineLevel", 0))
        if level < 0:
            raise ConfigError("maxRefineLevel must be >= 0")
        workers = int(d.get("workerCount", 1))
        if workers < 1:
            raise ConfigError("workerCount must be >= 1")
        return SimConfig(
            dim, res, epsilon, dt, horizon, scheme, stride, initial, m, int(d.get("baseSeed", 0)),
            level, tolerances, workers, analysis,
        )
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None


def _fourier_field(init: InitialDatum, grid: GridSpec) -> np.ndarray:
    x = grid.coords
    u = np.full(grid.shape, init.constant, dtype=float)
    for j, a in enumerate(init.sin, start=1):
        u += a * np.sin(2 * np.pi * j * x[0])
    for j, b in enumerate(init.cos, start=1):
        u += b * np.cos(2 * np.pi * j * x[0])
    for k, a, b in init.terms:
        phase = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, x))
        u += a * np.sin(phase) + b * np.cos(phase)
    return u


def random_trig_field(grid: GridSpec, modes: int, base_seed: int, path_id: int) -> np.ndarray:
    """Mean-free trigonometric polynomial with Philox-drawn coefficients ~ N(0,1)/(1+|k|^2)."""
    ks = [k for k in itertools.product(range(-modes, modes + 1), repeat=grid.dim) if any(k)]
    # keep one representative of each +-k pair
    ks = [k for k in ks if tuple(-c for c in k) > k]
    z = philox_normals(base_seed, path_id, 0, 2 * len(ks), stream=INITIAL_DATA_STREAM)
    x = grid.coords
    u = np.zeros(grid.shape)
    for i, k in enumerate(ks):
        phase = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, x))
        w = 1.0 / (1.0 + sum(c * c for c in k))
        u += w * (z[2 * i] * np.cos(phase) + z[2 * i + 1] * np.sin(phase))
    return u


def initial_condition(config: SimConfig, path_id: int) -> np.ndarray:
    grid = config.grid
    init = config.initial
    if init.family == "fourier":
        return _fourier_field(init, grid)
    u = random_trig_field(grid, init.modes, config.base_seed, path_id)
    lip = norm(gradient(u, grid), grid, "Linf", 1)
    return init.constant + u * (init.L / lip)
