"""Counter-based sampling of the scalar Brownian motion driving every node.

The finest increments of a path are standard normals obtained from Philox-4x64
words: word ``j`` of the stream keyed by ``(base_seed, path_id)`` is a pure
function of ``(base_seed, path_id, j)``, mapped to (0, 1) and through the
normal quantile function. Coarser levels are pairwise sums of the next finer
level, so every refinement of a path is consistent with it bit for bit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtri

__all__ = ["NoisePath", "philox_normals", "philox_uniforms", "sample_increments", "refine", "write_noise_csv"]

_MASK64 = (1 << 64) - 1
NOISE_STREAM = 0
INITIAL_DATA_STREAM = 1
AUX_STREAM = 2  # test matrices and other auxiliary draws


def _key(base_seed: int, path_id: int) -> np.ndarray:
    if path_id < 0:
        raise ValueError("path_id must be nonnegative")
    return np.array([base_seed & _MASK64, path_id & _MASK64], dtype=np.uint64)


def _philox_words(base_seed: int, path_id: int, start: int, count: int, stream: int = NOISE_STREAM) -> np.ndarray:
    block, offset = divmod(start, 4)
    counter = np.array([block, 0, 0, stream], dtype=np.uint64)
    bitgen = np.random.Philox(key=_key(base_seed, path_id), counter=counter)
    return bitgen.random_raw(offset + count)[offset:]


def philox_uniforms(base_seed: int, path_id: int, start: int, count: int, stream: int = NOISE_STREAM) -> np.ndarray:
    """Uniforms in the open interval (0, 1) from the top 53 bits of each word."""
    words = _philox_words(base_seed, path_id, start, count, stream)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def philox_normals(base_seed: int, path_id: int, start: int, count: int, stream: int = NOISE_STREAM) -> np.ndarray:
    return ndtri(philox_uniforms(base_seed, path_id, start, count, stream))


def _pairwise_reduce(x: np.ndarray, times: int) -> np.ndarray:
    for _ in range(times):
        x = x[0::2] + x[1::2]
    return x


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian increments of one path at refinement ``level`` of ``max_level``.

    ``dt`` is the step of this level; the finest level has step
    ``dt * 2**(level - max_level)``.
    """

    dt: float
    increments: np.ndarray = field(repr=False)
    base_seed: int
    path_id: int
    level: int = 0
    max_level: int = 0

    @property
    def steps(self) -> int:
        return len(self.increments)

    @cached_property
    def W(self) -> np.ndarray:
        """Partial sums ``W(t_k)`` for ``k = 0..steps`` with ``W(0) = 0``."""
        out = np.empty(self.steps + 1)
        out[0] = 0.0
        np.cumsum(self.increments, out=out[1:])
        return out

    def __eq__(self, other):
        if not isinstance(other, NoisePath):
            return NotImplemented
        return (
            self.dt == other.dt
            and (self.base_seed, self.path_id, self.level, self.max_level)
            == (other.base_seed, other.path_id, other.level, other.max_level)
            and np.array_equal(self.increments, other.increments)
        )


def _level_increments(base_seed, path_id, coarse_steps, coarse_dt, level, max_level):
    per_step = 2**max_level
    fine_dt = coarse_dt / per_step
    z = philox_normals(base_seed, path_id, 0, coarse_steps * per_step)
    return _pairwise_reduce(z * np.sqrt(fine_dt), max_level - level)


def sample_increments(base_seed: int, path_id: int, steps: int, dt: float, max_level: int = 0) -> NoisePath:
    """Increments of ``W`` on ``steps`` steps of size ``dt`` (refinable ``max_level`` times)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    inc = _level_increments(base_seed, path_id, steps, dt, 0, max_level)
    return NoisePath(dt, inc, base_seed, path_id, 0, max_level)


def refine(path: NoisePath, factor: int) -> NoisePath:
    """The same Brownian path on a step ``dt / factor``; ``factor`` a power of 2."""
    if factor < 2 or factor & (factor - 1):
        raise ValueError(f"factor must be a power of 2 and >= 2, got {factor}")
    new_level = path.level + factor.bit_length() - 1
    if new_level > path.max_level:
        raise ValueError(
            f"refining to level {new_level} exceeds max_level {path.max_level}; "
            "raise maxRefineLevel when sampling"
        )
    coarse_steps = path.steps // 2**path.level
    coarse_dt = path.dt * 2**path.level
    inc = _level_increments(path.base_seed, path.path_id, coarse_steps, coarse_dt, new_level, path.max_level)
    return NoisePath(path.dt / factor, inc, path.base_seed, path.path_id, new_level, path.max_level)


def write_noise_csv(path: NoisePath, destination) -> None:
    """Columns ``k, dW, W``; row ``k`` holds the increment ending at step ``k``."""
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "dW", "W"])
        writer.writerow([0, "0", "0"])
        for k in range(path.steps):
            writer.writerow([k + 1, f"{path.increments[k]:.17g}", f"{path.W[k + 1]:.17g}"])
