"""Dense value conventions, deterministic RNG streams, parameter snapshots.

DenseVec / DenseMat are plain contiguous float32 numpy arrays (1-D / 2-D);
this module provides the coercion helpers the rest of the package uses at its
boundaries. Loss and gradient reductions accumulate in float64.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid configuration or validation failure."""


class UsageError(RuntimeError):
    """API misuse: dimension mismatch, stale handle, wrong lifecycle order."""


def mix64(z: int) -> int:
    """SplitMix64 finalizer, the documented substream seed mixer."""
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & MASK64
    if isinstance(tag, str):
        # stable across platforms: fold utf-8 bytes through mix64
        acc = 0x7A5C_BEEF_0123_4567
        for byte in tag.encode("utf-8"):
            acc = mix64(acc ^ byte)
        return acc
    raise UsageError(f"substream path elements must be int or str, got {type(tag)!r}")


class Rng:
    """Counter-based Philox(4x64) stream.

    Substreams are derived by SplitMix64-mixing the seed with a path of
    (worker, epoch, purpose) style tags, so every stochastic draw in the
    system is a pure function of (seed, path), never of thread schedule.
    """

    __slots__ = ("seed", "_gen")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def substream(self, *path) -> "Rng":
        s = self.seed
        for tag in path:
            s = mix64(s ^ _tag_to_int(tag))
        return Rng(s)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def gaussian(self, n: int) -> np.ndarray:
        """n standard-normal float32 draws (ziggurat transform)."""
        return self._gen.standard_normal(int(n), dtype=np.float32)

    def gaussian2d(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=np.float32)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def random_u64(self, n: int) -> np.ndarray:
        return self._gen.integers(0, 1 << 64, size=int(n), dtype=np.uint64)


def f32vec(x, n: int | None = None) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float32)
    if a.ndim != 1:
        raise UsageError(f"expected 1-D vector, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise UsageError(f"expected vector of length {n}, got {a.shape[0]}")
    return a


def f32mat(x, shape: tuple[int, int] | None = None) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float32)
    if a.ndim != 2:
        raise UsageError(f"expected 2-D matrix, got shape {a.shape}")
    if shape is not None and a.shape != shape:
        raise UsageError(f"expected matrix of shape {shape}, got {a.shape}")
    return a


@dataclass(frozen=True)
class ParamSnapshot:
    """Immutable, versioned copy of the flattened policy parameters.

    version 0 is initialization; each optimizer step publishes version+1.
    Two snapshots with equal version are bitwise-equal by construction.
    """

    version: int
    params: np.ndarray = field(repr=False)

    @property
    def nbytes(self) -> int:
        return self.params.nbytes

    def sha256(self) -> str:
        return hashlib.sha256(self.params.tobytes()).hexdigest()


def snapshot_from_params(params, version: int) -> ParamSnapshot:
    """Deep-copy params into a read-only float32 snapshot; rejects non-finite."""
    arr = np.array(params, dtype=np.float32, copy=True).ravel()
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ConfigError(f"non-finite parameter at flat index {bad}")
    if version < 0:
        raise ConfigError(f"snapshot version must be >= 0, got {version}")
    arr.setflags(write=False)
    return ParamSnapshot(version=int(version), params=arr)
