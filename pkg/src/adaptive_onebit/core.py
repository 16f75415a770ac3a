"""Dense linear-algebra conventions shared by every other module.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
The helpers here validate shapes/finiteness, fix the sign convention used by
the one-bit quantizer, and define the seeded random-stream contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Identifier of the random-number algorithm, part of the reproducibility
#: contract: seeds are expanded with SeedSequence, bits come from PCG64 and
#: normals from numpy's ziggurat sampler (``Generator.standard_normal``).
RNG_ALGORITHM = "numpy.SeedSequence/PCG64/ziggurat-normal"


class DimensionError(ValueError):
    """Raised when operand shapes do not agree."""


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite 1-D float64 array or raise ``ValueError``."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible stream of random draws.

    The pair ``(master_seed, substream_id)`` fully determines the draws.
    Streams are immutable: every consumer calls :meth:`generator` to get a
    fresh ``numpy.random.Generator`` positioned at the start of the stream,
    and concurrent tasks use :meth:`child` to derive independent substreams.
    """

    master_seed: int
    substream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "substream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.substream_id),))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: int) -> "RngStream":
        """Derive a substream keyed by ``keys`` (deterministic, order-sensitive)."""
        entropy = [int(self.master_seed), int(self.substream_id), *map(int, keys)]
        sub = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
        return RngStream(self.master_seed, int(sub))


@dataclass(frozen=True)
class SignalModel:
    """Sizes and bounds of an analysis-sparse signal problem.

    ``n`` is the signal dimension, ``N`` the number of analysis coefficients,
    ``s`` the sparsity level and ``r`` an upper bound on ``||f||_2``.
    """

    n: int
    N: int
    s: float
    r: float

    def __post_init__(self):
        if self.n < 1 or self.N < self.n:
            raise ValueError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")
        if not 0 < self.s <= self.N:
            raise ValueError(f"need 0 < s <= N, got s={self.s}")
        if not self.r > 0:
            raise ValueError(f"radius r must be positive, got {self.r}")


def sign_vector(v) -> np.ndarray:
    """Componentwise sign with the convention ``sign(0) = +1``.

    Negative zero counts as zero and maps to +1.
    """
    v = as_vector(v)
    return np.where(v >= 0, 1.0, -1.0)


def analysis_coefficients(f, D) -> np.ndarray:
    """Analysis vector ``D^T f`` of a signal ``f`` for dictionary ``D`` (n x N)."""
    f = as_vector(f, "f")
    D = as_matrix(D, "D")
    if D.shape[0] != f.shape[0]:
        raise DimensionError(f"dictionary has {D.shape[0]} rows but signal has length {f.shape[0]}")
    return D.T @ f


def effective_sparsity(f, D) -> float:
    """Return ``(||D^T f||_1 / ||D^T f||_2)**2``.

    The signal is effectively s-analysis-sparse iff the value is at most s.
    A zero analysis vector is degenerate and reported as 0.0.
    """
    x = analysis_coefficients(f, D)
    l2 = np.linalg.norm(x)
    if l2 == 0.0:
        return 0.0
    return float((np.abs(x).sum() / l2) ** 2)


def normalized_error(f, f_hat) -> float:
    """Relative reconstruction error ``||f - f_hat||_2 / ||f||_2``."""
    f = as_vector(f, "f")
    f_hat = as_vector(f_hat, "f_hat")
    if f.shape != f_hat.shape:
        raise DimensionError(f"shape mismatch {f.shape} vs {f_hat.shape}")
    norm = np.linalg.norm(f)
    if norm == 0.0:
        raise ValueError("normalized error is undefined for a zero ground truth")
    return float(np.linalg.norm(f - f_hat) / norm)


def gaussian_matrix(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """I.i.d. standard normal ``rows x cols`` matrix drawn from ``rng``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    return rng.generator().standard_normal((rows, cols))
