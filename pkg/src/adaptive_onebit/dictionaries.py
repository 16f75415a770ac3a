"""Dictionaries and synthetic dictionary-sparse signals.

A dictionary is an explicit dense ``n x N`` matrix ``D``; signals live in
``R^n`` and their analysis coefficients are ``D^T f``.  All generated
dictionaries are tight frames (``D D^T = I``), so ``||D^T f|| = ||f||``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from .core import DimensionError, RngStream, as_matrix

KINDS = ("identity", "random-tight", "haar-2d", "custom")


class SupportInfeasibleError(ValueError):
    """No nonzero signal has its analysis coefficients supported on the given set."""


@dataclass(frozen=True)
class Dictionary:
    matrix: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        M = as_matrix(self.matrix, "dictionary")
        if self.kind not in KINDS:
            raise ValueError(f"unknown dictionary kind {self.kind!r}; expected one of {KINDS}")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    def analysis(self, f) -> np.ndarray:
        """``D^T f``."""
        return self.matrix.T @ np.asarray(f, dtype=np.float64)

    def synthesis(self, x) -> np.ndarray:
        """``D x``."""
        return self.matrix @ np.asarray(x, dtype=np.float64)


def as_dictionary(D) -> Dictionary:
    return D if isinstance(D, Dictionary) else Dictionary(np.asarray(D, dtype=np.float64))


@dataclass(frozen=True)
class SparseSignalSpec:
    """Support set (0-based indices into the N analysis coefficients) and a coefficient stream."""

    support: tuple[int, ...]
    rng: RngStream

    def __post_init__(self):
        support = tuple(int(j) for j in self.support)
        if len(set(support)) != len(support):
            raise ValueError("support indices must be distinct")
        if any(j < 0 for j in support):
            raise ValueError("support indices must be non-negative")
        object.__setattr__(self, "support", support)


def identity_dictionary(n: int) -> Dictionary:
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return Dictionary(np.eye(n), "identity")


def random_tight_dictionary(n: int, N: int, rng: RngStream, max_attempts: int = 10) -> Dictionary:
    """Random tight frame with ``N`` atoms in ``R^n``.

    Unit-norm columns are drawn uniformly on the sphere, then the rows are
    orthonormalized through the thin SVD ``M = U S V^T`` -> ``D = U V^T``,
    which keeps the row space of ``M`` and gives ``D D^T = I_n``.
    """
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    gen = rng.generator()
    for _ in range(max_attempts):
        M = gen.standard_normal((n, N))
        M /= np.linalg.norm(M, axis=0)
        U, S, Vt = np.linalg.svd(M, full_matrices=False)
        if S[-1] > 1e-10 * S[0]:
            return Dictionary(U @ Vt, "random-tight")
    raise RuntimeError(f"could not draw a rank-{n} frame in {max_attempts} attempts")


def exact_sparse_signal(D, spec: SparseSignalSpec) -> np.ndarray:
    """Signal whose analysis coefficients vanish off ``spec.support``.

    Builds an orthonormal basis ``B`` of the vectors orthogonal to every
    off-support atom and returns ``B c`` with ``c`` standard normal.  For a
    generic ``n x N`` frame this needs ``N - |S| < n``.
    """
    D = as_dictionary(D)
    if any(j >= D.N for j in spec.support):
        raise DimensionError(f"support index out of range for N={D.N}")
    off = np.setdiff1d(np.arange(D.N), np.asarray(spec.support, dtype=int))
    if off.size:
        B = null_space(D.matrix[:, off].T, rcond=1e-10)
    else:
        B = np.eye(D.n)
    if B.shape[1] == 0:
        raise SupportInfeasibleError(
            f"support infeasible for this dictionary: the {off.size} off-support atoms span R^{D.n}"
        )
    c = spec.rng.generator().standard_normal(B.shape[1])
    return B @ c


def random_support(N: int, size: int, rng: RngStream) -> tuple[int, ...]:
    if not 0 < size <= N:
        raise ValueError(f"support size must be in 1..{N}, got {size}")
    idx = rng.generator().choice(N, size=size, replace=False)
    return tuple(sorted(int(j) for j in idx))


def _haar_step(block: np.ndarray) -> np.ndarray:
    """One orthonormal Haar level along axis 0: averages on top, details below."""
    even, odd = block[0::2], block[1::2]
    return np.concatenate([(even + odd), (even - odd)], axis=0) / np.sqrt(2.0)


def haar2d(X) -> np.ndarray:
    """Full-depth orthonormal 2-D Haar transform (Mallat ordering).

    Each level transforms rows and columns of the current low-pass square in
    the top-left corner; the single approximation coefficient ends at [0, 0].
    """
    X = np.array(X, dtype=np.float64)
    side = X.shape[0]
    if X.shape != (side, side) or side < 1 or side & (side - 1):
        raise ValueError(f"expected a square image with power-of-2 side, got {X.shape}")
    k = side
    while k > 1:
        sub = _haar_step(X[:k, :k])
        X[:k, :k] = _haar_step(sub.T).T
        k //= 2
    return X


def haar_dictionary_2d(side: int) -> Dictionary:
    """Orthonormal 2-D Haar basis for ``side x side`` images, vectorized row-major.

    ``D^T f`` equals ``haar2d(f.reshape(side, side)).ravel()``.
    """
    if side < 1 or side & (side - 1):
        raise ValueError(f"side must be a power of 2, got {side}")
    n = side * side
    W = np.empty((n, n))
    eye = np.eye(n)
    for k in range(n):
        W[:, k] = haar2d(eye[k].reshape(side, side)).ravel()
    # W maps an image to its coefficients, so D = W^T.
    return Dictionary(W.T, "haar-2d")


def dictionary_from_kind(kind: str, n: int, N: int, rng: RngStream) -> Dictionary:
    if kind == "identity":
        if N != n:
            raise ValueError("identity dictionary needs N == n")
        return identity_dictionary(n)
    if kind == "random-tight":
        return random_tight_dictionary(n, N, rng)
    if kind == "haar-2d":
        side = int(round(np.sqrt(n)))
        if side * side != n or N != n:
            raise ValueError("haar-2d dictionary needs n == N == side**2")
        return haar_dictionary_2d(side)
    raise ValueError(f"cannot build a dictionary of kind {kind!r}")


def export_dictionary(path, D: Dictionary) -> None:
    from .textio import write_matrix

    write_matrix(path, D.matrix, {"kind": D.kind})


def import_dictionary(path) -> Dictionary:
    from .textio import read_matrix

    M, comments = read_matrix(path)
    return Dictionary(M, comments.get("kind", "custom"))


def parseval_gap(D: Dictionary, signals: Sequence[np.ndarray]) -> float:
    """Largest ``| ||D^T f|| - ||f|| |`` over ``signals`` (0 for a tight frame)."""
    return max(abs(np.linalg.norm(D.analysis(f)) - np.linalg.norm(f)) for f in signals)
