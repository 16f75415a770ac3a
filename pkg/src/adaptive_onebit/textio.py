"""Plain-text matrix format shared by every file the package reads or writes.

Layout::

    # optional comment lines, e.g. "# kind: random-tight"
    rows cols
    v11 v12 ... (row-major, whitespace separated)

Values are written with 17 significant digits so that a write/read round
trip reproduces every float64 bit for bit.  Vectors are 1 x n matrices.
"""

from __future__ import annotations

import io
import os
from typing import Mapping

import numpy as np

_FMT = "%.17g"


def format_matrix(M, comments: Mapping[str, object] | None = None) -> str:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2:
        raise ValueError(f"expected a vector or matrix, got shape {M.shape}")
    out = io.StringIO()
    for key, value in (comments or {}).items():
        out.write(f"# {key}: {value}\n")
    rows, cols = M.shape
    out.write(f"{rows} {cols}\n")
    for row in M:
        out.write(" ".join(_FMT % x for x in row))
        out.write("\n")
    return out.getvalue()


def parse_matrix(text: str) -> tuple[np.ndarray, dict[str, str]]:
    """Parse the text format; returns ``(matrix, comments)``."""
    comments: dict[str, str] = {}
    tokens: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                comments[key.strip()] = value.strip()
            continue
        tokens.extend(stripped.split())
    if len(tokens) < 2:
        raise ValueError("matrix text is missing its 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise ValueError(f"bad matrix header {tokens[:2]!r}") from exc
    values = tokens[2:]
    if rows < 0 or cols < 0 or len(values) != rows * cols:
        raise ValueError(f"header says {rows}x{cols} but found {len(values)} values")
    data = np.array([float(v) for v in values], dtype=np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(data)):
        raise ValueError("matrix text contains non-finite values")
    return data, comments


def write_matrix(path: str | os.PathLike, M, comments: Mapping[str, object] | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_matrix(M, comments))


def read_matrix(path: str | os.PathLike) -> tuple[np.ndarray, dict[str, str]]:
    with open(path, encoding="ascii") as fh:
        return parse_matrix(fh.read())


def read_vector(path: str | os.PathLike) -> np.ndarray:
    """Read a vector stored either as 1 x n or n x 1."""
    M, _ = read_matrix(path)
    if 1 not in M.shape:
        raise ValueError(f"{path}: expected a vector, got a {M.shape[0]}x{M.shape[1]} matrix")
    return M.ravel()
