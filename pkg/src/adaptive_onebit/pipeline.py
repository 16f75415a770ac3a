"""Adaptive one-bit sampling and recovery.

Stage ``i = 1..T`` uses its own block of ``q = m // T`` measurement rows:

1. thresholds ``phi = A_i f_{i-1} + tau`` with ``tau ~ N(0, sigma_i^2)``;
2. bits ``y = sign(A_i f - phi)``;
3. single-step recovery: solve for the residual ``Delta`` consistent with the
   bits, add it to ``f_{i-1}`` and project onto ``||D^T z||_1 <= sqrt(s) r``.

Because ``A_i f - phi = A_i (f - f_{i-1}) - tau``, the stage problem is posed
on the residual with the dither-only threshold ``tau`` inside a ball of
radius ``2^(1-i) r``.  The recoverer replays the same stages from the stored
bits and thresholds, recomputing ``tau = phi - A_i f_{i-1}`` from its own
estimates, so it reproduces the sampler's estimates exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, RngStream, as_matrix, as_vector, effective_sparsity, sign_vector
from .dictionaries import Dictionary, as_dictionary
from .solvers import (
    InfeasibleProblemError,
    SignConstraintSet,
    SolveReport,
    SolverParams,
    project_analysis_l1,
    solve_sign_constrained_l1,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasurementEnsemble:
    """Gaussian matrix ``A`` (m x n) split into ``T`` row blocks of ``q = m // T`` rows.

    Rows past ``T * q`` are never used.
    """

    A: np.ndarray
    T: int

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if self.T < 1:
            raise ValueError(f"stage count must be positive, got {self.T}")
        if A.shape[0] // self.T < 1:
            raise ValueError(f"{A.shape[0]} rows cannot fill {self.T} blocks")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def q(self) -> int:
        return self.m // self.T

    def block(self, i: int) -> np.ndarray:
        """Rows of stage ``i`` (1-based)."""
        if not 1 <= i <= self.T:
            raise IndexError(f"stage {i} outside 1..{self.T}")
        q = self.q
        return self.A[(i - 1) * q : i * q]


@dataclass(frozen=True)
class RecoveryConfig:
    """Model and solver settings shared by sampling and recovery.

    ``dither_scale_multiplier`` scales the per-stage dither deviation
    ``sigma_i = multiplier * 2^(1-i) r``; the ball radius stays ``2^(1-i) r``.
    """

    r: float
    s: float
    T: int
    params: SolverParams = field(default_factory=SolverParams)
    dither_scale_multiplier: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"radius r must be positive, got {self.r}")
        if not self.s > 0:
            raise ValueError(f"sparsity s must be positive, got {self.s}")
        if self.T < 1:
            raise ValueError(f"stage count must be positive, got {self.T}")
        if not self.dither_scale_multiplier >= 0:
            raise ValueError("dither_scale_multiplier must be non-negative")

    def radius(self, i: int) -> float:
        return 2.0 ** (1 - i) * self.r

    def sigma(self, i: int) -> float:
        return self.dither_scale_multiplier * self.radius(i)

    @property
    def budget(self) -> float:
        """Analysis-l1 budget ``sqrt(s) r`` enforced after every stage."""
        return float(np.sqrt(self.s) * self.r)


@dataclass(frozen=True)
class SamplingRecord:
    """Bits and thresholds of every stage, shape ``(T, q)`` each."""

    bits: np.ndarray
    thresholds: np.ndarray
    r: float
    s: float
    T: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.float64)
        phi = np.asarray(self.thresholds, dtype=np.float64)
        if bits.ndim != 2 or bits.shape != phi.shape:
            raise DimensionError(f"bits {bits.shape} and thresholds {phi.shape} must be equal 2-D shapes")
        if bits.shape[0] != self.T:
            raise DimensionError(f"record holds {bits.shape[0]} stages but T = {self.T}")
        if not np.all(np.abs(bits) == 1.0):
            raise ValueError("bits must be +1 or -1")
        if not np.all(np.isfinite(phi)):
            raise ValueError("thresholds contain non-finite values")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "thresholds", phi)

    @property
    def q(self) -> int:
        return self.bits.shape[1]


@dataclass
class StageReport:
    stage: int
    radius: float
    solve: SolveReport | None
    projection: SolveReport | None
    failed: bool = False
    message: str = ""


@dataclass
class StageTrace:
    """Estimates ``f_0 = 0, f_1, ..., f_T`` and one report per stage."""

    estimates: list[np.ndarray]
    stages: list[StageReport] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]

    @property
    def failed(self) -> bool:
        return any(st.failed for st in self.stages)

    def errors(self, f) -> np.ndarray:
        """``||f - f_i||_2`` for ``i = 1..T``."""
        f = np.asarray(f, dtype=np.float64)
        return np.array([np.linalg.norm(f - est) for est in self.estimates[1:]])


def hdtg(A_block, q: int, sigma: float, f_hat, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """High-dimensional threshold generator.

    Returns ``(phi, tau)`` with ``tau ~ N(0, sigma^2 I_q)`` and
    ``phi = A_block f_hat + tau``.  ``sigma`` is a standard deviation.
    """
    A_block = as_matrix(A_block, "A_block")
    f_hat = as_vector(f_hat, "f_hat")
    if A_block.shape != (q, f_hat.shape[0]):
        raise DimensionError(f"A_block is {A_block.shape}, expected ({q}, {f_hat.shape[0]})")
    if not sigma >= 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    tau = sigma * rng.generator().standard_normal(q)
    return A_block @ f_hat + tau, tau


def one_bit_measure(A_block, f, phi) -> np.ndarray:
    """``sign(A_block f - phi)`` with ``sign(0) = +1``."""
    A_block = as_matrix(A_block, "A_block")
    f = as_vector(f, "f")
    phi = as_vector(phi, "phi")
    if A_block.shape != (phi.shape[0], f.shape[0]):
        raise DimensionError(f"A_block is {A_block.shape}; f has {f.shape[0]} and phi {phi.shape[0]} entries")
    return sign_vector(A_block @ f - phi)


def ssr(A_block, D, bits, tau, prev, radius: float, s: float, r: float, params: SolverParams | None = None):
    """Single-step recovery.

    Solves for the residual ``Delta`` over
    ``{z : bits_j (a_j^T z - tau_j) >= 0, ||z|| <= radius}`` with minimal
    ``||D^T z||_1``, then projects ``prev + Delta`` onto the analysis-l1 ball
    of radius ``sqrt(s) r``.

    Returns ``(f_i, StageReport)``.  Solver errors propagate; a
    non-converged solve is reported, and the caller picks the fallback.
    """
    D = as_dictionary(D)
    params = params or SolverParams()
    prev = as_vector(prev, "prev")
    cons = SignConstraintSet(A_block, tau, bits, radius)
    solve = solve_sign_constrained_l1(D, cons, params)
    f_tmp = prev + solve.solution
    proj = project_analysis_l1(f_tmp, D, float(np.sqrt(s) * r), params)
    report = StageReport(stage=0, radius=radius, solve=solve, projection=proj)
    if not solve.converged or not proj.converged:
        report.failed = True
        report.message = f"solve: {solve.message}; projection: {proj.message}"
    return proj.solution, report


def _run_stage(i, A_i, D, bits, phi, prev, cfg: RecoveryConfig):
    tau = phi - A_i @ prev
    try:
        est, report = ssr(A_i, D, bits, tau, prev, cfg.radius(i), cfg.s, cfg.r, cfg.params)
    except InfeasibleProblemError as exc:
        report = StageReport(stage=i, radius=cfg.radius(i), solve=None, projection=None, failed=True, message=str(exc))
        est = prev
    report.stage = i
    if report.failed:
        # keep the previous estimate so one bad stage cannot undo earlier progress
        log.warning("stage %d failed (%s); keeping previous estimate", i, report.message)
        est = prev
    return est, report


def _check_inputs(ensemble: MeasurementEnsemble, D: Dictionary, T: int):
    if ensemble.T != T:
        raise DimensionError(f"ensemble has {ensemble.T} stages but T = {T}")
    if ensemble.n != D.n:
        raise DimensionError(f"A has {ensemble.n} columns but the dictionary has {D.n} rows")


def adaptive_sample(
    ensemble: MeasurementEnsemble,
    f,
    D,
    r: float,
    s: float,
    T: int,
    rng: RngStream,
    params: SolverParams | None = None,
    dither_scale_multiplier: float = 1.0,
) -> tuple[SamplingRecord, StageTrace]:
    """Adaptive sampling: take ``T`` blocks of one-bit measurements of ``f``.

    Stage ``i`` draws its dither from ``rng.child(i)``.  Returns the record
    of bits/thresholds and the sampler's own stage trace.
    """
    D = as_dictionary(D)
    f = as_vector(f, "f")
    cfg = RecoveryConfig(r, s, T, params or SolverParams(), dither_scale_multiplier)
    _check_inputs(ensemble, D, T)
    if f.shape[0] != D.n:
        raise DimensionError(f"signal has length {f.shape[0]} but the dictionary has {D.n} rows")
    if np.linalg.norm(f) > r:
        raise ValueError(f"||f||_2 = {np.linalg.norm(f):.6g} exceeds the radius bound r = {r:.6g}")

    q = ensemble.q
    bits = np.empty((T, q))
    thresholds = np.empty((T, q))
    estimates = [np.zeros(D.n)]
    stages = []
    for i in range(1, T + 1):
        A_i = ensemble.block(i)
        prev = estimates[-1]
        phi, _ = hdtg(A_i, q, cfg.sigma(i), prev, rng.child(i))
        y = one_bit_measure(A_i, f, phi)
        bits[i - 1], thresholds[i - 1] = y, phi
        est, report = _run_stage(i, A_i, D, y, phi, prev, cfg)
        estimates.append(est)
        stages.append(report)
    record = SamplingRecord(bits, thresholds, r, s, T)
    return record, StageTrace(estimates, stages)


def adaptive_recover(
    ensemble: MeasurementEnsemble,
    D,
    record: SamplingRecord,
    r: float,
    s: float,
    T: int,
    params: SolverParams | None = None,
) -> tuple[np.ndarray, StageTrace]:
    """Adaptive recovery from stored bits and thresholds; returns ``(f_T, trace)``."""
    D = as_dictionary(D)
    cfg = RecoveryConfig(r, s, T, params or SolverParams())
    _check_inputs(ensemble, D, T)
    if record.T != T or record.q != ensemble.q:
        raise DimensionError(
            f"record has T={record.T}, q={record.q} but the ensemble has T={ensemble.T}, q={ensemble.q}"
        )
    estimates = [np.zeros(D.n)]
    stages = []
    for i in range(1, T + 1):
        est, report = _run_stage(i, ensemble.block(i), D, record.bits[i - 1], record.thresholds[i - 1], estimates[-1], cfg)
        estimates.append(est)
        stages.append(report)
    trace = StageTrace(estimates, stages)
    return trace.final, trace


def residual_sparsity(f, trace: StageTrace, D) -> list[float]:
    """Effective sparsity of ``f - f_{i-1}`` for each stage ``i``."""
    f = as_vector(f, "f")
    out = []
    for prev in trace.estimates[:-1]:
        diff = f - prev
        out.append(effective_sparsity(diff, as_dictionary(D).matrix) if np.any(diff) else 0.0)
    return out


def save_record(path, record: SamplingRecord) -> None:
    """Write ``record`` as one ``2T x q`` matrix: threshold rows first, then bit rows."""
    from .textio import write_matrix

    header = {"T": record.T, "q": record.q, "r": repr(float(record.r)), "s": repr(float(record.s)),
              "layout": "rows 1..T thresholds, rows T+1..2T bits"}  # fmt: skip
    write_matrix(path, np.vstack([record.thresholds, record.bits]), header)


def load_record(path) -> SamplingRecord:
    from .textio import read_matrix

    M, meta = read_matrix(path)
    try:
        T, q, r, s = int(meta["T"]), int(meta["q"]), float(meta["r"]), float(meta["s"])
    except KeyError as exc:
        raise ValueError(f"{path}: record header lacks {exc.args[0]!r}") from None
    if M.shape != (2 * T, q):
        raise DimensionError(f"{path}: header says T={T}, q={q} but the matrix is {M.shape[0]}x{M.shape[1]}")
    return SamplingRecord(M[T:], M[:T], r, s, T)
