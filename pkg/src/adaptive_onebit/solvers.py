"""Convex building blocks for single-stage recovery.

Two programs are solved at every stage:

* the sign-constrained analysis-l1 program

      min ||D^T z||_1  s.t.  y_j (a_j^T z - t_j) >= 0,  ||z||_2 <= R

  (``solve_sign_constrained_l1``), and
* the Euclidean projection onto the analysis-l1 ball
  ``{z : ||D^T z||_1 <= c}`` (``project_analysis_l1``).

The sign program is an LP plus one ball constraint.  The default backend
solves the LP exactly with HiGHS dual simplex and enforces the ball with
outer tangent cuts.  ``method="admm"`` runs a splitting solver instead:
variables ``(z; w = D^T z; u = A z; v = z)`` with soft thresholding on ``w``,
interval clipping on ``u`` and ball projection on ``v``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

from .core import DimensionError, as_matrix, as_vector
from .dictionaries import Dictionary, as_dictionary

METHODS = ("lp", "admm")

# ADMM penalty adaptation: rebalance every 50 iterations, then freeze after 2000
_BALANCE_EVERY = 50
_BALANCE_UNTIL = 2000


class InfeasibleProblemError(RuntimeError):
    """The sign constraints and the norm ball have no common point."""


@dataclass(frozen=True)
class SolverParams:
    rho: float = 1.0
    max_iterations: int = 20000
    primal_tol: float = 1e-7
    dual_tol: float = 1e-7
    constraint_tol: float = 1e-6
    method: str = "lp"
    max_cut_rounds: int = 200

    def __post_init__(self):
        for name in ("rho", "primal_tol", "dual_tol", "constraint_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1 or self.max_cut_rounds < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class SignConstraintSet:
    """Feasible region ``{z : y_j (a_j^T z - t_j) >= 0 for all j, ||z||_2 <= R}``."""

    A_block: np.ndarray
    threshold: np.ndarray
    signs: np.ndarray
    radius: float

    def __post_init__(self):
        A = as_matrix(self.A_block, "A_block")
        t = as_vector(self.threshold, "threshold")
        y = as_vector(self.signs, "signs")
        if not (A.shape[0] == t.shape[0] == y.shape[0]):
            raise DimensionError(f"A_block has {A.shape[0]} rows, threshold {t.shape[0]}, signs {y.shape[0]}")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("signs must be +1 or -1")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "A_block", A)
        object.__setattr__(self, "threshold", t)
        object.__setattr__(self, "signs", y)
        object.__setattr__(self, "radius", float(self.radius))

    def violation(self, z) -> float:
        """``max(0, max_j -y_j (a_j^T z - t_j), ||z|| - R)``."""
        z = np.asarray(z, dtype=np.float64)
        margins = self.signs * (self.A_block @ z - self.threshold)
        worst = -margins.min() if margins.size else 0.0
        return float(max(0.0, worst, np.linalg.norm(z) - self.radius))


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    violation: float
    converged: bool
    objective: float
    method: str = ""
    message: str = ""
    history: list[tuple[float, float]] = field(default_factory=list, repr=False)


# -- projections --------------------------------------------------------


def soft_threshold(v, k: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - k, 0.0)


def project_l2_ball(v, R: float) -> np.ndarray:
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    v = as_vector(v)
    norm = np.linalg.norm(v)
    return v.copy() if norm <= R else v * (R / norm)


def project_halfspace(v, a, b: float) -> np.ndarray:
    """Project onto ``{x : a^T x >= b}``."""
    v = as_vector(v)
    a = as_vector(a, "normal")
    if v.shape != a.shape:
        raise DimensionError(f"shape mismatch {v.shape} vs {a.shape}")
    aa = a @ a
    if aa == 0.0:
        raise ValueError("halfspace normal must be nonzero")
    gap = b - a @ v
    return v.copy() if gap <= 0 else v + a * (gap / aa)


def project_l1_ball(w, c: float) -> np.ndarray:
    """Exact Euclidean projection onto ``{x : ||x||_1 <= c}`` by sort and threshold.

    Magnitudes are sorted descending with a stable sort, so equal magnitudes
    keep their input order.
    """
    if not c > 0:
        raise ValueError(f"l1 radius must be positive, got {c}")
    w = as_vector(w)
    mag = np.abs(w)
    if mag.sum() <= c:
        return w.copy()
    u = mag[np.argsort(-mag, kind="stable")]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - c)[0][-1]
    theta = (css[rho] - c) / (rho + 1.0)
    return np.sign(w) * np.maximum(mag - theta, 0.0)


# -- sign-constrained analysis-l1 program ---------------------------------


def _is_orthonormal_square(D: np.ndarray) -> bool:
    n, N = D.shape
    return n == N and np.allclose(D.T @ D, np.eye(n), atol=1e-10, rtol=0)


def _normalized_constraints(cons: SignConstraintSet):
    """Rows ``G z >= h`` in units where the ball has radius one."""
    norms = np.linalg.norm(cons.A_block, axis=1)
    norms[norms == 0.0] = 1.0
    G = cons.signs[:, None] * cons.A_block / norms[:, None]
    h = cons.signs * cons.threshold / norms / cons.radius
    return G, h


def _solve_lp(D: Dictionary, cons: SignConstraintSet, params: SolverParams, log) -> SolveReport:
    Dm = D.matrix
    n, N = Dm.shape
    G, h = _normalized_constraints(cons)
    ortho = _is_orthonormal_square(Dm)
    if ortho:
        # z = D x with x = xp - xm; |x_i| <= ||x|| = ||z|| <= 1.
        GD = G @ Dm
        c = np.ones(2 * N)
        base_ub = np.hstack([-GD, GD])
        bounds = [(0.0, 1.0)] * (2 * N)
        A_eq = b_eq = None
    else:
        # variables (z, p, m): D^T z = p - m, objective sum(p + m).
        c = np.r_[np.zeros(n), np.ones(2 * N)]
        base_ub = np.hstack([-G, np.zeros((G.shape[0], 2 * N))])
        A_eq = np.hstack([Dm.T, -np.eye(N), np.eye(N)])
        b_eq = np.zeros(N)
        bounds = [(-1.0, 1.0)] * n + [(0.0, None)] * (2 * N)

    def extract(x):
        return Dm @ (x[:N] - x[N:]) if ortho else x[:n]

    cuts: list[np.ndarray] = []
    z = np.zeros(n)
    ball_gap = np.inf
    status_msg = ""
    rounds = 0
    for rounds in range(1, params.max_cut_rounds + 1):
        if cuts:
            C = np.array(cuts)
            cut_rows = np.hstack([C @ Dm, -(C @ Dm)]) if ortho else np.hstack([C, np.zeros((len(cuts), 2 * N))])
            A_ub = np.vstack([base_ub, cut_rows])
            b_ub = np.r_[-h, np.ones(len(cuts))]
        else:
            A_ub, b_ub = base_ub, -h
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds")
        if res.status == 2:
            raise InfeasibleProblemError(f"sign constraints are infeasible: {res.message}")
        if res.status != 0:
            status_msg = f"LP failed: {res.message}"
            break
        z = extract(res.x)
        nz = np.linalg.norm(z)
        ball_gap = nz - 1.0
        if log is not None:
            log.writerow([rounds, max(ball_gap, 0.0), 0.0, float(np.abs(Dm.T @ z).sum()) * cons.radius])
        if ball_gap * cons.radius <= params.constraint_tol:
            break
        cuts.append(z / nz)
    else:
        status_msg = f"ball constraint still violated after {params.max_cut_rounds} cut rounds"

    z = z * cons.radius
    violation = cons.violation(z)
    converged = not status_msg and violation <= params.constraint_tol
    return SolveReport(
        solution=z,
        iterations=rounds,
        primal_residual=float(max(ball_gap, 0.0) * cons.radius) if np.isfinite(ball_gap) else np.inf,
        dual_residual=0.0,
        violation=violation,
        converged=converged,
        objective=float(np.abs(Dm.T @ z).sum()),
        method="lp",
        message=status_msg or "optimal",
    )


@dataclass(frozen=True)
class NormalEquations:
    """Cholesky factor of ``D D^T + G^T G + I`` for the ADMM z-update.

    It does not depend on the penalty, so one factorization serves every
    iteration and any solve that shares the same dictionary and A-block.
    """

    G: np.ndarray
    factor: tuple

    @classmethod
    def build(cls, D: np.ndarray, G: np.ndarray) -> "NormalEquations":
        K = D @ D.T + G.T @ G + np.eye(D.shape[0])
        return cls(G, cho_factor(K))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, rhs)


def _solve_admm(D: Dictionary, cons: SignConstraintSet, params: SolverParams, log, x0) -> SolveReport:
    Dm = D.matrix
    n, N = Dm.shape
    G, h = _normalized_constraints(cons)
    q = G.shape[0]
    ne = NormalEquations.build(Dm, G)

    rho = params.rho
    z = np.zeros(n) if x0 is None else as_vector(x0) / cons.radius
    w = Dm.T @ z
    u = np.maximum(G @ z, h)
    v = project_l2_ball(z, 1.0) if np.any(z) else z.copy()
    lw, lu, lv = np.zeros(N), np.zeros(q), np.zeros(n)

    history: list[tuple[float, float]] = []
    checkpoint_r = np.inf
    r = s = np.inf
    converged = False
    message = "iteration limit reached"
    k = 0
    for k in range(1, params.max_iterations + 1):
        z = ne.solve(Dm @ (w - lw) + G.T @ (u - lu) + (v - lv))
        Dz, Gz = Dm.T @ z, G @ z
        w_old, u_old, v_old = w, u, v
        w = soft_threshold(Dz + lw, 1.0 / rho)
        u = np.maximum(Gz + lu, h)
        vv = z + lv
        nv = np.linalg.norm(vv)
        v = vv if nv <= 1.0 else vv / nv
        lw += Dz - w
        lu += Gz - u
        lv += z - v
        r = float(np.sqrt(np.sum((Dz - w) ** 2) + np.sum((Gz - u) ** 2) + np.sum((z - v) ** 2)))
        s = float(rho * np.linalg.norm(Dm @ (w - w_old) + G.T @ (u - u_old) + (v - v_old)))
        history.append((r, s))
        if log is not None:
            log.writerow([k, r, s, float(np.abs(Dz).sum()) * cons.radius])
        if r < params.primal_tol and s < params.dual_tol:
            if cons.violation(z * cons.radius) <= params.constraint_tol:
                converged = True
                message = "converged"
                break
        if k % 5000 == 0:
            if r > checkpoint_r / 10.0 and cons.violation(z * cons.radius) > 1e-3:
                raise InfeasibleProblemError(
                    f"ADMM primal residual stalled at {r:.3g} with constraint violation above 1e-3"
                )
            checkpoint_r = r
        # residual balancing, frozen after a warm-up so the fixed-penalty
        # convergence guarantee applies; scaled duals follow the penalty
        if k % _BALANCE_EVERY == 0 and k <= _BALANCE_UNTIL:
            if r > 10.0 * s:
                rho *= 2.0
                lw /= 2.0
                lu /= 2.0
                lv /= 2.0
            elif s > 10.0 * r:
                rho /= 2.0
                lw *= 2.0
                lu *= 2.0
                lv *= 2.0

    z = z * cons.radius
    return SolveReport(
        solution=z,
        iterations=k,
        primal_residual=r,
        dual_residual=s,
        violation=cons.violation(z),
        converged=converged,
        objective=float(np.abs(Dm.T @ z).sum()),
        method="admm",
        message=message,
        history=history,
    )


def solve_sign_constrained_l1(
    D, cons: SignConstraintSet, params: SolverParams | None = None, x0=None, log: IO[str] | None = None
) -> SolveReport:
    """Minimize ``||D^T z||_1`` over the sign-constrained ball ``cons``.

    Parameters
    ----------
    D : Dictionary or array (n x N)
    cons : SignConstraintSet
        Its A-block must have ``n`` columns.
    params : SolverParams, optional
        ``params.method`` selects the LP backend (default) or ADMM.
    x0 : array, optional
        Initial point (ADMM only).
    log : text stream, optional
        Receives a CSV iteration log ``iteration,primal_residual,dual_residual,objective``.

    Returns
    -------
    SolveReport
        ``converged`` is False when the iteration budget ran out; the caller decides.

    Raises
    ------
    InfeasibleProblemError
        When the constraints admit no point.
    """
    D = as_dictionary(D)
    params = params or SolverParams()
    if cons.A_block.shape[1] != D.n:
        raise DimensionError(f"A_block has {cons.A_block.shape[1]} columns but the dictionary has {D.n} rows")
    writer = None
    if log is not None:
        writer = csv.writer(log)
        writer.writerow(["iteration", "primal_residual", "dual_residual", "objective"])
    if params.method == "admm":
        return _solve_admm(D, cons, params, writer, x0)
    return _solve_lp(D, cons, params, writer)


# -- analysis-l1 ball projection ------------------------------------------


def project_analysis_l1(v, D, c: float, params: SolverParams | None = None, x0=None) -> SolveReport:
    """Euclidean projection of ``v`` onto ``{z : ||D^T z||_1 <= c}``.

    Uses ADMM on ``w = D^T z`` with the exact l1-ball projection as the
    w-step.  Square orthonormal dictionaries take the closed form
    ``D P(D^T v)``.  The returned point is rescaled onto the ball if the
    final iterate overshoots, so the budget holds to rounding.
    """
    if not c > 0:
        raise ValueError(f"l1 budget must be positive, got {c}")
    D = as_dictionary(D)
    params = params or SolverParams()
    v = as_vector(v)
    if v.shape[0] != D.n:
        raise DimensionError(f"vector has length {v.shape[0]} but the dictionary has {D.n} rows")
    Dm = D.matrix

    def report(z, iterations, r, s, converged, message):
        l1 = float(np.abs(Dm.T @ z).sum())
        if l1 > c:
            z = z * (c / l1)
            l1 = float(np.abs(Dm.T @ z).sum())
        return SolveReport(
            solution=z,
            iterations=iterations,
            primal_residual=r,
            dual_residual=s,
            violation=max(0.0, l1 - c),
            converged=converged,
            objective=float(np.linalg.norm(z - v)),
            method="projection",
            message=message,
        )

    if np.abs(Dm.T @ v).sum() <= c:
        return report(v.copy(), 0, 0.0, 0.0, True, "already feasible")
    if _is_orthonormal_square(Dm):
        return report(Dm @ project_l1_ball(Dm.T @ v, c), 0, 0.0, 0.0, True, "closed form")

    scale = max(1.0, float(np.linalg.norm(v)))
    rho = params.rho
    DDt = Dm @ Dm.T
    tight = np.allclose(DDt, np.eye(D.n), atol=1e-10, rtol=0)
    factor = None if tight else cho_factor(np.eye(D.n) + rho * DDt)

    z = v.copy() if x0 is None else as_vector(x0).copy()
    w = project_l1_ball(Dm.T @ z, c)
    lam = np.zeros(D.N)
    r = s = np.inf
    for k in range(1, params.max_iterations + 1):
        rhs = v + rho * (Dm @ (w - lam))
        z = rhs / (1.0 + rho) if tight else cho_solve(factor, rhs)
        Dz = Dm.T @ z
        w_old = w
        w = project_l1_ball(Dz + lam, c)
        lam += Dz - w
        r = float(np.linalg.norm(Dz - w)) / scale
        s = float(rho * np.linalg.norm(Dm @ (w - w_old))) / scale
        if r < params.primal_tol and s < params.dual_tol:
            return report(z, k, r, s, True, "converged")
        if k % _BALANCE_EVERY == 0 and k <= _BALANCE_UNTIL and (r > 10.0 * s or s > 10.0 * r):
            step = 2.0 if r > s else 0.5
            rho *= step
            lam /= step
            if not tight:
                factor = cho_factor(np.eye(D.n) + rho * DDt)
    return report(z, params.max_iterations, r, s, False, "iteration limit reached")


def with_method(params: SolverParams, method: str) -> SolverParams:
    return replace(params, method=method)
