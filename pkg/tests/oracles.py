"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def naive_matvec_T(D, f):
    """``D^T f`` by explicit loops."""
    n, N = len(D), len(D[0])
    out = [0.0] * N
    for j in range(N):
        acc = 0.0
        for i in range(n):
            acc += D[i][j] * f[i]
        out[j] = acc
    return np.array(out)


def naive_matmul(A, B):
    rows, inner, cols = len(A), len(B), len(B[0])
    C = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += A[i][k] * B[k][j]
            C[i][j] = acc
    return np.array(C)


def l1_projection_kkt_scan(w, c):
    """Projection onto the l1 ball by scanning every candidate active set.

    For ``||w||_1 > c`` the answer is ``soft(w, theta)`` where the active set
    ``S = {i : |w_i| > theta}`` and ``theta = (sum_S |w_i| - c) / |S| > 0``.
    Every subset is tried and the first one meeting all KKT conditions wins.
    """
    w = np.asarray(w, dtype=float)
    a = np.abs(w)
    if a.sum() <= c:
        return w.copy()
    d = len(w)
    for size in range(1, d + 1):
        for S in itertools.combinations(range(d), size):
            S = list(S)
            theta = (a[S].sum() - c) / size
            if theta <= 0:
                continue
            off = np.setdiff1d(np.arange(d), S)
            if np.all(a[S] > theta) and np.all(a[off] <= theta):
                return np.sign(w) * np.maximum(a - theta, 0.0)
    raise AssertionError("no KKT-consistent active set found")


def sign_program_grid_oracle(D, A, t, y, R, points=41, rounds=8):
    """Minimum of ``||D^T z||_1`` over the sign-constrained ball by grid refinement.

    Starts from a uniform grid on ``[-R, R]^n`` and repeatedly re-grids a box
    of two spacings around the best feasible point.  Returns the best
    objective value found (an upper bound on the true optimum) or ``None``
    when no grid point is feasible.
    """
    D, A, t, y = (np.asarray(v, dtype=float) for v in (D, A, t, y))
    n = D.shape[0]
    centre = np.zeros(n)
    half = R
    best_val, best_z = None, None
    for _ in range(rounds):
        axes = [np.linspace(centre[k] - half, centre[k] + half, points) for k in range(n)]
        Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        ok = np.all(y * (Z @ A.T - t) >= 0, axis=1) & (np.linalg.norm(Z, axis=1) <= R)
        if not ok.any():
            break
        vals = np.abs(Z[ok] @ D).sum(axis=1)
        k = int(np.argmin(vals))
        if best_val is None or vals[k] < best_val:
            best_val, best_z = float(vals[k]), Z[ok][k]
        centre = best_z
        half = 2.0 * (2.0 * half / (points - 1))
    return best_val


def dykstra_analysis_projection(v, D, c, iterations=100000, project_l1=None):
    """Projection onto ``{z : ||D^T z||_1 <= c}`` for a tight frame ``D``.

    ``z -> D^T z`` is an isometry onto ``range(D^T)``, so the problem is the
    projection of ``D^T v`` onto ``range(D^T)`` intersected with the l1 ball,
    solved by Dykstra's alternating projections.
    """
    D = np.asarray(D, dtype=float)
    P = D.T @ D  # projector onto range(D^T)
    x = D.T @ np.asarray(v, dtype=float)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iterations):
        yk = P @ (x + p)
        p = x + p - yk
        x_new = project_l1(yk + q, c)
        q = yk + q - x_new
        # x can stall for a step while the corrections still move, so stop
        # only once both projections agree and the iterate has settled
        done = np.max(np.abs(x_new - x)) < 1e-15 and np.max(np.abs(x_new - yk)) < 1e-13
        x = x_new
        if done:
            break
    return D @ x
