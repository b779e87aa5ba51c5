"""Shared numerical kernels.

Fixed-step RK4 on precomputed coefficient grids, high-order finite
difference stencils, cubic Hermite interpolation and small subspace
utilities.  Everything is plain numpy and deterministic.
"""

import numpy as np
from scipy.optimize import minimize_scalar


# ---------------------------------------------------------------------------
# linear ODEs sampled on a uniform grid


def grid_midpoints(M):
    """Midpoint values of a sampled smooth array, 4th-order accurate.

    ``M`` has shape ``(S, ...)`` with S >= 4; returns ``(S-1, ...)``.
    """
    S = M.shape[0]
    if S < 4:
        raise ValueError("need at least 4 samples for midpoint interpolation")
    H = np.empty((S - 1,) + M.shape[1:], dtype=M.dtype)
    H[1:-1] = (-M[:-3] + 9.0 * M[1:-2] + 9.0 * M[2:-1] - M[3:]) / 16.0
    H[0] = (3.0 * M[0] + 6.0 * M[1] - M[2]) / 8.0
    H[-1] = (-M[-3] + 6.0 * M[-2] + 3.0 * M[-1]) / 8.0
    return H


def integrate_linear_grid(M, y0, k0, h, midpoints=None):
    """Integrate ``y' = M(t) y`` over the sample grid of ``M``.

    ``M`` has shape ``(S, *batch, D, D)``; ``y0`` has shape
    ``(*batch, D)`` or ``(*batch, D, K)`` and lives at grid index ``k0``.
    Classical RK4 with the step equal to the grid spacing ``h``; matrix
    values between nodes come from 4th-order midpoint interpolation.
    Integrates both directions from ``k0`` and returns ``(S, *batch, D[, K])``.
    """
    S = M.shape[0]
    Mh = grid_midpoints(M) if midpoints is None else midpoints
    out = np.empty((S,) + y0.shape, dtype=np.result_type(M, y0))
    out[k0] = y0

    def _step(A0, Ah, A1, y, dt):
        k1 = A0 @ y
        k2 = Ah @ (y + (0.5 * dt) * k1)
        k3 = Ah @ (y + (0.5 * dt) * k2)
        k4 = A1 @ (y + dt * k3)
        return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    y = y0
    for k in range(k0, S - 1):
        y = _step(M[k], Mh[k], M[k + 1], y, h)
        out[k + 1] = y
    y = out[k0]
    for k in range(k0, 0, -1):
        y = _step(M[k], Mh[k - 1], M[k - 1], y, -h)
        out[k - 1] = y
    return out


# ---------------------------------------------------------------------------
# finite-difference stencils on uniform grids


def grid_derivative(F, h):
    """4th-order first derivative along axis 0 (one-sided at the edges)."""
    S = F.shape[0]
    if S < 5:
        raise ValueError("need at least 5 samples")
    D = np.empty_like(F, dtype=float)
    D[2:-2] = (F[:-4] - 8.0 * F[1:-3] + 8.0 * F[3:-1] - F[4:]) / (12.0 * h)
    D[0] = (-25.0 * F[0] + 48.0 * F[1] - 36.0 * F[2] + 16.0 * F[3] - 3.0 * F[4]) / (12.0 * h)
    D[1] = (-3.0 * F[0] - 10.0 * F[1] + 18.0 * F[2] - 6.0 * F[3] + F[4]) / (12.0 * h)
    D[-1] = (25.0 * F[-1] - 48.0 * F[-2] + 36.0 * F[-3] - 16.0 * F[-4] + 3.0 * F[-5]) / (12.0 * h)
    D[-2] = (3.0 * F[-1] + 10.0 * F[-2] - 18.0 * F[-3] + 6.0 * F[-4] - F[-5]) / (12.0 * h)
    return D


def strided_first_derivative(F, h, stride):
    """5-point first derivative with node spacing ``stride * h``.

    Returns ``(D, lo, hi)`` where D is valid on ``lo <= k < hi`` and NaN
    outside.
    """
    S = F.shape[0]
    s = int(stride)
    lo, hi = 2 * s, S - 2 * s
    D = np.full(F.shape, np.nan)
    if hi > lo:
        D[lo:hi] = (F[: hi - lo] - 8.0 * F[s: hi - s] + 8.0 * F[3 * s: hi + s]
                    - F[4 * s: hi + 2 * s]) / (12.0 * s * h)
    return D, lo, hi


def strided_second_derivative(F, h, stride):
    """5-point second derivative with node spacing ``stride * h``."""
    S = F.shape[0]
    s = int(stride)
    lo, hi = 2 * s, S - 2 * s
    D = np.full(F.shape, np.nan)
    if hi > lo:
        D[lo:hi] = (-F[: hi - lo] + 16.0 * F[s: hi - s] - 30.0 * F[lo:hi]
                    + 16.0 * F[3 * s: hi + s] - F[4 * s: hi + 2 * s]) / (12.0 * (s * h) ** 2)
    return D, lo, hi


# ---------------------------------------------------------------------------
# Hermite interpolation on uniform grids


def hermite_eval(t0, h, X, Xd, t):
    """Cubic Hermite interpolation of samples ``X`` with derivatives ``Xd``.

    Exact at the nodes.  ``t`` is a scalar inside the sampled interval.
    """
    S = X.shape[0]
    pos = (float(t) - t0) / h
    i = int(np.floor(pos))
    i = min(max(i, 0), S - 2)
    u = pos - i
    h00 = 2 * u ** 3 - 3 * u ** 2 + 1
    h10 = u ** 3 - 2 * u ** 2 + u
    h01 = -2 * u ** 3 + 3 * u ** 2
    h11 = u ** 3 - u ** 2
    return h00 * X[i] + (h10 * h) * Xd[i] + h01 * X[i + 1] + (h11 * h) * Xd[i + 1]


# ---------------------------------------------------------------------------
# subspace utilities


def orthonormal_range(M, rel_tol=1e-8):
    """Orthonormal basis of the column space of ``M`` by SVD thresholding.

    Returns ``(Q, rank)``.
    """
    if M.size == 0 or M.shape[1] == 0:
        return np.zeros((M.shape[0], 0)), 0
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[0], 0)), 0
    r = int(np.sum(s >= rel_tol * s[0]))
    return U[:, :r], r


def complement_basis(Q, dim):
    """Orthonormal basis of the orthogonal complement of span(Q) in R^dim."""
    if Q.shape[1] == 0:
        return np.eye(dim)
    U, _, _ = np.linalg.svd(Q, full_matrices=True)
    return U[:, Q.shape[1]:]


def procrustes_align(Q, Q_ref):
    """Rotate the orthonormal basis ``Q`` to best match ``Q_ref``."""
    if Q.shape[1] == 0:
        return Q
    U, _, Vt = np.linalg.svd(Q.T @ Q_ref)
    return Q @ (U @ Vt)


def metric_orthonormalize(V, G, rel_tol=1e-8):
    """G-orthonormal basis of the span of the columns of ``V``.

    Returns ``(B, rank)`` with ``B.T @ G @ B = I`` on the retained columns.
    """
    n = V.shape[0]
    if V.shape[1] == 0:
        return np.zeros((n, 0)), 0
    L = np.linalg.cholesky(G)
    A = L.T @ V
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, 0)), 0
    r = int(np.sum(s >= rel_tol * s[0]))
    B = np.linalg.solve(L.T, U[:, :r])
    return B, r


def principal_cos(A, B):
    """Cosines of the principal angles between two orthonormal column spans."""
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros(0)
    s = np.linalg.svd(A.T @ B, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


# ---------------------------------------------------------------------------
# scalar minimization (zero refinement)


def refine_minimum(fun, lo, hi):
    """Locate the minimum of a smooth scalar function on [lo, hi]."""
    res = minimize_scalar(fun, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


# ---------------------------------------------------------------------------
# direction nets


def circle_directions(count):
    """Unit vectors evenly spaced on the circle, deterministic."""
    ang = 2.0 * np.pi * np.arange(count) / count
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def fibonacci_sphere(count):
    """Quasi-uniform points on the unit 2-sphere (golden-angle spiral)."""
    i = np.arange(count, dtype=float)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def sphere_net(count, dim):
    """Deterministic quasi-uniform net on the unit (dim-1)-sphere in R^dim."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])[: max(count, 1)] if count <= 2 else \
            np.array([[1.0], [-1.0]])
    if dim == 2:
        return circle_directions(count)
    if dim == 3:
        return fibonacci_sphere(count)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
