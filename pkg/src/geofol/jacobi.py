"""Jacobi fields and self-adjoint normal families along a geodesic.

All Jacobi data is stored as coefficients in a parallel orthonormal frame
of the velocity complement, reducing the field equation to the linear
matrix ODE ``y'' + K(t) y = 0`` with ``K`` the frame matrix of
``w -> R(w, c')c'``.  A family carries the symplectic pairing of its
members; the pairing vanishing is the testable form of the Riccati
operator being self-adjoint.
"""

import csv

import numpy as np

from .errors import (GeofolError, NonNormalInitialDataError, RankDeficientError,
                     NotSelfAdjointError, NonKillingFieldError,
                     CompletionRankError, ShapeEstimateError,
                     NotPerpendicularError)
from . import manifold as mf
from . import geodesic as gd
from . import numerics

NORMAL_TOL = 1e-10
SELF_ADJOINT_REL = 1e-9
RANK_REL = 1e-8
ZERO_DETECT_REL = 1e-6
KILLING_TOL = 1e-6
SHAPE_STENCIL_STRIDE = 10


# ---------------------------------------------------------------------------
# parallel normal frame and curvature matrices (cached on the path)


def normal_frame(path):
    """Parallel g-orthonormal frame of the velocity complement.

    Returns samples ``E`` of shape ``(S, n, n-1)``; cached on the path.
    """
    if "normal_frame" in path._cache:
        return path._cache["normal_frame"]
    m, k0 = path.m, path.k0
    x0, v0 = path.xs[k0], path.vs[k0]
    g0 = m.metric(x0)
    n = m.dim
    # project the coordinate directions g-orthogonally to the velocity
    speed2 = float(v0 @ g0 @ v0)
    cand = np.eye(n) - np.outer(v0, v0 @ g0) / speed2
    E0, rank = numerics.metric_orthonormalize(cand, g0)
    if rank < n - 1:
        raise GeofolError("could not complete an orthonormal frame at the base point")
    E0 = E0[:, : n - 1]
    E = gd.parallel_transport(path, E0).W
    path._cache["normal_frame"] = E
    return E


def curvature_matrices(path):
    """Sampled frame matrices ``K_ab = <R(E_b, v)v, E_a>``; cached."""
    if "curvature_matrices" in path._cache:
        return path._cache["curvature_matrices"]
    E = normal_frame(path)
    g = path.metric_at_samples()
    S = path.n_samples
    K = np.empty((S, E.shape[2], E.shape[2]))
    chunk = 4096
    for lo in range(0, S, chunk):
        hi = min(S, lo + chunk)
        W = mf.tidal_operator(path.m, path.xs[lo:hi], path.vs[lo:hi])
        K[lo:hi] = np.einsum('sij,sia,sjk,skb->sab', g[lo:hi], E[lo:hi], W, E[lo:hi])
    K = 0.5 * (K + np.swapaxes(K, 1, 2))
    path._cache["curvature_matrices"] = K
    return K


def frame_coords(path, k, vec):
    """Coefficients of a tangent vector in the normal frame at sample ``k``."""
    E = normal_frame(path)
    g = path.metric_at_samples()[k]
    return E[k].T @ (g @ np.asarray(vec, dtype=float))


def _jacobi_system(path):
    if "jacobi_system" in path._cache:
        return path._cache["jacobi_system"]
    K = curvature_matrices(path)
    S, d = K.shape[0], K.shape[1]
    M = np.zeros((S, 2 * d, 2 * d))
    M[:, :d, d:] = np.eye(d)
    M[:, d:, :d] = -K
    path._cache["jacobi_system"] = M
    return M


class JacobiField:
    """A normal Jacobi field stored in the parallel normal frame."""

    def __init__(self, path, Y, Yp, init):
        self.path = path
        self.Y = Y        # (S, n-1) frame coefficients of J
        self.Yp = Yp      # (S, n-1) frame coefficients of J'
        self.init = init  # (J0, J0p) in manifold components

    def coeffs(self, t):
        Ypp = -np.einsum('sab,sb->sa', curvature_matrices(self.path), self.Y)
        y = numerics.hermite_eval(self.path.t0, self.path.step, self.Y, self.Yp, t)
        yp = numerics.hermite_eval(self.path.t0, self.path.step, self.Yp, Ypp, t)
        return y, yp

    def value(self, t):
        """Field value in manifold components at parameter ``t``."""
        E = normal_frame(self.path)
        gen = self.path.transport_generator()
        Ed = np.einsum('skj,sja->ska', gen, E)
        Ei = numerics.hermite_eval(self.path.t0, self.path.step, E, Ed, t)
        y, _ = self.coeffs(t)
        return Ei @ y

    def norms(self):
        return np.linalg.norm(self.Y, axis=1)

    def zeros(self):
        """Refined parameters where the field vanishes."""
        return _zero_parameters(self.path, self.Y[:, :, None], self.Yp[:, :, None])[0]

    def equation_residual(self):
        """Max second-difference residual of ``y'' + K y`` on wide stencils."""
        K = curvature_matrices(self.path)
        stride = max(1, min(10, (self.path.n_samples - 1) // 5))
        D2, lo, hi = numerics.strided_second_derivative(self.Y, self.path.step, stride)
        res = D2[lo:hi] + np.einsum('sab,sb->sa', K[lo:hi], self.Y[lo:hi])
        return float(np.max(np.abs(res))) if res.size else 0.0


def _check_normal(path, J0, J0p):
    m, k0 = path.m, path.k0
    x0, v0 = path.xs[k0], path.vs[k0]
    for vec, name in ((J0, "value"), (J0p, "derivative")):
        ip = mf.inner(m, x0, vec, v0)
        scale = max(1.0, float(mf.norm(m, x0, vec)))
        if abs(ip) > NORMAL_TOL * scale:
            raise NonNormalInitialDataError(
                f"initial {name} is not orthogonal to the velocity "
                f"(<.,c'> = {ip:.3e})")


def integrate_jacobi(path, J0, J0p):
    """Integrate the Jacobi equation with normal initial data at t = 0."""
    J0 = np.asarray(J0, dtype=float)
    J0p = np.asarray(J0p, dtype=float)
    _check_normal(path, J0, J0p)
    y0 = frame_coords(path, path.k0, J0)
    yp0 = frame_coords(path, path.k0, J0p)
    M = _jacobi_system(path)
    z0 = np.concatenate([y0, yp0])
    Z = numerics.integrate_linear_grid(M, z0, path.k0, path.step)
    d = y0.shape[0]
    return JacobiField(path, Z[:, :d], Z[:, d:], (J0, J0p))


def _integrate_family_coeffs(path, Y0, Yp0):
    M = _jacobi_system(path)
    d = Y0.shape[0]
    Z0 = np.concatenate([Y0, Yp0], axis=0)  # (2d, m)
    Z = numerics.integrate_linear_grid(M, Z0, path.k0, path.step)
    return Z[:, :d, :], Z[:, d:, :]


# ---------------------------------------------------------------------------
# zero detection


def _zero_parameters(path, YS, YpS, rel_tol=ZERO_DETECT_REL, null_rel=1e-7):
    """Vanishing events of the sampled value matrices ``YS`` (S, d, m).

    Detects local minima of the smallest singular value, refines each by
    bounded minimization of the Hermite-interpolated matrix, and keeps
    events whose refined smallest singular value is below ``rel_tol``
    times the global scale.  Returns ``(times, null_dirs)`` where each
    entry of ``null_dirs`` is an ``(m, z)`` matrix of vanishing
    coefficient directions (combination space), with directions taken at
    threshold ``null_rel`` relative to the global scale.
    """
    S = YS.shape[0]
    svals = np.linalg.svd(YS, compute_uv=False)
    smin = svals[:, -1]
    scale = float(np.max(svals[:, 0])) if svals.size else 0.0
    if scale == 0.0:
        return [], []

    def interp_smin(t):
        Y = numerics.hermite_eval(path.t0, path.step, YS, YpS, t)
        return float(np.linalg.svd(Y, compute_uv=False)[-1])

    cands = []
    for k in range(S):
        is_min = ((k == 0 or smin[k] <= smin[k - 1])
                  and (k == S - 1 or smin[k] <= smin[k + 1]))
        if is_min and smin[k] <= 1e-2 * scale:
            cands.append(k)
    times, dirs = [], []
    for k in cands:
        lo = path.ts[max(k - 1, 0)]
        hi = path.ts[min(k + 1, S - 1)]
        if hi <= lo:
            tz, fz = float(path.ts[k]), float(smin[k])
        else:
            tz, fz = numerics.refine_minimum(interp_smin, lo, hi)
        if fz > rel_tol * scale:
            continue
        if times and abs(tz - times[-1]) < 0.5 * path.step:
            continue
        Yz = numerics.hermite_eval(path.t0, path.step, YS, YpS, tz)
        _, s, Vt = np.linalg.svd(Yz)
        z = int(np.sum(s <= max(null_rel * scale, 1e-14)))
        z = max(z, 1)
        times.append(float(tz))
        dirs.append(Vt[-z:].T)
    return times, dirs


# ---------------------------------------------------------------------------
# families


class JacobiFamily:
    """An ordered basis of normal Jacobi fields sharing one path.

    ``omega`` is the symplectic pairing ``<J_a', J_b> - <J_a, J_b'>`` of the
    initial data; it is conserved by the Jacobi flow and vanishes exactly
    when the family's Riccati operator is self-adjoint.
    """

    def __init__(self, path, YS, YpS, inits):
        self.path = path
        self.YS = YS      # (S, n-1, m)
        self.YpS = YpS
        self.inits = inits
        self.m_count = YS.shape[2]
        k0 = path.k0
        self.omega = YpS[k0].T @ YS[k0] - YS[k0].T @ YpS[k0]
        scale = float(np.max(np.sum(YS[k0] ** 2, axis=0) + np.sum(YpS[k0] ** 2, axis=0)))
        self._sa_threshold = SELF_ADJOINT_REL * max(scale, 1e-300)
        self.self_adjoint = bool(np.max(np.abs(self.omega)) <= self._sa_threshold)

    @property
    def fields(self):
        return [JacobiField(self.path, self.YS[:, :, a], self.YpS[:, :, a],
                            self.inits[a] if self.inits else None)
                for a in range(self.m_count)]

    def field(self, a):
        return JacobiField(self.path, self.YS[:, :, a], self.YpS[:, :, a],
                           self.inits[a] if self.inits else None)

    def require_self_adjoint(self):
        if not self.self_adjoint:
            i, j = np.unravel_index(np.argmax(np.abs(self.omega)), self.omega.shape)
            raise NotSelfAdjointError(int(i), int(j), self.omega[i, j], self._sa_threshold)

    def pairing_at(self, t):
        """The pairing matrix recomputed from interpolated data at ``t``."""
        K = curvature_matrices(self.path)
        Ypp = -np.einsum('sab,sbm->sam', K, self.YS)
        Y = numerics.hermite_eval(self.path.t0, self.path.step, self.YS, self.YpS, t)
        Yp = numerics.hermite_eval(self.path.t0, self.path.step, self.YpS, Ypp, t)
        return Yp.T @ Y - Y.T @ Yp

    def coeff_values(self, t):
        K = curvature_matrices(self.path)
        Ypp = -np.einsum('sab,sbm->sam', K, self.YS)
        Y = numerics.hermite_eval(self.path.t0, self.path.step, self.YS, self.YpS, t)
        Yp = numerics.hermite_eval(self.path.t0, self.path.step, self.YpS, Ypp, t)
        return Y, Yp

    def zero_events(self, null_rel=1e-7):
        return _zero_parameters(self.path, self.YS, self.YpS, null_rel=null_rel)

    def export_csv(self, fileobj):
        """Per-field frame coefficients of J and J' against t."""
        w = csv.writer(fileobj)
        d, m = self.YS.shape[1], self.m_count
        head = ["t"]
        for a in range(m):
            head += [f"J{a+1}_{i+1}" for i in range(d)]
            head += [f"Jp{a+1}_{i+1}" for i in range(d)]
        w.writerow(head)
        for k in range(self.path.n_samples):
            row = [f"{self.path.ts[k]:.12g}"]
            for a in range(m):
                row += [f"{c:.17g}" for c in self.YS[k, :, a]]
                row += [f"{c:.17g}" for c in self.YpS[k, :, a]]
            w.writerow(row)


def make_family(path, inits):
    """Build an (n-1)-dimensional family from normal initial data pairs."""
    n = path.m.dim
    if len(inits) != n - 1:
        raise RankDeficientError(
            f"family must have n-1 = {n-1} members, got {len(inits)}")
    Y0 = np.empty((n - 1, n - 1))
    Yp0 = np.empty((n - 1, n - 1))
    clean_inits = []
    for a, (J0, J0p) in enumerate(inits):
        J0 = np.asarray(J0, dtype=float)
        J0p = np.asarray(J0p, dtype=float)
        _check_normal(path, J0, J0p)
        Y0[:, a] = frame_coords(path, path.k0, J0)
        Yp0[:, a] = frame_coords(path, path.k0, J0p)
        clean_inits.append((J0, J0p))
    stacked = np.concatenate([Y0, Yp0], axis=0)
    s = np.linalg.svd(stacked, compute_uv=False)
    if s[-1] < RANK_REL * s[0]:
        raise RankDeficientError(
            f"initial data is rank deficient (smallest/largest singular value "
            f"= {s[-1]/s[0]:.3e})")
    YS, YpS = _integrate_family_coeffs(path, Y0, Yp0)
    return JacobiFamily(path, YS, YpS, clean_inits)


def family_from_coeff_inits(path, Y0, Yp0):
    """Family from initial data given directly in normal-frame coefficients."""
    n = path.m.dim
    if Y0.shape != (n - 1, n - 1):
        raise RankDeficientError("coefficient initial data must be (n-1, n-1)")
    stacked = np.concatenate([Y0, Yp0], axis=0)
    s = np.linalg.svd(stacked, compute_uv=False)
    if s[-1] < RANK_REL * s[0]:
        raise RankDeficientError("initial data is rank deficient")
    YS, YpS = _integrate_family_coeffs(path, Y0, Yp0)
    return JacobiFamily(path, YS, YpS, None)


# ---------------------------------------------------------------------------
# Riccati operator


class RiccatiOperator:
    """``L(t)`` with ``L(t) J(t) = J'(t)`` on the family, in frame coords."""

    def __init__(self, t, matrix, singular):
        self.t = float(t)
        self.matrix = matrix
        self.singular = bool(singular)


def riccati_at(family, t):
    """The family's Riccati operator at parameter ``t``.

    Singularity of the value matrix (smallest singular value below the
    rank threshold relative to the family's value scale over the whole
    path) is a reported state, not an error.
    """
    family.require_self_adjoint()
    Y, Yp = family.coeff_values(t)
    scale = float(np.max(np.linalg.svd(family.YS, compute_uv=False)))
    s = np.linalg.svd(Y, compute_uv=False)
    if (s.size == 0 or Y.shape[0] != Y.shape[1]
            or s[-1] < RANK_REL * max(scale, 1e-300)):
        return RiccatiOperator(t, None, True)
    L = Yp @ np.linalg.inv(Y)
    return RiccatiOperator(t, L, False)


# ---------------------------------------------------------------------------
# construction from a foliation


def family_from_foliation(path, fol, perp_tol=1e-6):
    """Family generated by variations through geodesics leaving one leaf
    perpendicularly.

    Leaf-tangent members start at a leaf basis with derivative given by
    the numerically estimated shape operator (the t-derivative of the
    leaf-tangent projection in a parallel frame, which also carries the
    normal-connection contribution); the remaining members vanish at the
    base point with derivatives spanning the normal complement of the
    velocity.
    """
    from . import foliation as fo

    m, k0 = path.m, path.k0
    x0, v0 = path.xs[k0], path.vs[k0]
    g0 = m.metric(x0)
    n = m.dim
    leaf, rank = fo.leaf_tangent(fol, x0)
    for j in range(rank):
        ip = float(np.einsum('ij,i,j->', g0, v0, leaf[:, j]))
        if abs(ip) > perp_tol:
            raise NotPerpendicularError(
                f"geodesic is not perpendicular to the leaf (<c',l_{j}> = {ip:.3e})")

    # full parallel frame [c'; E] and the projection's frame matrix samples
    E = normal_frame(path)
    stride = SHAPE_STENCIL_STRIDE
    S = path.n_samples
    if S <= 4 * stride:
        raise ShapeEstimateError("path too short for the shape-operator stencil")
    if k0 - 2 * stride >= 0 and k0 + 2 * stride < S:
        offsets = (-2, -1, 0, 1, 2)
        weights = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
    elif k0 + 4 * stride < S:
        offsets = (0, 1, 2, 3, 4)
        weights = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
    else:
        offsets = (-4, -3, -2, -1, 0)
        weights = np.array([3.0, -16.0, 36.0, -48.0, 25.0])
    idx = [k0 + s * stride for s in offsets]
    Mats = []
    ranks = []
    for k in idx:
        F = np.concatenate([path.vs[k][:, None], E[k]], axis=1)
        gk = path.metric_at_samples()[k]
        B, rk = fo.leaf_tangent(fol, path.xs[k])
        ranks.append(rk)
        if rk == 0:
            Mats.append(np.zeros((n, n)))
            continue
        # g-orthogonal projector onto the leaf span, expressed in the frame
        P = B @ np.linalg.solve(B.T @ gk @ B, B.T @ gk)
        Mats.append(F.T @ gk @ P @ F)
    if len(set(ranks)) != 1:
        raise ShapeEstimateError(f"leaf rank varies along the stencil: {ranks}")
    h = stride * path.step
    Mp = sum(w * Mk for w, Mk in zip(weights, Mats)) / (12.0 * h)
    Mp = 0.5 * (Mp + Mp.T)

    F0 = np.concatenate([v0[:, None], E[k0]], axis=1)
    leaf_coeffs = F0.T @ g0 @ leaf          # (n, rank), first row ~ 0
    Y0 = np.zeros((n - 1, n - 1))
    Yp0 = np.zeros((n - 1, n - 1))
    for j in range(rank):
        w = leaf_coeffs[:, j]
        dw = Mp @ w
        Y0[:, j] = w[1:]
        Yp0[:, j] = dw[1:]                  # velocity component dropped
    # vanishing members: derivative basis on the normal complement
    if rank > 0:
        Qleaf, _ = numerics.orthonormal_range(leaf_coeffs[1:, :])
    else:
        Qleaf = np.zeros((n - 1, 0))
    comp = numerics.complement_basis(Qleaf, n - 1)
    need = (n - 1) - rank
    if comp.shape[1] < need:
        raise ShapeEstimateError("normal complement is too small; rank anomaly")
    for b in range(need):
        Yp0[:, rank + b] = comp[:, b]
    YS, YpS = _integrate_family_coeffs(path, Y0, Yp0)
    fam = JacobiFamily(path, YS, YpS, None)
    fam.leaf_rank = rank
    fam.require_self_adjoint()
    return fam


# ---------------------------------------------------------------------------
# construction from Killing fields


def covariant_derivative_matrix(m, x, field, fd_step=1e-6):
    """Matrix ``D^k_i = (nabla_i X)^k`` of a vector field at ``x``."""
    x = np.asarray(x, dtype=float)
    n = m.dim
    gam = m.christoffel(x)
    Xv = np.asarray(field(x), dtype=float)
    D = np.empty((n, n))
    if m.kind == "chart":
        h = fd_step * (1.0 + np.linalg.norm(x))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            D[:, i] = (np.asarray(field(x + e)) - np.asarray(field(x - e))) / (2 * h)
    else:
        F = m.frame_at(x)
        h = fd_step
        for i in range(n):
            a = h * F[:, i]
            D[:, i] = (np.asarray(field(x + a)) - np.asarray(field(x - a))) / (2 * h)
    D += np.einsum('kij,j->ki', gam, Xv)
    return D


def killing_defect(m, path, field, count=25):
    """Max symmetrized covariant derivative of ``field`` along the path."""
    idx = np.linspace(0, path.n_samples - 1, count).astype(int)
    E = normal_frame(path)
    worst = 0.0
    for k in idx:
        x = path.xs[k]
        g = path.metric_at_samples()[k]
        D = covariant_derivative_matrix(m, x, field)
        F = np.concatenate([path.vs[k][:, None], E[k]], axis=1)
        A = F.T @ g @ D @ F                 # <nabla_{F_i} X, F_j> in ON frame
        sym = A + A.T
        scale = max(1.0, float(np.max(np.abs(F.T @ g @ field(x)))))
        worst = max(worst, float(np.max(np.abs(sym))) / scale)
    return worst


def family_from_killing(path, fields, tol=KILLING_TOL):
    """Family spanned by normal parts of Killing restrictions, completed by
    vanishing members on the orthogonal complement of the restriction values."""
    m, k0 = path.m, path.k0
    x0, v0 = path.xs[k0], path.vs[k0]
    n = m.dim
    for r, field in enumerate(fields):
        defect = killing_defect(m, path, field)
        if defect > tol:
            raise NonKillingFieldError(
                f"field #{r} failed the Killing check (defect {defect:.3e} > {tol:g})")
    data = []
    for field in fields:
        K0 = np.asarray(field(x0), dtype=float)
        DK = covariant_derivative_matrix(m, x0, field)
        K0p = DK @ v0
        # subtract the conserved tangential part
        a = mf.inner(m, x0, K0, v0)
        J0 = K0 - a * v0
        J0p = K0p - mf.inner(m, x0, K0p, v0) * v0
        y0 = frame_coords(path, k0, J0)
        yp0 = frame_coords(path, k0, J0p)
        data.append(np.concatenate([y0, yp0]))
    # independent restriction solutions
    kept = []
    for vec in data:
        if np.linalg.norm(vec) < 1e-12:
            continue
        stack = np.stack(kept + [vec], axis=1) if kept else vec[:, None]
        s = np.linalg.svd(stack, compute_uv=False)
        if s[-1] >= RANK_REL * s[0]:
            kept.append(vec)
    # completion: vanishing members orthogonal to all restriction values
    values = (np.stack([v[: n - 1] for v in kept], axis=1)
              if kept else np.zeros((n - 1, 0)))
    Qval, _ = numerics.orthonormal_range(values)
    comp = numerics.complement_basis(Qval, n - 1)
    for b in range(comp.shape[1]):
        cand = np.concatenate([np.zeros(n - 1), comp[:, b]])
        if len(kept) >= n - 1:
            break
        stack = np.stack(kept + [cand], axis=1) if kept else cand[:, None]
        s = np.linalg.svd(stack, compute_uv=False)
        if s[-1] >= RANK_REL * s[0]:
            kept.append(cand)
    if len(kept) != n - 1:
        raise CompletionRankError(
            f"could not complete the Killing family to dimension {n-1} "
            f"(reached {len(kept)})")
    Y0 = np.stack([v[: n - 1] for v in kept], axis=1)
    Yp0 = np.stack([v[n - 1:] for v in kept], axis=1)
    YS, YpS = _integrate_family_coeffs(path, Y0, Yp0)
    fam = JacobiFamily(path, YS, YpS, None)
    if not fam.self_adjoint:
        i, j = np.unravel_index(np.argmax(np.abs(fam.omega)), fam.omega.shape)
        raise NonKillingFieldError(
            "restrictions are not a self-adjoint family (pairing entry "
            f"({i},{j}) = {fam.omega[i, j]:.3e}); the inputs are not Killing "
            "fields of one isometric action normal to the geodesic")
    return fam
