"""The transversal splitting along a geodesic.

Given a self-adjoint family and a subspace of it, builds the vertical /
transversal splitting of the normal space, the operator ``A_t`` mapping
subfamily values to the transversal parts of their derivatives, a
transversally parallel frame, and the residual checks: the two coupling
identities ``(J')^v = A* J`` and ``X' = -A* X``, and the transversal
Jacobi equation with its positive semidefinite O'Neill-type correction
``3 A A*``.

All linear algebra happens in coefficients with respect to the parallel
orthonormal normal frame, where the metric is the identity.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeofolError, RankDeficientError, SingularSubspaceError
from . import jacobi as jb
from . import numerics

WINDOW_HALF_STEPS = 5
STENCIL_STRIDE = 10
EXTRAP_SOURCE = 8


@dataclass
class ResidualReport:
    """Outcome of one numerical check on a sampled grid."""
    name: str
    max_residual: float
    tolerance: float
    passed: bool
    n_samples: int = 0
    n_excluded: int = 0
    windows: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_lines(self):
        lines = [
            f"check.{self.name}.max_residual = {self.max_residual:.12g}",
            f"check.{self.name}.tolerance = {self.tolerance:.12g}",
            f"check.{self.name}.pass = {'true' if self.passed else 'false'}",
            f"check.{self.name}.samples = {self.n_samples}",
            f"check.{self.name}.excluded = {self.n_excluded}",
        ]
        for i, (lo, hi, tz) in enumerate(self.windows):
            lines.append(f"check.{self.name}.window_{i} = [{lo:.9g}, {hi:.9g}] @ {tz:.9g}")
        for key in sorted(self.extras):
            val = self.extras[key]
            if isinstance(val, float):
                lines.append(f"check.{self.name}.{key} = {val:.12g}")
            else:
                lines.append(f"check.{self.name}.{key} = {val}")
        return lines


class SubfamilySpec:
    """A subspace of a family, as a full-column-rank coefficient matrix."""

    def __init__(self, family, coeffs):
        family.require_self_adjoint()
        C = np.asarray(coeffs, dtype=float)
        if C.ndim != 2 or C.shape[0] != family.m_count:
            raise RankDeficientError(
                f"coefficient matrix must be ({family.m_count}, dim V)")
        if C.shape[1] > 0:
            s = np.linalg.svd(C, compute_uv=False)
            if s[-1] < jb.RANK_REL * s[0]:
                raise RankDeficientError("subspace coefficients are rank deficient")
        self.family = family
        self.coeffs = C
        self.dim = C.shape[1]


class TransversalSplit:
    """Per-sample vertical/transversal bases, A matrices and parallel frame."""

    def __init__(self, family, V, Qv, Qperp, A, X, windows, valid):
        self.family = family
        self.V = V
        self.Qv = Qv          # (S, n-1, dv)
        self.Qperp = Qperp    # (S, n-1, dp)
        self.A = A            # (S, dp, dv) in the aligned bases
        self.X = X            # (S, n-1, dp) transversally parallel frame
        self.windows = windows  # list of (t_lo, t_hi, t_zero)
        self.valid = valid      # bool per sample, True outside windows
        self.path = family.path
        self.dv = Qv.shape[2]
        self.dp = Qperp.shape[2]

    def vertical_projector(self, k):
        return self.Qv[k] @ self.Qv[k].T

    def a_matrix(self, t):
        """``A_t`` in the aligned bases, at the sample nearest ``t``."""
        k = min(max(self.path.index_of(t), 0), self.path.n_samples - 1)
        return self.A[k]

    def a_operator_full(self, k):
        """Gauge-free matrix of ``A`` as an operator on frame coefficients."""
        return self.Qperp[k] @ self.A[k] @ self.Qv[k].T


def _window_mask(path, windows):
    valid = np.ones(path.n_samples, dtype=bool)
    for (lo, hi, _) in windows:
        valid &= ~((path.ts >= lo - 1e-12) & (path.ts <= hi + 1e-12))
    return valid


def _align_chain(Q):
    """Procrustes-align the basis chain ``Q[k]`` to ``Q[k-1]`` in place.

    Uses the polar identity ``polar(M R) = polar(M) R`` for orthogonal
    ``R``: the cumulative rotation is the product of the relative polar
    factors, which are computed in one batched SVD.
    """
    S, _, d = Q.shape
    if d == 0 or S < 2:
        return
    M = np.einsum('sij,sik->sjk', Q[1:], Q[:-1])
    U, _, Vt = np.linalg.svd(M)
    r = U @ Vt                      # relative rotations (S-1, d, d)
    R = np.eye(d)
    for k in range(1, S):
        R = r[k - 1] @ R
        Q[k] = Q[k] @ R


def build_split(family, V):
    """Construct the transversal splitting for subfamily ``V``.

    Bases vary continuously (consecutive samples aligned by orthogonal
    Procrustes); around each parameter where a subfamily combination
    vanishes, a window of half-width ``5 * step`` is flagged and the
    vertical space picks up the vanishing members' derivative directions.
    ``A`` inside windows is the one-sided quadratic extrapolation of its
    entries in the aligned bases.
    """
    if not isinstance(V, SubfamilySpec):
        V = SubfamilySpec(family, V)
    family.require_self_adjoint()
    path = family.path
    m = family.m_count
    d = V.dim
    if d >= m:
        raise GeofolError("subspace must be proper (dim V < dim family)")
    S = path.n_samples
    nd = family.YS.shape[1]
    Vmat = family.YS @ V.coeffs    # (S, n-1, d)
    Vpmat = family.YpS @ V.coeffs

    windows = []
    events = []
    if d > 0:
        times, dirs = jb._zero_parameters(path, Vmat, Vpmat)
        half = WINDOW_HALF_STEPS * path.step
        for tz, w in zip(times, dirs):
            windows.append((max(tz - half, path.t0), min(tz + half, path.t1), tz))
            events.append((tz, w))
    valid = _window_mask(path, windows)

    svals = (np.linalg.svd(Vmat, compute_uv=False) if d > 0
             else np.zeros((S, 1)))
    scale = float(np.max(svals)) if d > 0 else 1.0
    if d > 0 and np.any(svals[valid, -1] < 1e-6 * scale):
        raise SingularSubspaceError(
            "subfamily values collapse in rank outside any flagged window; "
            "this non-generic subspace is not supported")

    if d == 0:
        Qv = np.zeros((S, nd, 0))
        Qperp = np.broadcast_to(np.eye(nd), (S, nd, nd)).copy()
    else:
        # per-sample bases from one batched SVD; window samples patched in
        U, sv, _ = np.linalg.svd(Vmat)
        Qv = U[:, :, :d].copy()
        Qperp = U[:, :, d:].copy()
        for k in np.nonzero(~valid)[0]:
            tz, w = min(events, key=lambda e: abs(e[0] - path.ts[k]))
            Wreg = numerics.complement_basis(w, d)
            cols = [Vmat[k] @ Wreg] if Wreg.shape[1] else []
            cols.append(Vpmat[k] @ w)
            Qb, r = numerics.orthonormal_range(np.concatenate(cols, axis=1))
            if r != d:
                raise SingularSubspaceError(
                    f"vertical space has rank {r} != {d} at t = {path.ts[k]:.6g}")
            Qv[k] = Qb
            Qperp[k] = numerics.complement_basis(Qb, nd)
        _align_chain(Qv)
        _align_chain(Qperp)

    # A in the aligned bases
    A = np.zeros((S, nd - d, d))
    if d > 0:
        acoef = np.einsum('sij,sik->sjk', Qv, Vmat)      # (S, d, d)
        bmat = np.einsum('sij,sik->sjk', Qperp, Vpmat)   # (S, dp, d)
        idx = np.nonzero(valid)[0]
        # A = bmat @ inv(acoef), batched via the transposed solve
        At = np.linalg.solve(np.swapaxes(acoef[idx], 1, 2),
                             np.swapaxes(bmat[idx], 1, 2))
        A[idx] = np.swapaxes(At, 1, 2)
        for (lo, hi, tz) in windows:
            inside = np.nonzero((path.ts >= lo - 1e-12) & (path.ts <= hi + 1e-12))[0]
            if inside.size == 0:
                continue
            left = np.nonzero(valid & (path.ts < lo - 1e-12))[0]
            right = np.nonzero(valid & (path.ts > hi + 1e-12))[0]
            src = left[-EXTRAP_SOURCE:] if left.size >= 3 else right[:EXTRAP_SOURCE]
            if src.size < 3:
                continue  # no usable side; A left as zero
            tsrc = path.ts[src]
            tin = path.ts[inside]
            for i in range(nd - d):
                for j in range(d):
                    cf = np.polyfit(tsrc - tz, A[src, i, j], 2)
                    A[inside, i, j] = np.polyval(cf, tin - tz)

    # transversally parallel frame: X' = P_perp' X keeps (X')^perp = 0
    Pv = np.einsum('sia,sja->sij', Qv, Qv)
    Pperp = np.eye(nd) - Pv
    Pd = numerics.grid_derivative(Pperp, path.step)
    X = numerics.integrate_linear_grid(Pd, Qperp[path.k0], path.k0, path.step)
    return TransversalSplit(family, V, Qv, Qperp, A, X, windows, valid)


def a_operator(split, t):
    """Matrix of ``A_t`` in the aligned orthonormal bases.

    Inside singular windows this is the continuous extension obtained by
    one-sided quadratic extrapolation.
    """
    return split.a_matrix(t)


def _complement_coeffs(split, J=None):
    """Coefficient columns for a basis of the family complementary to V."""
    V = split.V
    m = split.family.m_count
    if V.dim == 0:
        return np.eye(m)
    Qc, _ = numerics.orthonormal_range(V.coeffs)
    return numerics.complement_basis(Qc, m)


def splitting_identities(split, tolerance=1e-6):
    """Residuals of the two coupling identities on the splitting:
    ``(J')^v = A* J`` for complement members normalized into the
    transversal space, and ``X' = -A* X`` for the parallel frame.
    """
    fam = split.family
    path = fam.path
    S = path.n_samples
    valid = split.valid.copy()
    comp = _complement_coeffs(split)
    Jvals = fam.YS @ comp
    Jders = fam.YpS @ comp
    sc = np.max(np.abs(Jvals), axis=(0, 1))
    Jvals = Jvals / sc
    Jders = Jders / sc

    res1 = np.zeros(S)
    if split.dv > 0:
        Vmat = fam.YS @ split.V.coeffs
        Vpmat = fam.YpS @ split.V.coeffs
        idx = np.nonzero(valid)[0]
        acoef = np.einsum('sij,sik->sjk', split.Qv[idx], Vmat[idx])
        beta = np.linalg.solve(acoef, np.einsum('sij,sik->sjk', split.Qv[idx], Jvals[idx]))
        val = Jvals[idx] - Vmat[idx] @ beta
        der = Jders[idx] - Vpmat[idx] @ beta
        lhs = np.einsum('sij,sik->sjk', split.Qv[idx], der)
        rhs = np.einsum('sba,sbk->sak', split.A[idx],
                        np.einsum('sij,sik->sjk', split.Qperp[idx], val))
        res1[idx] = np.max(np.abs(lhs - rhs), axis=(1, 2))

    Xd, lo, hi = numerics.strided_first_derivative(split.X, path.step, STENCIL_STRIDE)
    res2 = np.zeros(S)
    span = np.zeros(S, dtype=bool)
    span[lo:hi] = True
    idx2 = np.nonzero(valid & span)[0]
    if idx2.size:
        chiX = np.einsum('sij,sik->sjk', split.Qperp[idx2], split.X[idx2])
        Astar_X = np.einsum('sia,sab->sib', split.Qv[idx2],
                            np.einsum('sba,sbk->sak', split.A[idx2], chiX))
        res2[idx2] = np.max(np.abs(Xd[idx2] + Astar_X), axis=(1, 2))

    use = valid & span
    worst = float(np.max(np.maximum(res1, res2)[use])) if np.any(use) else 0.0
    return ResidualReport(
        name="splitting_identities",
        max_residual=worst,
        tolerance=tolerance,
        passed=worst <= tolerance,
        n_samples=int(np.sum(use)),
        n_excluded=int(S - np.sum(use)),
        windows=split.windows,
        extras={
            "value_identity_max": float(np.max(res1[use])) if np.any(use) else 0.0,
            "frame_identity_max": float(np.max(res2[use])) if np.any(use) else 0.0,
        },
    )


def sup_a_norm(split):
    """Largest operator norm of ``A_t`` over the valid samples."""
    if split.dv == 0:
        return 0.0
    idx = np.nonzero(split.valid)[0]
    if idx.size == 0:
        return 0.0
    s = np.linalg.svd(split.A[idx], compute_uv=False)
    return float(np.max(s))


def transversal_jacobi_residual(split, fld, tolerance=1e-5,
                                include_windows=False):
    """Residual of the transversal Jacobi equation for ``Y = J^perp``:

        (D^perp)^2 Y + (R(Y, c')c')^perp + 3 A A* Y = 0.

    ``fld`` may be a JacobiField on the same path or a coefficient column
    in the family basis.  The second transversal derivative is taken as a
    5-point stencil (spacing ``10 * step``) of the coefficients of ``Y``
    in the transversally parallel frame.  The report also carries the
    control residual with the O'Neill term dropped, which must be large
    whenever ``A`` is appreciable.
    """
    fam = split.family
    path = fam.path
    S = path.n_samples
    if isinstance(fld, jb.JacobiField):
        y = fld.Y.copy()
    else:
        w = np.asarray(fld, dtype=float)
        if split.dv > 0:
            Qc, _ = numerics.orthonormal_range(split.V.coeffs)
            rem = w - Qc @ (Qc.T @ w)
            if np.linalg.norm(rem) < 1e-10 * max(np.linalg.norm(w), 1e-300):
                raise GeofolError(
                    "field lies in the subfamily; its transversal part is trivial")
        y = fam.YS @ w
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        raise GeofolError("field is identically zero")
    y = y / scale

    eta = np.einsum('sia,si->sa', split.X, y)            # coefficients of Y
    D2, lo, hi = numerics.strided_second_derivative(eta, path.step, STENCIL_STRIDE)
    K = jb.curvature_matrices(path)
    Pv = np.einsum('sia,sja->sij', split.Qv, split.Qv)
    yperp = y - np.einsum('sij,sj->si', Pv, y)
    curv = np.einsum('sia,sij,sj->sa', split.X, K, yperp)
    chi = np.einsum('sia,sib->sab', split.Qperp, split.X)  # X in Qperp coords
    zeta = np.einsum('sia,si->sa', split.Qperp, y)
    G = np.einsum('sab,scb->sac', split.A, split.A)        # A A* in Qperp coords
    oneill = 3.0 * np.einsum('sab,sbc,sc->sa', np.swapaxes(chi, 1, 2), G, zeta)

    res_full = np.linalg.norm(D2 + curv + oneill, axis=1)
    res_ctrl = np.linalg.norm(D2 + curv, axis=1)
    use = np.zeros(S, dtype=bool)
    use[lo:hi] = True
    if not include_windows:
        use &= split.valid
    if not np.any(use):
        raise GeofolError("no samples left after trimming stencil margins and windows")
    worst = float(np.max(res_full[use]))
    return ResidualReport(
        name="transversal_jacobi",
        max_residual=worst,
        tolerance=tolerance,
        passed=worst <= tolerance,
        n_samples=int(np.sum(use)),
        n_excluded=int(S - np.sum(use)),
        windows=split.windows,
        extras={
            "control_residual": float(np.max(res_ctrl[use])),
            "sup_a_norm": sup_a_norm(split),
            "stencil_trimmed": int(lo + (S - hi)),
        },
    )


def oneill_psd_check(split, tolerance=-1e-10):
    """Smallest eigenvalue of ``3 A A*`` over all samples (must be >= -1e-10)."""
    G = np.einsum('sab,scb->sac', split.A, split.A)
    G = 0.5 * (G + np.swapaxes(G, 1, 2))
    if G.shape[1] == 0:
        smallest = 0.0
    else:
        ev = np.linalg.eigvalsh(3.0 * G)
        smallest = float(np.min(ev))
    return ResidualReport(
        name="oneill_psd",
        max_residual=-smallest,
        tolerance=-tolerance,
        passed=smallest >= tolerance,
        n_samples=split.A.shape[0],
        extras={"smallest_eigenvalue": smallest},
    )


def modified_curvature_form(split):
    """Sampled matrix of the modified curvature operator on the
    transversal space, in the parallel-frame coordinates:
    ``F_ij = <R(X_j, c')c' + 3 A A* X_j, X_i>``."""
    path = split.family.path
    K = jb.curvature_matrices(path)
    base = np.einsum('sia,sij,sjb->sab', split.X, K, split.X)
    chi = np.einsum('sia,sib->sab', split.Qperp, split.X)
    G = np.einsum('sab,scb->sac', split.A, split.A)
    extra = 3.0 * np.einsum('sab,sbc,scd->sad', np.swapaxes(chi, 1, 2), G, chi)
    return base + extra
