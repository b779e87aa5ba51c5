"""Vanishing / parallel decomposition of self-adjoint families in
nonnegative curvature.

Extracts the span of somewhere-vanishing members and the subfamily of
parallel members, checks the direct-sum identity and the pointwise
orthogonality of the two subfamilies, and measures the Riccati operator
of the quotient family (expected to vanish when the vanishing span is
proper).  The search interval is the path's own interval; enlarging it
never shrinks the vanishing span.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeofolError
from . import jacobi as jb
from . import manifold as mf
from . import numerics
from . import transversal as tv

NULLSPACE_REL = 1e-7
HYPOTHESIS_FLOOR = -1e-8
HYPOTHESIS_POINTS = 200
HYPOTHESIS_PLANES = 50


@dataclass
class DecompositionReport:
    """Outcome of the vanishing / parallel decomposition checks."""
    vanishing_basis: np.ndarray
    parallel_basis: np.ndarray
    dims: tuple
    dim_defect: int
    span_defect: float
    orthogonality_defect: float
    quotient_riccati_norm: float
    window: tuple
    complete: bool
    inapplicable: bool = False
    curvature_floor: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return (not self.inapplicable and self.complete
                and self.span_defect <= 1e-6
                and self.orthogonality_defect <= 1e-6
                and (np.isnan(self.quotient_riccati_norm)
                     or self.quotient_riccati_norm <= 1e-5))

    def to_lines(self, name="decomposition"):
        lines = [
            f"check.{name}.dim_vanishing = {self.dims[0]}",
            f"check.{name}.dim_parallel = {self.dims[1]}",
            f"check.{name}.dim_defect = {self.dim_defect}",
            f"check.{name}.span_defect = {self.span_defect:.12g}",
            f"check.{name}.orthogonality_defect = {self.orthogonality_defect:.12g}",
            f"check.{name}.quotient_riccati_norm = {self.quotient_riccati_norm:.12g}",
            f"check.{name}.window = [{self.window[0]:.9g}, {self.window[1]:.9g}]",
            f"check.{name}.curvature_floor = {self.curvature_floor:.12g}",
            f"check.{name}.complete = {'true' if self.complete else 'false'}",
            f"check.{name}.inapplicable = {'true' if self.inapplicable else 'false'}",
            f"check.{name}.pass = {'true' if self.passed else 'false'}",
        ]
        for i, note in enumerate(self.notes):
            lines.append(f"check.{name}.note_{i} = {note}")
        return lines


def vanishing_subfamily(family, search_interval=None, eps=NULLSPACE_REL):
    """Orthonormal coefficient basis of the span of members with a zero.

    At every detected (and refined) vanishing parameter inside the search
    interval, the null directions of the family value matrix are
    collected; the returned basis spans all of them.
    """
    family.require_self_adjoint()
    path = family.path
    times, dirs = family.zero_events(null_rel=eps)
    if search_interval is not None:
        lo, hi = search_interval
        pairs = [(t, w) for t, w in zip(times, dirs) if lo - 1e-9 <= t <= hi + 1e-9]
    else:
        pairs = list(zip(times, dirs))
    if not pairs:
        return np.zeros((family.m_count, 0))
    allw = np.concatenate([w for _, w in pairs], axis=1)
    Q, _ = numerics.orthonormal_range(allw, rel_tol=1e-6)
    return Q


def parallel_subfamily(family, eps=NULLSPACE_REL):
    """Orthonormal coefficient basis of the members that are parallel:
    combinations with ``sup_t |J'| <= eps * sup_t |J|``."""
    family.require_self_adjoint()
    YS, YpS = family.YS, family.YpS
    S = YS.shape[0]
    stacked = YpS.reshape(S * YS.shape[1], family.m_count)
    _, s, Vt = np.linalg.svd(stacked, full_matrices=False)
    picked = []
    for i in range(Vt.shape[0]):
        w = Vt[i]
        sup_der = float(np.max(np.linalg.norm(YpS @ w, axis=1)))
        sup_val = float(np.max(np.linalg.norm(YS @ w, axis=1)))
        if sup_val > 0 and sup_der <= eps * sup_val:
            picked.append(w)
    if not picked:
        return np.zeros((family.m_count, 0))
    Q, _ = numerics.orthonormal_range(np.stack(picked, axis=1))
    return Q


def _curvature_hypothesis(family, seed=0):
    """Sample sectional curvature along the path; returns the smallest value."""
    path = family.path
    m = path.m
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, path.n_samples, size=HYPOTHESIS_POINTS)
    planes = rng.standard_normal((HYPOTHESIS_PLANES, 2, m.dim))
    floor = np.inf
    for i, k in enumerate(idx):
        u, v = planes[i % HYPOTHESIS_PLANES]
        x = path.xs[k]
        g = path.metric_at_samples()[k]
        uu = u @ g @ u
        vv = v @ g @ v
        uv = u @ g @ v
        if uu * vv - uv ** 2 < 1e-6 * uu * vv:
            continue
        floor = min(floor, float(mf.sectional(m, x, u, v)))
    return floor


def _quotient_riccati_norm(family, Bv):
    """Sup of the quotient family's Riccati operator norm with the
    vanishing span as the vertical subfamily."""
    m = family.m_count
    dv = Bv.shape[1]
    if dv >= m:
        return float("nan")
    split = tv.build_split(family, Bv)
    comp = numerics.complement_basis(
        numerics.orthonormal_range(Bv)[0] if dv else np.zeros((m, 0)), m)
    ys = family.YS @ comp                        # (S, n-1, m-dv)
    eta = np.einsum('sia,sib->sab', split.X, ys)  # quotient coefficients
    path = family.path
    Dk, lo, hi = numerics.strided_first_derivative(eta, path.step, tv.STENCIL_STRIDE)
    use = np.zeros(path.n_samples, dtype=bool)
    use[lo:hi] = True
    use &= split.valid
    worst = 0.0
    for k in np.nonzero(use)[0]:
        s = np.linalg.svd(eta[k], compute_uv=False)
        if s[-1] < 1e-6 * max(s[0], 1e-300):
            continue
        L = Dk[k] @ np.linalg.inv(eta[k])
        worst = max(worst, float(np.linalg.norm(L, 2)))
    return worst


def verify_decomposition(family, eps=NULLSPACE_REL, seed=0):
    """Full decomposition report over the family's parameter window.

    A negative-curvature detection along the path makes the report
    inapplicable (the hypothesis fails); it is not a check failure.
    """
    family.require_self_adjoint()
    path = family.path
    window = (path.t0, path.t1)
    floor = _curvature_hypothesis(family, seed=seed)
    if floor < HYPOTHESIS_FLOOR:
        return DecompositionReport(
            vanishing_basis=np.zeros((family.m_count, 0)),
            parallel_basis=np.zeros((family.m_count, 0)),
            dims=(0, 0), dim_defect=-family.m_count, span_defect=float("nan"),
            orthogonality_defect=float("nan"),
            quotient_riccati_norm=float("nan"),
            window=window, complete=False, inapplicable=True,
            curvature_floor=floor,
            notes=["hypothesis failure: negative curvature detected"])

    Bv = vanishing_subfamily(family, eps=eps)
    Bp = parallel_subfamily(family, eps=eps)
    m = family.m_count
    dims = (Bv.shape[1], Bp.shape[1])
    dim_defect = dims[0] + dims[1] - m
    both = np.concatenate([Bv, Bp], axis=1)
    if both.shape[1] == m and m > 0:
        s = np.linalg.svd(both, compute_uv=False)
        span_defect = float(1.0 - s[-1])
    elif both.shape[1] == 0 and m == 0:
        span_defect = 0.0
    else:
        cos = numerics.principal_cos(Bv, Bp)
        span_defect = float(np.max(cos)) if cos.size else float(dim_defect != 0)

    # pointwise orthogonality of the two subfamilies along the path
    orth = 0.0
    if dims[0] > 0 and dims[1] > 0:
        Yv = family.YS @ Bv
        Yp_ = family.YS @ Bp
        nv = np.linalg.norm(Yv, axis=1)      # (S, dv)
        np_ = np.linalg.norm(Yp_, axis=1)
        dots = np.abs(np.einsum('sia,sib->sab', Yv, Yp_))
        denom = nv[:, :, None] * np_[:, None, :]
        mask = denom > 1e-3 * np.max(denom)
        if np.any(mask):
            orth = float(np.max(dots[mask] / denom[mask]))

    notes = []
    complete = dim_defect == 0
    if not complete:
        notes.append(
            "decomposition incomplete on this window: a member may vanish "
            "only outside it, or fail the parallel threshold")
    quot = _quotient_riccati_norm(family, Bv) if complete else float("nan")
    return DecompositionReport(
        vanishing_basis=Bv, parallel_basis=Bp, dims=dims,
        dim_defect=dim_defect, span_defect=span_defect,
        orthogonality_defect=orth, quotient_riccati_norm=quot,
        window=window, complete=complete, curvature_floor=floor, notes=notes)


def default_window(m):
    """Default verification window: one covering all closed-form zero
    spacings on compact catalog manifolds, a long one for flat factors."""
    return (-4 * np.pi, 4 * np.pi) if m.compact else (-50.0, 50.0)
