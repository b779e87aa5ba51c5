"""Singular Riemannian foliations given by generating vector fields.

Provides leaf-tangent evaluation, horizontal projection and horizontal
geodesics, bracket-generation (accessibility) rank, a breadth-first
dual-leaf tracer by piecewise horizontal geodesics, and the totally
geodesic flat check for a foliation-horizontal and a dual-horizontal
direction.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (GeofolError, CatalogError, NotPerpendicularError,
                     CertificateError, UnstableRankError)
from . import manifold as mf
from . import geodesic as gd
from . import jacobi as jb
from . import numerics

LEAF_RANK_REL = 1e-8
HORIZONTAL_START_TOL = 1e-8
HORIZONTAL_PATH_TOL = 1e-6
BRACKET_FD_STEP = 1e-5
GENERATOR_NORM_FLOOR = 1e-2


class FoliationSpec:
    """A (possibly singular) foliation given by generating vector fields.

    ``generators`` are callables mapping a point to tangent components
    (chart components on chart backends, frame components on frame
    backends); the leaf tangent at a point is their pointwise span.
    """

    def __init__(self, m, generators, label="", killing=False):
        self.m = m
        self.generators = list(generators)
        self.label = label or "foliation"
        self.killing = bool(killing)
        self._generic_rank = None
        self._char_scale = None

    def generator_values(self, x):
        """Generator values at ``x`` as columns, shape ``(..., n, k)``."""
        x = np.asarray(x, dtype=float)
        if not self.generators:
            return np.zeros(x.shape[:-1] + (self.m.dim, 0))
        vals = [np.asarray(g(x), dtype=float) for g in self.generators]
        return np.stack(vals, axis=-1)

    def generic_rank(self, samples=1000, seed=7):
        """Most common leaf rank over a random point sample."""
        if self._generic_rank is None:
            if not self.generators:
                self._generic_rank, self._char_scale = 0, 1.0
            else:
                rng = np.random.default_rng(seed)
                pts = self.m.sample_points(rng, samples)
                V = self.generator_values(pts)
                s = np.linalg.svd(V, compute_uv=False)
                ranks = np.sum(s >= LEAF_RANK_REL * np.maximum(s[:, :1], 1e-300), axis=1)
                vals, counts = np.unique(ranks, return_counts=True)
                self._generic_rank = int(vals[np.argmax(counts)])
                r = self._generic_rank
                self._char_scale = float(np.median(s[:, r - 1])) if r > 0 else 1.0
        return self._generic_rank

    @property
    def char_scale(self):
        self.generic_rank()
        return self._char_scale


def leaf_tangent(fol, x):
    """Orthonormal leaf-tangent basis and rank at ``x``."""
    V = fol.generator_values(x)
    g = fol.m.metric(x)
    return numerics.metric_orthonormalize(V, g, rel_tol=LEAF_RANK_REL)


def horizontal_project(fol, x, w):
    """Component of ``w`` orthogonal to the leaf through ``x``."""
    B, rank = leaf_tangent(fol, x)
    if rank == 0:
        return np.asarray(w, dtype=float)
    g = fol.m.metric(x)
    return np.asarray(w, dtype=float) - B @ (B.T @ (g @ np.asarray(w, dtype=float)))


def normal_basis(fol, x, rank_eff=None):
    """g-orthonormal basis of the normal space of the leaf at ``x``.

    ``rank_eff`` caps the leaf rank (used by the tracer at singular
    points, where tiny generator values must be discarded).  The basis
    returned by the orthonormalization is ordered by decreasing singular
    value, so capping keeps the dominant leaf directions."""
    m = fol.m
    g = m.metric(x)
    V = fol.generator_values(x)
    B, rank = numerics.metric_orthonormalize(V, g, rel_tol=LEAF_RANK_REL)
    if rank_eff is not None and rank_eff < rank:
        B = B[:, :rank_eff]
        rank = rank_eff
    if rank == 0:
        cand = np.eye(m.dim)
    else:
        cand = np.eye(m.dim) - B @ (B.T @ g)
    comp, crank = numerics.metric_orthonormalize(cand, g)
    if crank < m.dim - rank:
        raise GeofolError("could not complete the normal basis")
    return comp[:, : m.dim - rank]


@dataclass
class HorizontalityReport:
    max_defect: float
    start_defect: float
    n_samples: int

    @property
    def passed(self):
        return self.max_defect <= HORIZONTAL_PATH_TOL


def _horizontality_defects(fol, xs, vs, g=None):
    """Normalized per-sample defect max_i |<v, X_i>| / max(|X_i|, floor)."""
    m = fol.m
    if not fol.generators:
        return np.zeros(xs.shape[0])
    if g is None:
        g = m.metric(xs)
    V = fol.generator_values(xs)
    ips = np.abs(np.einsum('sij,si,sjk->sk', g, vs, V))
    norms = np.sqrt(np.maximum(np.einsum('sij,sik,sjk->sk', g, V, V), 0.0))
    return np.max(ips / np.maximum(norms, GENERATOR_NORM_FLOOR), axis=1)


def horizontal_geodesic(fol, x, direction, length, step=gd.DEFAULT_STEP):
    """Geodesic leaving the leaf perpendicularly, with a horizontality report."""
    m = fol.m
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    g = m.metric(x)
    V = fol.generator_values(x)
    for i in range(V.shape[1]):
        nrm = max(float(np.sqrt(max(V[:, i] @ g @ V[:, i], 0.0))), GENERATOR_NORM_FLOOR)
        ip = abs(float(d @ g @ V[:, i])) / nrm
        if ip > HORIZONTAL_START_TOL:
            raise NotPerpendicularError(
                f"direction is not normal to the leaf (defect {ip:.3e})")
    path = gd.integrate_geodesic(m, x, d, length, step=step)
    defects = _horizontality_defects(fol, path.xs, path.vs, path.metric_at_samples())
    return path, HorizontalityReport(
        max_defect=float(np.max(defects)) if defects.size else 0.0,
        start_defect=float(defects[0]) if defects.size else 0.0,
        n_samples=path.n_samples)


def transnormality_defect(fol, n_points=50, length=1.0, seed=11, step=2e-3):
    """Witness check: geodesics launched perpendicular to random leaves
    remain perpendicular along their length.  Returns the worst defect."""
    m = fol.m
    rng = np.random.default_rng(seed)
    pts = m.sample_points(rng, n_points)
    worst = 0.0
    for p in pts:
        w = rng.standard_normal(m.dim)
        h = horizontal_project(fol, p, w)
        nh = mf.norm(m, p, h)
        if nh < 1e-8:
            continue
        try:
            _, rep = horizontal_geodesic(fol, p, h / nh, length, step=step)
        except gd.DomainExitError:
            continue
        worst = max(worst, rep.max_defect)
    return worst


# ---------------------------------------------------------------------------
# accessibility (bracket-generation) rank


def _directional_derivative(m, F, x, direction, h):
    if m.kind == "chart":
        dx = h * direction
    else:
        dx = h * (m.frame_at(x) @ direction)
    return (np.asarray(F(x + dx), dtype=float) - np.asarray(F(x - dx), dtype=float)) / (2 * h)


def lie_bracket_field(m, X, Y, fd_step=BRACKET_FD_STEP):
    """The bracket ``[X, Y]`` of two vector fields as a new callable.

    On frame backends uses ``[X,Y]^k = X(Y^k) - Y(X^k) + c_ij^k X^i Y^j``.
    """
    def bracket(x):
        Xv = np.asarray(X(x), dtype=float)
        Yv = np.asarray(Y(x), dtype=float)
        out = (_directional_derivative(m, Y, x, Xv, fd_step)
               - _directional_derivative(m, X, x, Yv, fd_step))
        if m.kind == "frame":
            out = out + np.einsum('ijk,i,j->k', m.structure, Xv, Yv)
        return out
    return bracket


def _horizontal_frame_fields(fol, x0):
    """Smooth local horizontal frame near ``x0``: the normal basis at
    ``x0`` projected horizontally and metric-Gram-Schmidt'd in order."""
    m = fol.m
    N0 = normal_basis(fol, x0)

    def make(idx):
        def fieldfun(y):
            g = m.metric(y)
            cols = []
            for j in range(N0.shape[1]):
                w = horizontal_project(fol, y, N0[:, j])
                for c in cols:
                    w = w - (c @ g @ w) * c
                nrm2 = float(w @ g @ w)
                if nrm2 < 1e-20:
                    raise GeofolError(
                        "horizontal frame collapsed; the point is too close "
                        "to a lower-dimensional leaf")
                cols.append(w / np.sqrt(nrm2))
            return cols[idx]
        return fieldfun

    return [make(j) for j in range(N0.shape[1])]


def accessibility_rank(fol, x, depth, fd_step=BRACKET_FD_STEP, _check_stability=True):
    """Rank at ``x`` of the horizontal frame together with its iterated
    brackets up to ``depth``.  Rank ``n`` certifies the dual leaf is open
    near ``x``.  Raises :class:`UnstableRankError` when halving the
    bracket step changes the answer."""
    if depth < 1:
        raise GeofolError("bracket depth must be >= 1")
    m = fol.m
    x = np.asarray(x, dtype=float)

    def rank_for(h):
        frame = _horizontal_frame_fields(fol, x)
        columns = []
        levels = []
        for f in frame:
            columns.append(np.asarray(f(x), dtype=float))
            levels.append(1)
        current = list(frame)
        for lev in range(2, depth + 1):
            nxt = []
            for f1 in frame:
                for f2 in current:
                    br = lie_bracket_field(m, f1, f2, fd_step=h)
                    columns.append(np.asarray(br(x), dtype=float))
                    levels.append(lev)
                    nxt.append(br)
            current = nxt
        floor = [200.0 * np.finfo(float).eps / h ** (lev - 1) for lev in levels]
        keep = [c for c, fl in zip(columns, floor) if np.linalg.norm(c) > fl]
        if not keep:
            return 0
        Mcols = np.stack(keep, axis=1)
        s = np.linalg.svd(Mcols, compute_uv=False)
        thr = max(LEAF_RANK_REL * s[0], max(
            fl for c, fl in zip(columns, floor) if np.linalg.norm(c) > fl))
        return int(np.sum(s >= thr))

    r = rank_for(fd_step)
    if _check_stability:
        r2 = rank_for(0.5 * fd_step)
        if r2 != r:
            raise UnstableRankError(r, r2)
    return r


# ---------------------------------------------------------------------------
# dual-leaf tracing


@dataclass
class DualLeafCloud:
    """Reached points of a dual leaf with their generating segments."""
    base: np.ndarray
    points: np.ndarray          # (N, point_dim)
    point_segment: np.ndarray   # segment index per point (-1 for the base)
    point_arc: np.ndarray       # arc position along the segment
    segments: list              # (parent_segment, start, direction, length)
    budget_used: int = 0
    exhausted: bool = False
    max_start_defect: float = 0.0
    max_path_defect: float = 0.0
    waves: int = 0

    def segment_chain(self, point_index):
        """Segment indices from the base to the given point."""
        chain = []
        s = int(self.point_segment[point_index])
        while s >= 0:
            chain.append(s)
            s = int(self.segments[s][0])
        return list(reversed(chain))

    def export_csv(self, fileobj):
        import csv as _csv
        w = _csv.writer(fileobj)
        pd = self.points.shape[1]
        w.writerow([f"x_{i+1}" for i in range(pd)] + ["segment", "arc"])
        for i in range(self.points.shape[0]):
            w.writerow([f"{c:.17g}" for c in self.points[i]]
                       + [int(self.point_segment[i]), f"{self.point_arc[i]:.9g}"])


def _net_for_dim(dim, level, base=32, cap=512):
    if dim <= 0:
        return np.zeros((0, 0))
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    count = min(base * (2 ** level), cap)
    return numerics.sphere_net(count, dim)


def _tracer_rank(fol, x, sing_tol):
    """Effective leaf rank at ``x`` with an absolute floor on singular
    values, so that points on lower-dimensional leaves are recognized."""
    V = fol.generator_values(x)
    if V.shape[1] == 0:
        return 0
    g = fol.m.metric(x)
    L = np.linalg.cholesky(g)
    s = np.linalg.svd(L.T @ V, compute_uv=False)
    return int(np.sum(s > sing_tol))


def dual_leaf_trace(fol, p, budget, seg_len=1.0, step=2e-3, net_base=32,
                    dedup=0.02, store_every=0.02, sing_tol=None):
    """Breadth-first dual-leaf exploration by piecewise horizontal geodesics.

    From each frontier point, horizontal geodesics are launched along a
    deterministic direction net over the normal space; net resolution
    doubles with each wave.  At points whose leaf rank drops below the
    generic rank, the normal space is larger and new directions open up.
    ``budget`` bounds the number of geodesic segments.
    """
    m = fol.m
    p = np.asarray(p, dtype=float)
    gen_rank = fol.generic_rank()
    if sing_tol is None:
        sing_tol = 1e-6 * fol.char_scale
    dist = m.distance if hasattr(m, "distance") else None

    segments = []
    points = [p]
    point_segment = [-1]
    point_arc = [0.0]
    visited = [p]
    visited_singular = []
    frontier = [(p, -1)]
    budget_left = int(budget)
    exhausted = False
    max_start_defect = 0.0
    max_path_defect = 0.0
    level = 0
    sub_every = max(1, int(round(store_every / step)))

    while frontier and budget_left > 0:
        launches = []
        for (q, parent) in frontier:
            r_eff = _tracer_rank(fol, q, sing_tol)
            N = normal_basis(fol, q, rank_eff=r_eff if r_eff < gen_rank else None)
            net = _net_for_dim(N.shape[1], level, base=net_base)
            for d_ in net:
                if budget_left <= 0:
                    exhausted = True
                    break
                launches.append((q, N @ d_, parent))
                budget_left -= 1
            if exhausted:
                break
        if not launches:
            break
        X0 = np.stack([l[0] for l in launches])
        V0 = np.stack([l[1] for l in launches])
        nsteps = int(np.ceil(seg_len / step))
        xs, vs, valid_len = gd._rk4_batch(m, X0, V0, step, nsteps)
        S = xs.shape[0]
        new_frontier = []
        for b in range(len(launches)):
            q, d_, parent = launches[b]
            upto = min(int(valid_len[b]), S)
            if upto < 2:
                continue
            seg_id = len(segments)
            segments.append((parent, q, d_, (upto - 1) * step))
            seg_x = xs[:upto, b]
            seg_v = vs[:upto, b]
            defects = _horizontality_defects(fol, seg_x, seg_v)
            if defects.size:
                max_start_defect = max(max_start_defect, float(defects[0]))
                max_path_defect = max(max_path_defect, float(defects.max()))
            sub = list(range(sub_every, upto - 1, sub_every)) + [upto - 1]
            for k in sub:
                points.append(seg_x[k])
                point_segment.append(seg_id)
                point_arc.append(k * step)
            # singular-point scan along the segment
            if fol.generators and gen_rank > 0:
                g_ = m.metric(seg_x)
                V_ = fol.generator_values(seg_x)
                L = np.linalg.cholesky(g_)
                sv = np.linalg.svd(np.swapaxes(L, -1, -2) @ V_, compute_uv=False)
                sr = sv[:, gen_rank - 1]
                # candidates must dip within grid resolution of an actual zero
                cand_tol = max(100 * sing_tol, 10.0 * step * max(fol.char_scale, 1.0))
                for k in range(1, upto - 1):
                    if sr[k] <= sr[k - 1] and sr[k] <= sr[k + 1] and sr[k] < cand_tol:
                        ta, tb = (k - 1) * step, (k + 1) * step

                        def smin_at(t):
                            xq = numerics.hermite_eval(0.0, step, seg_x,
                                                       m.position_rate(seg_x, seg_v), t)
                            Vq = fol.generator_values(xq)
                            Lq = np.linalg.cholesky(m.metric(xq))
                            sq = np.linalg.svd(Lq.T @ Vq, compute_uv=False)
                            return float(sq[gen_rank - 1])

                        tz, fz = numerics.refine_minimum(smin_at, ta, tb)
                        if fz < sing_tol:
                            xz = numerics.hermite_eval(
                                0.0, step, seg_x, m.position_rate(seg_x, seg_v), tz)
                            if not _near_any(m, dist, xz, visited_singular, 10 * step):
                                visited_singular.append(xz)
                                new_frontier.append((xz, seg_id))
                                points.append(xz)
                                point_segment.append(seg_id)
                                point_arc.append(tz)
            endpoint = seg_x[upto - 1]
            if not _near_any(m, dist, endpoint, visited, dedup):
                visited.append(endpoint)
                new_frontier.append((endpoint, seg_id))
        frontier = new_frontier
        level += 1

    cloud = DualLeafCloud(
        base=p, points=np.stack(points), point_segment=np.array(point_segment),
        point_arc=np.array(point_arc), segments=segments,
        budget_used=int(budget) - budget_left, exhausted=exhausted,
        max_start_defect=max_start_defect, max_path_defect=max_path_defect,
        waves=level)
    cloud.backend = m
    return cloud


def _near_any(m, dist, x, pool, radius):
    if not pool:
        return False
    P = np.stack(pool)
    if dist is not None:
        d = np.asarray(dist(P, x[None, :]))
    else:
        d = np.linalg.norm(P - x, axis=-1)
    return bool(np.min(d) < radius)


def covering_radius(cloud, net_points, max_cloud=40000):
    """Largest distance from a reference-net point to the reached cloud."""
    pts = cloud.points
    m = getattr(cloud, "backend", None)
    if m is not None and hasattr(m, "nearest_distance"):
        best = np.full(net_points.shape[0], np.inf)
        for lo in range(0, pts.shape[0], 20000):
            best = np.minimum(best, m.nearest_distance(net_points, pts[lo:lo + 20000]))
        return float(np.max(best))
    if pts.shape[0] > max_cloud:
        stride = int(np.ceil(pts.shape[0] / max_cloud))
        pts = pts[::stride]
    if m is not None and hasattr(m, "pairwise_distance"):
        pair = m.pairwise_distance
    elif m is not None and hasattr(m, "distance"):
        pair = lambda A, B: np.asarray(m.distance(A[:, None, :], B[None, :, :]))
    else:
        pair = lambda A, B: np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    worst = 0.0
    chunk = 500
    for lo in range(0, net_points.shape[0], chunk):
        d = pair(net_points[lo:lo + chunk], pts)
        worst = max(worst, float(np.max(np.min(d, axis=1))))
    return worst


# ---------------------------------------------------------------------------
# totally geodesic flats


@dataclass
class FlatCheckReport:
    max_sectional: float
    sectional_tolerance: float
    geodesy_deviation: float
    geodesy_tolerance: float
    certificate_defect: float
    passed: bool

    def to_lines(self, name="flats"):
        return [
            f"check.{name}.max_sectional = {self.max_sectional:.12g}",
            f"check.{name}.sectional_tolerance = {self.sectional_tolerance:.12g}",
            f"check.{name}.geodesy_deviation = {self.geodesy_deviation:.12g}",
            f"check.{name}.geodesy_tolerance = {self.geodesy_tolerance:.12g}",
            f"check.{name}.certificate_defect = {self.certificate_defect:.12g}",
            f"check.{name}.pass = {'true' if self.passed else 'false'}",
        ]


def dual_tangent_certificate(fol, cloud, p, v, radius=0.5):
    """Defect of ``v`` against the traced dual leaf's local tangent.

    Estimates the dual-leaf tangent at ``p`` from nearby cloud points and
    returns the largest normalized inner product with ``v``."""
    m = fol.m
    p = np.asarray(p, dtype=float)
    dist = m.distance if hasattr(m, "distance") else None
    if dist is not None:
        d = np.asarray(dist(cloud.points, p[None, :]))
    else:
        d = np.linalg.norm(cloud.points - p, axis=-1)
    near = cloud.points[(d > 1e-9) & (d < radius)]
    if near.shape[0] < m.dim:
        raise CertificateError("not enough cloud points near p for a tangent estimate")
    g = m.metric(p)
    L = np.linalg.cholesky(g)
    diffs = (near - p).T                     # chart differences as columns
    A = L.T @ diffs
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    dims = int(np.sum(s >= 0.2 * s[0]))
    T = np.linalg.solve(L.T, U[:, :dims])    # g-orthonormal tangent estimate
    vg = np.asarray(v, dtype=float)
    vn = vg / np.sqrt(max(vg @ g @ vg, 1e-300))
    return float(np.max(np.abs(T.T @ g @ vn)))


def flat_check(fol, p, x, v, extent=1.0, grid=9, step=2e-3, cloud=None,
               sectional_tol=1e-8, geodesy_tol=1e-5, certificate_tol=1e-4):
    """Verify that ``x`` (leaf-normal) and ``v`` (dual-leaf-normal) span a
    totally geodesic flat through ``p``.

    Builds the surface ``(s, t) -> exp(s V(t))`` over ``[0, extent]^2``
    with ``V`` the parallel transport of ``v`` along ``t -> exp(t x)``,
    then (i) samples the sectional curvature of the surface's coordinate
    planes (the ``t``-tangent is a Jacobi field, integrated rather than
    differenced) and (ii) launches geodesics in surface-tangent directions
    and measures their deviation from the corresponding straight
    parameter lines of the surface.
    """
    m = fol.m
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g = m.metric(p)
    for w, name in ((x, "x"), (v, "v")):
        if abs(float(w @ g @ w) - 1.0) > 1e-8:
            raise GeofolError(f"{name} must be a unit vector")
    if abs(float(x @ g @ v)) > 1e-8:
        raise GeofolError("x and v must be orthogonal")
    hx = horizontal_project(fol, p, x)
    if mf.norm(m, p, hx - x) > 1e-6:
        raise NotPerpendicularError("x is not normal to the leaf at p")
    cert = float("nan")
    if cloud is not None:
        cert = dual_tangent_certificate(fol, cloud, p, v)
        if cert > certificate_tol:
            raise CertificateError(
                f"v fails the dual-horizontal certificate (defect {cert:.3e})")

    base = gd.integrate_geodesic(m, p, x, extent, step=step)
    Vt = gd.parallel_transport(base, v)
    tgrid = np.linspace(0.0, extent, grid)
    worst_K = 0.0
    rails = []
    for t in tgrid:
        xt, ct = base.evaluate(t)
        vt = Vt.value(t)
        sigma = gd.integrate_geodesic(m, xt, vt, extent, step=step)
        Jt = jb.integrate_jacobi(sigma, ct, np.zeros(m.dim))
        rails.append((t, sigma, Jt))
        for s in np.linspace(0.0, extent, grid):
            xs_, vs_ = sigma.evaluate(s)
            Jv = Jt.value(s)
            gs = m.metric(xs_)
            uu = float(vs_ @ gs @ vs_)
            vv = float(Jv @ gs @ Jv)
            uv = float(vs_ @ gs @ Jv)
            if uu * vv - uv ** 2 < 1e-8 * uu * vv:
                continue
            worst_K = max(worst_K, abs(float(mf.sectional(m, xs_, vs_, Jv))))

    # total geodesy: rays from the rectangle center against fresh surface points
    s0 = t0 = 0.5 * extent
    x0t, c0 = base.evaluate(t0)
    v0 = Vt.value(t0)
    sigma0 = gd.integrate_geodesic(m, x0t, v0, extent, step=step)
    J0 = jb.integrate_jacobi(sigma0, c0, np.zeros(m.dim))
    P0, dS = sigma0.evaluate(s0)
    dT = J0.value(s0)
    g0 = m.metric(P0)
    dT = dT / np.sqrt(max(float(dT @ g0 @ dT), 1e-300))
    worst_dev = 0.0
    taus = np.linspace(0.1 * extent, 0.45 * extent, 4)
    for ang in np.linspace(0.0, 2 * np.pi, 6, endpoint=False):
        a, b_ = np.cos(ang), np.sin(ang)
        w = a * dS + b_ * dT
        w = w / np.sqrt(max(float(w @ g0 @ w), 1e-300))
        try:
            ray = gd.integrate_geodesic(m, P0, w, float(taus[-1]) + step, step=step)
        except gd.DomainExitError:
            continue
        for tau in taus:
            st, tt = s0 + a * tau, t0 + b_ * tau
            if not (0.0 <= tt <= extent and 0.0 <= st <= extent):
                continue
            xt, ct = base.evaluate(tt)
            vt = Vt.value(tt)
            sig = gd.integrate_geodesic(m, xt, vt, max(st, step), step=step)
            target = sig.evaluate(st)[0]
            here = ray.evaluate(tau)[0]
            worst_dev = max(worst_dev, mf.local_distance(m, here, target))

    passed = worst_K <= sectional_tol and worst_dev <= geodesy_tol
    return FlatCheckReport(
        max_sectional=worst_K, sectional_tolerance=sectional_tol,
        geodesy_deviation=worst_dev, geodesy_tolerance=geodesy_tol,
        certificate_defect=cert, passed=passed)


# ---------------------------------------------------------------------------
# catalogs: foliations and Killing fields


def builtin_foliation(name, m):
    """Catalog foliations on catalog manifolds.

    ``so2_on_sphere`` (latitude circles of a rotation), ``hopf_on_s3``
    (circle fibers of the 3-sphere frame), ``slice_product`` (euclidean
    fibers of a product; dual leaves are the compact slices),
    ``sphere_slices`` (compact slices of a product, totally geodesic),
    ``point_foliation`` (leaves are points), ``cylinder_lines`` (vertical
    lines of the flat cylinder).
    """
    if name == "so2_on_sphere":
        if not m.label.startswith("sphere(2"):
            raise CatalogError("so2_on_sphere needs a sphere(2, r) backend")
        return FoliationSpec(m, [lambda x: np.stack([-x[..., 1], x[..., 0]], axis=-1)],
                             label=name, killing=True)
    if name == "hopf_on_s3":
        if m.kind != "frame":
            raise CatalogError("hopf_on_s3 needs the 3-sphere frame backend")

        def fiber(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (3,))
            out[..., 0] = 1.0
            return out
        return FoliationSpec(m, [fiber], label=name, killing=True)
    if name in ("slice_product", "sphere_slices"):
        if not isinstance(m, mf.ProductManifold):
            raise CatalogError(f"{name} needs a product backend")
        a, b = m.factors
        na = a.dim
        if name == "slice_product":
            gens = []
            for j in range(b.dim):
                def coord(x, _j=j):
                    x = np.asarray(x, dtype=float)
                    out = np.zeros(x.shape[:-1] + (m.dim,))
                    out[..., na + _j] = 1.0
                    return out
                gens.append(coord)
            return FoliationSpec(m, gens, label=name, killing=True)
        rot = sphere_rotation_fields(a)
        gens = []
        for f in rot:
            def padded(x, _f=f):
                x = np.asarray(x, dtype=float)
                out = np.zeros(x.shape[:-1] + (m.dim,))
                out[..., :na] = _f(x[..., :na])
                return out
            gens.append(padded)
        return FoliationSpec(m, gens, label=name, killing=True)
    if name == "point_foliation":
        return FoliationSpec(m, [], label=name, killing=False)
    if name == "cylinder_lines":
        if not m.label.startswith("cylinder"):
            raise CatalogError("cylinder_lines needs a cylinder backend")

        def vertical(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (2,))
            out[..., 1] = 1.0
            return out
        return FoliationSpec(m, [vertical], label=name, killing=True)
    raise CatalogError(f"unknown foliation '{name}'")


def sphere_rotation_fields(m):
    """The three rotation Killing fields of ``sphere(2, r)`` in its chart."""
    r = m.radius

    def rot_z(x):
        return np.stack([-x[..., 1], x[..., 0]], axis=-1)

    def rot_x(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-x1 * x2 / r, (x1 ** 2 - x2 ** 2 - r * r) / (2 * r)], axis=-1)

    def rot_y(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([(r * r + x1 ** 2 - x2 ** 2) / (2 * r), x1 * x2 / r], axis=-1)

    return [rot_x, rot_y, rot_z]


def builtin_killing_fields(name, m):
    """Catalog Killing field sets used by the Killing-family construction."""
    if name == "rotation" and m.label.startswith("euclidean(2"):
        return [lambda x: np.stack([-x[..., 1], x[..., 0]], axis=-1)]
    if name == "translations" and m.label.startswith("euclidean"):
        fields = []
        for j in range(m.dim):
            def tr(x, _j=j):
                x = np.asarray(x, dtype=float)
                out = np.zeros(x.shape[:-1] + (m.dim,))
                out[..., _j] = 1.0
                return out
            fields.append(tr)
        return fields
    if name == "sphere_rotations" and m.label.startswith("sphere(2"):
        return sphere_rotation_fields(m)
    if name == "hopf" and m.kind == "frame":
        def fiber(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (3,))
            out[..., 0] = 1.0
            return out
        return [fiber]
    raise CatalogError(f"unknown Killing set '{name}' for backend {m.label}")
