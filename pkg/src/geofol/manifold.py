"""Evaluatable Riemannian manifolds.

Two backend families:

* :class:`ChartManifold` -- a single coordinate chart carrying a metric
  matrix function.  First and second metric derivatives may be supplied
  analytically; missing ones fall back to 4th-order central differences.
* :class:`FrameManifold` -- a homogeneous space described by a global
  frame with constant structure coefficients ``[e_i, e_j] = c_ij^k e_k``
  and constant frame metric.  Connection and curvature are constant in
  the frame; points live in an ambient realization so that curves and
  vector fields can be followed concretely.

All evaluators are batched: a point argument of shape ``(..., point_dim)``
produces outputs with matching leading axes.  Tangent vectors are chart
components for chart backends and frame components for frame backends.
"""

import numpy as np

from .errors import CatalogError
from . import numerics

FD_STEP = 1e-4          # base step for metric finite differences
RANK_TOL = 1e-8
DEGENERATE_PLANE_TOL = 1e-12


# ---------------------------------------------------------------------------
# finite-difference fallbacks for metric derivatives


def _fd_directional(fn, x, h):
    """4th-order central derivative of an array-valued function in every
    coordinate.  Returns the derivative index prepended to the value axes:
    ``D[..., k, (values)] = d_k fn(x)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        step = h[..., None] * e
        d = (-fn(x + 2 * step) + 8.0 * fn(x + step)
             - 8.0 * fn(x - step) + fn(x - 2 * step))
        d = d / (12.0 * h[(...,) + (None,) * (d.ndim - h.ndim)])
        cols.append(d)
    value_rank = cols[0].ndim - (x.ndim - 1)
    return np.stack(cols, axis=-(value_rank + 1))


def _fd_scale(x):
    return FD_STEP * (1.0 + np.linalg.norm(np.asarray(x, dtype=float), axis=-1))


class ChartManifold:
    """Riemannian manifold presented in a single coordinate chart.

    Parameters
    ----------
    dim : int
        Manifold dimension ``n``.
    metric : callable
        ``metric(x)`` for ``x`` of shape ``(..., n)`` returns the symmetric
        positive definite matrix field, shape ``(..., n, n)``.
    metric_d1, metric_d2 : callable, optional
        Analytic derivatives ``d1[..., k, i, j] = d_k g_ij`` and
        ``d2[..., k, l, i, j] = d_k d_l g_ij``; finite differences are used
        where these are omitted.
    domain : callable, optional
        Validity predicate, batched, returning booleans.
    """

    kind = "chart"

    def __init__(self, dim, metric, metric_d1=None, metric_d2=None,
                 domain=None, label=""):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.point_dim = int(dim)
        self.label = label or f"chart{dim}"
        self._metric = metric
        self._metric_d1 = metric_d1
        self._metric_d2 = metric_d2
        self._domain = domain
        self.compact = False

    # -- basic evaluators ---------------------------------------------------

    def metric(self, x):
        return self._metric(np.asarray(x, dtype=float))

    def metric_d1(self, x):
        x = np.asarray(x, dtype=float)
        if self._metric_d1 is not None:
            return self._metric_d1(x)
        return _fd_directional(self._metric, x, _fd_scale(x))

    def metric_d2(self, x):
        x = np.asarray(x, dtype=float)
        if self._metric_d2 is not None:
            return self._metric_d2(x)
        return _fd_directional(self.metric_d1, x, _fd_scale(x))

    def domain(self, x):
        x = np.asarray(x, dtype=float)
        if self._domain is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return np.asarray(self._domain(x))

    def position_rate(self, x, v):
        return v

    # -- connection and curvature -------------------------------------------

    def christoffel(self, x):
        """Levi-Civita symbols ``G[..., k, i, j] = Gamma^k_ij``."""
        g = self.metric(x)
        d1 = self.metric_d1(x)
        ig = np.linalg.inv(g)
        # s_{lij} = d_i g_jl + d_j g_il - d_l g_ij
        s = (np.einsum('...ijl->...lij', d1) + np.einsum('...jil->...lij', d1)
             - d1)
        return 0.5 * np.einsum('...kl,...lij->...kij', ig, s)

    def christoffel_d1(self, x):
        """Coordinate derivatives ``dG[..., q, k, i, j] = d_q Gamma^k_ij``."""
        g = self.metric(x)
        d1 = self.metric_d1(x)
        d2 = self.metric_d2(x)
        ig = np.linalg.inv(g)
        s = (np.einsum('...ijl->...lij', d1) + np.einsum('...jil->...lij', d1)
             - d1)
        dig = -np.einsum('...km,...qmn,...nl->...qkl', ig, d1, ig)
        ds = (np.einsum('...qijl->...qlij', d2) + np.einsum('...qjil->...qlij', d2)
              - d2)
        return (0.5 * np.einsum('...qkl,...lij->...qkij', dig, s)
                + 0.5 * np.einsum('...kl,...qlij->...qkij', ig, ds))

    def riemann_tensor(self, x):
        """Mixed curvature components ``R[..., l, k, i, j]``.

        ``R(e_i, e_j) e_k = R^l_{kij} e_l`` with the sign convention
        ``R(u, v) w = D_u D_v w - D_v D_u w - D_[u,v] w``.
        """
        G = self.christoffel(x)
        dG = self.christoffel_d1(x)
        R = (np.einsum('...iljk->...lkij', dG) - np.einsum('...jlik->...lkij', dG)
             + np.einsum('...lim,...mjk->...lkij', G, G)
             - np.einsum('...ljm,...mik->...lkij', G, G))
        return R


class FrameManifold:
    """Homogeneous space given by a global frame with constant structure.

    ``structure[i, j, k] = c_ij^k`` with ``[e_i, e_j] = c_ij^k e_k`` and a
    constant symmetric positive definite ``frame_metric``.  Points live in
    an ambient space; ``frame_at(q)`` returns the frame vectors as ambient
    columns so curves can be integrated.
    """

    kind = "frame"

    def __init__(self, dim, structure, frame_metric, frame_at, ambient_dim,
                 label="", domain=None):
        self.dim = int(dim)
        self.point_dim = int(ambient_dim)
        self.label = label or f"frame{dim}"
        c = np.asarray(structure, dtype=float)
        if c.shape != (dim, dim, dim):
            raise ValueError("structure array must be (dim, dim, dim)")
        if not np.allclose(c, -np.swapaxes(c, 0, 1), atol=1e-14):
            raise ValueError("structure constants must be antisymmetric in the first two indices")
        jac = (np.einsum('ijm,mkl->ijkl', c, c)
               + np.einsum('jkm,mil->ijkl', c, c)
               + np.einsum('kim,mjl->ijkl', c, c))
        if np.max(np.abs(jac)) > 1e-12 * max(1.0, np.max(np.abs(c)) ** 2):
            raise ValueError("structure constants violate the Jacobi identity")
        gm = np.asarray(frame_metric, dtype=float)
        if gm.shape != (dim, dim) or not np.allclose(gm, gm.T):
            raise ValueError("frame metric must be a symmetric (dim, dim) matrix")
        np.linalg.cholesky(gm)  # positive definiteness
        self.structure = c
        self.frame_metric = gm
        self._frame_at = frame_at
        self._domain = domain
        self.compact = True
        self._gamma = self._koszul()
        self._riemann = self._frame_curvature()

    def _koszul(self):
        c, g = self.structure, self.frame_metric
        ig = np.linalg.inv(g)
        # 2 <D_i e_j, e_l> = <[e_i,e_j],e_l> - <[e_j,e_l],e_i> + <[e_l,e_i],e_j>
        t = (np.einsum('ijm,ml->ijl', c, g)
             - np.einsum('jlm,mi->ijl', c, g)
             + np.einsum('lim,mj->ijl', c, g))
        return 0.5 * np.einsum('kl,ijl->kij', ig, t)

    def _frame_curvature(self):
        G, c = self._gamma, self.structure
        # R(e_i,e_j)e_k = D_i D_j e_k - D_j D_i e_k - D_[e_i,e_j] e_k
        return (np.einsum('lim,mjk->lkij', G, G)
                - np.einsum('ljm,mik->lkij', G, G)
                - np.einsum('ijm,lmk->lkij', c, G))

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.dim, self.dim)
        return np.broadcast_to(self.frame_metric, shape).copy()

    def domain(self, x):
        x = np.asarray(x, dtype=float)
        if self._domain is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return np.asarray(self._domain(x))

    def position_rate(self, x, v):
        F = self._frame_at(np.asarray(x, dtype=float))
        return np.einsum('...ak,...k->...a', F, v)

    def frame_at(self, x):
        return self._frame_at(np.asarray(x, dtype=float))

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + self._gamma.shape
        return np.broadcast_to(self._gamma, shape).copy()

    def riemann_tensor(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + self._riemann.shape
        return np.broadcast_to(self._riemann, shape).copy()


# ---------------------------------------------------------------------------
# module-level curvature operations


def christoffel(m, x):
    """Connection coefficients ``Gamma^k_ij`` of the backend at ``x``."""
    return m.christoffel(x)


def riemann(m, x, u, v, w):
    """Curvature vector ``R(u, v) w`` at ``x``."""
    R = m.riemann_tensor(x)
    return np.einsum('...lkij,...i,...j,...k->...l', R, u, v, w)


def tidal_operator(m, x, v):
    """Matrix of ``w -> R(w, v) v`` at ``x`` (the Jacobi curvature term)."""
    R = m.riemann_tensor(x)
    return np.einsum('...lkij,...k,...j->...li', R, v, v)


def inner(m, x, u, v):
    """Metric inner product of tangent vectors at ``x``."""
    g = m.metric(x)
    return np.einsum('...ij,...i,...j->...', g, u, v)


def norm(m, x, u):
    return np.sqrt(np.maximum(inner(m, x, u, u), 0.0))


def sectional(m, x, u, v):
    """Sectional curvature of the plane spanned by ``u`` and ``v``."""
    g = m.metric(x)
    uu = np.einsum('...ij,...i,...j->...', g, u, u)
    vv = np.einsum('...ij,...i,...j->...', g, v, v)
    uv = np.einsum('...ij,...i,...j->...', g, u, v)
    gram = uu * vv - uv ** 2
    if np.any(gram < DEGENERATE_PLANE_TOL * uu * vv):
        raise ValueError("degenerate plane: vectors are (numerically) dependent")
    Rv = riemann(m, x, u, v, v)
    num = np.einsum('...ij,...i,...j->...', g, Rv, u)
    return num / gram


class CurvatureSample:
    """A sampled sectional curvature: point, 2-plane, value."""

    def __init__(self, m, point, plane):
        self.point = np.asarray(point, dtype=float)
        self.plane = (np.asarray(plane[0], dtype=float), np.asarray(plane[1], dtype=float))
        self.value = float(sectional(m, self.point, *self.plane))
        self._m = m

    def basis_invariance_defect(self, rng, trials=8):
        """Max relative change of the value under random plane-basis changes."""
        u, v = self.plane
        worst = 0.0
        for _ in range(trials):
            A = rng.standard_normal((2, 2))
            while abs(np.linalg.det(A)) < 0.2:
                A = rng.standard_normal((2, 2))
            u2 = A[0, 0] * u + A[0, 1] * v
            v2 = A[1, 0] * u + A[1, 1] * v
            k2 = float(sectional(self._m, self.point, u2, v2))
            worst = max(worst, abs(k2 - self.value) / max(abs(self.value), 1e-12))
        return worst


# ---------------------------------------------------------------------------
# catalog: charts


def _euclidean(n):
    eye = np.eye(n)

    def metric(x):
        return np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()

    def d1(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    def d2(x):
        return np.zeros(x.shape[:-1] + (n, n, n, n))

    m = ChartManifold(n, metric, d1, d2, label=f"euclidean({n})")
    m.compact = False
    m.embed = lambda x: np.asarray(x, dtype=float)
    m.distance = lambda p, q: np.linalg.norm(np.asarray(p, float) - np.asarray(q, float), axis=-1)
    m.pairwise_distance = lambda A, B: np.linalg.norm(
        np.asarray(A, float)[:, None, :] - np.asarray(B, float)[None, :, :], axis=-1)
    m.sample_points = lambda rng, count: rng.uniform(-2.0, 2.0, size=(count, n))
    return m


def _conformal_chart(n, phi, dphi, ddphi, domain, label):
    """Metric ``g_ij = phi(x) delta_ij`` with analytic derivatives."""
    eye = np.eye(n)

    def metric(x):
        return phi(x)[..., None, None] * eye

    def d1(x):
        return dphi(x)[..., :, None, None] * eye

    def d2(x):
        return ddphi(x)[..., :, :, None, None] * eye

    return ChartManifold(n, metric, d1, d2, domain=domain, label=label)


def _sphere(n, r, chart_radius=20.0):
    r2 = r * r
    c0 = 4.0 * r2 * r2

    def phi(x):
        s = r2 + np.sum(x * x, axis=-1)
        return c0 / s ** 2

    def dphi(x):
        s = r2 + np.sum(x * x, axis=-1)
        return -4.0 * c0 * x / s[..., None] ** 3

    def ddphi(x):
        s = r2 + np.sum(x * x, axis=-1)
        eye = np.eye(n)
        return (-4.0 * c0 * eye / s[..., None, None] ** 3
                + 24.0 * c0 * x[..., :, None] * x[..., None, :] / s[..., None, None] ** 4)

    def domain(x):
        return np.sum(x * x, axis=-1) <= (chart_radius * r) ** 2

    m = _conformal_chart(n, phi, dphi, ddphi, domain, f"sphere({n},{r:g})")
    m.compact = True
    m.radius = r
    m.chart_radius = chart_radius

    def embed(x):
        x = np.asarray(x, dtype=float)
        s = r2 + np.sum(x * x, axis=-1, keepdims=True)
        p = np.concatenate([2.0 * r2 * x, r * (2.0 * r2 - s)], axis=-1)
        return p / s

    def unembed(p):
        p = np.asarray(p, dtype=float)
        return r * p[..., :-1] / (r + p[..., -1:])

    def distance(p, q):
        a = embed(np.asarray(p, dtype=float))
        b = embed(np.asarray(q, dtype=float))
        c = np.clip(np.sum(a * b, axis=-1) / r2, -1.0, 1.0)
        return r * np.arccos(c)

    def pairwise_distance(A, B):
        a = embed(np.asarray(A, dtype=float))
        b = embed(np.asarray(B, dtype=float))
        c = np.clip((a @ b.T) / r2, -1.0, 1.0)
        return r * np.arccos(c)

    def nearest_distance(A, B):
        # distance is monotone in the cosine, so only the row maxima
        # need the arccos
        a = embed(np.asarray(A, dtype=float))
        b = embed(np.asarray(B, dtype=float))
        best = np.max(a @ b.T, axis=1)
        return r * np.arccos(np.clip(best / r2, -1.0, 1.0))

    def sample_points(rng, count):
        out = np.empty((count, n))
        filled = 0
        while filled < count:
            v = rng.standard_normal((2 * (count - filled), n + 1))
            v = r * v / np.linalg.norm(v, axis=1, keepdims=True)
            ok = v[:, -1] > -r * (1.0 - 2.0 / (1.0 + chart_radius ** 2))
            v = v[ok]
            take = min(count - filled, v.shape[0])
            out[filled:filled + take] = unembed(v[:take])
            filled += take
        return out

    def reference_net(count):
        if n == 2:
            pts = r * numerics.fibonacci_sphere(count)
        else:
            rng = np.random.default_rng(2024)
            v = rng.standard_normal((count, n + 1))
            pts = r * v / np.linalg.norm(v, axis=1, keepdims=True)
        x = unembed(pts)
        keep = domain(x)
        return x[keep]

    m.embed = embed
    m.unembed = unembed
    m.distance = distance
    m.pairwise_distance = pairwise_distance
    m.nearest_distance = nearest_distance
    m.sample_points = sample_points
    m.reference_net = reference_net
    return m


def _hyperbolic(n, r, margin=0.9):
    """Poincare-ball metric, constant curvature ``-1/r^2`` (negative control)."""
    r2 = r * r
    c0 = 4.0 * r2 * r2

    def phi(x):
        s = r2 - np.sum(x * x, axis=-1)
        return c0 / s ** 2

    def dphi(x):
        s = r2 - np.sum(x * x, axis=-1)
        return 4.0 * c0 * x / s[..., None] ** 3

    def ddphi(x):
        s = r2 - np.sum(x * x, axis=-1)
        eye = np.eye(n)
        return (4.0 * c0 * eye / s[..., None, None] ** 3
                + 24.0 * c0 * x[..., :, None] * x[..., None, :] / s[..., None, None] ** 4)

    def domain(x):
        return np.sum(x * x, axis=-1) <= (margin * r) ** 2

    m = _conformal_chart(n, phi, dphi, ddphi, domain, f"hyperbolic({n},{r:g})")
    m.compact = False
    m.sample_points = lambda rng, count: rng.uniform(-0.4 * r, 0.4 * r, size=(count, n))
    return m


def _cylinder(r):
    """Flat cylinder: chart (theta, z), metric diag(r^2, 1)."""
    g0 = np.diag([r * r, 1.0])

    def metric(x):
        return np.broadcast_to(g0, x.shape[:-1] + (2, 2)).copy()

    def d1(x):
        return np.zeros(x.shape[:-1] + (2, 2, 2))

    def d2(x):
        return np.zeros(x.shape[:-1] + (2, 2, 2, 2))

    m = ChartManifold(2, metric, d1, d2, label=f"cylinder({r:g})")
    m.compact = False
    m.radius = r

    def embed(x):
        x = np.asarray(x, dtype=float)
        return np.stack([r * np.cos(x[..., 0]), r * np.sin(x[..., 0]), x[..., 1]], axis=-1)

    def distance(p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        dth = np.mod(p[..., 0] - q[..., 0] + np.pi, 2 * np.pi) - np.pi
        return np.hypot(r * dth, p[..., 1] - q[..., 1])

    def pairwise_distance(A, B):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        dth = np.mod(A[:, None, 0] - B[None, :, 0] + np.pi, 2 * np.pi) - np.pi
        return np.hypot(r * dth, A[:, None, 1] - B[None, :, 1])

    m.embed = embed
    m.distance = distance
    m.pairwise_distance = pairwise_distance
    m.sample_points = lambda rng, count: np.stack(
        [rng.uniform(0.0, 2 * np.pi, count), rng.uniform(-2.0, 2.0, count)], axis=1)
    return m


class ProductManifold(ChartManifold):
    """Block-diagonal product of chart backends; exact blockwise dispatch."""

    def __init__(self, a, b):
        if a.kind != "chart" or b.kind != "chart":
            raise CatalogError("product factors must be chart backends")
        self.factors = (a, b)
        na, nb = a.dim, b.dim
        n = na + nb
        self.blocks = (slice(0, na), slice(na, n))

        def metric(x):
            ga = a.metric(x[..., :na])
            gb = b.metric(x[..., na:])
            out = np.zeros(x.shape[:-1] + (n, n))
            out[..., :na, :na] = ga
            out[..., na:, na:] = gb
            return out

        def d1(x):
            out = np.zeros(x.shape[:-1] + (n, n, n))
            out[..., :na, :na, :na] = a.metric_d1(x[..., :na])
            out[..., na:, na:, na:] = b.metric_d1(x[..., na:])
            return out

        def d2(x):
            out = np.zeros(x.shape[:-1] + (n, n, n, n))
            out[..., :na, :na, :na, :na] = a.metric_d2(x[..., :na])
            out[..., na:, na:, na:, na:] = b.metric_d2(x[..., na:])
            return out

        def domain(x):
            return a.domain(x[..., :na]) & b.domain(x[..., na:])

        super().__init__(n, metric, d1, d2, domain=domain,
                         label=f"product({a.label},{b.label})")
        self.compact = a.compact and b.compact

        if hasattr(a, "embed") and hasattr(b, "embed"):
            self.embed = lambda x: np.concatenate(
                [a.embed(x[..., :na]), b.embed(x[..., na:])], axis=-1)
        if hasattr(a, "distance") and hasattr(b, "distance"):
            self.distance = lambda p, q: np.hypot(
                a.distance(np.asarray(p, float)[..., :na], np.asarray(q, float)[..., :na]),
                b.distance(np.asarray(p, float)[..., na:], np.asarray(q, float)[..., na:]))
        if hasattr(a, "pairwise_distance") and hasattr(b, "pairwise_distance"):
            self.pairwise_distance = lambda A, B: np.hypot(
                a.pairwise_distance(np.asarray(A, float)[:, :na], np.asarray(B, float)[:, :na]),
                b.pairwise_distance(np.asarray(A, float)[:, na:], np.asarray(B, float)[:, na:]))
        if hasattr(a, "sample_points") and hasattr(b, "sample_points"):
            self.sample_points = lambda rng, count: np.concatenate(
                [a.sample_points(rng, count), b.sample_points(rng, count)], axis=1)


# ---------------------------------------------------------------------------
# catalog: the 3-sphere group frame and its fiber-rescaled metrics


def quat_mul(a, b):
    """Hamilton product, batched over leading axes."""
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    b0, b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def _s3_frame_at(q):
    """Left-invariant frame q*i, q*j, q*k as ambient columns (..., 4, 3)."""
    q = np.asarray(q, dtype=float)
    e1 = np.stack([-q[..., 1], q[..., 0], q[..., 3], -q[..., 2]], axis=-1)
    e2 = np.stack([-q[..., 2], -q[..., 3], q[..., 0], q[..., 1]], axis=-1)
    e3 = np.stack([-q[..., 3], q[..., 2], -q[..., 1], q[..., 0]], axis=-1)
    return np.stack([e1, e2, e3], axis=-1)


def _berger_sphere(eps):
    """Unit 3-sphere group frame with fiber direction rescaled by ``eps``.

    The frame metric is diag(eps^2, 1, 1) with the first frame direction
    tangent to the circle fibers; eps = 1 is the round unit sphere.
    """
    c = np.zeros((3, 3, 3))
    for (i, j, k, s) in [(0, 1, 2, 1), (1, 2, 0, 1), (2, 0, 1, 1)]:
        c[i, j, k] = 2.0 * s
        c[j, i, k] = -2.0 * s
    gm = np.diag([eps * eps, 1.0, 1.0])
    m = FrameManifold(3, c, gm, _s3_frame_at, ambient_dim=4,
                      label=f"berger_sphere({eps:g})")
    m.eps = eps
    m.embed = lambda q: np.asarray(q, dtype=float)

    def distance(p, q):
        # round-sphere distance; exact for eps = 1, a yardstick otherwise
        c_ = np.clip(np.sum(np.asarray(p, float) * np.asarray(q, float), axis=-1), -1.0, 1.0)
        return np.arccos(c_)

    def sample_points(rng, count):
        v = rng.standard_normal((count, 4))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def reference_net(count):
        rng = np.random.default_rng(2024)
        v = rng.standard_normal((count, 4))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def pairwise_distance(A, B):
        c_ = np.clip(np.asarray(A, float) @ np.asarray(B, float).T, -1.0, 1.0)
        return np.arccos(c_)

    def nearest_distance(A, B):
        best = np.max(np.asarray(A, float) @ np.asarray(B, float).T, axis=1)
        return np.arccos(np.clip(best, -1.0, 1.0))

    m.distance = distance
    m.pairwise_distance = pairwise_distance
    m.nearest_distance = nearest_distance
    m.sample_points = sample_points
    m.reference_net = reference_net
    return m


# ---------------------------------------------------------------------------
# catalog dispatch


def builtin_manifold(name, params=()):
    """Build a catalog manifold by name.

    Names: ``euclidean(n)``, ``sphere(n, r)`` (stereographic chart),
    ``product(a, b)`` (params are two backends), ``berger_sphere(eps)``,
    ``cylinder(r)`` and ``hyperbolic(n, r)`` (negative-curvature control).
    """
    try:
        if name == "euclidean":
            (n,) = params
            return _euclidean(int(n))
        if name == "sphere":
            n, r = params
            if r <= 0:
                raise CatalogError("sphere radius must be positive")
            return _sphere(int(n), float(r))
        if name == "hyperbolic":
            n, r = params
            if r <= 0:
                raise CatalogError("hyperbolic radius must be positive")
            return _hyperbolic(int(n), float(r))
        if name == "berger_sphere":
            (eps,) = params
            if eps <= 0:
                raise CatalogError("fiber scale must be positive")
            return _berger_sphere(float(eps))
        if name == "cylinder":
            (r,) = params
            if r <= 0:
                raise CatalogError("cylinder radius must be positive")
            return _cylinder(float(r))
        if name == "product":
            a, b = params
            return ProductManifold(a, b)
    except CatalogError:
        raise
    except (TypeError, ValueError) as exc:
        raise CatalogError(f"bad parameters for manifold '{name}': {exc}") from exc
    raise CatalogError(f"unknown manifold '{name}'")


def parse_manifold(spec):
    """Parse a manifold spec string like ``product(sphere(2,1),euclidean(1))``."""
    text = spec.replace(" ", "")
    pos = 0

    def parse():
        nonlocal pos
        start = pos
        while pos < len(text) and (text[pos].isalnum() or text[pos] == "_"):
            pos += 1
        name = text[start:pos]
        if not name:
            raise CatalogError(f"bad manifold spec near position {pos}: '{spec}'")
        args = []
        if pos < len(text) and text[pos] == "(":
            pos += 1
            while True:
                if pos < len(text) and (text[pos].isalpha() or text[pos] == "_"):
                    args.append(parse())
                else:
                    num = pos
                    while pos < len(text) and text[pos] not in ",)":
                        pos += 1
                    try:
                        args.append(float(text[num:pos]))
                    except ValueError as exc:
                        raise CatalogError(f"bad number in manifold spec: '{spec}'") from exc
                if pos >= len(text):
                    raise CatalogError(f"unbalanced parentheses in manifold spec: '{spec}'")
                if text[pos] == ",":
                    pos += 1
                    continue
                if text[pos] == ")":
                    pos += 1
                    break
        return builtin_manifold(name, tuple(args))

    m = parse()
    if pos != len(text):
        raise CatalogError(f"trailing characters in manifold spec: '{spec}'")
    return m


# ---------------------------------------------------------------------------
# local helpers used across modules


def unit(m, x, v):
    """Normalize ``v`` to unit metric length at ``x``."""
    return v / norm(m, x, v)


def local_distance(m, x, y):
    """Distance between nearby points: exact backend distance if available,
    else metric norm of the chart difference."""
    if hasattr(m, "distance"):
        return float(m.distance(x, y))
    mid = 0.5 * (np.asarray(x, float) + np.asarray(y, float))
    d = np.asarray(y, float) - np.asarray(x, float)
    return float(np.sqrt(max(inner(m, mid, d, d), 0.0)))
