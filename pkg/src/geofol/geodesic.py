"""Geodesic integration and parallel transport.

Geodesics are integrated with classical fixed-step RK4 and stored as
dense sample lists; a cubic Hermite rule interpolates between samples.
Unit-speed normalization is the caller's responsibility: non-unit input
velocities are rejected rather than silently rescaled.

The stepping engine is batched so that many geodesics on one backend can
be advanced together (used heavily by the randomized verification
batteries and the dual-leaf tracer).
"""

import csv

import numpy as np

from .errors import DomainExitError, GeofolError
from . import manifold as mf
from . import numerics

DEFAULT_STEP = 1e-3
UNIT_SPEED_TOL = 1e-10


def _rhs(m, x, v):
    gam = m.christoffel(x)
    acc = -np.einsum('...kij,...i,...j->...k', gam, v, v)
    return m.position_rate(x, v), acc


def _rk4_batch(m, x0, v0, h, nsteps):
    """Advance a batch of geodesic states ``nsteps`` RK4 steps of size ``h``.

    Returns ``(xs, vs, valid_len)`` with shapes ``(S, B, pd)``, ``(S, B, n)``
    and the per-element count of samples inside the chart domain.
    """
    B = x0.shape[0]
    xs = np.empty((nsteps + 1, B, x0.shape[1]))
    vs = np.empty((nsteps + 1, B, v0.shape[1]))
    xs[0], vs[0] = x0, v0
    valid_len = np.full(B, nsteps + 1, dtype=int)
    alive = np.ones(B, dtype=bool)
    x, v = x0.copy(), v0.copy()
    for k in range(nsteps):
        kx1, kv1 = _rhs(m, x, v)
        kx2, kv2 = _rhs(m, x + 0.5 * h * kx1, v + 0.5 * h * kv1)
        kx3, kv3 = _rhs(m, x + 0.5 * h * kx2, v + 0.5 * h * kv2)
        kx4, kv4 = _rhs(m, x + h * kx3, v + h * kv3)
        xn = x + (h / 6.0) * (kx1 + 2 * kx2 + 2 * kx3 + kx4)
        vn = v + (h / 6.0) * (kv1 + 2 * kv2 + 2 * kv3 + kv4)
        # exited elements are frozen at their last in-domain state
        x = np.where(alive[:, None], xn, x)
        v = np.where(alive[:, None], vn, v)
        xs[k + 1], vs[k + 1] = x, v
        inside = m.domain(x)
        exited = alive & ~inside
        if np.any(exited):
            valid_len[exited] = k + 1
            alive &= inside
            if not np.any(alive):
                return xs[:k + 2], vs[:k + 2], valid_len
    return xs, vs, valid_len


class GeodesicPath:
    """A discretized unit-speed geodesic with a cubic Hermite interpolant.

    Samples live on the uniform grid ``t0 + k * step``.  ``k0`` is the grid
    index of the initial-data parameter (t = 0 for two-sided paths).
    """

    def __init__(self, m, ts, xs, vs, step, k0):
        self.m = m
        self.ts = ts
        self.xs = xs
        self.vs = vs
        self.step = float(step)
        self.k0 = int(k0)
        self.t0 = float(ts[0])
        self.t1 = float(ts[-1])
        self._cache = {}

    # -- derived sample arrays (cached) --------------------------------------

    def position_rates(self):
        if "xdot" not in self._cache:
            self._cache["xdot"] = self.m.position_rate(self.xs, self.vs)
        return self._cache["xdot"]

    def christoffels(self):
        if "gamma" not in self._cache:
            self._cache["gamma"] = self.m.christoffel(self.xs)
        return self._cache["gamma"]

    def accelerations(self):
        if "vdot" not in self._cache:
            self._cache["vdot"] = -np.einsum(
                'skij,si,sj->sk', self.christoffels(), self.vs, self.vs)
        return self._cache["vdot"]

    def transport_generator(self):
        """Sampled matrices of ``w -> -Gamma(x)[v, w]`` driving transport."""
        if "transport_gen" not in self._cache:
            self._cache["transport_gen"] = -np.einsum(
                'skij,si->skj', self.christoffels(), self.vs)
        return self._cache["transport_gen"]

    def metric_at_samples(self):
        if "metric" not in self._cache:
            self._cache["metric"] = self.m.metric(self.xs)
        return self._cache["metric"]

    @property
    def n_samples(self):
        return self.ts.shape[0]

    def index_of(self, t):
        return int(round((float(t) - self.t0) / self.step))

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, t):
        """Interpolated ``(point, velocity)`` at parameter ``t``."""
        if not (self.t0 - 1e-12 <= t <= self.t1 + 1e-12):
            raise GeofolError(f"parameter {t:g} outside [{self.t0:g}, {self.t1:g}]")
        x = numerics.hermite_eval(self.t0, self.step, self.xs, self.position_rates(), t)
        v = numerics.hermite_eval(self.t0, self.step, self.vs, self.accelerations(), t)
        return x, v

    # -- diagnostics ----------------------------------------------------------

    def speed_drift(self):
        """Max relative drift of the metric speed along the samples."""
        g = self.metric_at_samples()
        sp = np.einsum('sij,si,sj->s', g, self.vs, self.vs)
        return float(np.max(np.abs(np.sqrt(sp) - 1.0)))

    def equation_residual(self):
        """Max geodesic-equation residual at sample midpoints, measured on
        the Hermite interpolant (position acceleration vs. the equation's
        right-hand side)."""
        tm = 0.5 * (self.ts[:-1] + self.ts[1:])
        worst = 0.0
        idx = np.linspace(0, tm.size - 1, min(tm.size, 200)).astype(int)
        h = self.step
        for t in tm[idx]:
            x, v = self.evaluate(t)
            i = min(max(int((t - self.t0) / h), 0), self.n_samples - 2)
            u = (t - self.t0) / h - i
            dd00 = (12 * u - 6) / h ** 2
            dd10 = (6 * u - 4) / h
            dd01 = (6 - 12 * u) / h ** 2
            dd11 = (6 * u - 2) / h
            acc = (dd00 * self.xs[i] + dd10 * self.position_rates()[i]
                   + dd01 * self.xs[i + 1] + dd11 * self.position_rates()[i + 1])
            res = acc - self._ambient_acceleration(x, v)
            worst = max(worst, float(np.linalg.norm(res)))
        return worst

    def _ambient_acceleration(self, x, v):
        """Second time derivative of the position at state ``(x, v)``."""
        gam = self.m.christoffel(x)
        vdot = -np.einsum('kij,i,j->k', gam, v, v)
        if self.m.kind == "chart":
            return vdot
        # frame backends: d/dt [F(q) v] with qdot = F v
        eps = 1e-6
        F = self.m.frame_at(x)
        qdot = F @ v
        dF = (self.m.frame_at(x + eps * qdot) - self.m.frame_at(x - eps * qdot)) / (2 * eps)
        return dF @ v + F @ vdot

    # -- export ---------------------------------------------------------------

    def export_csv(self, fileobj):
        """Write samples as CSV with columns t, x_1.., v_1.."""
        w = csv.writer(fileobj)
        pd, n = self.xs.shape[1], self.vs.shape[1]
        w.writerow(["t"] + [f"x_{i+1}" for i in range(pd)] + [f"v_{i+1}" for i in range(n)])
        for k in range(self.n_samples):
            w.writerow([f"{self.ts[k]:.12g}"]
                       + [f"{c:.17g}" for c in self.xs[k]]
                       + [f"{c:.17g}" for c in self.vs[k]])


def _check_initial(m, x0, v0, step):
    if step <= 0:
        raise GeofolError("integrator step must be positive")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    sp = mf.inner(m, x0, v0, v0)
    if abs(sp - 1.0) > UNIT_SPEED_TOL * 10:
        raise GeofolError(
            f"initial velocity is not unit speed (|v|^2 = {sp:.12g}); "
            "callers must normalize")
    if not bool(np.all(m.domain(x0))):
        raise GeofolError("initial point outside the chart domain")
    return x0, v0


def integrate_geodesic(m, x0, v0, t1, step=DEFAULT_STEP, t0=0.0):
    """Integrate the unit-speed geodesic with data ``(x0, v0)`` at t = 0.

    The parameter interval is ``[t0, t1]`` with ``t0 <= 0 <= t1``; both
    endpoints are snapped onto the uniform step grid.  Raises
    :class:`DomainExitError` if the path leaves the chart domain.
    """
    x0, v0 = _check_initial(m, x0, v0, step)
    if t0 > 0 or t1 < 0 or t1 <= t0:
        raise GeofolError("parameter interval must satisfy t0 <= 0 <= t1, t0 < t1")
    n_plus = int(np.ceil(round(t1 / step, 9))) if t1 > 0 else 0
    n_minus = int(np.ceil(round(-t0 / step, 9))) if t0 < 0 else 0
    xs_p, vs_p, len_p = _rk4_batch(m, x0[None], v0[None], step, n_plus)
    if len_p[0] <= n_plus:
        raise DomainExitError(len_p[0] * step)
    if n_minus > 0:
        xs_m, vs_m, len_m = _rk4_batch(m, x0[None], -v0[None], step, n_minus)
        if len_m[0] <= n_minus:
            raise DomainExitError(-(len_m[0] * step))
        xs = np.concatenate([xs_m[::-1, 0], xs_p[1:, 0]], axis=0)
        vs = np.concatenate([-vs_m[::-1, 0], vs_p[1:, 0]], axis=0)
    else:
        xs, vs = xs_p[:, 0], vs_p[:, 0]
    k0 = n_minus
    ts = (np.arange(xs.shape[0]) - k0) * step
    return GeodesicPath(m, ts, xs, vs, step, k0)


def integrate_geodesic_batch(m, x0s, v0s, t1, step=DEFAULT_STEP):
    """Integrate a batch of forward geodesics; returns paths and a mask of
    the elements that stayed inside the chart domain for the full horizon."""
    x0s = np.asarray(x0s, dtype=float)
    v0s = np.asarray(v0s, dtype=float)
    nsteps = int(np.ceil(round(t1 / step, 9)))
    xs, vs, valid_len = _rk4_batch(m, x0s, v0s, step, nsteps)
    full = valid_len > nsteps
    ts = np.arange(xs.shape[0]) * step
    paths = []
    for b in range(x0s.shape[0]):
        if full[b]:
            paths.append(GeodesicPath(m, ts, xs[:, b].copy(), vs[:, b].copy(), step, 0))
        else:
            paths.append(None)
    return paths, full, valid_len


class TransportedFrame:
    """Parallel-transported tangent vectors sampled along a path."""

    def __init__(self, path, W):
        self.path = path
        self.W = W  # (S, n, K) or (S, n)

    def at_index(self, k):
        return self.W[k]

    def value(self, t):
        Wd = self._derivatives()
        return numerics.hermite_eval(self.path.t0, self.path.step, self.W, Wd, t)

    def _derivatives(self):
        if not hasattr(self, "_Wd"):
            gen = self.path.transport_generator()
            if self.W.ndim == 2:
                self._Wd = np.einsum('skj,sj->sk', gen, self.W)
            else:
                self._Wd = np.einsum('skj,sja->ska', gen, self.W)
        return self._Wd

    def inner_product_drift(self):
        """Max drift of pairwise metric inner products along the path."""
        g = self.path.metric_at_samples()
        W = self.W if self.W.ndim == 3 else self.W[:, :, None]
        gram = np.einsum('sij,sia,sjb->sab', g, W, W)
        return float(np.max(np.abs(gram - gram[self.path.k0])))

    def transport_residual(self):
        """Covariant-derivative residual measured by wide stencils."""
        W = self.W if self.W.ndim == 3 else self.W[:, :, None]
        stride = max(1, min(10, (self.path.n_samples - 1) // 5))
        D, lo, hi = numerics.strided_first_derivative(W, self.path.step, stride)
        gen = self.path.transport_generator()
        res = D[lo:hi] - np.einsum('skj,sja->ska', gen[lo:hi], W[lo:hi])
        return float(np.max(np.abs(res))) if res.size else 0.0


def parallel_transport(path, w0):
    """Parallel transport of ``w0`` (vector or matrix of columns) from t = 0."""
    w0 = np.asarray(w0, dtype=float)
    gen = path.transport_generator()
    W = numerics.integrate_linear_grid(gen, w0, path.k0, path.step)
    return TransportedFrame(path, W)


def evaluate(path, t):
    """Interpolated ``(point, velocity)`` on the path (exact at nodes)."""
    return path.evaluate(t)
