"""The acceptance battery: one callable per criterion, shared by the CLI
``suite`` command and the test suite.

The transversal battery draws randomized (geodesic, self-adjoint family,
subspace) cases on each catalog manifold and checks the transversal
Jacobi residual, its O'Neill control, and the coupling identities.  Case
pipelines are batched across the 50 draws of a manifold so the whole
battery fits its runtime budget at the pinned integrator step.
"""

import os
import time
import tempfile
import filecmp
from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from . import geodesic as gd
from . import jacobi as jb
from . import transversal as tv
from . import decomposition as dc
from . import foliation as fo
from . import numerics
from .errors import SingularSubspaceError

BATTERY_STEP = 1e-3
BATTERY_HORIZON = 1.6
BATTERY_CASES = 50
# Subspace draws are redrawn when their internal dynamics outruns what
# the pinned wide-stencil spacing can resolve: the subfamily's own
# log-derivative rate sup |V'| / sigma_min(V) (near-collapses without an
# actual zero make it arbitrarily large; the splitting classes those as
# unsupported), and the A-operator norm, which enters the coefficient
# ODE quadratically.
RATE_GUARD = 4.0
SUP_A_GUARD = 2.0


@dataclass
class CriterionResult:
    name: str
    passed: bool
    summary: str
    lines: list = field(default_factory=list)
    elapsed: float = 0.0


# ---------------------------------------------------------------------------
# battery manifolds and start draws


def battery_manifolds():
    s2 = mf.builtin_manifold("sphere", (2, 1))
    s3 = mf.builtin_manifold("sphere", (3, 1))
    e1 = mf.builtin_manifold("euclidean", (1,))
    e2 = mf.builtin_manifold("euclidean", (2,))
    return [
        ("euclidean3", mf.builtin_manifold("euclidean", (3,))),
        ("sphere2", s2),
        ("sphere3", s3),
        ("s2xr", mf.builtin_manifold("product", (s2, e1))),
        ("s2xr2", mf.builtin_manifold("product", (mf.builtin_manifold("sphere", (2, 1)), e2))),
        ("berger08", mf.builtin_manifold("berger_sphere", (0.8,))),
    ]


def _draw_starts(name, m, rng, count):
    n = m.dim
    if m.kind == "frame":
        q = rng.standard_normal((count, 4))
        x0 = q / np.linalg.norm(q, axis=1, keepdims=True)
    elif name.startswith("euclidean"):
        x0 = rng.uniform(-1.0, 1.0, size=(count, n))
    else:
        # keep chart starts moderate so random geodesics stay in-domain
        x0 = rng.uniform(-0.6, 0.6, size=(count, m.point_dim))
    v = rng.standard_normal((count, n))
    g = m.metric(x0)
    nrm = np.sqrt(np.einsum('bij,bi,bj->b', g, v, v))
    return x0, v / nrm[:, None]


def _batched_paths(m, x0s, v0s, step, horizon):
    """Integrate a batch of geodesics and pre-fill every per-path cache
    (connection samples, transport generators, normal frames, curvature
    matrices) using cross-case batched kernels."""
    paths, full, _ = gd.integrate_geodesic_batch(m, x0s, v0s, horizon, step=step)
    if not np.all(full):
        raise gd.DomainExitError(0.0, "batch contained an exited geodesic")
    S = paths[0].n_samples
    B = len(paths)
    n = m.dim
    xs = np.stack([p.xs for p in paths], axis=1)       # (S, B, pd)
    vs = np.stack([p.vs for p in paths], axis=1)
    gmet = m.metric(xs)
    gam = m.christoffel(xs)
    gen = -np.einsum('sbkij,sbi->sbkj', gam, vs)
    # normal frames: per-case initial completion, batched transport
    E0 = np.empty((B, n, n - 1))
    for b in range(B):
        g0 = gmet[paths[b].k0, b]
        v0 = vs[paths[b].k0, b]
        speed2 = float(v0 @ g0 @ v0)
        cand = np.eye(n) - np.outer(v0, v0 @ g0) / speed2
        Q, rank = numerics.metric_orthonormalize(cand, g0)
        E0[b] = Q[:, : n - 1]
    E = numerics.integrate_linear_grid(gen, E0, paths[0].k0, step)
    # curvature matrices, chunked over flattened samples
    K = np.empty((S, B, n - 1, n - 1))
    flat_x = xs.reshape(S * B, -1)
    flat_v = vs.reshape(S * B, n)
    chunk = 4096
    W = np.empty((S * B, n, n))
    for lo in range(0, S * B, chunk):
        hi = min(S * B, lo + chunk)
        W[lo:hi] = mf.tidal_operator(m, flat_x[lo:hi], flat_v[lo:hi])
    Wr = W.reshape(S, B, n, n)
    K = np.einsum('sbij,sbia,sbjk,sbkc->sbac', gmet, E, Wr, E)
    K = 0.5 * (K + np.swapaxes(K, 2, 3))
    Mjac = np.zeros((S, B, 2 * (n - 1), 2 * (n - 1)))
    Mjac[:, :, : n - 1, n - 1:] = np.eye(n - 1)
    Mjac[:, :, n - 1:, : n - 1] = -K
    for b, p in enumerate(paths):
        p._cache["metric"] = gmet[:, b]
        p._cache["gamma"] = gam[:, b]
        p._cache["transport_gen"] = gen[:, b]
        p._cache["normal_frame"] = E[:, b]
        p._cache["curvature_matrices"] = K[:, b]
        p._cache["jacobi_system"] = Mjac[:, b]
    return paths, Mjac


def _batched_families(paths, Mjac, rng):
    """Random self-adjoint families (symmetric initial Riccati seeds),
    integrated with one batched pass."""
    B = len(paths)
    n = paths[0].m.dim
    d = n - 1
    Y0 = np.empty((B, d, d))
    Yp0 = np.empty((B, d, d))
    for b in range(B):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        Ric = rng.standard_normal((d, d))
        Ric = 0.5 * (Ric + Ric.T)
        Y0[b] = Q
        Yp0[b] = Ric @ Q
    Z0 = np.concatenate([Y0, Yp0], axis=1)             # (B, 2d, d)
    Z = numerics.integrate_linear_grid(Mjac, Z0, paths[0].k0, paths[0].step)
    fams = []
    for b, p in enumerate(paths):
        fams.append(jb.JacobiFamily(p, Z[:, b, :d, :], Z[:, b, d:, :], None))
    return fams


def run_battery(seed=0, step=BATTERY_STEP, horizon=BATTERY_HORIZON,
                cases=BATTERY_CASES):
    """Run the randomized transversal battery on the whole catalog.

    Returns per-case records with the residuals needed by the first two
    acceptance criteria, plus the total wall time.
    """
    t_start = time.time()
    rng = np.random.default_rng(seed)
    records = []
    for name, m in battery_manifolds():
        x0s, v0s = _draw_starts(name, m, rng, cases)
        for _ in range(20):
            _, full, _ = gd.integrate_geodesic_batch(m, x0s, v0s, horizon, step=5e-3)
            bad = ~full
            if not np.any(bad):
                break
            nx, nv = _draw_starts(name, m, rng, int(np.sum(bad)))
            x0s[bad], v0s[bad] = nx, nv
        paths, Mjac = _batched_paths(m, x0s, v0s, step, horizon)
        fams = _batched_families(paths, Mjac, rng)
        mcount = fams[0].m_count
        for b, fam in enumerate(fams):
            split = None
            dv_want = b % mcount   # deterministic coverage of subspace dims
            for attempt in range(60):
                dv = dv_want if attempt < 50 else 0
                if dv == 0:
                    C = np.zeros((mcount, 0))
                else:
                    C, _ = np.linalg.qr(rng.standard_normal((mcount, dv)))
                    C = C[:, :dv]
                if dv > 0:
                    Vmat = fam.YS @ C
                    Vpmat = fam.YpS @ C
                    sv = np.linalg.svd(Vmat, compute_uv=False)
                    svp = np.linalg.svd(Vpmat, compute_uv=False)
                    rate = np.max(svp[:, 0] / np.maximum(sv[:, -1], 1e-300))
                    if rate > RATE_GUARD:
                        continue  # unsupported fast subspace; redraw
                try:
                    cand = tv.build_split(fam, C)
                except SingularSubspaceError:
                    continue
                if dv > 0 and tv.sup_a_norm(cand) > SUP_A_GUARD:
                    continue
                split = cand
                break
            if split is None:
                raise SingularSubspaceError("could not draw a supported subspace")
            comp = tv._complement_coeffs(split)
            worst = 0.0
            control = 0.0
            for j in range(comp.shape[1]):
                rep = tv.transversal_jacobi_residual(split, comp[:, j])
                worst = max(worst, rep.max_residual)
                control = max(control, rep.extras["control_residual"])
            ident = tv.splitting_identities(split)
            psd = tv.oneill_psd_check(split)
            records.append({
                "manifold": name, "case": b, "dv": split.dv,
                "residual": worst, "control": control,
                "sup_a": tv.sup_a_norm(split),
                "identities": ident.max_residual,
                "psd_min": psd.extras["smallest_eigenvalue"],
                "windows": len(split.windows),
            })
    return {"records": records, "elapsed": time.time() - t_start}


_BATTERY_CACHE = {}


def _cached_battery(seed):
    if seed not in _BATTERY_CACHE:
        _BATTERY_CACHE[seed] = run_battery(seed=seed)
    return _BATTERY_CACHE[seed]


# ---------------------------------------------------------------------------
# criteria


def crit_transversal_residual(seed=0):
    """Randomized transversal-equation battery: residual below tolerance
    outside singular windows, O'Neill control large where A is, within
    the runtime budget."""
    t0 = time.time()
    bat = _cached_battery(seed)
    recs = bat["records"]
    worst = max(r["residual"] for r in recs)
    bad_control = [r for r in recs if r["sup_a"] >= 0.1 and r["control"] < 1e-2]
    n_active = sum(1 for r in recs if r["sup_a"] >= 0.1)
    runtime_ok = bat["elapsed"] <= 60.0
    passed = worst <= 1e-5 and not bad_control and runtime_ok
    lines = [
        f"cases = {len(recs)}",
        f"max_residual = {worst:.12g}",
        "residual_tolerance = 1e-05",
        f"control_active_cases = {n_active}",
        f"control_failures = {len(bad_control)}",
        f"battery_elapsed_s = {bat['elapsed']:.2f}",
        "runtime_budget_s = 60",
    ]
    return CriterionResult(
        "transversal_residual", passed,
        f"max residual {worst:.2e} over {len(recs)} cases, "
        f"{n_active} O'Neill-active, battery {bat['elapsed']:.1f}s",
        lines, time.time() - t0)


def crit_splitting_identities(seed=0):
    """Coupling identities on the same battery, at 1e-6."""
    t0 = time.time()
    bat = _cached_battery(seed)
    recs = bat["records"]
    worst = max(r["identities"] for r in recs)
    psd_min = min(r["psd_min"] for r in recs)
    passed = worst <= 1e-6 and psd_min >= -1e-10
    lines = [
        f"max_identity_residual = {worst:.12g}",
        "identity_tolerance = 1e-06",
        f"oneill_smallest_eigenvalue = {psd_min:.12g}",
    ]
    return CriterionResult(
        "splitting_identities", passed,
        f"max identity residual {worst:.2e}", lines, time.time() - t0)


def _frame_oracle_modified_curvature(eps):
    """Independent frame computation of the modified curvature seen by the
    quotient of the circle-fibration family: horizontal-plane curvature
    plus three times the squared norm of the fiber field's transversal
    derivative, from first principles (explicit Koszul loops)."""
    c = np.zeros((3, 3, 3))
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        c[i, j, k] = 2.0
        c[j, i, k] = -2.0
    gm = np.diag([eps * eps, 1.0, 1.0])
    ig = np.linalg.inv(gm)
    gam = np.zeros((3, 3, 3))
    for i in range(3):
        for j in range(3):
            for l in range(3):
                acc = 0.0
                for m_ in range(3):
                    acc += (c[i, j, m_] * gm[m_, l] - c[j, l, m_] * gm[m_, i]
                            + c[l, i, m_] * gm[m_, j])
                for k in range(3):
                    gam[k, i, j] += 0.5 * ig[k, l] * acc
    def nabla(i, j):
        return gam[:, i, j]

    def nabla_vec(i, w):
        out = np.zeros(3)
        for j in range(3):
            out += w[j] * gam[:, i, j]
        return out

    # R(e2, e3)e3 = D2 D3 e3 - D3 D2 e3 - D_[e2,e3] e3
    e2 = np.array([0.0, 1.0, 0.0])
    term1 = nabla_vec(1, nabla(2, 2))
    term2 = nabla_vec(2, nabla(1, 2))
    bracket = c[1, 2, :]
    term3 = np.zeros(3)
    for m_ in range(3):
        term3 += bracket[m_] * nabla(m_, 2)
    R2332 = (term1 - term2 - term3) @ gm @ e2
    K_horiz = R2332  # |e2| = |e3| = 1
    # A maps the unit fiber vector e1/eps to the transversal part of its
    # derivative along e2
    u = np.array([1.0 / eps, 0.0, 0.0])
    du = nabla_vec(1, u)
    du_perp = du - (du @ gm @ u) * u / (u @ gm @ u)
    a2 = du_perp @ gm @ du_perp
    return float(K_horiz + 3.0 * a2)


def crit_hopf_oneill(seed=0):
    """Modified curvature of the circle-fibration quotient: 4 on the round
    sphere; matches the independent frame oracle across fiber scales."""
    t0 = time.time()
    lines = []
    passed = True
    for eps in (0.6, 0.8, 1.0):
        m = mf.builtin_manifold("berger_sphere", (eps,))
        fol = fo.builtin_foliation("hopf_on_s3", m)
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        path = gd.integrate_geodesic(m, q0, np.array([0.0, 1.0, 0.0]),
                                     np.pi, step=BATTERY_STEP)
        fam = jb.family_from_foliation(path, fol)
        split = tv.build_split(fam, np.array([[1.0], [0.0]]))
        mc = tv.modified_curvature_form(split)[split.valid]
        oracle = _frame_oracle_modified_curvature(eps)
        dev = float(np.max(np.abs(mc - oracle)))
        lines.append(f"eps_{eps:g}.value = {float(np.mean(mc)):.12g}")
        lines.append(f"eps_{eps:g}.oracle = {oracle:.12g}")
        lines.append(f"eps_{eps:g}.deviation = {dev:.12g}")
        ok = dev <= 1e-5
        if eps == 1.0:
            dev4 = float(np.max(np.abs(mc - 4.0)))
            lines.append(f"eps_1.deviation_from_4 = {dev4:.12g}")
            ok = ok and dev4 <= 1e-5
        passed = passed and ok
    return CriterionResult(
        "hopf_oneill", passed,
        "quotient modified curvature matches the frame oracle "
        "(4 on the round sphere)", lines, time.time() - t0)


def _decomposition_cases():
    s2 = mf.builtin_manifold("sphere", (2, 1))
    s3 = mf.builtin_manifold("sphere", (3, 1))
    e1 = mf.builtin_manifold("euclidean", (1,))
    e2 = mf.builtin_manifold("euclidean", (2,))
    e3 = mf.builtin_manifold("euclidean", (3,))
    p1 = mf.builtin_manifold("product", (s2, e1))
    p2 = mf.builtin_manifold("product", (mf.builtin_manifold("sphere", (2, 1)), e2))
    berger = mf.builtin_manifold("berger_sphere", (0.8,))
    round3 = mf.builtin_manifold("berger_sphere", (1.0,))
    cyl = mf.builtin_manifold("cylinder", (1.0,))
    four_pi = 4 * np.pi

    def equator(mm, extra=()):
        x0 = np.array([1.0, 0.0, *extra])
        v0 = np.array([0.0, 1.0] + [0.0] * len(extra))
        return x0, v0

    cases = []
    cases.append(("euclid_translations", e3, np.zeros(3), np.array([1.0, 0, 0]),
                  (-50.0, 50.0), 5e-3, "killing:translations", (0, 2)))
    x0, v0 = equator(s2)
    cases.append(("sphere2_killing", s2, x0, v0, (-four_pi, four_pi), 1e-3,
                  "killing:sphere_rotations", (1, 0)))
    x0, v0 = equator(s3, extra=(0.0,))
    cases.append(("sphere3_conjugate", s3, x0, v0, (-four_pi, four_pi), 1e-3,
                  "foliation:point_foliation", (2, 0)))
    x0, v0 = equator(s2, extra=(0.3,))
    cases.append(("s2xr_slices", p1, x0, v0, (-four_pi, four_pi), 1e-3,
                  "foliation:slice_product", (1, 1)))
    x0, v0 = equator(s2, extra=(0.1, -0.2))
    cases.append(("s2xr2_slices", p2, x0, v0, (-four_pi, four_pi), 1e-3,
                  "foliation:slice_product", (1, 2)))
    for label, mm in (("berger08_hopf", berger), ("round3_hopf", round3)):
        cases.append((label, mm, np.array([1.0, 0, 0, 0]), np.array([0.0, 1.0, 0.0]),
                      (-four_pi, four_pi), 1e-3, "foliation:hopf_on_s3", (2, 0)))
    cases.append(("cylinder_lines", cyl, np.array([0.0, 0.0]), np.array([1.0, 0.0]),
                  (-50.0, 50.0), 5e-3, "foliation:cylinder_lines", (0, 1)))
    return cases


def crit_decomposition(seed=0):
    """Vanishing/parallel decomposition on the nonnegatively curved
    battery, with the known dimension splits."""
    t0 = time.time()
    lines = []
    passed = True
    for (label, m, x0, v0, window, step, build, want) in _decomposition_cases():
        g = m.metric(x0)
        v0 = v0 / np.sqrt(v0 @ g @ v0)
        path = gd.integrate_geodesic(m, x0, v0, window[1], step=step, t0=window[0])
        kind, _, name = build.partition(":")
        if kind == "killing":
            fam = jb.family_from_killing(path, fo.builtin_killing_fields(name, m))
        else:
            fam = jb.family_from_foliation(path, fo.builtin_foliation(name, m))
        rep = dc.verify_decomposition(fam, seed=seed)
        ok = (rep.dims == want and rep.complete
              and rep.span_defect <= 1e-6 and rep.orthogonality_defect <= 1e-6
              and (np.isnan(rep.quotient_riccati_norm)
                   or rep.quotient_riccati_norm <= 1e-5)
              and not rep.inapplicable)
        passed = passed and ok
        lines.append(f"{label}.dims = {rep.dims[0]},{rep.dims[1]} (want {want[0]},{want[1]})")
        lines.append(f"{label}.span_defect = {rep.span_defect:.12g}")
        lines.append(f"{label}.orthogonality_defect = {rep.orthogonality_defect:.12g}")
        lines.append(f"{label}.quotient_riccati = {rep.quotient_riccati_norm:.12g}")
        lines.append(f"{label}.pass = {'true' if ok else 'false'}")
    return CriterionResult(
        "decomposition", passed,
        "vanishing + parallel splits with the expected dimensions",
        lines, time.time() - t0)


def crit_dual_leaf(seed=0):
    """Reachability: full coverage on the positively curved example,
    bracket-generating rank on the circle fibration, confinement in the
    integrable control."""
    t0 = time.time()
    lines = []
    s2 = mf.builtin_manifold("sphere", (2, 1))
    so2 = fo.builtin_foliation("so2_on_sphere", s2)
    cloud = fo.dual_leaf_trace(so2, np.array([1.0, 0.0]), budget=10000, seg_len=1.2)
    rad = fo.covering_radius(cloud, s2.reference_net(2000))
    ok1 = rad <= 0.05 and cloud.budget_used <= 10000
    lines.append(f"so2_covering_radius = {rad:.12g}")
    lines.append(f"so2_segments = {cloud.budget_used}")
    lines.append(f"so2_horizontality = {cloud.max_path_defect:.12g}")

    berger = mf.builtin_manifold("berger_sphere", (1.0,))
    hopf = fo.builtin_foliation("hopf_on_s3", berger)
    rng = np.random.default_rng(seed)
    pts = berger.sample_points(rng, 100)
    ranks = [fo.accessibility_rank(hopf, q, 2) for q in pts]
    ok2 = all(r == 3 for r in ranks)
    lines.append(f"hopf_rank_points = {len(ranks)}")
    lines.append(f"hopf_rank_all_3 = {'true' if ok2 else 'false'}")

    e1 = mf.builtin_manifold("euclidean", (1,))
    prod = mf.builtin_manifold("product", (s2, e1))
    slc = fo.builtin_foliation("slice_product", prod)
    p = np.array([0.4, 0.1, 0.7])
    c2 = fo.dual_leaf_trace(slc, p, budget=300, seg_len=1.0)
    confin = float(np.max(np.abs(c2.points[:, 2] - p[2])))
    ok3 = confin <= 1e-6
    lines.append(f"slice_confinement = {confin:.12g}")

    passed = ok1 and ok2 and ok3
    return CriterionResult(
        "dual_leaf_reachability", passed,
        f"coverage {rad:.3f} (<=0.05), fibration rank 3 at {len(ranks)} points, "
        f"slice confinement {confin:.1e}", lines, time.time() - t0)


def crit_flats(seed=0):
    """Totally geodesic flats on the product catalog, with the negative
    control failing at curvature one."""
    t0 = time.time()
    lines = []
    s2 = mf.builtin_manifold("sphere", (2, 1))
    e2 = mf.builtin_manifold("euclidean", (2,))
    prod = mf.builtin_manifold("product", (s2, e2))
    slc = fo.builtin_foliation("slice_product", prod)
    p = np.array([1.0, 0.0, 0.0, 0.0])
    g = prod.metric(p)
    x = np.array([0.0, 1.0, 0.0, 0.0])
    x = x / np.sqrt(x @ g @ x)
    v = np.array([0.0, 0.0, 1.0, 0.0])
    rep = fo.flat_check(slc, p, x, v, extent=1.0, grid=7)
    lines.extend("product_" + l for l in rep.to_lines())
    ok1 = rep.passed

    cyl = mf.builtin_manifold("cylinder", (1.0,))
    clines = fo.builtin_foliation("cylinder_lines", cyl)
    pc = np.array([0.3, 0.0])
    gc = cyl.metric(pc)
    xc = np.array([1.0, 0.0])
    xc = xc / np.sqrt(xc @ gc @ xc)
    repc = fo.flat_check(clines, pc, xc, np.array([0.0, 1.0]), extent=1.0, grid=7)
    lines.extend("cylinder_" + l for l in repc.to_lines())
    ok2 = repc.passed

    vbad = np.array([1.0, 0.0, 0.0, 0.0])
    vbad = vbad / np.sqrt(vbad @ g @ vbad)
    repn = fo.flat_check(slc, p, x, vbad, extent=1.0, grid=7)
    ok3 = (not repn.passed) and abs(repn.max_sectional - 1.0) <= 1e-6
    lines.append(f"negative_control_sectional = {repn.max_sectional:.12g}")
    lines.append(f"negative_control_failed = {'true' if not repn.passed else 'false'}")

    passed = ok1 and ok2 and ok3
    return CriterionResult(
        "flats", passed,
        "product flats pass; misaligned control fails at curvature 1",
        lines, time.time() - t0)


def _symmetry_suite(m, rng, count, tol):
    worst = 0.0
    pts = m.sample_points(rng, count)
    scale = 1.0
    for x in pts:
        g = m.metric(x)
        vecs = rng.standard_normal((4, m.dim))
        u, v, w, z = vecs
        Rm = lambda a, b, c, d_: float(mf.riemann(m, x, a, b, c) @ g @ d_)
        r1 = Rm(u, v, w, z)
        scale = max(scale, abs(r1))
        worst = max(worst, abs(r1 + Rm(v, u, w, z)))
        worst = max(worst, abs(r1 + Rm(u, v, z, w)))
        worst = max(worst, abs(r1 - Rm(w, z, u, v)))
        bianchi = (mf.riemann(m, x, u, v, w) + mf.riemann(m, x, v, w, u)
                   + mf.riemann(m, x, w, u, v))
        worst = max(worst, float(np.max(np.abs(bianchi))))
    return worst / scale


def crit_infrastructure(seed=0):
    """Curvature symmetries, integrator order, pairing conservation,
    bit-reproducible reports."""
    t0 = time.time()
    lines = []
    rng = np.random.default_rng(seed)
    ok = True

    for name, m in battery_manifolds():
        defect = _symmetry_suite(m, rng, 100, 1e-7)
        lines.append(f"symmetry.{name} = {defect:.12g}")
        ok = ok and defect <= 1e-7
    # finite-difference fallback backend
    s2 = mf.builtin_manifold("sphere", (2, 1))
    fd = mf.ChartManifold(2, s2._metric, domain=s2._domain, label="sphere_fd")
    fd.sample_points = s2.sample_points
    defect_fd = _symmetry_suite(fd, rng, 40, 1e-4)
    lines.append(f"symmetry.sphere_fd = {defect_fd:.12g}")
    ok = ok and defect_fd <= 1e-4

    # nonnegative curvature across the catalog
    floor = np.inf
    for name, m in battery_manifolds():
        pts = m.sample_points(rng, 1000)
        planes = rng.standard_normal((1000, 2, m.dim))
        for x, (u, v) in zip(pts, planes):
            g = m.metric(x)
            gram = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
            if gram < 1e-6 * (u @ g @ u) * (v @ g @ v):
                continue
            floor = min(floor, float(mf.sectional(m, x, u, v)))
    lines.append(f"catalog_sectional_floor = {floor:.12g}")
    ok = ok and floor >= -1e-8

    # integrator order on the sphere chart oracle (equator closed form)
    x0 = np.array([1.0, 0.0])
    v0 = np.array([0.0, 1.0])
    errs = []
    for h in (4e-3, 2e-3):
        path = gd.integrate_geodesic(s2, x0, v0, 2.0, step=h)
        xe, _ = path.evaluate(2.0)
        errs.append(np.linalg.norm(xe - np.array([np.cos(2.0), np.sin(2.0)])))
    ratio = errs[0] / max(errs[1], 1e-300)
    lines.append(f"order_ratio = {ratio:.6g}")
    ok = ok and ratio >= 8.0

    # pairing conservation on a sphere family
    path = gd.integrate_geodesic(s2, x0, v0, 6.0, step=1e-3)
    E = jb.normal_frame(path)
    fam = jb.make_family(path, [(E[path.k0][:, 0], 0.3 * E[path.k0][:, 0])])
    drift = max(float(np.max(np.abs(fam.pairing_at(t) - fam.omega)))
                for t in rng.uniform(0.0, 6.0, 20))
    lines.append(f"pairing_drift = {drift:.12g}")
    ok = ok and drift <= 1e-8

    # bit-identical reports under a fixed seed
    from . import cli
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for sub in ("a", "b"):
            out = os.path.join(tmp, sub)
            code = cli.main([
                "geodesic", "--out", out, "--seed", "7",
                "--set", "manifold.name=sphere(2,1)",
                "--set", "geodesic.start=1, 0",
                "--set", "geodesic.direction=0, 1",
                "--set", "geodesic.length=1.0",
            ])
            outs.append(out)
            ok = ok and code == 0
        same = all(filecmp.cmp(os.path.join(outs[0], f), os.path.join(outs[1], f),
                               shallow=False)
                   for f in ("geodesic_report.txt", "geodesic.csv"))
        lines.append(f"reports_bit_identical = {'true' if same else 'false'}")
        ok = ok and same

    return CriterionResult(
        "infrastructure", ok,
        "symmetries, 4th-order convergence, pairing conservation, "
        "reproducible reports", lines, time.time() - t0)


CRITERIA = [
    ("transversal_residual", crit_transversal_residual),
    ("splitting_identities", crit_splitting_identities),
    ("hopf_oneill", crit_hopf_oneill),
    ("decomposition", crit_decomposition),
    ("dual_leaf_reachability", crit_dual_leaf),
    ("flats", crit_flats),
    ("infrastructure", crit_infrastructure),
]


def run_all(seed=0, jobs=1, only=None):
    """Run the acceptance criteria; deterministic result order."""
    todo = [(n, f) for n, f in CRITERIA if only is None or n in only]
    results = {}
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {n: pool.submit(f, seed) for n, f in todo}
            for n, fut in futs.items():
                results[n] = fut.result()
    else:
        for n, f in todo:
            results[n] = f(seed)
    return [results[n] for n, _ in todo]
