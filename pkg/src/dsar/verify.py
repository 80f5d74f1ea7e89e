"""Self-verification suites behind ``dsar verify``.

Each suite returns a JSON-ready report with one entry per check: its
measured value, the threshold it was compared against and a pass flag.
Reports contain no timings, so two runs with the same seed are identical
regardless of thread count.
"""

from __future__ import annotations

import numpy as np

from dsar import canonical as cn
from dsar.forward import GridAxes, ScenarioParams, Scene, linearized_forward, oracle_grid
from dsar.geometry import CircularPath, LinearPath, range_only, range_state, trajectory_state
from dsar.imaging import backproject_points

SUITES = ("identities", "jacobian", "oracle", "sigma", "classification", "injectivity", "fibers", "adjoint")

DEFAULT_PARAMS = ScenarioParams(2 * np.pi * 1e3, 100.0, 100.0)

# Outside the injectivity region: h < 1 and a v-range straddling the
# maximum of Rddot at sinh v = h.
COUNTEREXAMPLE = {"rho": 1.0, "h": 0.5, "u": 0.0, "v_interval": [-3.0, 3.0], "n_samples": 1000}


def _check(name, value, threshold, passed, **extra):
    d = {"name": name, "value": float(value), "threshold": float(threshold), "passed": bool(passed)}
    d.update(extra)
    return d


def _report(suite, seed, checks):
    return {"suite": suite, "seed": seed, "passed": all(c["passed"] for c in checks), "checks": checks}


def random_linear_path(rng):
    return LinearPath(float(rng.uniform(0.3, 3.0)))


def random_circular_path(rng):
    return CircularPath(float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.3, 2.5)))


def identity_residuals(traj, x, s):
    """Relative residuals of the four range identities at arrays of samples.

    * ``Rdot + Rhat . gamma'``
    * ``grad Rdot + J* P gamma'``
    * ``Rddot grad R + 2 Rdot grad Rdot + R grad Rddot + J* gamma''``
    * ``Rdddot grad R + 3 Rddot grad Rdot + 3 Rdot grad Rddot + R grad Rdddot + J* gamma'''``

    The last two reduce to vanishing sums for the straight path.
    """
    st = range_state(traj, x, s)
    rv = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], -1) - trajectory_state(traj, s, 0)
    R = np.linalg.norm(rv, axis=-1)
    rhat = rv / R[..., None]
    g1, g2, g3 = (trajectory_state(traj, s, k) for k in (1, 2, 3))
    speed = np.linalg.norm(g1, axis=-1)

    f1 = np.abs(st.Rdot + (rhat * g1).sum(-1)) / speed

    pg = (g1 - rhat * (rhat * g1).sum(-1)[..., None]) / R[..., None]
    # |P gamma'| <= speed / R bounds every term of the second identity.
    f4 = np.linalg.norm(st.gradRdot + pg[..., :2], axis=-1) / (speed / R)

    def rel(terms):
        total = sum(terms)
        mag = sum(np.linalg.norm(t, axis=-1) for t in terms)
        # all terms vanishing (e.g. directly under a straight track) is an exact zero
        return np.linalg.norm(total, axis=-1) / np.where(mag > 0, mag, 1.0)

    n = lambda a: a[..., None]
    s2 = rel([n(st.Rddot) * st.gradR, 2 * n(st.Rdot) * st.gradRdot, n(st.R) * st.gradRddot, g2[..., :2]])
    s3 = rel(
        [
            n(st.Rdddot) * st.gradR,
            3 * n(st.Rddot) * st.gradRdot,
            3 * n(st.Rdot) * st.gradRddot,
            n(st.R) * st.gradRdddot,
            g3[..., :2],
        ]
    )
    return f1, f4, s2, s3


def suite_identities(seed=0, threads=1, n=1000):
    rng = np.random.default_rng(seed)
    checks = []
    for label, make in (("linear", random_linear_path), ("circular", random_circular_path)):
        worst = np.zeros(4)
        for _ in range(n):
            traj = make(rng)
            x = rng.uniform(-5, 5, 2)
            s = rng.uniform(-np.pi, np.pi)
            worst = np.maximum(worst, [float(r) for r in identity_residuals(traj, x, s)])
        for name, w in zip(("Rdot_identity", "gradRdot_identity", "second_sum", "third_sum"), worst):
            checks.append(_check(f"{label}/{name}", w, 1e-10, w < 1e-10))
    return _report("identities", seed, checks)


def suite_jacobian(seed=0, threads=1, n=1000):
    rng = np.random.default_rng(seed)
    P = DEFAULT_PARAMS
    worst, zero_fd, zero_cf, lr = 0.0, 0.0, 0.0, 0.0
    for _ in range(n):
        traj = random_linear_path(rng)
        s, tau = rng.uniform(-2, 2), rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        x2 = rng.uniform(0.1, 3.0) * rng.choice([-1, 1])
        x = np.array([rng.uniform(-3, 3), x2])
        closed = cn.linear_det_closed_form(traj, s, tau, x, P)
        fd = np.linalg.det(cn.right_block_fd(traj, s, tau, x, P))
        worst = max(worst, abs(fd - closed) / abs(closed))
        lr = max(lr, abs(np.linalg.det(cn.left_block_fd(traj, s, tau, x, P)) + closed) / abs(closed))
        x0 = np.array([x[0], 0.0])
        scale = float(cn.local_det_scale(traj, s, tau, x0, P))
        zero_fd = max(zero_fd, abs(np.linalg.det(cn.right_block_fd(traj, s, tau, x0, P))) / scale)
        zero_cf = max(zero_cf, abs(cn.linear_det_closed_form(traj, s, tau, x0, P)) / scale)
    checks = [
        _check("closed_form_vs_fd", worst, 1e-5, worst < 1e-5),
        _check("left_equals_minus_right", lr, 1e-5, lr < 1e-5),
        _check("fd_det_on_sigma", zero_fd, 1e-6, zero_fd < 1e-6),
        _check("closed_form_det_on_sigma", zero_cf, 1e-6, zero_cf < 1e-6),
    ]
    return _report("jacobian", seed, checks)


def oracle_error(threads=1, x=(0.5, 2.0), n=64):
    P = DEFAULT_PARAMS
    traj = LinearPath(1.0)
    half = 2.5 * traj.speed / P.c0 * P.omega0
    axes = GridAxes.from_ranges(-2.0, 2.0, n, P.omega0 - half, P.omega0 + half, n, endpoint_s=True)
    scene = Scene([x], [1.0])
    lin = linearized_forward(traj, scene, P, axes, threads=threads)
    orc = oracle_grid(traj, scene, P, axes, threads=threads)
    return float(np.linalg.norm(lin.values - orc.values) / np.linalg.norm(orc.values))


def suite_oracle(seed=0, threads=1):
    err = oracle_error(threads)
    return _report("oracle", seed, [_check("relative_l2_start_stop_vs_oracle", err, 1e-2, err < 1e-2)])


def sigma_checks(circ: CircularPath, rng, n=1000):
    P = DEFAULT_PARAMS
    h = circ.h
    pts = cn.sample_sigma_curve(h, n)
    s = rng.uniform(0, 2 * np.pi, n)
    x = cn.pq_to_ground(circ, s, pts[:, 0], pts[:, 1])
    on = float(np.max(np.abs(cn.left_det_fd(circ, s, 1.0, x, P)) / cn.local_det_scale(circ, s, 1.0, x, P)))
    grad_min = float(np.min(np.linalg.norm(cn.g_tilde_grad(h, pts[:, 0], pts[:, 1]), axis=1)))

    pq = rng.uniform(-3, 3, (4 * n, 2))
    s2 = rng.uniform(0, 2 * np.pi, 4 * n)
    gt = cn.g_tilde(h, pq[:, 0], pq[:, 1])
    far = np.abs(gt) > 0.1 * cn.g_tilde_scale(h, pq[:, 0], pq[:, 1])
    pq, s2 = pq[far][:n], s2[far][:n]
    x2 = cn.pq_to_ground(circ, s2, pq[:, 0], pq[:, 1])
    off = float(np.min(np.abs(cn.left_det_fd(circ, s2, 1.0, x2, P)) / cn.local_det_scale(circ, s2, 1.0, x2, P)))

    p0 = cn.sigma11_root(h)
    x0 = cn.pq_to_ground(circ, 0.3, p0, 0.0)
    dg_dp = float(cn.g_tilde_grad(h, p0, 0.0)[0])
    gs_root = abs(float(cn.g_s(circ, 0.3, x0)))
    gs_scale = 3 * circ.rho * (h**2 + p0**2) * circ.rho * (1 + p0)
    qs = np.abs(pts[:, 1])
    away = qs > 1e-3
    gs_away = float(np.min(np.abs(cn.g_s(circ, s[away], x[away])) / (circ.rho**2 * qs[away])))
    gss = abs(float(cn.g_ss(circ, 0.3, x0)))
    return [
        _check("fd_det_on_sigma_samples", on, 1e-6, on < 1e-6),
        _check("fd_det_off_sigma", off, 1e-3, off > 1e-3),
        _check("min_grad_g_tilde", grad_min, 0.0, grad_min > 0),
        _check("sigma11_root_p_minus_h2", abs(p0 - h**2), 1e-12, abs(p0 - h**2) < 1e-12),
        _check("dg_dp_at_sigma11", abs(dg_dp), 0.0, abs(dg_dp) > 0),
        _check("g_s_at_sigma11", gs_root / gs_scale, 1e-12, gs_root / gs_scale < 1e-12),
        _check("g_s_over_q_away_from_q0", gs_away, 0.0, gs_away > 0),
        _check("g_ss_at_sigma11", gss, 0.0, gss > 0),
    ]


def suite_sigma(seed=0, threads=1, n=1000):
    rng = np.random.default_rng(seed)
    checks = []
    for circ in (CircularPath(1.0, 1.0), CircularPath(2.0, 0.6), CircularPath(1.5, 1.8)):
        tag = f"rho={circ.rho:g},h={circ.h:g}"
        checks += [dict(c, name=f"{tag}/{c['name']}") for c in sigma_checks(circ, rng, n)]
    return _report("sigma", seed, checks)


def classification_cases(rng, n=20):
    """Yield ``(case, traj, params, chart_point, projection, model, expected)``."""
    P = DEFAULT_PARAMS
    for model in ("start-stop", "corrected"):
        for _ in range(n):
            traj = random_linear_path(rng)
            c = [rng.uniform(-2, 2), rng.uniform(0.5, 2) * rng.choice([-1, 1]), rng.uniform(-3, 3), 0.0]
            yield f"linear/{model}/left", traj, P, c, "left", model, "fold"
            yield f"linear/{model}/right", traj, P, c, "right", model, "blowdown"
    for _ in range(n):
        circ = random_circular_path(rng)
        pts = cn.sample_sigma_curve(circ.h, 400, step=0.01)
        p, q = pts[rng.integers(1, len(pts))]
        s = rng.uniform(0, 2 * np.pi)
        uv = cn.uv_coordinates(circ, s, cn.pq_to_ground(circ, s, p, q))
        c = [s, rng.uniform(0.5, 2) * rng.choice([-1, 1]), float(uv.u), float(uv.v)]
        yield "circular/sigma1/left", circ, P, c, "left", "start-stop", "fold"
    for _ in range(n):
        circ = random_circular_path(rng)
        s = rng.uniform(0, 2 * np.pi)
        v = float(np.arcsinh(cn.sigma11_root(circ.h) / circ.h))
        c = [s, rng.uniform(0.5, 2) * rng.choice([-1, 1]), 0.0, v]
        yield "circular/sigma11/right", circ, P, c, "right", "start-stop", "cusp"


def suite_classification(seed=0, threads=1, n=20):
    rng = np.random.default_rng(seed)
    tallies = {}
    for case, traj, P, c, proj, model, expected in classification_cases(rng, n):
        got = cn.classify_singularity(traj, P, c, proj, model).label
        t = tallies.setdefault(case, {"n": 0, "wrong": 0, "expected": expected})
        t["n"] += 1
        t["wrong"] += got != expected
    checks = [
        _check(f"{case}->{t['expected']}", t["wrong"], 0, t["wrong"] == 0 and t["n"] >= n, samples=t["n"])
        for case, t in sorted(tallies.items())
    ]
    return _report("classification", seed, checks)


def suite_injectivity(seed=0, threads=1, n_slices=10, n_per_slice=1000):
    rng = np.random.default_rng(seed)
    collisions, disagreements, total, outside = 0, 0, 0, 0
    for _ in range(n_slices):
        circ = CircularPath(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.3, 2.5)))
        u = float(rng.uniform(-0.95, 0.95))
        vmax = cn.inj_v_max(circ)
        v_hi = vmax - 1e-9
        rep = cn.brute_force_injectivity(circ, u, (vmax - 5.0, v_hi), n_per_slice)
        outside += int(np.sum(~cn.inj_condition(circ, np.linspace(vmax - 5.0, v_hi, n_per_slice))))
        total += rep.n_samples
        collisions += (not rep.injective) or rep.collision is not None
        disagreements += not rep.predicate_agrees
    ce = COUNTEREXAMPLE
    rep = cn.brute_force_injectivity(
        CircularPath(ce["rho"], ce["h"]), ce["u"], ce["v_interval"], ce["n_samples"]
    )
    found = rep.collision is not None
    checks = [
        _check("samples_violating_inj_condition", outside, 0, outside == 0),
        _check("collisions_under_inj_condition", collisions, 0, collisions == 0, samples=total),
        _check("predicate_disagreements", disagreements, 0, disagreements == 0),
        _check("counterexample_collision_found", float(found), 1, found),
        _check(
            "counterexample_collision_gap",
            rep.collision_gap if found else np.inf,
            1e-12,
            found and rep.collision_gap < 1e-12,
        ),
    ]
    return _report("injectivity", seed, checks)


def fiber_checks(rng, n_targets=20):
    P = DEFAULT_PARAMS
    lin = LinearPath(1.0)
    x = np.array([0.3, 0.8])
    cp = cn.canonical_lift(lin, 0.2, 1.0, x, P)
    full = cn.left_fiber_search(lin, P, 0.2, cp.omega, cp.sigma, 1.0, (-3, 3, -3, 3), 200)
    half = cn.left_fiber_search(lin, P, 0.2, cp.omega, cp.sigma, 1.0, (-3, 3, 0.01, 3), 200)
    mirror_ok = len(full) == 2 and any(np.allclose(f, [0.3, -0.8], atol=1e-9) for f in full)
    single_ok = len(half) == 1 and np.allclose(half[0], x, atol=1e-9)

    pairs, worst = 0, np.inf
    for k in range(n_targets):
        s = float(rng.uniform(0, 2 * np.pi))
        if k % 2 == 0:
            circ = CircularPath(1.0, 1.0)
            xt = rng.uniform(-3, 3, 2)
        else:
            # Low orbit, targets spread in v across the fold of Rddot.
            circ = CircularPath(1.0, 0.5)
            xt = cn.uv_to_ground(circ, s, rng.uniform(-0.6, 0.6), rng.uniform(-1.0, 2.0))
        cp = cn.canonical_lift(circ, s, 1.0, xt, P)
        fib = cn.left_fiber_search(circ, P, s, float(cp.omega), float(cp.sigma), 1.0, (-4, 4, -4, 4), 300)
        R = [float(range_only(circ, f, s)) for f in fib]
        for i in range(len(fib)):
            for j in range(i + 1, len(fib)):
                pairs += 1
                worst = min(worst, abs(R[i] - R[j]) / R[i])
    return [
        _check("linear_mirror_pair", float(mirror_ok), 1, mirror_ok),
        _check("linear_half_plane_singleton", float(single_ok), 1, single_ok),
        _check("circular_min_relative_range_gap", worst, 1e-6, pairs > 0 and worst > 1e-6, pairs=pairs),
    ]


def suite_fibers(seed=0, threads=1):
    return _report("fibers", seed, fiber_checks(np.random.default_rng(seed)))


def adjoint_gap(rng, traj, P, model="start-stop", threads=1):
    n_pts = 3
    pts = rng.uniform(-1.5, 1.5, (n_pts, 2)) + np.array([0.0, 0.2])
    amps = rng.normal(size=n_pts) + 1j * rng.normal(size=n_pts)
    half = 2.5 * traj.speed / P.c0 * P.omega0
    if traj.kind == "circular":
        axes = GridAxes.from_ranges(0.0, 2 * np.pi, 24, P.omega0 - half, P.omega0 + half, 16)
    else:
        axes = GridAxes.from_ranges(-1.5, 1.5, 24, P.omega0 - half, P.omega0 + half, 16)
    fwd = linearized_forward(traj, Scene(pts, amps), P, axes, model)
    W = rng.normal(size=fwd.values.shape) + 1j * rng.normal(size=fwd.values.shape)
    data = axes.grid(W, model, P, traj.to_dict())
    lhs = np.vdot(fwd.values, W) * axes.ds * axes.domega
    bp = backproject_points(data, traj, P, pts, threads=threads)
    rhs = np.vdot(amps, bp)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


def suite_adjoint(seed=0, threads=1):
    rng = np.random.default_rng(seed)
    checks = []
    for traj, P in ((LinearPath(1.0), DEFAULT_PARAMS), (CircularPath(1.0, 1.0), ScenarioParams(20.0, 20.0, 10.0))):
        for model in ("start-stop", "corrected"):
            gap = adjoint_gap(rng, traj, P, model, threads)
            checks.append(_check(f"{traj.kind}/{model}", gap, 1e-8, gap < 1e-8))
    return _report("adjoint", seed, checks)


_SUITE_FUNCS = {
    "identities": suite_identities,
    "jacobian": suite_jacobian,
    "oracle": suite_oracle,
    "sigma": suite_sigma,
    "classification": suite_classification,
    "injectivity": suite_injectivity,
    "fibers": suite_fibers,
    "adjoint": suite_adjoint,
}


def run_suite(name: str, seed: int = 0, threads: int = 1) -> dict:
    if name == "all":
        reports = [run_suite(n, seed, threads) for n in SUITES]
        return {"suite": "all", "seed": seed, "passed": all(r["passed"] for r in reports), "suites": reports}
    if name not in _SUITE_FUNCS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    return _SUITE_FUNCS[name](seed=seed, threads=threads)
