"""Canonical relation of the DSAR transform and its degeneracies.

The kernel phase is ``phi = tau (omega - omega0 + 2 omega0 D(s, x))`` with
``D`` the model's Doppler term (see :func:`dsar.forward.doppler_terms`).
Its critical set is parametrised by ``(s, tau, x)``::

    omega = omega0 (1 - 2 D),   sigma = 2 omega0 tau Ddot,   xi = -2 omega0 tau grad D.

The left projection sends this to ``(s, omega, sigma, tau)`` and the right
projection to ``(x, xi)``. Both Jacobians reduce to 2x2 blocks whose
determinants agree up to sign, so they share the degeneracy locus Sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from dsar.errors import ChartError
from dsar.forward import MODELS, ScenarioParams, doppler_terms
from dsar.geometry import CircularPath, LinearPath, Trajectory, range_state, unit_vectors

CHART_TOL = 1e-9
DET_TOL = 1e-6
CORANK_TOL = 1e-6
FOLD_TOL = 1e-4
CUSP_TOL = 1e-4


# ---------------------------------------------------------------------------
# Lift and projection determinants
# ---------------------------------------------------------------------------


@dataclass
class CanonicalPoint:
    s: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    model: str = "start-stop"


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau == 0) or not np.all(np.isfinite(tau)):
        raise ValueError("tau must be finite and nonzero")
    return tau


def canonical_lift(traj, s, tau, x, params: ScenarioParams, model="start-stop") -> CanonicalPoint:
    """Point of the canonical relation over ``(s, tau, x)``."""
    tau = _check_tau(tau)
    x = np.asarray(x, dtype=float)
    D, Ddot, gD, _, _ = doppler_terms(traj, x, s, params, model)
    w0 = params.omega0
    omega = w0 * (1.0 - 2.0 * D)
    sigma = 2.0 * w0 * tau * Ddot
    xi = -2.0 * w0 * np.asarray(tau)[..., None] * gD
    s_b = np.broadcast_to(np.asarray(s, dtype=float), omega.shape)
    tau_b = np.broadcast_to(tau, omega.shape)
    return CanonicalPoint(s_b, omega, sigma, tau_b, x, xi, model)


def _det2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def right_projection_det(traj, s, tau, x, params, model="start-stop"):
    """``det[d xi/d tau, d xi/d s] = 4 omega0**2 tau det[grad D, grad Ddot]``.

    Columns are ordered ``(tau, s)``; with ``tau > 0`` this is positive on
    the ``x2 > 0`` side of a linear track.
    """
    tau = _check_tau(tau)
    _, _, gD, gDdot, _ = doppler_terms(traj, x, s, params, model)
    return 4.0 * params.omega0**2 * tau * _det2(gD, gDdot)


def left_projection_det(traj, s, tau, x, params, model="start-stop"):
    """``det[grad omega; grad sigma]``; equals ``-right_projection_det``."""
    tau = _check_tau(tau)
    _, _, gD, gDdot, _ = doppler_terms(traj, x, s, params, model)
    w0 = params.omega0
    return _det2(-2.0 * w0 * gD, 2.0 * w0 * np.asarray(tau)[..., None] * gDdot)


def linear_det_closed_form(traj: LinearPath, s, tau, x, params):
    """``4 omega0**2 tau x2 (x2**2 + h**2) / (c0**2 R**6)``, valid for both models."""
    x = np.asarray(x, dtype=float)
    R = range_state(traj, x, s).R
    x2 = x[..., 1]
    return 4.0 * params.omega0**2 * tau * x2 * (x2**2 + traj.h**2) / (params.c0**2 * R**6)


def fd_jacobian(fun: Callable, point, step=None) -> np.ndarray:
    """Fourth-order central-difference Jacobian of a vector function."""
    point = np.asarray(point, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(point), dtype=float))
    jac = np.empty((f0.size, point.size))
    for j in range(point.size):
        h = step if step is not None else 1e-3 * (1.0 + abs(point[j]))
        e = np.zeros_like(point)
        e[j] = h
        fp1, fm1 = fun(point + e), fun(point - e)
        fp2, fm2 = fun(point + 2 * e), fun(point - 2 * e)
        jac[:, j] = (-np.asarray(fp2) + 8 * np.asarray(fp1) - 8 * np.asarray(fm1) + np.asarray(fm2)) / (12 * h)
    return jac


def fd_gradient(fun: Callable, point, step=None) -> np.ndarray:
    return fd_jacobian(lambda p: np.atleast_1d(fun(p)), point, step)[0]


def right_block_fd(traj, s, tau, x, params, model="start-stop"):
    """Finite-difference Jacobian of ``xi`` with respect to ``(tau, s)``."""

    def xi(p):
        return canonical_lift(traj, p[1], p[0], x, params, model).xi

    return fd_jacobian(xi, np.array([tau, s], dtype=float))


def left_block_fd(traj, s, tau, x, params, model="start-stop", step=None):
    """Finite-difference Jacobian of ``(omega, sigma)`` with respect to ``x``.

    Vectorised over ``x`` of shape ``(..., 2)``; returns ``(..., 2, 2)`` with
    rows ``(omega, sigma)`` and columns ``(x1, x2)``.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = 1e-3 * (1.0 + np.abs(x))
    step = np.broadcast_to(step, x.shape)
    jac = np.empty(x.shape[:-1] + (2, 2))
    for j in range(2):
        e = np.zeros_like(x)
        e[..., j] = step[..., j]
        acc = 0.0
        for k, w in ((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0)):
            cp = canonical_lift(traj, s, tau, x + k * e, params, model)
            acc = acc + w * np.stack([cp.omega, cp.sigma], axis=-1)
        jac[..., :, j] = acc / (12.0 * step[..., j][..., None])
    return jac


def left_det_fd(traj, s, tau, x, params, model="start-stop"):
    return np.linalg.det(left_block_fd(traj, s, tau, x, params, model))


def local_det_scale(traj, s, tau, x, params, model="start-stop", radius=None):
    """Largest ``|det|`` of the left block on a ring of 8 points around ``x``.

    The default radius is 5% of ``rho (1 + |(p, q)|)`` for a circle and
    ``0.05 (h + |x2|)`` for a line.
    """
    x = np.asarray(x, dtype=float)
    if radius is None:
        if isinstance(traj, CircularPath):
            pq = pq_coordinates(traj, s, x)
            radius = 0.05 * traj.rho * (1.0 + np.hypot(pq.p, pq.q))
        else:
            radius = 0.05 * (traj.h + np.abs(x[..., 1]))
    radius = np.asarray(radius, dtype=float)[..., None]
    best = np.zeros(x.shape[:-1])
    for a in np.arange(8) * np.pi / 4:
        y = x + radius * np.array([np.cos(a), np.sin(a)])
        best = np.maximum(best, np.abs(left_det_fd(traj, s, tau, y, params, model)))
    return best


# ---------------------------------------------------------------------------
# Circular-path coordinates
# ---------------------------------------------------------------------------


@dataclass
class UVCoords:
    u: np.ndarray
    v: np.ndarray

    @property
    def S(self):
        return np.sinh(self.v)

    @property
    def C(self):
        return np.cosh(self.v)


@dataclass
class PQCoords:
    p: np.ndarray
    q: np.ndarray


def _require_circular(traj):
    if not isinstance(traj, CircularPath):
        raise TypeError("this operation needs a CircularPath")


def pq_coordinates(circ: CircularPath, s, x) -> PQCoords:
    """``p = (x - rho e).e / rho``, ``q = x.e_perp / rho``."""
    _require_circular(circ)
    x = np.asarray(x, dtype=float)
    e, ep = unit_vectors(s)
    p = (x * e).sum(-1) / circ.rho - 1.0
    q = (x * ep).sum(-1) / circ.rho
    return PQCoords(p, q)


def pq_to_ground(circ: CircularPath, s, p, q):
    e, ep = unit_vectors(s)
    p, q = np.asarray(p, float)[..., None], np.asarray(q, float)[..., None]
    return circ.rho * ((1.0 + p) * e + q * ep)


def uv_coordinates(circ: CircularPath, s, x, tol=CHART_TOL) -> UVCoords:
    """``u = -Rdot/rho`` and ``v = asinh(p/h)``."""
    pq = pq_coordinates(circ, s, x)
    h = circ.h
    u = pq.q / np.sqrt(pq.p**2 + pq.q**2 + h**2)
    if np.any(np.abs(u) >= 1.0 - tol):
        raise ChartError(f"point lies on |u| = 1 to within {tol:g}; outside the (u, v) chart")
    return UVCoords(u, np.arcsinh(pq.p / h))


def uv_to_ground(circ: CircularPath, s, u, v, tol=CHART_TOL):
    _require_circular(circ)
    u, v = np.asarray(u, float), np.asarray(v, float)
    if np.any(np.abs(u) >= 1.0 - tol):
        raise ChartError("|u| must stay below 1")
    p = circ.h * np.sinh(v)
    q = circ.h * u * np.cosh(v) / np.sqrt(1.0 - u**2)
    return pq_to_ground(circ, s, p, q)


def range_uv(circ: CircularPath, u, v):
    return circ.rho * circ.h * np.cosh(v) / np.sqrt(1.0 - np.asarray(u) ** 2)


def rddot_uv(circ: CircularPath, u, v):
    """``Rddot = rho sqrt(1-u**2) (1 + h S - u**2) / (h C)``."""
    _require_circular(circ)
    u, v = np.asarray(u, float), np.asarray(v, float)
    if np.any(np.abs(u) >= 1.0):
        raise ValueError("rddot_uv needs |u| < 1")
    h = circ.h
    return circ.rho * np.sqrt(1.0 - u**2) * (1.0 + h * np.sinh(v) - u**2) / (h * np.cosh(v))


def f_uv(circ: CircularPath, u, v):
    """``f = h**2 + (u**2 - 1) h S``; vanishes exactly where ``dRddot/dv`` does."""
    h = circ.h
    return h**2 + (np.asarray(u) ** 2 - 1.0) * h * np.sinh(v)


def drddot_dv(circ: CircularPath, u, v):
    h = circ.h
    return circ.rho * np.sqrt(1.0 - np.asarray(u) ** 2) * f_uv(circ, u, v) / (h**2 * np.cosh(v) ** 2)


# ---------------------------------------------------------------------------
# The degeneracy locus
# ---------------------------------------------------------------------------


def g_tilde(h, p, q):
    """Cubic defining function ``p**3 - h**2 (p**2 + q**2) + h**2 p - h**4``."""
    return p**3 - h**2 * (p**2 + q**2) + h**2 * p - h**4


def g_tilde_grad(h, p, q):
    return np.stack([3 * p**2 - 2 * h**2 * p + h**2, -2 * h**2 * q * np.ones_like(p)], axis=-1)


def g_tilde_scale(h, p, q):
    """Sum of term magnitudes of ``g_tilde``; used to make tolerances relative."""
    return np.abs(p) ** 3 + h**2 * (p**2 + q**2) + h**2 * np.abs(p) + h**4


def g_tilde_s(h, p, q):
    """``d g_tilde / ds`` at fixed ground point: ``3 q (p**2 + h**2)``."""
    return 3.0 * q * (p**2 + h**2)


def g_tilde_s_grad(h, p, q):
    return np.stack([6 * p * q, 3 * (p**2 + h**2) * np.ones_like(p)], axis=-1)


def g_s(circ: CircularPath, s, x):
    """``-3 rho (h**2 + p**2) (x . e_perp)``, i.e. the s-derivative of ``-rho**2 g_tilde``."""
    pq = pq_coordinates(circ, s, x)
    _, ep = unit_vectors(s)
    return -3.0 * circ.rho * (circ.h**2 + pq.p**2) * (np.asarray(x) * ep).sum(-1)


def g_ss(circ: CircularPath, s, x):
    """Second s-derivative of ``-rho**2 g_tilde`` at fixed ground point."""
    pq = pq_coordinates(circ, s, x)
    p, q, h = pq.p, pq.q, circ.h
    # d/ds p = q, d/ds q = -(1 + p)
    d2 = 6 * p * q * q - 3 * (p**2 + h**2) * (1 + p)
    return -circ.rho**2 * d2


@dataclass
class SigmaReport:
    value: float
    member: bool
    stratum: str
    uv: Optional[UVCoords] = None
    pq: Optional[PQCoords] = None
    f: Optional[float] = None
    g_tilde: Optional[float] = None
    g_s: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"value": float(self.value), "member": bool(self.member), "stratum": self.stratum}
        if self.uv is not None:
            d.update(
                u=float(self.uv.u), v=float(self.uv.v), p=float(self.pq.p), q=float(self.pq.q),
                f=float(self.f), g_tilde=float(self.g_tilde), g_s=float(self.g_s),
            )
        return d


def sigma_evaluate(traj: Trajectory, s, x, tol=1e-8) -> SigmaReport:
    """Membership of ``x`` (at slow time ``s``) in the degeneracy locus.

    Linear path: defining function ``x2``. Circular path: ``g_tilde(p, q)``
    with the stratum ``Sigma_11`` where additionally ``q = 0``. Tolerances
    are relative to the local term scale.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(traj, LinearPath):
        val = float(x[1])
        member = abs(val) <= tol * (1.0 + abs(x[0]))
        return SigmaReport(val, member, "Sigma_1" if member else "regular")
    _require_circular(traj)
    uv = uv_coordinates(traj, s, x)
    pq = pq_coordinates(traj, s, x)
    h = traj.h
    gt = float(g_tilde(h, pq.p, pq.q))
    member = abs(gt) <= tol * float(g_tilde_scale(h, pq.p, pq.q))
    stratum = "regular"
    if member:
        on_q0 = abs(float(pq.q)) <= tol * (1.0 + abs(float(pq.p)))
        stratum = "Sigma_11" if on_q0 else "Sigma_1"
    return SigmaReport(
        gt, member, stratum, uv, pq, float(f_uv(traj, uv.u, uv.v)), gt, float(g_s(traj, s, x))
    )


def sigma11_root(h: float, xtol=1e-15) -> float:
    """The real root of ``g_tilde(p, 0) = (p - h**2)(p**2 + h**2)`` by bisection."""
    f = lambda p: g_tilde(h, p, 0.0)
    return optimize.bisect(f, 0.0, h**2 + 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=400)


def _correct_onto_sigma(h, p, q, iters=30):
    for _ in range(iters):
        g = g_tilde(h, p, q)
        gr = g_tilde_grad(h, p, q)
        n2 = gr[0] ** 2 + gr[1] ** 2
        p, q = p - g * gr[0] / n2, q - g * gr[1] / n2
        if abs(g_tilde(h, p, q)) <= 1e-15 * g_tilde_scale(h, p, q):
            break
    return p, q


def sample_sigma_curve(h: float, n: int, step: float = 0.01):
    """Predictor-corrector continuation along ``{g_tilde = 0}`` from the ``q = 0`` root.

    Returns ``n`` points ``(p, q)`` alternating between the ``q > 0`` and
    ``q < 0`` branches (the curve is symmetric in ``q``).
    """
    p0 = sigma11_root(h)
    pts = [(p0, 0.0)]
    branches = []
    for sign in (1.0, -1.0):
        p, q = p0, 0.0
        out = []
        for _ in range((n + 1) // 2):
            gr = g_tilde_grad(h, p, q)
            t = np.array([-gr[1], gr[0]]) / np.hypot(gr[0], gr[1])
            if t[1] * sign < 0:
                t = -t
            p, q = _correct_onto_sigma(h, p + step * t[0], q + step * t[1])
            out.append((p, q))
        branches.append(out)
    for a, b in zip(*branches):
        pts.extend([a, b])
    return np.array(pts[:n])


def sigma_ground_points(circ: CircularPath, s, pq_points):
    pq_points = np.asarray(pq_points, dtype=float)
    return pq_to_ground(circ, s, pq_points[:, 0], pq_points[:, 1])


# ---------------------------------------------------------------------------
# Singularity classification
# ---------------------------------------------------------------------------


def chart_to_ground(traj, c):
    """Ground point of a chart point ``(s, tau, x1, x2)`` or ``(s, tau, u, v)``."""
    if isinstance(traj, CircularPath):
        return uv_to_ground(traj, c[0], c[2], c[3])
    return np.array([c[2], c[3]], dtype=float)


def projection_map(traj, params, projection, model="start-stop"):
    if projection not in ("left", "right"):
        raise ValueError(f"projection must be 'left' or 'right', got {projection!r}")

    def fmap(c):
        x = chart_to_ground(traj, c)
        cp = canonical_lift(traj, c[0], c[1], x, params, model)
        if projection == "left":
            return np.array([c[0], cp.omega, cp.sigma, c[1]])
        return np.concatenate([x, cp.xi])

    return fmap


def projection_det_function(traj, params, projection, model="start-stop"):
    """Reduced determinant (left or right block) pulled back to the chart.

    It differs from the determinant of the full chart Jacobian only by the
    nonvanishing chart Jacobian, so it has the same zero set and vanishes to
    the same order.
    """
    det = left_projection_det if projection == "left" else right_projection_det

    def fdet(c):
        x = chart_to_ground(traj, c)
        return float(det(traj, c[0], c[1], x, params, model))

    return fdet


@dataclass
class Classification:
    label: str
    singular_values: list = field(default_factory=list)
    kernel: list = field(default_factory=list)
    fold_pairing: float = float("nan")
    cusp_pairing: float = float("nan")
    neighbour_pairings: list = field(default_factory=list)
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "singular_values": [float(v) for v in self.singular_values],
            "kernel": [float(v) for v in self.kernel],
            "fold_pairing": _finite_or_none(self.fold_pairing),
            "cusp_pairing": _finite_or_none(self.cusp_pairing),
            "neighbour_pairings": [float(v) for v in self.neighbour_pairings],
            "reason": self.reason,
        }


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def _kernel(fmap, c):
    jac = fd_jacobian(fmap, c)
    jac = jac / np.maximum(np.linalg.norm(jac, axis=1, keepdims=True), 1e-300)
    _, sv, vt = np.linalg.svd(jac)
    v = vt[-1]
    nz = np.nonzero(np.abs(v) > 1e-12)[0]
    if nz.size and v[nz[0]] < 0:
        v = -v
    return sv, v


def det_scale(fdet, c, radius=0.05):
    c = np.asarray(c, dtype=float)
    vals = []
    for j in range(c.size):
        for sgn in (1, -1):
            e = np.zeros_like(c)
            e[j] = sgn * radius * (1.0 + abs(c[j]))
            vals.append(abs(fdet(c + e)))
    return max(vals)


def _pairing(fdet, fmap, c):
    gd = fd_gradient(fdet, c)
    _, v = _kernel(fmap, c)
    n = np.linalg.norm(gd)
    return (float(gd @ v) / n if n > 0 else 0.0), v, gd


def _project_to_sigma(fdet, c, iters=20):
    for _ in range(iters):
        d = fdet(c)
        g = fd_gradient(fdet, c)
        c = c - d * g / (g @ g)
        if abs(d) < 1e-14 * (1 + np.linalg.norm(g)):
            break
    return c


def classify_singularity(
    traj, params, chart_point, projection, model="start-stop", neighbour_step=1e-2
) -> Classification:
    """Fold / blowdown / cusp test for a corank-one point of a projection.

    ``chart_point`` is ``(s, tau, x1, x2)`` for a linear path and
    ``(s, tau, u, v)`` for a circular path.
    """
    c = np.asarray(chart_point, dtype=float)
    if c.shape != (4,):
        raise ValueError("chart point must have four coordinates")
    _check_tau(c[1])
    fmap = projection_map(traj, params, projection, model)
    fdet = projection_det_function(traj, params, projection, model)
    scale = det_scale(fdet, c)
    if not abs(fdet(c)) < DET_TOL * scale:
        raise ValueError(
            f"point is not on the degeneracy locus: |det|={abs(fdet(c)):.3e}, scale={scale:.3e}"
        )
    sv, v = _kernel(fmap, c)
    small = int(np.sum(sv < CORANK_TOL * sv[0]))
    if small != 1:
        return Classification("unresolved", list(sv), list(v), reason=f"corank {small}, expected 1")

    P, v, gd = _pairing(fdet, fmap, c)
    if abs(P) > FOLD_TOL:
        return Classification("fold", list(sv), list(v), fold_pairing=P)

    # Walk along Sigma in every tangent direction and re-test the pairing.
    basis = np.linalg.svd(gd[None, :])[2][1:]
    neigh = []
    for t in basis:
        for sgn in (1.0, -1.0):
            cn = _project_to_sigma(fdet, c + sgn * neighbour_step * t)
            neigh.append(_pairing(fdet, fmap, cn)[0])
    if all(abs(p) <= FOLD_TOL for p in neigh):
        return Classification("blowdown", list(sv), list(v), fold_pairing=P, neighbour_pairings=neigh)

    grad_p = fd_gradient(lambda cc: _pairing(fdet, fmap, cc)[0], c)
    n_p = np.linalg.norm(grad_p)
    P2 = float(grad_p @ v) / n_p if n_p > 0 else 0.0
    indep = _gram(gd, grad_p)
    reason = ""
    ok = abs(P2) > CUSP_TOL and indep > CUSP_TOL
    if ok and isinstance(traj, CircularPath):
        x = chart_to_ground(traj, c)
        pq = pq_coordinates(traj, c[0], x)
        a = g_tilde_grad(traj.h, pq.p, pq.q)
        b = g_tilde_s_grad(traj.h, pq.p, pq.q)
        cross = abs(a[0] * b[1] - a[1] * b[0]) / (np.linalg.norm(a) * np.linalg.norm(b))
        ok = cross > CUSP_TOL
        reason = f"grad g_tilde x grad g_tilde_s = {cross:.3e}"
    label = "cusp" if ok else "unresolved"
    return Classification(label, list(sv), list(v), P, P2, neigh, reason)


def _gram(a, b):
    """``sin`` of the angle between two vectors (1 when orthogonal)."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    cos = float(a @ b) / (na * nb)
    return np.sqrt(max(0.0, 1.0 - cos * cos))


# ---------------------------------------------------------------------------
# Regions and injectivity
# ---------------------------------------------------------------------------


def region_thresholds(circ: CircularPath):
    outer = circ.rho * (circ.h**2 + 1.0)
    return outer / 2.0, outer


def region_check(circ: CircularPath, x, rel_tol=1e-9) -> str:
    """Label ``x`` by the disks ``|x| < rho(h**2+1)/2`` and ``|x| < rho(h**2+1)``.

    ``boundary`` marks points within ``rel_tol`` of the outer circle.
    """
    _require_circular(circ)
    inner, outer = region_thresholds(circ)
    r = float(np.hypot(*np.asarray(x, dtype=float)))
    if abs(r - outer) <= rel_tol * outer:
        return "boundary"
    if r < inner:
        return "injective_safe"
    if r < outer:
        return "graph_safe"
    return "unsafe"


def rddot_preimage_count(circ: CircularPath, u, alpha):
    """Number of ``v`` with ``Rddot(u, v) = alpha``, from the quadratic in ``y = exp(v)``.

    ``h beta_m y**2 + 2 rho (1-u**2)**1.5 y - h beta_p = 0`` with
    ``beta_pm = rho sqrt(1-u**2) +- alpha``. If ``beta_m = 0`` the equation is
    linear in ``y``.
    """
    h, rho = circ.h, circ.rho
    k = np.sqrt(1.0 - u**2)
    beta_p, beta_m = rho * k + alpha, rho * k - alpha
    a, b, c = h * beta_m, 2.0 * rho * k**3, -h * beta_p
    if a == 0:
        return int(-c / b > 0)
    disc = b * b - 4 * a * c
    if disc < 0:
        return 0
    sq = np.sqrt(disc)
    roots = ((-b + sq) / (2 * a), (-b - sq) / (2 * a))
    if disc == 0:
        roots = roots[:1]
    return sum(1 for y in roots if y > 0)


@dataclass
class InjectivityReport:
    injective: bool
    collision: Optional[tuple] = None
    collision_gap: float = float("nan")
    predicate_all: bool = True
    predicate_agrees: bool = True
    n_samples: int = 0
    max_preimages: int = 0

    def to_dict(self) -> dict:
        return {
            "injective": self.injective,
            "collision": None if self.collision is None else [float(v) for v in self.collision],
            "collision_gap": float(self.collision_gap) if self.collision is not None else None,
            "predicate_all": self.predicate_all,
            "predicate_agrees": self.predicate_agrees,
            "n_samples": self.n_samples,
            "max_preimages": self.max_preimages,
        }


def brute_force_injectivity(
    circ: CircularPath, u: float, v_interval, n_samples: int = 1000, tol=1e-12, sep_tol=1e-6
) -> InjectivityReport:
    """Test ``v -> Rddot(u, v)`` for injectivity on an interval by dense sampling.

    A non-monotone sample sequence is turned into a certified collision by
    root-finding the same level on both sides of the interior extremum.
    The sufficient condition ``alpha**2 < rho**2 (1 - u**2)`` (with
    ``alpha = Rddot``) is evaluated at every sample; when it holds throughout,
    the map must be injective.
    """
    _require_circular(circ)
    lo, hi = (float(v) for v in v_interval)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ValueError(f"invalid v-interval {v_interval!r}")
    if not abs(u) < 1:
        raise ValueError("need |u| < 1")
    if n_samples < 1000:
        raise ValueError("use at least 1000 samples")
    if hi == lo:
        return InjectivityReport(True, n_samples=1, max_preimages=1)
    v = np.linspace(lo, hi, n_samples)
    r = rddot_uv(circ, u, v)
    pred = r**2 < circ.rho**2 * (1.0 - u**2)
    counts = [rddot_preimage_count(circ, u, a) for a in r]
    d = np.diff(r)
    scale = tol * max(1.0, float(np.max(np.abs(r))))
    monotone = bool(np.all(d > scale) or np.all(d < -scale))
    report = InjectivityReport(
        monotone, predicate_all=bool(pred.all()), n_samples=n_samples, max_preimages=max(counts)
    )
    if not monotone:
        k = int(np.argmax(r)) if 0 < int(np.argmax(r)) < n_samples - 1 else int(np.argmin(r))
        if 0 < k < n_samples - 1:
            peak = r[k]
            edge = r[0] if abs(r[0] - peak) < abs(r[-1] - peak) else r[-1]
            level = 0.5 * (peak + edge)
            fn = lambda vv: float(rddot_uv(circ, u, vv)) - level
            va = optimize.brentq(fn, lo, v[k], xtol=1e-14)
            vb = optimize.brentq(fn, v[k], hi, xtol=1e-14)
            if abs(vb - va) > sep_tol:
                report.collision = (va, vb)
                report.collision_gap = abs(fn(va) - fn(vb))
    report.predicate_agrees = not (report.predicate_all and not report.injective)
    return report


def inj_condition(circ: CircularPath, v):
    """``h sinh v < (h**2 - 1)/2``, i.e. ``(x - rho e).e < rho (h**2 - 1)/2``."""
    return circ.h * np.sinh(v) < (circ.h**2 - 1.0) / 2.0


def inj_v_max(circ: CircularPath) -> float:
    return float(np.arcsinh((circ.h**2 - 1.0) / (2.0 * circ.h)))


# ---------------------------------------------------------------------------
# Left fibers
# ---------------------------------------------------------------------------


def left_fiber_search(
    traj,
    params,
    s,
    omega,
    sigma,
    tau,
    region,
    resolution: int = 200,
    model="start-stop",
    predicate: Optional[Callable] = None,
):
    """Ground points whose lift at ``(s, tau)`` has the given ``(omega, sigma)``.

    ``region`` is ``(x1_min, x1_max, x2_min, x2_max)``; ``predicate`` may
    restrict it further. Candidate cells are those where both residuals
    change sign; each is refined by Newton's method.
    """
    tau = float(_check_tau(tau))
    x1a, x1b, x2a, x2b = (float(v) for v in region)
    if not (x1b > x1a and x2b > x2a) or resolution < 2:
        raise ValueError(f"empty search region {region!r}")
    g1 = np.linspace(x1a, x1b, resolution)
    g2 = np.linspace(x2a, x2b, resolution)
    X = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1)
    cp = canonical_lift(traj, s, tau, X, params, model)
    sig_scale = max(abs(sigma), 1e-300)
    r1 = (cp.omega - omega) / params.omega0
    r2 = (cp.sigma - sigma) / sig_scale

    def changes(r):
        a, b, c, d = r[:-1, :-1], r[1:, :-1], r[:-1, 1:], r[1:, 1:]
        mn = np.minimum(np.minimum(a, b), np.minimum(c, d))
        mx = np.maximum(np.maximum(a, b), np.maximum(c, d))
        return (mn <= 0) & (mx >= 0)

    cells = np.argwhere(changes(r1) & changes(r2))
    h1, h2 = g1[1] - g1[0], g2[1] - g2[0]
    centre = np.array([0.5 * (x1a + x1b), 0.5 * (x2a + x2b)])
    span = max(x1b - x1a, x2b - x2a)
    found = []
    for i, j in cells:
        x = np.array([g1[i] + 0.5 * h1, g2[j] + 0.5 * h2])
        ok = False
        for _ in range(50):
            c0 = canonical_lift(traj, s, tau, x, params, model)
            res = np.array([(c0.omega - omega) / params.omega0, (c0.sigma - sigma) / sig_scale])
            _, _, gD, gDdot, _ = doppler_terms(traj, x, s, params, model)
            jac = np.array([-2.0 * gD, 2.0 * params.omega0 * tau * gDdot / sig_scale])
            try:
                dx = np.linalg.solve(jac, res)
            except np.linalg.LinAlgError:
                break
            x = x - dx
            if not np.all(np.isfinite(x)) or np.max(np.abs(x - centre)) > 2.0 * span:
                break  # diverging; a genuine root would have stayed near its cell
            if np.max(np.abs(res)) < 1e-13 and np.linalg.norm(dx) < 1e-12 * (1 + np.linalg.norm(x)):
                ok = True
                break
        if not ok:
            continue
        margin = 1e-9 * (1 + max(abs(x1a), abs(x1b), abs(x2a), abs(x2b)))
        if not (x1a - margin <= x[0] <= x1b + margin and x2a - margin <= x[1] <= x2b + margin):
            continue
        if predicate is not None and not predicate(x):
            continue
        if all(np.linalg.norm(x - y) > 1e-7 * (1 + np.linalg.norm(x)) for y in found):
            found.append(x)
    found.sort(key=lambda p: (round(p[0], 9), round(p[1], 9)))
    return [np.asarray(p) for p in found]
