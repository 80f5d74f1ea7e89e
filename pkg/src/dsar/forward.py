"""Data formation: raw echoes, the windowed transform and the linearised model.

Conventions follow the usual DSAR set-up. The transmitted wave is
``exp(-i omega0 t)``, the raw signal of a point scatterer at ``x`` is
``V exp(-i omega0 (t - 2 R(t)/c0)) / (4 pi R(t))**2`` and the data are the
windowed transform

    W0(s, omega) = int exp(i omega (t - s)) l(omega0 (t - s)) d(t) dt.

The sign ``exp(+i omega (t - s))`` is deliberately the opposite of the
``numpy.fft`` forward convention; nothing here uses an FFT along ``t``, so
the convention is applied literally.

Linearising ``R`` about ``t = s`` turns the ``t``-integral into a lookup of
the window spectrum ``lhat(nu) = int l(t) exp(-i nu t) dt``:

    W(s, omega) = sum_k (1/omega0) lhat(Phi_k/omega0) A_k(s) V_k,
    Phi_k = omega - omega0 + 2 omega0 D_k(s),

with Doppler term ``D = Rdot/c0`` for the start-stop model and
``D = Rdot/c0 + (R**2)''/(2 c0**2)`` for the first-order travel-time
correction.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from dsar.errors import NumericalError
from dsar.geometry import Trajectory, range_only, range_state

MODELS = ("start-stop", "corrected")
GRID_MODELS = ("raw-oracle",) + MODELS


@dataclass(frozen=True)
class ScenarioParams:
    """Carrier frequency ``omega0``, wave speed ``c0`` and window half-plateau ``L``."""

    omega0: float
    c0: float
    L: float

    def __post_init__(self):
        for name in ("omega0", "c0", "L"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    def check_trajectory(self, traj: Trajectory) -> None:
        if not self.c0 > traj.speed:
            raise ValueError(
                f"wave speed c0={self.c0} must exceed platform speed {traj.speed}"
            )

    def to_dict(self) -> dict:
        return {"omega0": self.omega0, "c0": self.c0, "L": self.L}


# ---------------------------------------------------------------------------
# Window and its spectrum
# ---------------------------------------------------------------------------


def smooth_step(z):
    """C-infinity step: 0 for ``z <= 0``, 1 for ``z >= 1``, built from ``exp(-1/z)``."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)
        b = np.where(z < 1, np.exp(-1.0 / np.where(z < 1, 1.0 - z, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Window:
    """Even bump equal to 1 on ``[-L, L]`` and vanishing outside ``[-2L, 2L]``."""

    L: float

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"window half-plateau must be positive, got {self.L}")


def window_eval(w: Window, t):
    t = np.asarray(t, dtype=float)
    return smooth_step((2.0 * w.L - np.abs(t)) / w.L)


class _UnitSpectrum:
    """Cached spectrum ``g(k)`` of the window with ``L = 1``.

    ``lhat(nu; L) = L * g(nu * L)``, so one table serves every window. The
    plateau contributes ``2 sin(k)/k`` exactly; the two ramps are integrated
    adaptively (vectorised over the whole k-grid) and the table is
    interpolated with a clamped cubic spline (``g'(0) = 0``). Beyond
    ``K_MAX`` the spectrum is below 1e-11 and is taken as zero.
    """

    K_MAX = 400.0
    DK = 0.01
    TOL = 1e-12

    def __init__(self):
        self._lock = threading.Lock()
        self._table = None

    def _build(self):
        k = np.arange(0.0, self.K_MAX + 0.5 * self.DK, self.DK)
        ramp, err, info = integrate.quad_vec(
            lambda z: smooth_step(z) * np.cos(k * (2.0 - z)),
            0.0,
            1.0,
            epsabs=self.TOL,
            epsrel=self.TOL,
            limit=20000,
            full_output=True,
        )
        # Status 2 (round-off limited) is acceptable once the error bound is small.
        if info.status not in (0, 2) or not err < 1e2 * self.TOL:
            raise NumericalError(
                f"window spectrum quadrature did not converge: err={err:.3e}, "
                f"intervals={info.intervals.shape[0]}, status={info.status}"
            )
        g = 2.0 * np.sinc(k / np.pi) + 2.0 * ramp
        spline = CubicSpline(k, g, bc_type=((1, 0.0), "not-a-knot"))
        # Coefficients in descending powers of the local offset.
        return k, spline.c.copy(), g

    def table(self):
        if self._table is None:
            with self._lock:
                if self._table is None:
                    self._table = self._build()
        return self._table

    def __call__(self, k):
        knots, c, _ = self.table()
        k = np.abs(np.asarray(k, dtype=float))
        inside = k < knots[-1]
        idx = np.minimum((k / self.DK).astype(np.int64), knots.size - 2)
        idx = np.where(inside, idx, 0)
        t = np.where(inside, k - knots[idx], 0.0)
        val = ((c[0, idx] * t + c[1, idx]) * t + c[2, idx]) * t + c[3, idx]
        return np.where(inside, val, 0.0)


_UNIT_SPECTRUM = _UnitSpectrum()


def window_spectrum(w: Window, nu):
    """``lhat(nu) = int l(t) exp(-i nu t) dt``; real and even."""
    return w.L * _UNIT_SPECTRUM(np.asarray(nu, dtype=float) * w.L)


def window_spectrum_quad(w: Window, nu: float) -> float:
    """Direct adaptive quadrature of ``lhat(nu)``; slow, used for cross-checks."""
    val, err = integrate.quad(
        lambda t: window_eval(w, t), 0.0, 2.0 * w.L, weight="cos", wvar=abs(nu), limit=500
    )
    if not np.isfinite(val):
        raise NumericalError(f"window spectrum quadrature failed at nu={nu}")
    return 2.0 * val


def spectrum_decay_threshold(w: Window, rel: float = 1e-8) -> float:
    """Smallest tabulated ``nu*`` with ``|lhat(nu)| < rel * lhat(0)`` for all ``nu > nu*``."""
    knots, _, g = _UNIT_SPECTRUM.table()
    above = np.nonzero(np.abs(g) >= rel * g[0])[0]
    return float(knots[above[-1] + 1]) / w.L


def ensure_spectrum_ready() -> None:
    """Build the spectrum cache up front, e.g. before threaded evaluation."""
    _UNIT_SPECTRUM.table()


# ---------------------------------------------------------------------------
# Scenes and data grids
# ---------------------------------------------------------------------------


@dataclass
class Scene:
    """Point scatterers at ``points`` (shape ``(n, 2)``) with complex ``amplitudes``."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.points.shape[0] != self.amplitudes.shape[0]:
            raise ValueError("scene needs one amplitude per point")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("scene amplitudes must be finite")

    def __len__(self):
        return self.points.shape[0]

    def __add__(self, other: "Scene") -> "Scene":
        return Scene(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.amplitudes, other.amplitudes]),
        )

    @classmethod
    def from_raster(cls, values, origin, spacing) -> "Scene":
        """Cell-centred point scatterers weighted by cell area.

        ``values[i, j]`` covers the cell whose lower corner is
        ``origin + (i * dx1, j * dx2)``.
        """
        values = np.asarray(values, dtype=complex)
        dx1, dx2 = (float(v) for v in spacing)
        if not (dx1 > 0 and dx2 > 0):
            raise ValueError("raster spacing must be positive")
        i, j = np.meshgrid(np.arange(values.shape[0]), np.arange(values.shape[1]), indexing="ij")
        pts = np.stack(
            [origin[0] + (i + 0.5) * dx1, origin[1] + (j + 0.5) * dx2], axis=-1
        ).reshape(-1, 2)
        return cls(pts, values.reshape(-1) * dx1 * dx2)


@dataclass
class DataGrid:
    """Sampled data ``W(s, omega)`` on a regular grid, rows indexed by ``s``."""

    s0: float
    ds: float
    omega_start: float
    domega: float
    values: np.ndarray
    model: str
    params: ScenarioParams
    trajectory: Optional[dict] = None

    def __post_init__(self):
        if not (self.ds > 0 and self.domega > 0):
            raise ValueError("grid axes must be strictly increasing")
        if self.model not in GRID_MODELS:
            raise ValueError(f"unknown model tag {self.model!r}")
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2:
            raise ValueError("grid values must be a 2-D array")

    @property
    def n_s(self) -> int:
        return self.values.shape[0]

    @property
    def n_omega(self) -> int:
        return self.values.shape[1]

    @property
    def s_axis(self) -> np.ndarray:
        return self.s0 + self.ds * np.arange(self.n_s)

    @property
    def omega_axis(self) -> np.ndarray:
        return self.omega_start + self.domega * np.arange(self.n_omega)


@dataclass(frozen=True)
class GridAxes:
    s0: float
    ds: float
    n_s: int
    omega_start: float
    domega: float
    n_omega: int

    def __post_init__(self):
        if not (self.ds > 0 and self.domega > 0):
            raise ValueError("grid axes must be strictly increasing")
        if self.n_s < 1 or self.n_omega < 1:
            raise ValueError("grid axes need at least one sample")

    @property
    def s_axis(self) -> np.ndarray:
        return self.s0 + self.ds * np.arange(self.n_s)

    @property
    def omega_axis(self) -> np.ndarray:
        return self.omega_start + self.domega * np.arange(self.n_omega)

    @classmethod
    def from_ranges(cls, s_start, s_stop, n_s, omega_lo, omega_hi, n_omega, endpoint_s=False):
        s = np.linspace(s_start, s_stop, n_s, endpoint=endpoint_s)
        ds = float(s[1] - s[0]) if n_s > 1 else 1.0
        dw = (omega_hi - omega_lo) / (n_omega - 1) if n_omega > 1 else 1.0
        return cls(float(s_start), ds, int(n_s), float(omega_lo), float(dw), int(n_omega))

    @classmethod
    def default(cls, traj: Trajectory, params: ScenarioParams, n_s=256, n_omega=128, doppler_span=2.5):
        """Doppler band ``omega0 (1 +- doppler_span * speed / c0)``; full orbit or 256 x 0.02 track."""
        half = doppler_span * traj.speed / params.c0 * params.omega0
        w_lo, w_hi = params.omega0 - half, params.omega0 + half
        if traj.kind == "circular":
            return cls.from_ranges(0.0, 2 * np.pi, n_s, w_lo, w_hi, n_omega)
        ds = 0.02
        return cls.from_ranges(-ds * n_s / 2, ds * n_s / 2, n_s, w_lo, w_hi, n_omega)

    def grid(self, values, model, params, trajectory=None) -> DataGrid:
        return DataGrid(
            self.s0, self.ds, self.omega_start, self.domega, values, model, params, trajectory
        )


# ---------------------------------------------------------------------------
# Raw signal and the windowed-transform oracle
# ---------------------------------------------------------------------------


def simulate_raw(traj: Trajectory, scene: Scene, params: ScenarioParams, t):
    """Received signal ``d(t)`` for a point-scatterer scene (start-stop)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for x, amp in zip(scene.points, scene.amplitudes):
        R = range_only(traj, x, t)
        out += amp * np.exp(-1j * params.omega0 * (t - 2.0 * R / params.c0)) / (4 * np.pi * R) ** 2
    return out


def windowed_transform_oracle(traj, scene, params, s, omega, epsrel=1e-10):
    """``W0(s, omega)`` by adaptive quadrature over the window support.

    ``omega`` may be an array; one vector-valued quadrature handles all of it.
    The factor ``exp(i omega (t-s)) exp(-i omega0 t)`` is combined exactly as
    ``exp(i (omega - omega0) tau) exp(-i omega0 s)`` with ``tau = t - s``, so
    the integrand only oscillates at the Doppler offset.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    w = Window(params.L)
    half = 2.0 * params.L / params.omega0
    n = omega.size
    if len(scene) == 0:
        return np.zeros(n, dtype=complex)

    def integrand(tau):
        t = s + tau
        acc = np.zeros(n, dtype=complex)
        for x, amp in zip(scene.points, scene.amplitudes):
            R = float(range_only(traj, x, t))
            phase = (omega - params.omega0) * tau - params.omega0 * s + 2.0 * params.omega0 * R / params.c0
            acc += amp * np.exp(1j * phase) / (4 * np.pi * R) ** 2
        acc *= float(window_eval(w, params.omega0 * tau))
        return np.concatenate([acc.real, acc.imag])

    res, err, info = integrate.quad_vec(
        integrand, -half, half, epsrel=epsrel, epsabs=0.0, limit=2000, full_output=True
    )
    if not info.success:
        raise NumericalError(
            f"windowed transform quadrature did not converge at s={s}: err={err:.3e}, "
            f"status={info.status}"
        )
    return res[:n] + 1j * res[n:]


def oracle_grid(traj, scene, params, axes: GridAxes, threads: int = 1) -> DataGrid:
    rows = _parallel_map(
        lambda s: windowed_transform_oracle(traj, scene, params, s, axes.omega_axis),
        axes.s_axis,
        threads,
    )
    return axes.grid(np.array(rows), "raw-oracle", params, traj.to_dict())


# ---------------------------------------------------------------------------
# Linearised forward operator
# ---------------------------------------------------------------------------


def doppler_terms(traj: Trajectory, x, s, params: ScenarioParams, model: str = "start-stop"):
    """Doppler function ``D``, its s-derivative and both ground gradients.

    Start-stop: ``D = Rdot/c0``. Corrected: ``D = Rdot/c0 + (Rdot**2 + R Rddot)/c0**2``,
    i.e. ``Rdot/c0 + (R**2)''/(2 c0**2)``. Returns ``(D, Ddot, gradD, gradDdot, state)``;
    ``gradD`` and ``gradDdot`` are the curves usually written Gamma-dot and
    Gamma-double-dot.
    """
    if model not in MODELS:
        raise ValueError(f"unsupported model {model!r}; expected one of {MODELS}")
    st = range_state(traj, x, s)
    c0 = params.c0
    D = st.Rdot / c0
    Ddot = st.Rddot / c0
    gD = st.gradRdot / c0
    gDdot = st.gradRddot / c0
    if model == "corrected":
        R, Rd, Rdd, Rddd = st.R, st.Rdot, st.Rddot, st.Rdddot
        gR, gRd, gRdd, gRddd = st.gradR, st.gradRdot, st.gradRddot, st.gradRdddot
        D = D + (Rd**2 + R * Rdd) / c0**2
        Ddot = Ddot + (3.0 * Rd * Rdd + R * Rddd) / c0**2
        gD = gD + (Rdd[..., None] * gR + 2.0 * Rd[..., None] * gRd + R[..., None] * gRdd) / c0**2
        gDdot = gDdot + (
            Rddd[..., None] * gR
            + 3.0 * Rdd[..., None] * gRd
            + 3.0 * Rd[..., None] * gRdd
            + R[..., None] * gRddd
        ) / c0**2
    return D, Ddot, gD, gDdot, st


def kernel_factors(traj, params, x, s, model="start-stop"):
    """Doppler offset ``2 D`` and complex amplitude ``A`` of the forward kernel.

    ``K(s, omega, x) = (1/omega0) lhat((omega - omega0)/omega0 + 2 D) * A``.
    """
    D, _, _, _, st = doppler_terms(traj, x, s, params, model)
    R = st.R
    w0, c0 = params.omega0, params.c0
    if model == "start-stop":
        delay = 2.0 * R / c0
    else:
        delay = 2.0 * (R / c0 + R * st.Rdot / c0**2)
    # The receive-side range R(s_sc) is approximated by R(s).
    amp = np.exp(1j * w0 * (delay - s)) / ((4 * np.pi) ** 2 * R * R)
    return 2.0 * D, amp


def forward_kernel(traj, params, x, s, omega, model="start-stop"):
    """Kernel values for points ``x`` (shape ``(n, 2)``) at one ``s``: shape ``(n, n_omega)``."""
    two_d, amp = kernel_factors(traj, params, np.asarray(x).reshape(-1, 2), s, model)
    nu = (np.asarray(omega)[None, :] - params.omega0) / params.omega0 + two_d[:, None]
    return window_spectrum(Window(params.L), nu) / params.omega0 * amp[:, None]


def _tau_integral(params, phi):
    """``int exp(i tau Phi) l(omega0 tau) dtau`` by quadrature, vectorised over ``Phi``."""
    phi = np.asarray(phi, dtype=float).ravel()
    w = Window(params.L)
    half = 2.0 * params.L / params.omega0

    def f(tau):
        lv = float(window_eval(w, params.omega0 * tau))
        return lv * np.concatenate([np.cos(tau * phi), np.sin(tau * phi)])

    res, err, info = integrate.quad_vec(f, -half, half, epsrel=1e-11, epsabs=0.0, limit=2000, full_output=True)
    if not info.success:
        raise NumericalError(f"tau quadrature did not converge: err={err:.3e}")
    n = phi.size
    return res[:n] + 1j * res[n:]


def _parallel_map(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1:
        return [fn(it) for it in items]
    ensure_spectrum_ready()
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def linearized_forward(
    traj: Trajectory,
    scene: Scene,
    params: ScenarioParams,
    axes: GridAxes,
    model: str = "start-stop",
    tau_quadrature: bool = False,
    threads: int = 1,
) -> DataGrid:
    """Linearised DSAR data for a point-scatterer scene.

    With ``tau_quadrature=True`` the inner integral over ``tau`` is done by
    numerical quadrature instead of the cached window spectrum (slow; for
    cross-checking only).
    """
    if model not in MODELS:
        raise ValueError(f"linearized_forward supports {MODELS}, got {model!r}")
    params.check_trajectory(traj)
    omega = axes.omega_axis
    w = Window(params.L)
    pts, amps = scene.points, scene.amplitudes

    def row(s):
        if len(scene) == 0:
            return np.zeros(omega.size, dtype=complex)
        two_d, amp = kernel_factors(traj, params, pts, s, model)
        if tau_quadrature:
            phi = omega[None, :] - params.omega0 + params.omega0 * two_d[:, None]
            spec = _tau_integral(params, phi).reshape(phi.shape)
        else:
            nu = (omega[None, :] - params.omega0) / params.omega0 + two_d[:, None]
            spec = window_spectrum(w, nu) / params.omega0
        return ((amp * amps)[:, None] * spec).sum(axis=0)

    rows = _parallel_map(row, axes.s_axis, threads)
    return axes.grid(np.array(rows), model, params, traj.to_dict())
