"""Backprojection imaging, beam patterns and artifact diagnostics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from dsar.canonical import region_thresholds
from dsar.forward import MODELS, DataGrid, ScenarioParams, Scene, ensure_spectrum_ready, forward_kernel
from dsar.geometry import CircularPath, LinearPath, Trajectory, range_only, range_state, unit_vectors

BEAM_KINDS = ("isotropic", "left_looking", "right_looking", "angular_mask", "range_gate", "product")
REGION_LABELS = ("injective_safe", "graph_safe", "boundary", "unsafe")
RAMP_EPS = 1e-3


def smooth_taper(z):
    """C1 ramp: 0 for ``z <= 0``, 1 for ``z >= 1``, ``3z**2 - 2z**3`` in between."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return z * z * (3.0 - 2.0 * z)


@dataclass(frozen=True)
class BeamPattern:
    """Illumination weight in ``[0, 1]`` as a function of ``(s, x)``.

    ``taper`` is the width of the C1 transition, measured in the units of
    the quantity being thresholded: ground length for the side-looking
    beams, ``u`` for the angular mask, and ``rho`` for the range gate.
    The taper lies inside the illuminated set.
    """

    kind: str = "isotropic"
    taper: float = 0.05
    u_max: float = 0.9
    labels: tuple = ("injective_safe",)
    parts: tuple = ()

    def __post_init__(self):
        if self.kind not in BEAM_KINDS:
            raise ValueError(f"unknown beam kind {self.kind!r}")
        if not self.taper > 0:
            raise ValueError("beam taper must be positive")
        if self.kind == "angular_mask" and not 0 < self.u_max <= 1:
            raise ValueError("u_max must lie in (0, 1]")
        if self.kind == "range_gate":
            bad = set(self.labels) - set(REGION_LABELS)
            if bad or not self.labels:
                raise ValueError(f"range_gate labels must be drawn from {REGION_LABELS}")
        if self.kind == "product" and not self.parts:
            raise ValueError("a product beam needs at least one part")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "taper": self.taper}
        if self.kind == "angular_mask":
            d["u_max"] = self.u_max
        if self.kind == "range_gate":
            d["labels"] = list(self.labels)
        if self.kind == "product":
            d["parts"] = [p.to_dict() for p in self.parts]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BeamPattern":
        d = dict(d)
        if "parts" in d:
            d["parts"] = tuple(cls.from_dict(p) for p in d["parts"])
        if "labels" in d:
            d["labels"] = tuple(d["labels"])
        return cls(**d)


def _left_distance(traj, s, x):
    if isinstance(traj, LinearPath):
        return x[..., 1]
    e, _ = unit_vectors(s)
    # Left of the counter-clockwise track is toward the centre.
    return -((x - traj.rho * e) * e).sum(-1)


def beam_weight(b: BeamPattern, traj: Trajectory, s, x):
    """Weight of beam ``b`` at slow time ``s`` for ground point(s) ``x``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], s.shape)
    if b.kind == "isotropic":
        return np.ones(shape)
    if b.kind in ("left_looking", "right_looking"):
        d = _left_distance(traj, s, x)
        if b.kind == "right_looking":
            d = -d
        return np.broadcast_to(smooth_taper(d / b.taper), shape)
    if b.kind == "angular_mask":
        u = -range_state(traj, x, s).Rdot / traj.speed
        return np.broadcast_to(smooth_taper((b.u_max - np.abs(u)) / b.taper), shape)
    if b.kind == "range_gate":
        if not isinstance(traj, CircularPath):
            raise ValueError("range_gate beams are defined for circular paths only")
        if "unsafe" in b.labels:
            return np.ones(shape)
        inner, outer = region_thresholds(traj)
        r_max = outer if ("graph_safe" in b.labels or "boundary" in b.labels) else inner
        r = np.hypot(x[..., 0], x[..., 1])
        return np.broadcast_to(smooth_taper((r_max - r) / (b.taper * traj.rho)), shape)
    out = np.ones(shape)
    for part in b.parts:
        out = out * beam_weight(part, traj, s, x)
    return out


@dataclass(frozen=True)
class ImageGrid:
    """Sample points ``origin + (i dx1, j dx2)`` for ``i < n1``, ``j < n2``."""

    origin: tuple
    spacing: tuple
    shape: tuple

    def __post_init__(self):
        if not (self.spacing[0] > 0 and self.spacing[1] > 0):
            raise ValueError("image spacing must be positive")
        if self.shape[0] < 1 or self.shape[1] < 1:
            raise ValueError("image needs at least one cell")

    @classmethod
    def from_bounds(cls, x1_range, x2_range, n1, n2) -> "ImageGrid":
        d1 = (x1_range[1] - x1_range[0]) / (n1 - 1)
        d2 = (x2_range[1] - x2_range[0]) / (n2 - 1)
        return cls((float(x1_range[0]), float(x2_range[0])), (float(d1), float(d2)), (int(n1), int(n2)))

    def axes(self):
        return (
            self.origin[0] + self.spacing[0] * np.arange(self.shape[0]),
            self.origin[1] + self.spacing[1] * np.arange(self.shape[1]),
        )

    def coordinates(self):
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="ij")

    def points(self):
        x1, x2 = self.coordinates()
        return np.stack([x1, x2], axis=-1)

    def index_of(self, x):
        """Fractional cell index of a ground point."""
        return (
            (x[0] - self.origin[0]) / self.spacing[0],
            (x[1] - self.origin[1]) / self.spacing[1],
        )

    def position(self, idx):
        return np.array(
            [self.origin[0] + idx[0] * self.spacing[0], self.origin[1] + idx[1] * self.spacing[1]]
        )

    def to_dict(self):
        return {"origin": list(self.origin), "spacing": list(self.spacing), "shape": list(self.shape)}


@dataclass
class Image:
    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != tuple(self.grid.shape):
            raise ValueError("image values do not match the grid shape")

    def coordinates(self):
        return self.grid.coordinates()

    @property
    def magnitude(self):
        return np.abs(self.values)


def _filter_weights(grid: DataGrid, params: ScenarioParams, filt: str):
    omega = grid.omega_axis
    if filt == "none":
        return np.ones_like(omega)
    if filt == "ramp":
        return np.abs(omega - params.omega0) + RAMP_EPS * params.omega0
    raise ValueError(f"unknown filter {filt!r}")


def _check_grid(grid: DataGrid, traj, params):
    if grid.params != params:
        raise ValueError(f"data grid scenario {grid.params} does not match {params}")
    if grid.trajectory is not None and grid.trajectory != traj.to_dict():
        raise ValueError(f"data grid trajectory {grid.trajectory} does not match {traj.to_dict()}")


def backproject_points(
    grid: DataGrid,
    traj: Trajectory,
    params: ScenarioParams,
    points,
    beam: Optional[BeamPattern] = None,
    filt: str = "none",
    model: Optional[str] = None,
    threads: int = 1,
    chunk: int = 2048,
):
    """Backprojection at arbitrary ground points (shape ``(..., 2)``).

    Pixels are processed in fixed chunks; each pixel sums over ``s`` in
    grid order and over ``omega`` with ``numpy.sum``, independently of the
    chunk it lands in, so the result does not depend on ``threads``.
    """
    _check_grid(grid, traj, params)
    model = model or ("start-stop" if grid.model == "raw-oracle" else grid.model)
    if model not in MODELS:
        raise ValueError(f"unsupported model {model!r}")
    beam = beam or BeamPattern()
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    data = grid.values * _filter_weights(grid, params, filt)[None, :]
    s_axis, omega = grid.s_axis, grid.omega_axis
    scale = grid.ds * grid.domega
    ensure_spectrum_ready()

    def run(lo):
        x = flat[lo:lo + chunk]
        acc = np.zeros(x.shape[0], dtype=complex)
        for i, s in enumerate(s_axis):
            if not np.any(data[i]):
                continue
            w = beam_weight(beam, traj, s, x)
            live = w > 0
            if not np.any(live):
                continue
            K = forward_kernel(traj, params, x[live], s, omega, model)
            acc[live] += w[live] * (np.conj(K) * data[i][None, :]).sum(axis=-1)
        return acc * scale

    starts = range(0, flat.shape[0], chunk)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    out = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)
    return out.reshape(pts.shape[:-1])


def backproject(grid, traj, params, image_grid: ImageGrid, beam=None, filt="none", model=None, threads=1) -> Image:
    """``I(x) = sum beam * conj(K) * F(omega) * W * ds * domega`` on an image grid."""
    vals = backproject_points(grid, traj, params, image_grid.points(), beam, filt, model, threads)
    return Image(image_grid, vals)


def predict_mirror_artifact(x, xi):
    """Left-right artifact map ``(x1, x2, xi1, xi2) -> (x1, -x2, xi1, -xi2)``."""
    x = np.asarray(x, dtype=float).copy()
    xi = np.asarray(xi, dtype=float).copy()
    x[..., 1] *= -1
    xi[..., 1] *= -1
    return x, xi


# ---------------------------------------------------------------------------
# Peaks and metrics
# ---------------------------------------------------------------------------


@dataclass
class Peak:
    index: tuple
    position: np.ndarray
    magnitude: float

    def to_dict(self):
        return {
            "index": [float(i) for i in self.index],
            "position": [float(v) for v in self.position],
            "magnitude": float(self.magnitude),
        }


def _refine(mag, i, j):
    def offset(a, b, c):
        den = a - 2 * b + c
        return 0.0 if den >= 0 else float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))

    n1, n2 = mag.shape
    di = offset(mag[i - 1, j], mag[i, j], mag[i + 1, j]) if 0 < i < n1 - 1 else 0.0
    dj = offset(mag[i, j - 1], mag[i, j], mag[i, j + 1]) if 0 < j < n2 - 1 else 0.0
    return i + di, j + dj


def find_peaks(img: Image, floor: float = 1e-6):
    """Local maxima of ``|I|`` over 3x3 neighbourhoods, strongest first."""
    mag = img.magnitude
    top = float(mag.max()) if mag.size else 0.0
    if top == 0:
        return []
    is_max = (mag == ndimage.maximum_filter(mag, size=3, mode="nearest")) & (mag > floor * top)
    peaks = []
    for i, j in np.argwhere(is_max):
        idx = _refine(mag, i, j)
        peaks.append(Peak(idx, img.grid.position(idx), float(mag[i, j])))
    peaks.sort(key=lambda p: (-p.magnitude, p.index))
    return peaks


def _db(ratio):
    return 20.0 * math.log10(ratio) if ratio > 0 else -math.inf


def _near(img, x, radius_cells):
    """Largest ``|I|`` within ``radius_cells`` (Chebyshev) of ``x``, or 0 if off-grid."""
    i, j = img.grid.index_of(x)
    i0, j0 = int(round(i)), int(round(j))
    n1, n2 = img.grid.shape
    r = int(radius_cells)
    lo1, hi1 = max(0, i0 - r), min(n1, i0 + r + 1)
    lo2, hi2 = max(0, j0 - r), min(n2, j0 + r + 1)
    if lo1 >= hi1 or lo2 >= hi2:
        return 0.0
    return float(img.magnitude[lo1:hi1, lo2:hi2].max())


def _mirror_label(ratio_db):
    """``present`` within 6 dB of the main peak, ``suppressed`` at 20 dB or more below it."""
    if abs(ratio_db) <= 6.0:
        return "present"
    if ratio_db <= -20.0:
        return "suppressed"
    return "attenuated"


def artifact_metrics(
    img: Image,
    truth: Scene,
    traj: Trajectory,
    exclusion: float = 5.0,
    floor: float = 1e-6,
    mirror_radius: int = 2,
    s_samples: Optional[Sequence[float]] = None,
) -> dict:
    """Main-peak accuracy and strongest secondary peak for each true scatterer."""
    if len(truth) == 0:
        raise ValueError("artifact metrics need at least one true scatterer")
    peaks = find_peaks(img, floor)
    truth_idx = [np.array(img.grid.index_of(x)) for x in truth.points]

    def cell_dist(p, t):
        return float(np.max(np.abs(np.array(p.index) - t)))

    secondary_pool = [p for p in peaks if all(cell_dist(p, t) > exclusion for t in truth_idx)]
    report = {"n_peaks": len(peaks), "scatterers": []}
    for x, t in zip(truth.points, truth_idx):
        entry = {"truth": [float(v) for v in x]}
        mains = [p for p in peaks if cell_dist(p, t) <= exclusion]
        if not mains:
            entry["status"] = "main peak not found"
            report["scatterers"].append(entry)
            continue
        main = mains[0]
        entry.update(
            status="ok",
            main_peak=main.to_dict(),
            location_error_cells=float(np.hypot(*(np.array(main.index) - t))),
        )
        if secondary_pool:
            sec = secondary_pool[0]
            entry["secondary_peak"] = sec.to_dict()
            entry["secondary_ratio_db"] = _db(sec.magnitude / main.magnitude)
        else:
            entry["secondary_peak"] = None
            entry["secondary_ratio_db"] = None
        if isinstance(traj, LinearPath):
            mx, _ = predict_mirror_artifact(x, np.zeros(2))
            entry["mirror_location"] = [float(v) for v in mx]
            ratio_db = _db(_near(img, mx, mirror_radius) / main.magnitude)
            entry["mirror_ratio_db"] = ratio_db
            entry["mirror_artifact"] = _mirror_label(ratio_db)
        elif secondary_pool:
            s = np.asarray(
                s_samples if s_samples is not None else np.linspace(0, 2 * np.pi, 16, endpoint=False)
            )
            R = range_only(traj, main.position, s)
            Rp = range_only(traj, secondary_pool[0].position, s)
            entry["ranges"] = {"s": s.tolist(), "R_main": R.tolist(), "R_secondary": Rp.tolist()}
            entry["min_relative_range_gap"] = float(np.min(np.abs(R - Rp) / R))
        report["scatterers"].append(entry)
    return report
