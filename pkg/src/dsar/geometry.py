"""Flight trajectories and the antenna-to-ground range function.

Two model paths are supported, both at constant altitude over flat ground:

* ``LinearPath(h)``: ``gamma(s) = (s, 0, h)``, unit speed.
* ``CircularPath(rho, h)``: ``gamma(s) = (rho cos s, rho sin s, rho h)``,
  speed ``rho``; here ``h`` is dimensionless and the altitude is ``rho * h``.

For a ground point ``x = (x1, x2)`` the range is ``R(s) = |(x, 0) - gamma(s)|``.
:func:`range_state` returns ``R`` and its first three slow-time derivatives
together with their ground-plane gradients, all in closed form and
vectorised over ``x`` (trailing axis of length 2) and ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from dsar.errors import NumericalError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class LinearPath:
    """Straight flight path ``(s, 0, h)``."""

    h: float

    kind = "linear"

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"flight height must be positive, got h={self.h}")

    @property
    def speed(self) -> float:
        return 1.0

    @property
    def altitude(self) -> float:
        return float(self.h)

    def to_dict(self) -> dict:
        return {"kind": "linear", "h": float(self.h)}


@dataclass(frozen=True)
class CircularPath:
    """Circular flight path of radius ``rho`` at altitude ``rho * h``."""

    rho: float
    h: float

    kind = "circular"

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ValueError(f"radius must be positive, got rho={self.rho}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"height parameter must be positive, got h={self.h}")

    @property
    def speed(self) -> float:
        return float(self.rho)

    @property
    def altitude(self) -> float:
        return float(self.rho * self.h)

    def to_dict(self) -> dict:
        return {"kind": "circular", "rho": float(self.rho), "h": float(self.h)}


Trajectory = Union[LinearPath, CircularPath]


def trajectory_from_dict(d: dict) -> Trajectory:
    kind = d.get("kind")
    if kind == "linear":
        return LinearPath(h=float(d["h"]))
    if kind == "circular":
        return CircularPath(rho=float(d["rho"]), h=float(d["h"]))
    raise ValueError(f"unknown trajectory kind {kind!r}")


def unit_vectors(s: ArrayLike):
    """Return ``e(s) = (cos s, sin s)`` and ``e_perp(s) = (-sin s, cos s)``."""
    s = np.asarray(s, dtype=float)
    c, sn = np.cos(s), np.sin(s)
    return np.stack([c, sn], axis=-1), np.stack([-sn, c], axis=-1)


def trajectory_state(traj: Trajectory, s: ArrayLike, order: int = 0) -> np.ndarray:
    """Position (``order=0``) or an s-derivative of the flight path.

    Returns an array of shape ``np.shape(s) + (3,)``.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"derivative order must be 0..3, got {order!r}")
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (3,))
    if isinstance(traj, LinearPath):
        if order == 0:
            out[..., 0] = s
            out[..., 2] = traj.h
        elif order == 1:
            out[..., 0] = 1.0
        return out
    if isinstance(traj, CircularPath):
        rho = traj.rho
        c, sn = np.cos(s), np.sin(s)
        # d^k/ds^k (cos, sin) cycles through (cos, sin) -> (-sin, cos) -> ...
        planar = [(c, sn), (-sn, c), (-c, -sn), (sn, -c)][order]
        out[..., 0] = rho * planar[0]
        out[..., 1] = rho * planar[1]
        if order == 0:
            out[..., 2] = rho * traj.h
        return out
    raise TypeError(f"unsupported trajectory {traj!r}")


@dataclass
class RangeState:
    """Range, its slow-time derivatives and their ground-plane gradients.

    Scalar fields have the broadcast shape of ``(x[..., 0], s)``; gradient
    fields carry an extra trailing axis of length 2.
    """

    R: np.ndarray
    Rdot: np.ndarray
    Rddot: np.ndarray
    Rdddot: np.ndarray
    gradR: np.ndarray
    gradRdot: np.ndarray
    gradRddot: np.ndarray
    gradRdddot: np.ndarray


def _linear_range_state(traj: LinearPath, x1, x2, s) -> RangeState:
    h2 = traj.h**2
    b = x1 - s
    a = x2**2 + h2
    R2 = b**2 + a
    R = np.sqrt(R2)
    R3 = R2 * R
    R5 = R3 * R2
    R7 = R5 * R2
    Rdot = -b / R
    Rddot = a / R3
    Rdddot = 3.0 * a * b / R5
    gradR = np.stack([b / R, x2 / R], axis=-1)
    gradRdot = np.stack([-a / R3, b * x2 / R3], axis=-1)
    gradRddot = np.stack(
        [-3.0 * b * a / R5, (2.0 * x2 * R2 - 3.0 * x2 * a) / R5], axis=-1
    )
    gradRdddot = np.stack(
        [
            3.0 * a / R5 - 15.0 * a * b**2 / R7,
            6.0 * b * x2 / R5 - 15.0 * a * b * x2 / R7,
        ],
        axis=-1,
    )
    return RangeState(R, Rdot, Rddot, Rdddot, gradR, gradRdot, gradRddot, gradRdddot)


def _circular_range_state(traj: CircularPath, x1, x2, s) -> RangeState:
    rho = traj.rho
    e1, e2 = np.cos(s), np.sin(s)
    p1, p2 = -e2, e1
    a = x1 * e1 + x2 * e2  # x . e
    b = x1 * p1 + x2 * p2  # x . e_perp
    d1, d2 = x1 - rho * e1, x2 - rho * e2
    R2 = d1**2 + d2**2 + (rho * traj.h) ** 2
    R = np.sqrt(R2)
    R3 = R2 * R
    R5 = R3 * R2

    Rdot = -rho * b / R
    Rddot = rho * a / R - rho**2 * b**2 / R3
    Rdddot = rho * b / R + 3.0 * rho**2 * a * b / R3 - 3.0 * rho**3 * b**3 / R5

    e = np.stack([np.broadcast_to(e1, R.shape), np.broadcast_to(e2, R.shape)], -1)
    ep = np.stack([np.broadcast_to(p1, R.shape), np.broadcast_to(p2, R.shape)], -1)
    gR = np.stack([d1 / R, d2 / R], axis=-1)
    a_, b_, R_ = a[..., None], b[..., None], R[..., None]
    R2_, R3_ = R2[..., None], R3[..., None]
    R4_, R5_, R6_ = R2_**2, R3_ * R2_, R3_**2

    gRdot = -rho * (ep / R_ - b_ * gR / R2_)
    gRddot = rho * (e / R_ - a_ * gR / R2_) - rho**2 * (
        2.0 * b_ * ep / R3_ - 3.0 * b_**2 * gR / R4_
    )
    gRdddot = (
        rho * (ep / R_ - b_ * gR / R2_)
        + 3.0 * rho**2 * ((b_ * e + a_ * ep) / R3_ - 3.0 * a_ * b_ * gR / R4_)
        - 3.0 * rho**3 * (3.0 * b_**2 * ep / R5_ - 5.0 * b_**3 * gR / R6_)
    )
    return RangeState(R, Rdot, Rddot, Rdddot, gR, gRdot, gRddot, gRdddot)


def range_state(traj: Trajectory, x: ArrayLike, s: ArrayLike) -> RangeState:
    """Closed-form range quantities for ground point(s) ``x`` at slow time ``s``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ValueError(f"ground points need a trailing axis of length 2, got {x.shape}")
    s = np.asarray(s, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    x1, x2, s = np.broadcast_arrays(x1, x2, s)
    if isinstance(traj, LinearPath):
        return _linear_range_state(traj, x1, x2, s)
    if isinstance(traj, CircularPath):
        return _circular_range_state(traj, x1, x2, s)
    raise TypeError(f"unsupported trajectory {traj!r}")


def range_vector(traj: Trajectory, x: ArrayLike, s: ArrayLike) -> np.ndarray:
    """The 3-vector ``(x, 0) - gamma(s)``."""
    x = np.asarray(x, dtype=float)
    g = trajectory_state(traj, s, 0)
    xg = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
    return xg - g


def range_only(traj: Trajectory, x: ArrayLike, s: ArrayLike) -> np.ndarray:
    """``R(s)`` computed directly from the range vector."""
    return np.linalg.norm(range_vector(traj, x, s), axis=-1)


def default_fd_step(point, order: int) -> float:
    scale = 1.0 + float(np.max(np.abs(point)))
    return scale * (1e-5 if order == 1 else 1e-4)


def fd_derivative(
    f: Callable,
    point,
    direction=None,
    order: int = 1,
    step: float | None = None,
) -> float:
    """Central finite-difference directional derivative of a scalar function.

    Evaluates ``g(t) = f(point + t * direction)`` and differentiates ``g`` at
    ``t = 0``. All stencils are central with truncation error ``O(step**2)``::

        order 1: (g(h) - g(-h)) / 2h
        order 2: (g(h) - 2 g(0) + g(-h)) / h^2
        order 3: (g(2h) - 2 g(h) + 2 g(-h) - g(-2h)) / 2h^3

    ``direction`` defaults to 1 for scalar points.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"finite-difference order must be 1..3, got {order!r}")
    point = np.asarray(point, dtype=float)
    direction = np.ones_like(point) if direction is None else np.asarray(direction, float)
    if step is None:
        step = default_fd_step(point, order)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")

    def g(t):
        val = f(point + t * direction) if point.ndim else f(float(point + t * direction))
        val = float(val)
        if not np.isfinite(val):
            raise NumericalError(f"non-finite function value at offset {t:g}")
        return val

    h = step
    if order == 1:
        return (g(h) - g(-h)) / (2.0 * h)
    if order == 2:
        return (g(h) - 2.0 * g(0.0) + g(-h)) / h**2
    return (g(2 * h) - 2.0 * g(h) + 2.0 * g(-h) - g(-2 * h)) / (2.0 * h**3)
