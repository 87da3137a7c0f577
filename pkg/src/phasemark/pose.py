"""Planar rigid poses, homogeneous transforms and differential poses.

A :class:`Transform` maps marker-frame coordinates to camera-frame
coordinates::

    T = [[cos t, -sin t, x],
         [sin t,  cos t, y],
         [0,      0,     1]]

Uncertainties are carried as scalars and combined in quadrature, ignoring
covariance between the terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

TWO_PI = 2.0 * math.pi
ROTATION_TOLERANCE = 1e-9


def normalize_angle(theta):
    """Angle(s) mapped into ``[0, 2*pi)``."""
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def signed_angle(theta):
    """Angle(s) mapped into ``(-pi, pi]``."""
    out = math.pi - np.mod(math.pi - np.asarray(theta, dtype=np.float64), TWO_PI)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Pose2D:
    """In-plane pose with scalar standard uncertainties.

    Parameters
    ----------
    x, y : float
        Translation, in whatever length unit the caller uses (periods or a
        physical unit).
    theta : float
        Rotation in radians, stored in ``[0, 2*pi)``.
    sigma_xy : float
        Standard uncertainty of each translation component.
    sigma_theta : float
        Standard uncertainty of ``theta`` in radians.
    """

    x: float
    y: float
    theta: float
    sigma_xy: float = 0.0
    sigma_theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "theta", "sigma_xy", "sigma_theta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.sigma_xy < 0 or self.sigma_theta < 0:
            raise ValueError("uncertainties must be non-negative")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def signed_theta(self) -> float:
        """``theta`` in ``(-pi, pi]``, the natural range for relative poses."""
        return signed_angle(self.theta)

    def as_dict(self, signed: bool = False) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "theta": self.signed_theta if signed else self.theta,
            "sigma_xy": self.sigma_xy,
            "sigma_theta": self.sigma_theta,
        }


@dataclass(frozen=True)
class Transform:
    """3x3 homogeneous rigid transform (rotation + translation)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"transform must be 3x3, got {m.shape}")
        (a, b, _), (c, d, _), last = m.tolist()
        tol = ROTATION_TOLERANCE
        if (
            abs(a * a + b * b - 1.0) > tol
            or abs(c * c + d * d - 1.0) > tol
            or abs(a * c + b * d) > tol
            or abs(a * d - b * c - 1.0) > tol
            or max(abs(last[0]), abs(last[1]), abs(last[2] - 1.0)) > tol
        ):
            raise ValueError("matrix is not a proper rigid transform")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def _trusted(cls, m: np.ndarray) -> "Transform":
        # skips the rigidity check for matrices built from a known rotation
        t = object.__new__(cls)
        m.setflags(write=False)
        object.__setattr__(t, "matrix", m)
        return t

    def __matmul__(self, other: "Transform") -> "Transform":
        if not isinstance(other, Transform):
            return NotImplemented
        return Transform._trusted(self.matrix @ other.matrix)

    def inverse(self) -> "Transform":
        rot = self.matrix[:2, :2]
        out = np.eye(3)
        out[:2, :2] = rot.T
        out[:2, 2] = -rot.T @ self.matrix[:2, 2]
        return Transform._trusted(out)

    def apply(self, points) -> np.ndarray:
        """Map ``(..., 2)`` marker-frame points into the camera frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:2, :2].T + self.matrix[:2, 2]

    def to_pose(self, sigma_xy: float = 0.0, sigma_theta: float = 0.0) -> Pose2D:
        m = self.matrix
        return Pose2D(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]), sigma_xy, sigma_theta)


def to_transform(p: Pose2D) -> Transform:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Transform._trusted(np.array([[c, -s, p.x], [s, c, p.y], [0.0, 0.0, 1.0]]))


def from_transform(t: Transform, sigma_xy: float = 0.0, sigma_theta: float = 0.0) -> Pose2D:
    return t.to_pose(sigma_xy, sigma_theta)


def inverse(p: Pose2D) -> Pose2D:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2D(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta, p.sigma_xy, p.sigma_theta)


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of ``T_a @ T_b``; uncertainties add in quadrature."""
    sigma_xy = math.hypot(a.sigma_xy, b.sigma_xy)
    sigma_theta = math.hypot(a.sigma_theta, b.sigma_theta)
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta, sigma_xy, sigma_theta)


def relative_pose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of marker ``b`` expressed in the frame of marker ``a``.

    Both poses must live in the same camera frame. The result is
    ``T_a^-1 @ T_b``; use :attr:`Pose2D.signed_theta` for the relative angle
    in ``(-pi, pi]``.

    Examples
    --------
    >>> r = relative_pose(Pose2D(1, 0, math.pi / 2), Pose2D(1, 1, math.pi / 2))
    >>> round(r.x, 12), round(r.y, 12), round(r.signed_theta, 12)
    (1.0, 0.0, 0.0)
    """
    sigma_xy = math.hypot(a.sigma_xy, b.sigma_xy)
    sigma_theta = math.hypot(a.sigma_theta, b.sigma_theta)
    c, s = math.cos(a.theta), math.sin(a.theta)
    dx, dy = b.x - a.x, b.y - a.y
    return Pose2D(c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta, sigma_xy, sigma_theta)


def periods_to_physical(pose, period: float) -> Pose2D:
    """Scale a pose measured in lattice periods to physical length.

    ``pose`` may be any object with ``x``, ``y`` and ``theta`` attributes;
    ``sigma_xy`` and ``sigma_theta`` are used when present.

    Raises
    ------
    ConfigError
        If ``period`` is not a positive finite number.
    """
    period = float(period)
    if not (period > 0 and math.isfinite(period)):
        raise ConfigError(f"period must be positive, got {period}")
    return Pose2D(
        pose.x * period,
        pose.y * period,
        pose.theta,
        getattr(pose, "sigma_xy", 0.0) * period,
        getattr(pose, "sigma_theta", 0.0),
    )


def phase_uncertainty(phase) -> tuple:
    """Standard uncertainties ``(sigma_xy [periods], sigma_theta [rad])``.

    Built from the residual of the two phase-plane fits. A fit over ``M``
    lattice cells with residual ``r`` rad pins the plane offset to
    ``r / sqrt(M)`` rad, i.e. ``r / (2*pi*sqrt(M))`` periods, and the slope
    to ``r / (sqrt(M) * s)`` rad/px where ``s`` is the RMS spread of the
    sample positions (a square support of area ``A`` gives
    ``s = sqrt(A / 12)``). A slope error across the lattice direction turns
    the lattice by ``slope_error * period / (2*pi)``. The two axes are
    combined as independent measurements.
    """
    period = float(phase.period_px)
    sig_t, sig_r = [], []
    for plane in (phase.u_plane, phase.v_plane):
        if plane is None or plane.support_px <= 0:
            return float("nan"), float("nan")
        cells = max(plane.support_px / period**2, 1.0)
        spread = math.sqrt(plane.support_px / 12.0)
        sig_t.append(plane.rms_residual / (TWO_PI * math.sqrt(cells)))
        sig_r.append(plane.rms_residual * period / (TWO_PI * math.sqrt(cells) * spread))
    sigma_xy = math.sqrt(0.5 * (sig_t[0] ** 2 + sig_t[1] ** 2))
    sigma_theta = 1.0 / math.sqrt(1.0 / sig_r[0] ** 2 + 1.0 / sig_r[1] ** 2) if min(sig_r) > 0 else 0.0
    return sigma_xy, sigma_theta
