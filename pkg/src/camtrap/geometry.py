"""Ground-plane calibration, animal tracks, detection zones and REM density.

Ground coordinates are metres with the camera at the origin and the optical
axis along +Y. A single image-to-ground homography stands in for full
intrinsic/extrinsic calibration: animals walk on the ground plane, so it is
all position and speed need. Lens distortion is ignored.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Iterable, Sequence as Seq
from dataclasses import dataclass

import numpy as np


class OutOfDomainError(ValueError):
    """Pixel does not map to a point on the ground in front of the camera."""


# --------------------------------------------------------------------------
# homography


@dataclass(frozen=True)
class CalibrationModel:
    H: np.ndarray  # image (u, v, 1) -> ground (X, Y, W)
    rmse_m: float
    n_points: int
    w_sign: int = 1  # sign of W over the calibration points

    def to_dict(self) -> dict:
        return {
            "H": [[float(x) for x in row] for row in self.H],
            "rmse_m": self.rmse_m,
            "n_points": self.n_points,
            "w_sign": self.w_sign,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationModel:
        H = np.asarray(d["H"], dtype=float)
        if H.shape != (3, 3):
            raise ValueError("calibration H must be 3x3")
        return cls(H, float(d["rmse_m"]), int(d["n_points"]), int(d.get("w_sign", 1)))


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _collinear(pts: np.ndarray, rel_tol: float = 1e-9) -> bool:
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    return sv[0] == 0 or sv[1] <= rel_tol * sv[0]


def _apply(H: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hom = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    return hom[:, :2] / hom[:, 2:3], hom[:, 2]


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalised DLT: least-squares H with ``dst ~ H src`` over all points."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if len(src) < 4 or src.shape != dst.shape:
        raise ValueError("need at least 4 point correspondences")
    if _collinear(src) or _collinear(dst):
        raise ValueError("degenerate configuration: points are collinear")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = np.column_stack([src, np.ones(len(src))]) @ Ts.T
    d = np.column_stack([dst, np.ones(len(dst))]) @ Td.T
    rows = []
    for (x, y, w), (xp, yp, wp) in zip(s, d):
        rows.append([0, 0, 0, -wp * x, -wp * y, -wp * w, yp * x, yp * y, yp * w])
        rows.append([wp * x, wp * y, wp * w, 0, 0, 0, -xp * x, -xp * y, -xp * w])
    A = np.asarray(rows)
    _, sv, vt = np.linalg.svd(A)
    if sv[-2] <= 1e-12 * sv[0]:
        raise ValueError("rank-deficient system: homography not unique")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-14:
        raise ValueError("homography cannot be normalised (H[2,2] = 0)")
    return H / H[2, 2]


def fit_homography(correspondences: Iterable[tuple[float, float, float, float]]) -> CalibrationModel:
    """Fit the image-to-ground map from ``(u, v, X_m, Y_m)`` correspondences."""
    pts = np.asarray(list(correspondences), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError("correspondences must be (u, v, X, Y) rows")
    img, ground = pts[:, :2], pts[:, 2:]
    H = dlt_homography(img, ground)
    proj, w = _apply(H, img)
    rmse = float(np.sqrt(np.mean(np.sum((proj - ground) ** 2, axis=1))))
    w_sign = 1 if np.sum(np.sign(w)) >= 0 else -1
    return CalibrationModel(H, rmse, len(pts), w_sign)


def project_to_ground(model: CalibrationModel, u: float, v: float) -> tuple[float, float]:
    X, Y, W = model.H @ np.array([u, v, 1.0])
    if abs(W) <= 1e-12 or np.sign(W) != model.w_sign:
        raise OutOfDomainError(f"pixel ({u}, {v}) is on or above the horizon")
    return float(X / W), float(Y / W)


def ground_to_image(
    height_m: float,
    tilt_rad: float,
    focal_px: float,
    cx: float,
    cy: float,
) -> np.ndarray:
    """Homography ground -> image for an ideal pinhole camera.

    The camera sits ``height_m`` above the origin looking along +Y, pitched
    down by ``tilt_rad``; image v grows downwards. Useful for synthesising
    calibration data.
    """
    c, s = math.cos(tilt_rad), math.sin(tilt_rad)
    # camera axes in world coords: x_c = +X, z_c (forward) = (0, c, -s), y_c (down) = (0, -s, -c)
    R = np.array([[1.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])
    t = -R @ np.array([0.0, 0.0, height_m])
    K = np.array([[focal_px, 0, cx], [0, focal_px, cy], [0, 0, 1.0]])
    # ground point (X, Y, 0, 1) -> K [r1 r2 t] (X, Y, 1)
    G = K @ np.column_stack([R[:, 0], R[:, 1], t])
    return G / G[2, 2]


def apply_homography(H: np.ndarray, pts) -> np.ndarray:
    out, _ = _apply(np.asarray(H, dtype=float), np.atleast_2d(np.asarray(pts, dtype=float)))
    return out


# --------------------------------------------------------------------------
# tracks


@dataclass(frozen=True)
class TrackPoint:
    time_s: float
    u: float = math.nan
    v: float = math.nan
    ground: tuple[float, float] | None = None


@dataclass(frozen=True)
class SpeedEstimate:
    avg_speed_m_s: float
    max_speed_m_s: float
    path_length_m: float
    entry_angle_rad: float


def estimate_speed(track: Seq[TrackPoint], model: CalibrationModel | None = None) -> SpeedEstimate:
    """Average/maximum speed, path length and entry bearing of one track.

    Points already carrying ground coordinates are used as is; the rest are
    projected through ``model``. The entry angle is the bearing of the first
    segment measured from +Y towards +X.
    """
    if len(track) < 2:
        raise ValueError("a track needs at least two points")
    t = np.array([p.time_s for p in track], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("track times must be strictly increasing (duplicate timestamp?)")
    xy = []
    for p in track:
        if p.ground is not None:
            xy.append(p.ground)
        elif model is None:
            raise ValueError("track point without ground position and no calibration model")
        else:
            xy.append(project_to_ground(model, p.u, p.v))
    xy = np.asarray(xy, dtype=float)
    seg = np.diff(xy, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    path = float(lengths.sum())
    dt = np.diff(t)
    return SpeedEstimate(
        avg_speed_m_s=path / float(t[-1] - t[0]),
        max_speed_m_s=float(np.max(lengths / dt)),
        path_length_m=path,
        entry_angle_rad=float(math.atan2(seg[0, 0], seg[0, 1])),
    )


# --------------------------------------------------------------------------
# detection zone


@dataclass(frozen=True)
class DetectionZone:
    """Effective detection sector with half-normal distance and angle decay."""

    sigma_r_m: float
    sigma_a_rad: float

    @property
    def r_eff_m(self) -> float:
        return self.sigma_r_m * math.sqrt(2.0)

    @property
    def theta_eff_rad(self) -> float:
        return 2.0 * self.sigma_a_rad * math.sqrt(math.pi / 2.0)

    @classmethod
    def from_effective(cls, r_eff_m: float, theta_eff_rad: float) -> DetectionZone:
        return cls(r_eff_m / math.sqrt(2.0), theta_eff_rad / (2.0 * math.sqrt(math.pi / 2.0)))

    def scaled(self, factor: float) -> DetectionZone:
        return DetectionZone(self.sigma_r_m * factor, self.sigma_a_rad)

    def to_dict(self) -> dict:
        return {
            "sigma_r_m": self.sigma_r_m,
            "sigma_a_rad": self.sigma_a_rad,
            "r_eff_m": self.r_eff_m,
            "theta_eff_rad": self.theta_eff_rad,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DetectionZone:
        return cls(float(d["sigma_r_m"]), float(d["sigma_a_rad"]))


def fit_detection_zone(
    first_detections: Iterable[tuple[float, float]], min_points: int = 5
) -> DetectionZone:
    """Maximum-likelihood detection zone from first-detection positions.

    Radial distances of first detections follow a Rayleigh law (half-normal
    detection times the linear growth of available area), so
    ``sigma_r^2 = sum(r^2) / (2n)``; absolute angles are half-normal, so
    ``sigma_a^2 = sum(a^2) / n``.
    """
    pts = np.asarray(list(first_detections), dtype=float).reshape(-1, 2)
    if len(pts) < min_points:
        raise ValueError(f"need at least {min_points} first detections, got {len(pts)}")
    r, a = pts[:, 0], pts[:, 1]
    if np.any(r < 0) or not np.all(np.isfinite(pts)):
        raise ValueError("distances must be finite and non-negative")
    if not np.any(r > 0):
        raise ValueError("all first-detection distances are zero")
    sigma_r = math.sqrt(float(np.sum(r**2)) / (2 * len(r)))
    sigma_a = math.sqrt(float(np.sum(a**2)) / len(a))
    if sigma_a == 0:
        warnings.warn("all detection angles are zero: degenerate zero-width zone", stacklevel=2)
    return DetectionZone(sigma_r, sigma_a)


# --------------------------------------------------------------------------
# random encounter model


@dataclass(frozen=True)
class RemInputs:
    y: int
    t: float  # camera-days
    v_m_per_day: float
    zone: DetectionZone

    def __post_init__(self):
        if self.y < 0 or not (self.t > 0 and self.v_m_per_day > 0):
            raise ValueError("REM inputs must be positive")


def encounter_rate(density_per_km2: float, v_km_day: float, zone: DetectionZone) -> float:
    """Expected detections per camera-day for animals moving as an ideal gas."""
    r_km = zone.r_eff_m / 1000.0
    return density_per_km2 * v_km_day * r_km * (2.0 + zone.theta_eff_rad) / math.pi


def rem_density(inputs: RemInputs) -> float:
    """Animals per km^2: ``(y/t) * pi / (v * r * (2 + theta))`` with v in km/day, r in km."""
    r_km = inputs.zone.r_eff_m / 1000.0
    if r_km <= 0:
        raise ValueError("detection zone has zero radius")
    v_km = inputs.v_m_per_day / 1000.0
    return (inputs.y / inputs.t) * math.pi / (v_km * r_km * (2.0 + inputs.zone.theta_eff_rad))
