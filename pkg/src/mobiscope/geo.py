"""Globally referenced trajectory reconstruction.

The locally accurate SLAM trajectory is anchored to gated GPS fixes with a
closed-form least-squares similarity transform (centroids, cross-covariance,
SVD with determinant-sign correction), then mapped into an East-North-Up
frame at the first accepted fix.  An opt-in piecewise mode fits overlapping
anchor windows and blends transforms between window centers to absorb
slow SLAM drift on long sessions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .core import US_PER_S, SampleSeries
from .errors import (
    DegenerateGeometry,
    GeodesyError,
    ImplausibleScale,
    InsufficientAnchors,
    OutOfRange,
)

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


@dataclass(frozen=True)
class GpsFix:
    lat_deg: float
    lon_deg: float
    h_acc_m: float = 1.0


@dataclass(frozen=True)
class AnchorPair:
    t_us: int
    slam: np.ndarray  # (3,) local frame
    enu: np.ndarray  # (3,) meters


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray  # (3,3) orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise ValueError("rotation must be orthonormal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.scale * pts @ self.rotation.T + self.translation


def _check_wgs84(lat_deg: float, lon_deg: float) -> None:
    if not (math.isfinite(lat_deg) and -90.0 <= lat_deg <= 90.0):
        raise GeodesyError(f"latitude {lat_deg} outside [-90, 90]")
    if not (math.isfinite(lon_deg) and -180.0 <= lon_deg <= 180.0):
        raise GeodesyError(f"longitude {lon_deg} outside [-180, 180]")


def geodetic_to_ecef(lat_deg, lon_deg, h=0.0):
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    x = (n + h) * cos_lat * np.cos(lon)
    y = (n + h) * cos_lat * np.sin(lon)
    z = (n * (1.0 - WGS84_E2) + h) * sin_lat
    return x, y, z


def ecef_to_geodetic(x, y, z):
    """Iterative ECEF -> geodetic; converges well below 1e-12 deg."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(12):
        sin_lat = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
        lat = np.arctan2(z + WGS84_E2 * n * sin_lat, p)
    sin_lat = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    cos_lat = np.cos(lat)
    h = np.where(np.abs(cos_lat) > 1e-9, p / np.maximum(cos_lat, 1e-12) - n,
                 z / np.where(sin_lat == 0, 1.0, sin_lat) - n * (1.0 - WGS84_E2))
    return np.degrees(lat), np.degrees(lon), h


def _enu_rotation(origin: GpsFix) -> np.ndarray:
    lat = math.radians(origin.lat_deg)
    lon = math.radians(origin.lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    # rows: east, north, up in ECEF coordinates
    return np.array(
        [
            [-so, co, 0.0],
            [-sl * co, -sl * so, cl],
            [cl * co, cl * so, sl],
        ]
    )


def wgs84_to_enu(lat_deg, lon_deg, origin: GpsFix) -> np.ndarray:
    """Local tangent-plane coordinates (meters) of WGS84 points at ``origin``.

    Accepts scalars or arrays; returns (3,) or (n, 3).
    """
    scalar = np.isscalar(lat_deg)
    if scalar:
        _check_wgs84(float(lat_deg), float(lon_deg))
    _check_wgs84(origin.lat_deg, origin.lon_deg)
    x, y, z = geodetic_to_ecef(lat_deg, lon_deg)
    x0, y0, z0 = geodetic_to_ecef(origin.lat_deg, origin.lon_deg)
    delta = np.stack([x - x0, y - y0, z - z0], axis=-1)
    enu = delta @ _enu_rotation(origin).T
    return enu[0] if (scalar and enu.ndim == 2) else enu


def enu_to_wgs84(enu: np.ndarray, origin: GpsFix):
    """Inverse of wgs84_to_enu; returns (lat_deg, lon_deg) arrays."""
    _check_wgs84(origin.lat_deg, origin.lon_deg)
    enu = np.atleast_2d(np.asarray(enu, dtype=np.float64))
    x0, y0, z0 = geodetic_to_ecef(origin.lat_deg, origin.lon_deg)
    ecef = enu @ _enu_rotation(origin) + np.array([x0, y0, z0])
    lat, lon, _ = ecef_to_geodetic(ecef[:, 0], ecef[:, 1], ecef[:, 2])
    return lat, lon


@dataclass(frozen=True)
class AnchorSelection:
    kept: SampleSeries
    rejected: tuple[tuple[int, str], ...]  # (t_us, reason)


def select_gps_anchors(gps: SampleSeries, max_h_acc_m: float, max_speed_mps: float) -> AnchorSelection:
    """Gate GPS fixes on reported accuracy and implied walking speed.

    Speed is measured to the previous *kept* fix, so one outlier does not
    poison its successors.
    """
    lat = gps.col("lat_deg")
    lon = gps.col("lon_deg")
    acc = gps.col("h_acc_m")
    keep = np.zeros(len(gps), dtype=bool)
    rejected: list[tuple[int, str]] = []
    prev: int | None = None
    for i in range(len(gps)):
        if acc[i] > max_h_acc_m:
            rejected.append((int(gps.t_us[i]), "accuracy"))
            continue
        if prev is not None:
            dt_s = (int(gps.t_us[i]) - int(gps.t_us[prev])) / US_PER_S
            d = wgs84_to_enu(lat[i], lon[i], GpsFix(float(lat[prev]), float(lon[prev])))
            dist = math.hypot(d[0], d[1])
            if dt_s <= 0 or dist / dt_s > max_speed_mps:
                rejected.append((int(gps.t_us[i]), "speed"))
                continue
        keep[i] = True
        prev = i
    kept = SampleSeries(gps.t_us[keep].copy(), gps.values[keep].copy(), gps.columns)
    return AnchorSelection(kept, tuple(rejected))


def pair_anchors(
    slam: SampleSeries,
    anchors: SampleSeries,
    origin: GpsFix,
    tol_us: int,
    use_altitude: bool = False,
) -> list[AnchorPair]:
    """Pair each anchor with the nearest-in-time SLAM pose within tolerance."""
    if len(slam) == 0 or len(anchors) == 0:
        return []
    slam_t = slam.t_us
    positions = slam.values[:, 0:3]
    enu_all = wgs84_to_enu(anchors.col("lat_deg"), anchors.col("lon_deg"), origin)
    if not use_altitude:
        enu_all = enu_all.copy()
        enu_all[:, 2] = 0.0
    pairs: list[AnchorPair] = []
    idx = np.searchsorted(slam_t, anchors.t_us)
    for k in range(len(anchors)):
        t = int(anchors.t_us[k])
        cands = [i for i in (idx[k] - 1, idx[k]) if 0 <= i < len(slam_t)]
        best = min(cands, key=lambda i: abs(int(slam_t[i]) - t))
        if abs(int(slam_t[best]) - t) <= tol_us:
            pairs.append(AnchorPair(t, positions[best].copy(), enu_all[k].copy()))
    return pairs


def umeyama_align(
    pairs: list[AnchorPair],
    scale_bounds: tuple[float, float] = (0.2, 5.0),
) -> SimilarityTransform:
    """Closed-form least-squares similarity mapping SLAM points onto ENU.

    Minimizes sum ||enu_i - (s R slam_i + t)||^2 via centroids, the
    cross-covariance SVD, and the determinant-sign correction so that
    det(R) = +1; s = trace(D S) / var(slam).  Pairs are canonically sorted
    first, which makes the result bitwise-independent of input order.
    """
    if len(pairs) < 3:
        raise InsufficientAnchors(f"need >= 3 anchor pairs, got {len(pairs)}")
    order = sorted(
        range(len(pairs)),
        key=lambda i: (pairs[i].t_us, *pairs[i].slam.tolist(), *pairs[i].enu.tolist()),
    )
    x = np.array([pairs[i].slam for i in order], dtype=np.float64)
    y = np.array([pairs[i].enu for i in order], dtype=np.float64)
    n = len(x)

    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y

    sx = np.linalg.svd(xc, compute_uv=False)
    if sx[0] <= 0 or (sx[1:] > sx[0] * 1e-9).sum() < 1:
        raise DegenerateGeometry("SLAM anchor points are collinear or coincident")

    sigma2 = float((xc**2).sum()) / n
    cov = yc.T @ xc / n
    u, d, vt = np.linalg.svd(cov)
    s_diag = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_diag[2] = -1.0
    rot = u @ np.diag(s_diag) @ vt
    scale = float((d * s_diag).sum()) / sigma2
    if not scale_bounds[0] <= scale <= scale_bounds[1]:
        raise ImplausibleScale(f"recovered scale {scale:.6g} outside {scale_bounds}")
    trans = mu_y - scale * rot @ mu_x
    return SimilarityTransform(scale, rot, trans)


def anchor_bbox_diagonal(pairs: list[AnchorPair]) -> float:
    if not pairs:
        return 0.0
    enu = np.array([p.enu for p in pairs])
    return float(np.linalg.norm(enu.max(axis=0) - enu.min(axis=0)))


@dataclass(frozen=True)
class FusedTrajectory:
    """Globally referenced polyline with per-point time and arc length."""

    t_us: np.ndarray  # (n,) int64, strictly increasing
    enu: np.ndarray  # (n, 3) meters
    geo: np.ndarray  # (n, 2) lat, lon degrees
    arc_m: np.ndarray  # (n,) cumulative chord length, arc_m[0] == 0
    origin: GpsFix

    def __post_init__(self):
        if len(self.t_us) == 0:
            raise ValueError("empty trajectory")
        if len(self.t_us) > 1 and not np.all(np.diff(self.t_us) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.arc_m[0] != 0.0 or np.any(np.diff(self.arc_m) < 0):
            raise ValueError("arc_m must start at 0 and be non-decreasing")
        for name in ("t_us", "enu", "geo", "arc_m"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.t_us)

    @property
    def t_start(self) -> int:
        return int(self.t_us[0])

    @property
    def t_end(self) -> int:
        return int(self.t_us[-1])

    @property
    def length_m(self) -> float:
        return float(self.arc_m[-1])


@dataclass(frozen=True)
class LocatedPoint:
    enu: np.ndarray
    lat_deg: float
    lon_deg: float
    arc_m: float


def fuse_trajectory(slam: SampleSeries, transform: SimilarityTransform, origin: GpsFix) -> FusedTrajectory:
    """Map every SLAM pose through the similarity transform."""
    enu = transform.apply(slam.values[:, 0:3])
    return _finish_trajectory(slam.t_us.copy(), enu, origin)


def _finish_trajectory(t_us: np.ndarray, enu: np.ndarray, origin: GpsFix) -> FusedTrajectory:
    chords = np.linalg.norm(np.diff(enu, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(chords)])
    lat, lon = enu_to_wgs84(enu, origin)
    return FusedTrajectory(t_us, enu, np.stack([lat, lon], axis=1), arc, origin)


def locate(traj: FusedTrajectory, t_us: int) -> LocatedPoint:
    """Interpolated position and arc length at time t (within range)."""
    if t_us < traj.t_start or t_us > traj.t_end:
        raise OutOfRange(f"t {t_us} outside [{traj.t_start}, {traj.t_end}]")
    i = int(np.searchsorted(traj.t_us, t_us, side="left"))
    if traj.t_us[i] == t_us:
        enu = traj.enu[i].copy()
        return LocatedPoint(enu, float(traj.geo[i, 0]), float(traj.geo[i, 1]), float(traj.arc_m[i]))
    w = (t_us - int(traj.t_us[i - 1])) / (int(traj.t_us[i]) - int(traj.t_us[i - 1]))
    enu = traj.enu[i - 1] + w * (traj.enu[i] - traj.enu[i - 1])
    arc = float(traj.arc_m[i - 1] + w * (traj.arc_m[i] - traj.arc_m[i - 1]))
    lat, lon = enu_to_wgs84(enu, traj.origin)
    return LocatedPoint(enu, float(lat[0]), float(lon[0]), arc)


def time_at_arc(traj: FusedTrajectory, arc: float) -> int:
    """Earliest time at which cumulative arc length reaches ``arc``."""
    if arc < 0 or arc > traj.length_m:
        raise OutOfRange(f"arc {arc} outside [0, {traj.length_m}]")
    i = int(np.searchsorted(traj.arc_m, arc, side="left"))
    if traj.arc_m[i] == arc:
        return int(traj.t_us[i])
    a0, a1 = float(traj.arc_m[i - 1]), float(traj.arc_m[i])
    w = (arc - a0) / (a1 - a0)
    return int(round(int(traj.t_us[i - 1]) + w * (int(traj.t_us[i]) - int(traj.t_us[i - 1]))))


@dataclass(frozen=True)
class WindowedTransform:
    t_center_us: int
    transform: SimilarityTransform


def piecewise_transforms(
    pairs: list[AnchorPair],
    window_us: int,
    min_anchors: int,
    min_span_m: float,
    scale_bounds: tuple[float, float] = (0.2, 5.0),
    refit: str = "translation",
) -> list[WindowedTransform]:
    """Per-window alignments over 50%-overlapping anchor windows.

    In the default "translation" mode rotation and scale come from one
    global fit over all anchors (well-conditioned) and each window
    re-estimates only the translation, which tracks slow SLAM drift
    without amplifying GPS noise through the rotation.  "full" re-fits
    the whole similarity per window (for scale-drifting SLAM) and then
    also applies span/conditioning gates.  Windows failing their gates
    are skipped; callers fall back to a single global transform when
    fewer than two windows survive.
    """
    if not pairs or refit not in ("translation", "full"):
        return []
    pairs = sorted(pairs, key=lambda p: p.t_us)
    times = np.array([p.t_us for p in pairs], dtype=np.int64)
    t0, t1 = int(times[0]), int(times[-1])
    step = max(window_us // 2, 1)

    def window_ranges() -> list[tuple[int, int]]:
        out = []
        start = t0
        while start <= t1:
            lo = int(np.searchsorted(times, start, side="left"))
            hi = int(np.searchsorted(times, start + window_us, side="left"))
            if hi - lo >= min_anchors:
                out.append((lo, hi))
            start += step
        return out

    if refit == "full":
        out: list[WindowedTransform] = []
        for lo, hi in window_ranges():
            window = pairs[lo:hi]
            if anchor_bbox_diagonal(window) < min_span_m:
                continue
            try:
                tf = umeyama_align(window, scale_bounds)
            except (DegenerateGeometry, ImplausibleScale, InsufficientAnchors):
                continue
            center = int(np.median([p.t_us for p in window]))
            if not out or center > out[-1].t_center_us:
                out.append(WindowedTransform(center, tf))
        return out

    # translation mode: alternate between the global similarity and the
    # window-translation drift field so drift does not bias scale/rotation
    slam_all = np.array([p.slam for p in pairs])
    enu_all = np.array([p.enu for p in pairs])
    ranges = window_ranges()
    if not ranges:
        return []
    drift = np.zeros_like(enu_all)
    base = None
    centers: np.ndarray = np.empty(0)
    offsets: np.ndarray = np.empty((0, 3))
    for _ in range(3):
        corrected = [
            AnchorPair(p.t_us, p.slam, enu_all[i] - drift[i]) for i, p in enumerate(pairs)
        ]
        base = umeyama_align(corrected, scale_bounds)
        resid_all = enu_all - base.apply(slam_all)
        center_list: list[int] = []
        offset_list: list[np.ndarray] = []
        for lo, hi in ranges:
            center = int(round(float(times[lo:hi].mean())))  # matches the mean residual
            if center_list and center <= center_list[-1]:
                continue
            center_list.append(center)
            offset_list.append(resid_all[lo:hi].mean(axis=0))
        centers = np.array(center_list, dtype=np.float64)
        offsets = np.array(offset_list)
        if len(centers) < 2:
            break
        drift = np.stack(
            [np.interp(times.astype(np.float64), centers, offsets[:, j]) for j in range(3)],
            axis=1,
        )
    return [
        WindowedTransform(
            int(c), SimilarityTransform(base.scale, base.rotation, base.translation + off)
        )
        for c, off in zip(centers, offsets)
    ]


def fuse_trajectory_piecewise(
    slam: SampleSeries,
    windows: list[WindowedTransform],
    origin: GpsFix,
) -> FusedTrajectory:
    """Apply windowed transforms with linear blending between centers.

    Scale and translation interpolate linearly between window centers;
    rotation interpolates on the quaternion geodesic.  Before the first
    and after the last center the local trend is extrapolated linearly so
    that slow SLAM drift keeps being tracked at the session ends.
    """
    if len(windows) < 2:
        raise InsufficientAnchors("piecewise blending needs >= 2 window transforms")
    centers = np.array([w.t_center_us for w in windows], dtype=np.int64)
    rots = Rotation.from_matrix(np.array([w.transform.rotation for w in windows]))
    scales = np.array([w.transform.scale for w in windows])
    trans = np.array([w.transform.translation for w in windows])

    t_raw = slam.t_us.astype(np.float64)
    cf = centers.astype(np.float64)
    t = np.clip(t_raw, cf[0], cf[-1])
    scale_i = np.interp(t, cf, scales)
    trans_i = np.stack([np.interp(t, cf, trans[:, j]) for j in range(3)], axis=1)
    rot_i = Slerp(cf, rots)(t)

    for side, c_in, c_out in (("lo", 1, 0), ("hi", len(cf) - 2, len(cf) - 1)):
        mask = t_raw < cf[0] if side == "lo" else t_raw > cf[-1]
        if not np.any(mask):
            continue
        span = cf[c_out] - cf[c_in]
        frac = (t_raw[mask] - cf[c_out]) / span  # signed extrapolation factor
        scale_i[mask] = scales[c_out] + frac * (scales[c_out] - scales[c_in])
        trans_i[mask] = trans[c_out] + frac[:, None] * (trans[c_out] - trans[c_in])
        delta = (rots[c_out] * rots[c_in].inv()).as_rotvec()
        rot_i[mask] = Rotation.from_rotvec(frac[:, None] * delta) * rots[c_out]

    pts = slam.values[:, 0:3]
    enu = scale_i[:, None] * rot_i.apply(pts) + trans_i
    return _finish_trajectory(slam.t_us.copy(), enu, origin)
