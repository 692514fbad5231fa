"""Segment cutting, metric attachment, hotspot scoring, and bundle export.

All modality outputs meet here: the fused trajectory is tiled into
distance- or time-based segments, every metric is attached with a
coverage fraction, per-metric z-scores flag outlier segments, and the
result serializes to a versioned bundle directory plus GeoJSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import canonical
from .core import US_PER_S
from .errors import IoError, VersionError
from .gait import GaitMetrics, GaitWindow, StrideEvent
from .gaze import AttentionMetrics, Fixation
from .geo import FusedTrajectory, GpsFix, LocatedPoint, locate, time_at_arc
from .physio import PhysioWindow, ScrPeak
from .walkway import MaterialLabel, WidthEstimate

BUNDLE_VERSION = "mobiscope-bundle/1"

# numeric per-segment metrics, in export order
NUMERIC_METRICS = (
    "fixation_rate",
    "mean_fix_duration_ms",
    "mean_disp_h",
    "mean_disp_v",
    "scr_rate_per_min",
    "rmssd_ms",
    "pnn10",
    "stv_s",
    "mean_stride_time_s",
    "step_count",
    "mean_width_m",
)
ALL_METRICS = NUMERIC_METRICS + ("dwell_by_class", "material_mode")


@dataclass(frozen=True)
class SegmentSpec:
    mode: str  # "by_distance" | "by_time"
    length: float  # meters or seconds
    min_fill: float = 0.5

    def __post_init__(self):
        if self.mode not in ("by_distance", "by_time"):
            raise ValueError(f"unknown segment mode {self.mode!r}")
        if self.length <= 0:
            raise ValueError("segment length must be positive")


@dataclass(frozen=True)
class SegmentGeometry:
    t_us: np.ndarray  # (k,)
    enu: np.ndarray  # (k, 3)
    geo: np.ndarray  # (k, 2) lat, lon
    arc_m: np.ndarray  # (k,)


@dataclass(frozen=True)
class ExperiencedSegment:
    index: int
    t_start_us: int
    t_end_us: int
    arc_start_m: float
    arc_end_m: float
    geometry: SegmentGeometry
    metrics: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FixationRecord:
    fixation: Fixation
    class_name: str | None = None
    raster_t_us: int | None = None


@dataclass(frozen=True)
class FusionInputs:
    """Everything attach_metrics needs, with per-source coverage intervals."""

    fixation_records: list[FixationRecord] | None = None
    gaze_span: tuple[int, int] | None = None
    scr_peaks: list[ScrPeak] | None = None
    eda_span: tuple[int, int] | None = None
    physio_windows: list[PhysioWindow] | None = None
    physio_win_us: int = 60 * US_PER_S
    strides: list[StrideEvent] | None = None
    imu_spans: tuple[tuple[int, int], ...] = ()
    gait_windows: list[GaitWindow] | None = None
    gait_win_us: int = 60 * US_PER_S
    widths: list[WidthEstimate] | None = None
    width_span: tuple[int, int] | None = None
    materials: list[MaterialLabel] | None = None
    material_span: tuple[int, int] | None = None


def _point_at_arc(traj: FusedTrajectory, arc: float) -> tuple[int, np.ndarray, np.ndarray, float]:
    """(t_us, enu, geo, arc) at the earliest point reaching ``arc``."""
    i = int(np.searchsorted(traj.arc_m, arc, side="left"))
    if i < len(traj) and traj.arc_m[i] == arc:
        return int(traj.t_us[i]), traj.enu[i].copy(), traj.geo[i].copy(), float(arc)
    a0, a1 = float(traj.arc_m[i - 1]), float(traj.arc_m[i])
    w = (arc - a0) / (a1 - a0)
    enu = traj.enu[i - 1] + w * (traj.enu[i] - traj.enu[i - 1])
    geo = traj.geo[i - 1] + w * (traj.geo[i] - traj.geo[i - 1])
    t = int(round(int(traj.t_us[i - 1]) + w * (int(traj.t_us[i]) - int(traj.t_us[i - 1]))))
    return t, enu, geo, float(arc)


def _geometry_by_arc(traj: FusedTrajectory, a0: float, a1: float) -> SegmentGeometry:
    t0, enu0, geo0, _ = _point_at_arc(traj, a0)
    t1, enu1, geo1, _ = _point_at_arc(traj, a1)
    inner = np.nonzero((traj.arc_m > a0) & (traj.arc_m < a1))[0]
    t = np.concatenate([[t0], traj.t_us[inner], [t1]]).astype(np.int64)
    enu = np.vstack([enu0, traj.enu[inner], enu1])
    geo = np.vstack([geo0, traj.geo[inner], geo1])
    arc = np.concatenate([[a0], traj.arc_m[inner], [a1]])
    return SegmentGeometry(t, enu, geo, arc)


def _geometry_by_time(traj: FusedTrajectory, t0: int, t1: int) -> SegmentGeometry:
    p0 = locate(traj, t0)
    p1 = locate(traj, t1)
    inner = np.nonzero((traj.t_us > t0) & (traj.t_us < t1))[0]
    t = np.concatenate([[t0], traj.t_us[inner], [t1]]).astype(np.int64)
    enu = np.vstack([p0.enu, traj.enu[inner], p1.enu])
    geo = np.vstack(
        [[p0.lat_deg, p0.lon_deg], traj.geo[inner], [p1.lat_deg, p1.lon_deg]]
    )
    arc = np.concatenate([[p0.arc_m], traj.arc_m[inner], [p1.arc_m]])
    return SegmentGeometry(t, enu, geo, arc)


def build_segments(traj: FusedTrajectory, spec: SegmentSpec) -> list[ExperiencedSegment]:
    """Cut the trajectory into tiling segments (geometry only).

    Distance mode cuts at arc multiples of the segment length; the final
    partial segment is kept when it fills at least ``min_fill`` of a full
    one.  Time mode cuts at equal time steps with the same fill rule.
    """
    segments: list[ExperiencedSegment] = []
    if spec.mode == "by_distance":
        total = traj.length_m
        n_full = int(np.floor(total / spec.length + 1e-9))
        cuts = [k * spec.length for k in range(n_full + 1)]
        remainder = total - n_full * spec.length
        if remainder >= spec.min_fill * spec.length - 1e-9 and remainder > 1e-12:
            cuts.append(total)
        for k in range(len(cuts) - 1):
            a0, a1 = cuts[k], cuts[k + 1]
            geom = _geometry_by_arc(traj, a0, a1)
            segments.append(
                ExperiencedSegment(
                    index=k,
                    t_start_us=int(geom.t_us[0]),
                    t_end_us=int(geom.t_us[-1]),
                    arc_start_m=a0,
                    arc_end_m=a1,
                    geometry=geom,
                )
            )
    else:
        length_us = int(round(spec.length * US_PER_S))
        total_us = traj.t_end - traj.t_start
        n_full = total_us // length_us
        cuts_t = [traj.t_start + k * length_us for k in range(n_full + 1)]
        remainder = total_us - n_full * length_us
        if remainder >= spec.min_fill * length_us and remainder > 0:
            cuts_t.append(traj.t_end)
        for k in range(len(cuts_t) - 1):
            geom = _geometry_by_time(traj, cuts_t[k], cuts_t[k + 1])
            segments.append(
                ExperiencedSegment(
                    index=k,
                    t_start_us=cuts_t[k],
                    t_end_us=cuts_t[k + 1],
                    arc_start_m=float(geom.arc_m[0]),
                    arc_end_m=float(geom.arc_m[-1]),
                    geometry=geom,
                )
            )
    return segments


def _merge_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def _union_overlap_us(intervals: list[tuple[int, int]], lo: int, hi: int) -> int:
    total = 0
    for a, b in _merge_intervals(intervals):
        total += max(0, min(b, hi) - max(a, lo))
    return total


def _span_coverage(span, t0: int, t1: int) -> float:
    if span is None or t1 <= t0:
        return 0.0
    return _union_overlap_us([span], t0, t1) / (t1 - t0)


def _sorted_times(items, key) -> np.ndarray:
    return np.array([key(x) for x in items], dtype=np.int64)


def attach_metrics(segments: list[ExperiencedSegment], inputs: FusionInputs) -> list[ExperiencedSegment]:
    """Assign events and windowed metrics to segments.

    Events go to the segment whose half-open [t_start, t_end) interval
    contains their (midpoint) timestamp; windowed series are averaged over
    overlapping windows weighted by overlap duration.  Every metric gets a
    coverage fraction; absent metrics are None with coverage 0.
    """
    fx = inputs.fixation_records
    fx_t = _sorted_times(fx or [], lambda r: r.fixation.midpoint_us)
    scr_t = _sorted_times(inputs.scr_peaks or [], lambda p: p.t_peak_us)
    stride_t = _sorted_times(inputs.strides or [], lambda e: e.t_heel_strike_us)
    width_t = _sorted_times(inputs.widths or [], lambda w: w.t_us)
    mat_t = _sorted_times(inputs.materials or [], lambda m: m.t_us)
    pw = inputs.physio_windows or []
    pw_centers = _sorted_times(pw, lambda w: w.t_center_us)
    gw = inputs.gait_windows or []
    gw_centers = _sorted_times(gw, lambda w: w.t_center_us)

    out: list[ExperiencedSegment] = []
    for seg in segments:
        t0, t1 = seg.t_start_us, seg.t_end_us
        dur_us = max(t1 - t0, 1)
        minutes = dur_us / (60 * US_PER_S)
        metrics: dict = {key: None for key in ALL_METRICS}
        coverage: dict = {key: 0.0 for key in ALL_METRICS}

        if fx is not None:
            cov = _span_coverage(inputs.gaze_span, t0, t1)
            lo, hi = np.searchsorted(fx_t, (t0, t1), side="left")
            inside = fx[lo:hi]
            if cov > 0:
                metrics["fixation_rate"] = len(inside) / minutes
                coverage["fixation_rate"] = cov
                dwell: dict[str, float] = {}
                for rec in inside:
                    if rec.class_name is not None:
                        dwell[rec.class_name] = (
                            dwell.get(rec.class_name, 0.0) + rec.fixation.duration_us / 1000.0
                        )
                metrics["dwell_by_class"] = dwell
                coverage["dwell_by_class"] = cov
            if inside:
                durs = [r.fixation.duration_us / 1000.0 for r in inside]
                metrics["mean_fix_duration_ms"] = float(np.mean(durs))
                metrics["mean_disp_h"] = float(np.mean([r.fixation.disp_h for r in inside]))
                metrics["mean_disp_v"] = float(np.mean([r.fixation.disp_v for r in inside]))
                for key in ("mean_fix_duration_ms", "mean_disp_h", "mean_disp_v"):
                    coverage[key] = cov

        if inputs.scr_peaks is not None:
            cov = _span_coverage(inputs.eda_span, t0, t1)
            if cov > 0:
                lo, hi = np.searchsorted(scr_t, (t0, t1), side="left")
                metrics["scr_rate_per_min"] = int(hi - lo) / minutes
                coverage["scr_rate_per_min"] = cov

        if inputs.physio_windows is not None:
            _attach_windowed(
                metrics, coverage, t0, t1, pw, pw_centers, inputs.physio_win_us,
                (("rmssd_ms", lambda w: w.rmssd_ms), ("pnn10", lambda w: w.pnn10)),
            )

        if inputs.gait_windows is not None:
            _attach_windowed(
                metrics, coverage, t0, t1, gw, gw_centers, inputs.gait_win_us,
                (("stv_s", lambda w: w.stv_s), ("mean_stride_time_s", lambda w: w.mean_stride_time_s)),
            )

        if inputs.strides is not None:
            cov = 0.0
            if inputs.imu_spans:
                cov = _union_overlap_us(list(inputs.imu_spans), t0, t1) / dur_us
            if cov > 0:
                lo, hi = np.searchsorted(stride_t, (t0, t1), side="left")
                metrics["step_count"] = int(hi - lo)
                coverage["step_count"] = cov

        if inputs.widths is not None:
            cov = _span_coverage(inputs.width_span, t0, t1)
            lo, hi = np.searchsorted(width_t, (t0, t1), side="left")
            if hi > lo:
                metrics["mean_width_m"] = float(np.mean([w.width_m for w in inputs.widths[lo:hi]]))
                coverage["mean_width_m"] = cov

        if inputs.materials is not None:
            cov = _span_coverage(inputs.material_span, t0, t1)
            lo, hi = np.searchsorted(mat_t, (t0, t1), side="left")
            inside_m = inputs.materials[lo:hi]
            if inside_m:
                counts: dict[str, int] = {}
                first_seen: dict[str, int] = {}
                for m in inside_m:
                    counts[m.class_name] = counts.get(m.class_name, 0) + 1
                    first_seen.setdefault(m.class_name, m.t_us)
                best_n = max(counts.values())
                tied = [name for name, n in counts.items() if n == best_n]
                metrics["material_mode"] = min(tied, key=lambda name: first_seen[name])
                coverage["material_mode"] = cov

        out.append(replace(seg, metrics=metrics, coverage=coverage))
    return out


def _attach_windowed(metrics, coverage, t0, t1, windows, centers, win_us, keys) -> None:
    """Overlap-weighted averaging of window values into one segment."""
    half = win_us // 2
    # windows whose [center-half, center-half+win) interval overlaps [t0, t1)
    lo = int(np.searchsorted(centers, t0 + half - win_us, side="right"))
    hi = int(np.searchsorted(centers, t1 + half, side="left"))
    weights: list[int] = []
    chosen: list = []
    intervals: list[tuple[int, int]] = []
    for k in range(lo, hi):
        w_lo = int(centers[k]) - half
        w_hi = w_lo + win_us
        o = min(w_hi, t1) - max(w_lo, t0)
        if o > 0:
            weights.append(o)
            chosen.append(windows[k])
            intervals.append((w_lo, w_hi))
    if not weights:
        return
    wsum = float(sum(weights))
    cov = min(_union_overlap_us(intervals, t0, t1) / max(t1 - t0, 1), 1.0)
    for key, getter in keys:
        metrics[key] = float(sum(w * getter(win) for w, win in zip(weights, chosen)) / wsum)
        coverage[key] = cov


@dataclass(frozen=True)
class HotspotReport:
    z_thresh: float
    z: dict[str, list[float | None]]  # metric -> per-segment z (aligned with segments)
    skipped: dict[str, str]
    hotspot: list[bool]
    coincidence: list[bool]


def hotspot_zscores(
    segments: list[ExperiencedSegment],
    hotspot_metrics: tuple[str, ...],
    z_thresh: float = 2.0,
    coverage_min: float = 0.5,
) -> HotspotReport:
    """Per-metric z-scores across segments (population SD) plus flags.

    A metric with fewer than two usable segments (value present and
    coverage >= coverage_min) is skipped and recorded as such.  The
    coincidence flag marks segments where both the SCR-rate z and the
    fixation-dispersion z reach the threshold.
    """
    n = len(segments)
    z: dict[str, list[float | None]] = {}
    skipped: dict[str, str] = {}
    for key in NUMERIC_METRICS:
        usable = [
            i
            for i, seg in enumerate(segments)
            if seg.metrics.get(key) is not None and seg.coverage.get(key, 0.0) >= coverage_min
        ]
        if len(usable) < 2:
            skipped[key] = "InsufficientSegments"
            continue
        vals = np.array([float(segments[i].metrics[key]) for i in usable])
        mean = float(vals.mean())
        sd = float(vals.std(ddof=0))
        col: list[float | None] = [None] * n
        for pos, i in enumerate(usable):
            col[i] = 0.0 if sd == 0 else (float(vals[pos]) - mean) / sd
        z[key] = col

    hotspot = [False] * n
    coincidence = [False] * n
    for i in range(n):
        for key in hotspot_metrics:
            zi = z.get(key, [None] * n)[i]
            if zi is not None and abs(zi) >= z_thresh:
                hotspot[i] = True
                break
        z_scr = z.get("scr_rate_per_min", [None] * n)[i]
        disp_zs = [
            v for v in (z.get("mean_disp_h", [None] * n)[i], z.get("mean_disp_v", [None] * n)[i])
            if v is not None
        ]
        if z_scr is not None and disp_zs and z_scr >= z_thresh and max(disp_zs) >= z_thresh:
            coincidence[i] = True
    return HotspotReport(z_thresh, z, skipped, hotspot, coincidence)


@dataclass
class SessionBundle:
    """Everything the dashboard and exporters consume, in memory."""

    session_id: str
    manifest: dict
    params: dict
    warnings: list[str]
    transform: dict | None
    attention: AttentionMetrics | None
    gait_summary: GaitMetrics | None
    counts: dict
    trajectory: FusedTrajectory
    fixation_records: list[FixationRecord]
    scr_peaks: list[ScrPeak]
    strides: list[StrideEvent]
    physio_windows: list[PhysioWindow]
    gait_windows: list[GaitWindow]
    window_meta: dict
    segments: list[ExperiencedSegment]
    report: HotspotReport | None
    version: str = BUNDLE_VERSION


def export_geojson(
    traj: FusedTrajectory,
    segments: list[ExperiencedSegment],
    report: HotspotReport | None,
) -> dict:
    """RFC 7946 FeatureCollection: whole trajectory plus one LineString per segment.

    Coordinates are [lon, lat]; full-precision geometry lives in the ENU
    property arrays (lon/lat at 9 significant digits is display-grade).
    """
    features: list[dict] = []
    features.append(
        {
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [[float(lon), float(lat)] for lat, lon in traj.geo],
            },
            "properties": {
                "kind": "trajectory",
                "t_us": traj.t_us.tolist(),
                "arc_m": traj.arc_m.tolist(),
                "enu_e": traj.enu[:, 0].tolist(),
                "enu_n": traj.enu[:, 1].tolist(),
                "enu_u": traj.enu[:, 2].tolist(),
                "origin_lat_deg": traj.origin.lat_deg,
                "origin_lon_deg": traj.origin.lon_deg,
            },
        }
    )
    n = len(segments)
    for seg in segments:
        props: dict = {
            "kind": "segment",
            "index": seg.index,
            "t_start_us": seg.t_start_us,
            "t_end_us": seg.t_end_us,
            "arc_start_m": seg.arc_start_m,
            "arc_end_m": seg.arc_end_m,
            "sample_coverage": dict(seg.coverage),
            "t_us": seg.geometry.t_us.tolist(),
            "arc_m": seg.geometry.arc_m.tolist(),
            "enu_e": seg.geometry.enu[:, 0].tolist(),
            "enu_n": seg.geometry.enu[:, 1].tolist(),
            "enu_u": seg.geometry.enu[:, 2].tolist(),
        }
        for key in ALL_METRICS:
            props[key] = seg.metrics.get(key)
        if report is not None:
            props["z"] = {k: report.z[k][seg.index] for k in sorted(report.z)}
            props["hotspot"] = report.hotspot[seg.index] if seg.index < n else False
            props["coincidence"] = report.coincidence[seg.index]
        else:
            props["z"] = {}
            props["hotspot"] = False
            props["coincidence"] = False
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[float(lon), float(lat)] for lat, lon in seg.geometry.geo],
                },
                "properties": props,
            }
        )
    return {"type": "FeatureCollection", "features": features}


def _fixation_dicts(records: list[FixationRecord]) -> list[dict]:
    out = []
    for rec in records:
        f = rec.fixation
        out.append(
            {
                "t_start_us": f.t_start_us,
                "t_end_us": f.t_end_us,
                "cx": f.cx,
                "cy": f.cy,
                "disp_h": f.disp_h,
                "disp_v": f.disp_v,
                "n_samples": f.n_samples,
                "theta": f.theta,
                "class_name": rec.class_name,
                "raster_t_us": rec.raster_t_us,
            }
        )
    return out


def export_bundle(bundle: SessionBundle, out_dir: str | Path) -> Path:
    """Write the versioned bundle directory (canonical serialization)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create bundle dir {out}: {exc}") from exc

    traj = bundle.trajectory
    canonical.dump(
        {
            "origin": {"lat_deg": traj.origin.lat_deg, "lon_deg": traj.origin.lon_deg},
            "t_us": traj.t_us.tolist(),
            "e": traj.enu[:, 0].tolist(),
            "n": traj.enu[:, 1].tolist(),
            "u": traj.enu[:, 2].tolist(),
            "lat_deg": traj.geo[:, 0].tolist(),
            "lon_deg": traj.geo[:, 1].tolist(),
            "arc_m": traj.arc_m.tolist(),
        },
        out / "trajectory.json",
    )

    canonical.dump(
        {
            "fixations": _fixation_dicts(bundle.fixation_records),
            "scr_peaks": [
                {"t_peak_us": p.t_peak_us, "amplitude_us": p.amplitude_us, "rise_time_ms": p.rise_time_ms}
                for p in bundle.scr_peaks
            ],
            "strides": [
                {"t_heel_strike_us": e.t_heel_strike_us, "foot": e.foot, "t_midswing_us": e.t_midswing_us}
                for e in bundle.strides
            ],
        },
        out / "events.json",
    )

    canonical.dump(
        {
            "meta": dict(bundle.window_meta),
            "physio": [
                {
                    "t_center_us": w.t_center_us,
                    "rmssd_ms": w.rmssd_ms,
                    "pnn10": w.pnn10,
                    "n_intervals": w.n_intervals,
                    "scr_rate_per_min": w.scr_rate_per_min,
                }
                for w in bundle.physio_windows
            ],
            "gait": [
                {
                    "t_center_us": w.t_center_us,
                    "mean_stride_time_s": w.mean_stride_time_s,
                    "stv_s": w.stv_s,
                    "n_strides": w.n_strides,
                }
                for w in bundle.gait_windows
            ],
        },
        out / "windows.json",
    )

    canonical.dump(export_geojson(traj, bundle.segments, bundle.report), out / "segments.geojson")

    attention = None
    if bundle.attention is not None:
        a = bundle.attention
        attention = {
            "fixation_rate_per_min": a.fixation_rate_per_min,
            "mean_duration_ms": a.mean_duration_ms,
            "mean_disp_h": a.mean_disp_h,
            "mean_disp_v": a.mean_disp_v,
            "dwell_by_class": dict(a.dwell_by_class),
        }
    gait_summary = None
    if bundle.gait_summary is not None:
        g = bundle.gait_summary
        gait_summary = {
            "step_count": g.step_count,
            "mean_stride_time_s": g.mean_stride_time_s,
            "stv_s": g.stv_s,
            "stv_cv": g.stv_cv,
            "asymmetry": g.asymmetry,
            "n_pause_excluded": g.n_pause_excluded,
        }
    canonical.dump(
        {
            "version": bundle.version,
            "session_id": bundle.session_id,
            "manifest": bundle.manifest,
            "parameters": {k: list(v) if isinstance(v, tuple) else v for k, v in bundle.params.items()},
            "warnings": list(bundle.warnings),
            "transform": bundle.transform,
            "attention": attention,
            "gait_summary": gait_summary,
            "counts": bundle.counts,
            "report": None
            if bundle.report is None
            else {"z_thresh": bundle.report.z_thresh, "skipped": bundle.report.skipped},
            "files": {
                "trajectory": "trajectory.json",
                "events": "events.json",
                "windows": "windows.json",
                "segments": "segments.geojson",
            },
        },
        out / "bundle.json",
    )
    return out


def load_bundle(bundle_dir: str | Path) -> SessionBundle:
    """Re-read a bundle directory into memory; re-export is byte-identical."""
    root = Path(bundle_dir)
    index_path = root / "bundle.json"
    if not index_path.is_file():
        raise IoError(f"bundle.json not found in {root}")
    index = canonical.load(index_path)
    version = index.get("version")
    if version != BUNDLE_VERSION:
        raise VersionError(f"unsupported bundle version {version!r} (expected {BUNDLE_VERSION})")

    tdoc = canonical.load(root / index["files"]["trajectory"])
    origin = GpsFix(float(tdoc["origin"]["lat_deg"]), float(tdoc["origin"]["lon_deg"]))
    traj = FusedTrajectory(
        t_us=np.array(tdoc["t_us"], dtype=np.int64),
        enu=np.stack(
            [np.array(tdoc["e"], float), np.array(tdoc["n"], float), np.array(tdoc["u"], float)],
            axis=1,
        ),
        geo=np.stack([np.array(tdoc["lat_deg"], float), np.array(tdoc["lon_deg"], float)], axis=1),
        arc_m=np.array(tdoc["arc_m"], dtype=np.float64),
        origin=origin,
    )

    edoc = canonical.load(root / index["files"]["events"])
    fixation_records = [
        FixationRecord(
            Fixation(
                t_start_us=f["t_start_us"],
                t_end_us=f["t_end_us"],
                cx=float(f["cx"]),
                cy=float(f["cy"]),
                disp_h=float(f["disp_h"]),
                disp_v=float(f["disp_v"]),
                n_samples=f["n_samples"],
                theta=float(f["theta"]),
            ),
            f.get("class_name"),
            f.get("raster_t_us"),
        )
        for f in edoc["fixations"]
    ]
    scr_peaks = [
        ScrPeak(p["t_peak_us"], float(p["amplitude_us"]), float(p["rise_time_ms"]))
        for p in edoc["scr_peaks"]
    ]
    strides = [
        StrideEvent(e["t_heel_strike_us"], e["foot"], e["t_midswing_us"]) for e in edoc["strides"]
    ]

    wdoc = canonical.load(root / index["files"]["windows"])
    physio_windows = [
        PhysioWindow(
            w["t_center_us"], float(w["rmssd_ms"]), float(w["pnn10"]), w["n_intervals"],
            float(w["scr_rate_per_min"]),
        )
        for w in wdoc["physio"]
    ]
    gait_windows = [
        GaitWindow(w["t_center_us"], float(w["mean_stride_time_s"]), float(w["stv_s"]), w["n_strides"])
        for w in wdoc["gait"]
    ]

    gdoc = canonical.load(root / index["files"]["segments"])
    segments: list[ExperiencedSegment] = []
    z: dict[str, list[float | None]] = {}
    hotspot: list[bool] = []
    coincidence: list[bool] = []
    seg_features = [f for f in gdoc["features"] if f["properties"].get("kind") == "segment"]
    for f in seg_features:
        props = f["properties"]
        coords = f["geometry"]["coordinates"]
        geom = SegmentGeometry(
            t_us=np.array(props["t_us"], dtype=np.int64),
            enu=np.stack(
                [
                    np.array(props["enu_e"], float),
                    np.array(props["enu_n"], float),
                    np.array(props["enu_u"], float),
                ],
                axis=1,
            ),
            geo=np.array([[lat, lon] for lon, lat in coords], dtype=np.float64),
            arc_m=np.array(props["arc_m"], dtype=np.float64),
        )
        metrics = {key: props.get(key) for key in ALL_METRICS}
        segments.append(
            ExperiencedSegment(
                index=props["index"],
                t_start_us=props["t_start_us"],
                t_end_us=props["t_end_us"],
                arc_start_m=float(props["arc_start_m"]),
                arc_end_m=float(props["arc_end_m"]),
                geometry=geom,
                metrics=metrics,
                coverage=dict(props["sample_coverage"]),
            )
        )
        for key, val in props.get("z", {}).items():
            z.setdefault(key, []).append(val)
        hotspot.append(bool(props.get("hotspot", False)))
        coincidence.append(bool(props.get("coincidence", False)))

    report = None
    if index.get("report") is not None:
        report = HotspotReport(
            z_thresh=float(index["report"]["z_thresh"]),
            z=z,
            skipped=dict(index["report"]["skipped"]),
            hotspot=hotspot,
            coincidence=coincidence,
        )

    attention = None
    if index.get("attention") is not None:
        attention = AttentionMetrics(**index["attention"])
    gait_summary = None
    if index.get("gait_summary") is not None:
        gait_summary = GaitMetrics(**index["gait_summary"])

    return SessionBundle(
        session_id=index["session_id"],
        manifest=index["manifest"],
        params=index["parameters"],
        warnings=list(index["warnings"]),
        transform=index.get("transform"),
        attention=attention,
        gait_summary=gait_summary,
        counts=index["counts"],
        trajectory=traj,
        fixation_records=fixation_records,
        scr_peaks=scr_peaks,
        strides=strides,
        physio_windows=physio_windows,
        gait_windows=gait_windows,
        window_meta=wdoc["meta"],
        segments=segments,
        report=report,
        version=version,
    )
