"""Deterministic synthetic sessions with ground truth for every detector.

Generation is a pure function of (seed, scenario): random draws come from
Philox 4x64 counter-based generators keyed by (seed, stream id) using the
table below, and all files are written with fixed formatting, so the same
inputs always produce byte-identical outputs.

Stream id table (normative for reproduction):
    1 gps, 2 slam, 3 gaze, 4 eda, 5 ibi, 6 imu_left, 7 imu_right,
    8 walkway, 9 material
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import polars as pl

from . import canonical, params as params_mod
from .core import US_PER_S
from .errors import ScenarioMismatch, VersionError
from .fusion import SessionBundle
from .geo import GpsFix, enu_to_wgs84, wgs84_to_enu

TRUTH_VERSION = "mobiscope-truth/1"
BASE_EPOCH_US = 1_700_000_000_000_000

STREAM_IDS = {
    "gps": 1,
    "slam": 2,
    "gaze": 3,
    "eda": 4,
    "ibi": 5,
    "imu_left": 6,
    "imu_right": 7,
    "walkway": 8,
    "material": 9,
}

MATERIAL_CLASSES = (
    "concrete",
    "asphalt",
    "tiles",
    "bricks",
    "brushed_concrete",
    "granite",
    "exposed_aggregate_concrete",
    "paving_stone",
    "gravel",
    "wood_deck",
    "rubber",
    "metal_plate",
    "grass",
    "sand",
)

GAZE_CLASSES = ("signage", "vegetation", "curb", "pavement")


@dataclass(frozen=True)
class SynthScenario:
    """Full specification of a synthetic walking session."""

    session_id: str = "synth-001"
    seed: int = 1
    duration_s: float = 120.0
    origin_lat: float = 1.3521
    origin_lon: float = 103.8198
    waypoints_enu: tuple[tuple[float, float], ...] = ()  # auto route when empty
    speed_mps: float = 1.2
    # stream rates
    slam_rate_hz: float = 20.0
    gps_rate_hz: float = 1.0
    gaze_rate_hz: float = 200.0
    flow_rate_hz: float = 50.0
    eda_sample_hz: float = 4.0
    imu_rate_hz: float = 100.0
    # gps quality
    gps_noise_sigma_m: float = 0.0
    gps_h_acc_m: float = 5.0
    gps_dropout_windows: tuple[tuple[float, float], ...] = ()
    gps_bad_fix_times: tuple[float, ...] = ()  # injected h_acc=50 fixes
    # slam frame distortion: world = scale * Rz(yaw) * slam + translation
    slam_scale: float = 1.0
    slam_yaw_deg: float = 0.0
    slam_translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    slam_drift_rate: float = 0.0  # meters of drift per meter walked
    slam_drift_heading_deg: float = 45.0
    # gaze plan
    gaze_cluster_duration_s: tuple[float, float] = (0.25, 0.6)
    gaze_saccade_samples: int = 3
    gaze_jitter: float = 0.002
    gaze_min_jump: float = 0.15
    head_pan_amplitude: float = 0.03
    head_pan_period_s: float = 45.0
    raster_interval_s: float = 1.0
    raster_size: tuple[int, int] = (8, 6)
    # eda / ibi
    eda_baseline_us: float = 0.3
    scr_times_s: tuple[float, ...] = (20.0, 45.0, 70.0, 90.0, 110.0)
    scr_amplitude_us: float = 0.2
    ibi_base_ms: float = 800.0
    ibi_jitter_ms: float = 15.0
    # gait
    stride_mean_s: float = 1.0
    stride_sd_s: float = 0.03
    # walkway
    stature_m: float = 1.70
    skeleton_px: float = 340.0
    skeleton_rate_hz: float = 2.0
    edges_rate_hz: float = 2.0
    material_rate_hz: float = 1.0
    embedding_dim: int = 16
    width_profile: tuple[tuple[float, float], ...] = ((0.0, 1.5), (60.0, 1.2))
    material_profile: tuple[tuple[float, str], ...] = ((0.0, "concrete"), (60.0, "asphalt"))
    # manifest parameter overrides
    parameters: dict = field(default_factory=dict)

    def rng(self, stream: str) -> np.random.Generator:
        key = np.array([self.seed, STREAM_IDS[stream]], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _auto_route(length_m: float, leg_m: float = 60.0) -> tuple[tuple[float, float], ...]:
    """Serpentine route with 90-degree turns covering at least length_m."""
    pts = [(0.0, 0.0)]
    e, n = 0.0, 0.0
    direction = 1.0
    total = 0.0
    while total < length_m:
        e2 = e + direction * leg_m
        pts.append((e2, n))
        total += leg_m
        e = e2
        if total >= length_m:
            break
        n += 12.0
        pts.append((e, n))
        total += 12.0
        direction = -direction
    return tuple(pts)


class _Route:
    def __init__(self, waypoints: tuple[tuple[float, float], ...]):
        pts = np.array(waypoints, dtype=np.float64)
        legs = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(legs)])
        self.pts = pts
        self.length = float(self.cum[-1])

    def at(self, dist) -> np.ndarray:
        d = np.clip(np.asarray(dist, dtype=np.float64), 0.0, self.length)
        e = np.interp(d, self.cum, self.pts[:, 0])
        n = np.interp(d, self.cum, self.pts[:, 1])
        return np.stack([e, n], axis=-1)


def _grid_times_us(duration_s: float, rate_hz: float) -> np.ndarray:
    n = int(math.floor(duration_s * rate_hz)) + 1
    rel = np.rint(np.arange(n) * (1e6 / rate_hz)).astype(np.int64)
    return BASE_EPOCH_US + rel


def _write_csv(path: Path, header: str, t_us: np.ndarray, cols: list) -> None:
    """Exact text (repr) serialization; used for every low-rate stream."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for i in range(len(t_us)):
            cells = ",".join(repr(float(c[i])) for c in cols)
            fh.write(f"{int(t_us[i])},{cells}\n")


def _write_csv_fast(path: Path, header: list[str], t_us: np.ndarray, values: np.ndarray) -> None:
    """Bulk serialization for high-rate streams (exact shortest-repr floats)."""
    data: dict = {header[0]: t_us}
    for j, name in enumerate(header[1:]):
        data[name] = values[:, j]
    pl.DataFrame(data).write_csv(path)


def _piecewise_value(profile, t_s: float):
    value = profile[0][1]
    for start, v in profile:
        if t_s >= start:
            value = v
    return value


def generate_session(scenario: SynthScenario, out_dir: str | Path) -> tuple[Path, dict]:
    """Write a full synthetic session plus ground_truth.json.

    Returns (manifest path, truth document).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = scenario
    origin = GpsFix(sc.origin_lat, sc.origin_lon)
    effective = params_mod.resolve(sc.parameters)

    waypoints = sc.waypoints_enu or _auto_route(sc.speed_mps * sc.duration_s * 1.1)
    route = _Route(waypoints)

    # --- ground-truth trajectory on the SLAM clock ---
    slam_t = _grid_times_us(sc.duration_s, sc.slam_rate_hz)
    rel_s = (slam_t - BASE_EPOCH_US) / US_PER_S
    dist = sc.speed_mps * rel_s
    world = np.zeros((len(slam_t), 3))
    world[:, 0:2] = route.at(dist)

    yaw = math.radians(sc.slam_yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    trans = np.array(sc.slam_translation, dtype=np.float64)

    slam_pos = (world - trans) @ rot / sc.slam_scale  # rows @ rot == R^T applied
    if sc.slam_drift_rate != 0.0:
        head = math.radians(sc.slam_drift_heading_deg)
        drift_dir = np.array([math.cos(head), math.sin(head), 0.0])
        slam_pos = slam_pos + np.clip(dist, 0, route.length)[:, None] * sc.slam_drift_rate * drift_dir

    # heading quaternion about +z (orientation is carried but unused downstream)
    d_world = np.gradient(world[:, 0:2], axis=0)
    heading = np.arctan2(d_world[:, 1], d_world[:, 0])
    qz = np.sin(heading / 2.0)
    qw = np.cos(heading / 2.0)
    slam_vals = np.column_stack(
        [slam_pos, np.zeros_like(qz), np.zeros_like(qz), qz, qw]
    )
    _write_csv_fast(out / "slam.csv", ["t_us", "x_m", "y_m", "z_m", "qx", "qy", "qz", "qw"], slam_t, slam_vals)

    # --- gps ---
    rng = sc.rng("gps")
    gps_t = _grid_times_us(sc.duration_s, sc.gps_rate_hz)
    gps_rel = (gps_t - BASE_EPOCH_US) / US_PER_S
    keep = np.ones(len(gps_t), dtype=bool)
    for lo, hi in sc.gps_dropout_windows:
        keep &= ~((gps_rel >= lo) & (gps_rel < hi))
    noise = rng.normal(0.0, sc.gps_noise_sigma_m, size=(len(gps_t), 2)) if sc.gps_noise_sigma_m > 0 else np.zeros((len(gps_t), 2))
    gps_enu = np.zeros((len(gps_t), 3))
    gps_enu[:, 0:2] = route.at(sc.speed_mps * gps_rel) + noise
    lat, lon = enu_to_wgs84(gps_enu, origin)
    h_acc = np.full(len(gps_t), sc.gps_h_acc_m)
    for bad_t in sc.gps_bad_fix_times:
        idx = int(np.argmin(np.abs(gps_rel - bad_t)))
        h_acc[idx] = 50.0
    _write_csv(out / "gps.csv", "t_us,lat_deg,lon_deg,h_acc_m", gps_t[keep],
               [lat[keep], lon[keep], h_acc[keep]])

    # --- head flow + gaze ---
    flow_t = _grid_times_us(sc.duration_s, sc.flow_rate_hz)
    flow_rel = (flow_t - BASE_EPOCH_US) / US_PER_S
    pan_u = sc.head_pan_amplitude * np.sin(2 * np.pi * flow_rel / sc.head_pan_period_s)
    pan_v = 0.6 * sc.head_pan_amplitude * (np.cos(2 * np.pi * flow_rel / sc.head_pan_period_s) - 1.0)
    du = np.diff(np.concatenate([[0.0], pan_u]))
    dv = np.diff(np.concatenate([[0.0], pan_v]))
    _write_csv(out / "head_flow.csv", "t_us,du_norm,dv_norm", flow_t, [du, dv])
    cum_u = np.cumsum(du)
    cum_v = np.cumsum(dv)

    rng = sc.rng("gaze")
    gaze_t = _grid_times_us(sc.duration_s, sc.gaze_rate_hz)
    n_gaze = len(gaze_t)
    gaze_world = np.empty((n_gaze, 2))
    conf = np.full(n_gaze, 0.95)
    truth_fixations: list[dict] = []
    center = np.array([0.5, 0.5])
    i = 0
    cluster_idx = 0
    while i < n_gaze:
        dur = rng.uniform(*sc.gaze_cluster_duration_s)
        n_c = max(int(round(dur * sc.gaze_rate_hz)), 2)
        n_c = min(n_c, n_gaze - i)
        jitter = rng.normal(0.0, sc.gaze_jitter, size=(n_c, 2))
        gaze_world[i : i + n_c] = center + jitter
        truth_fixations.append(
            {
                "t_start_us": int(gaze_t[i]),
                "t_end_us": int(gaze_t[i + n_c - 1]),
                "cx": float(center[0]),
                "cy": float(center[1]),
                "class_name": GAZE_CLASSES[cluster_idx % len(GAZE_CLASSES)],
            }
        )
        cluster_idx += 1
        i += n_c
        if i >= n_gaze:
            break
        # saccade to a new center at least min_jump away
        while True:
            nxt = rng.uniform(0.3, 0.7, size=2)
            if np.linalg.norm(nxt - center) >= sc.gaze_min_jump:
                break
        n_s = min(sc.gaze_saccade_samples, n_gaze - i)
        for k in range(n_s):
            frac = (k + 1) / (n_s + 1)
            gaze_world[i + k] = center + frac * (nxt - center)
            if rng.random() < 0.15:
                conf[i + k] = 0.3
        i += n_s
        center = nxt
    # drop a trailing partial cluster that cannot reach the minimum duration
    if truth_fixations and (truth_fixations[-1]["t_end_us"] - truth_fixations[-1]["t_start_us"]) < effective["gaze.min_fix_duration_us"]:
        truth_fixations.pop()

    flow_idx = np.searchsorted(flow_t, gaze_t, side="right") - 1
    shift_u = np.where(flow_idx >= 0, cum_u[np.maximum(flow_idx, 0)], 0.0)
    shift_v = np.where(flow_idx >= 0, cum_v[np.maximum(flow_idx, 0)], 0.0)
    gaze_scene = gaze_world + np.stack([shift_u, shift_v], axis=1)
    gaze_scene = np.clip(gaze_scene, 0.0, 1.0)
    _write_csv_fast(out / "gaze.csv", ["t_us", "gx_norm", "gy_norm", "confidence"], gaze_t,
                    np.column_stack([gaze_scene, conf]))

    # --- label rasters (uniform grid per frame, class = active gaze target) ---
    rasters_dir = out / "rasters"
    rasters_dir.mkdir(exist_ok=True)
    legend_rows = [(i, name) for i, name in enumerate(GAZE_CLASSES)]
    with open(out / "rasters" / "legend.csv", "w", encoding="utf-8") as fh:
        fh.write("id,class_name\n")
        for i_, name in legend_rows:
            fh.write(f"{i_},{name}\n")
    raster_t = _grid_times_us(sc.duration_s, 1.0 / sc.raster_interval_s)
    fix_starts = np.array([f["t_start_us"] for f in truth_fixations], dtype=np.int64)
    w_px, h_px = sc.raster_size
    index_rows = []
    raster_classes = []
    for k, t in enumerate(raster_t):
        pos = int(np.searchsorted(fix_starts, t, side="right")) - 1
        cls_idx = max(pos, 0) % len(GAZE_CLASSES)
        raster_classes.append(GAZE_CLASSES[cls_idx] if len(truth_fixations) else GAZE_CLASSES[0])
        grid_name = f"grid_{k:05d}.txt"
        with open(rasters_dir / grid_name, "w", encoding="utf-8") as fh:
            fh.write(f"{w_px} {h_px}\n")
            row = " ".join([str(cls_idx)] * w_px)
            for _ in range(h_px):
                fh.write(row + "\n")
        index_rows.append((int(t), f"grid_{k:05d}.txt", "legend"))
    with open(out / "rasters" / "index.csv", "w", encoding="utf-8") as fh:
        fh.write("t_us,grid_path,legend_id\n")
        for t, p, lid in index_rows:
            fh.write(f"{t},{p},{lid}\n")
    # the class a fixation will intersect = class of its nearest raster
    tol = effective["gaze.raster_tol_us"]
    for f in truth_fixations:
        mid = (f["t_start_us"] + f["t_end_us"]) // 2
        pos = int(np.searchsorted(raster_t, mid))
        best = None
        for cand in (pos - 1, pos):
            if 0 <= cand < len(raster_t):
                if best is None or abs(int(raster_t[cand]) - mid) < abs(int(raster_t[best]) - mid):
                    best = cand
        if best is not None and abs(int(raster_t[best]) - mid) <= tol:
            f["class_name"] = raster_classes[best]
        else:
            f["class_name"] = None

    # --- eda ---
    eda_t = _grid_times_us(sc.duration_s, sc.eda_sample_hz)
    eda_rel = (eda_t - BASE_EPOCH_US) / US_PER_S
    eda = sc.eda_baseline_us + 0.05 * np.sin(2 * np.pi * eda_rel / 300.0)
    scr_truth_us = []
    for t_scr in sc.scr_times_s:
        if t_scr > sc.duration_s:
            continue
        snapped = float(eda_rel[int(np.argmin(np.abs(eda_rel - t_scr)))])
        scr_truth_us.append(BASE_EPOCH_US + int(round(snapped * US_PER_S)))
        tau = eda_rel - snapped
        bump = np.where(
            tau < 0,
            np.exp(-(tau**2) / (2 * 0.3**2)),
            np.exp(-(tau**2) / (2 * 1.0**2)),
        )
        bump[np.abs(tau) > 5.0] = 0.0
        eda = eda + sc.scr_amplitude_us * bump
    _write_csv(out / "eda.csv", "t_us,eda_us", eda_t, [eda])

    # --- ibi ---
    rng = sc.rng("ibi")
    beats = [0.0]
    while beats[-1] < sc.duration_s:
        ibi = sc.ibi_base_ms + rng.normal(0.0, sc.ibi_jitter_ms)
        ibi = float(np.clip(ibi, 350.0, 1800.0))
        beats.append(beats[-1] + ibi / 1000.0)
    beat_rel = np.array(beats[1:])
    ibis_ms = np.diff(np.array(beats)) * 1000.0
    ibi_t = BASE_EPOCH_US + np.rint(beat_rel * US_PER_S).astype(np.int64)
    inside = beat_rel <= sc.duration_s
    _write_csv(out / "ibi.csv", "t_us,ibi_ms", ibi_t[inside], [ibis_ms[inside]])

    # --- foot IMUs ---
    truth_strides: dict[str, list[int]] = {}
    for foot, stream in (("left", "imu_left"), ("right", "imu_right")):
        rng = sc.rng(stream)
        start = 0.5 if foot == "left" else 0.5 + sc.stride_mean_s / 2.0
        heel: list[float] = [start]
        while True:
            step = sc.stride_mean_s if sc.stride_sd_s == 0 else float(
                np.clip(rng.normal(sc.stride_mean_s, sc.stride_sd_s), 0.7, 1.8)
            )
            nxt = heel[-1] + step
            if nxt > sc.duration_s - 0.5:
                break
            heel.append(nxt)
        imu_t = _grid_times_us(sc.duration_s, sc.imu_rate_hz)
        imu_rel = (imu_t - BASE_EPOCH_US) / US_PER_S
        gy = np.zeros(len(imu_t))
        w_swing, w_stance = 0.3, 0.2
        for h in heel:
            m = (imu_rel >= h - w_swing) & (imu_rel < h)
            gy[m] += 2.5 * np.sin(np.pi * (imu_rel[m] - (h - w_swing)) / w_swing)
            m2 = (imu_rel >= h) & (imu_rel < h + w_stance)
            gy[m2] += -1.2 * np.sin(np.pi * (imu_rel[m2] - h) / w_stance)
        other = rng.normal(0.0, 0.05, size=(len(imu_t), 5))
        vals = np.column_stack(
            [other[:, 0], other[:, 1], 9.81 + other[:, 2], other[:, 3], gy, other[:, 4]]
        )
        _write_csv_fast(out / f"{stream}.csv", ["t_us", "ax", "ay", "az", "gx", "gy", "gz"], imu_t, vals)
        truth_strides[foot] = [BASE_EPOCH_US + int(round(h * US_PER_S)) for h in heel]

    # --- skeleton + walkway edges ---
    scale_m_per_px = sc.stature_m * effective["walkway.stature_fraction"] / sc.skeleton_px
    skel_t = _grid_times_us(sc.duration_s, sc.skeleton_rate_hz)
    with open(out / "skeleton.csv", "w", encoding="utf-8") as fh:
        fh.write("t_us,joint_name,px,py,confidence\n")
        for t in skel_t:
            head_y = 100.0
            fh.write(f"{int(t)},nose,{320.0!r},{head_y!r},{0.95!r}\n")
            fh.write(f"{int(t)},left_ankle,{300.0!r},{head_y + sc.skeleton_px!r},{0.9!r}\n")
            fh.write(f"{int(t)},right_ankle,{340.0!r},{head_y + sc.skeleton_px!r},{0.9!r}\n")
    edges_t = _grid_times_us(sc.duration_s, sc.edges_rate_hz)
    edges_rel = (edges_t - BASE_EPOCH_US) / US_PER_S
    widths_m = np.array([_piecewise_value(sc.width_profile, t) for t in edges_rel])
    width_px = widths_m / scale_m_per_px
    left_px = np.full(len(edges_t), 170.0)
    _write_csv(out / "walkway_edges.csv", "t_us,left_px,right_px,foot_row_px", edges_t,
               [left_px, left_px + width_px, np.full(len(edges_t), 430.0)])

    # --- material embeddings + probe ---
    rng = sc.rng("material")
    d = sc.embedding_dim
    with open(out / "probe.csv", "w", encoding="utf-8") as fh:
        fh.write("class_name,bias," + ",".join(f"w{i}" for i in range(d)) + "\n")
        for ci, name in enumerate(MATERIAL_CLASSES):
            w = ["1.0" if j == ci else "0.0" for j in range(d)]
            fh.write(f"{name},0.0," + ",".join(w) + "\n")
    mat_t = _grid_times_us(sc.duration_s, sc.material_rate_hz)
    mat_rel = (mat_t - BASE_EPOCH_US) / US_PER_S
    emb = rng.normal(0.0, 0.02, size=(len(mat_t), d))
    truth_materials = []
    for i, t in enumerate(mat_rel):
        name = _piecewise_value(sc.material_profile, t)
        emb[i, MATERIAL_CLASSES.index(name)] += 1.0
        truth_materials.append(name)
    _write_csv_fast(out / "material_embedding.csv", ["t_us"] + [f"e{i}" for i in range(d)], mat_t, emb)

    # --- manifest ---
    manifest_doc = {
        "session_id": sc.session_id,
        "participant": {"id": "synthetic", "stature_m": sc.stature_m, "cohort_tag": "synthetic"},
        "streams": [
            {"kind": "gps", "path": "gps.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.gps_rate_hz},
            {"kind": "slam_pose", "path": "slam.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.slam_rate_hz},
            {"kind": "gaze", "path": "gaze.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.gaze_rate_hz},
            {"kind": "head_flow", "path": "head_flow.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.flow_rate_hz},
            {"kind": "label_raster", "path": "rasters/index.csv", "clock_offset_us": 0},
            {"kind": "eda", "path": "eda.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.eda_sample_hz},
            {"kind": "ibi", "path": "ibi.csv", "clock_offset_us": 0},
            {"kind": "imu_foot_left", "path": "imu_left.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.imu_rate_hz},
            {"kind": "imu_foot_right", "path": "imu_right.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.imu_rate_hz},
            {"kind": "skeleton", "path": "skeleton.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.skeleton_rate_hz},
            {"kind": "walkway_edges", "path": "walkway_edges.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.edges_rate_hz},
            {"kind": "material_embedding", "path": "material_embedding.csv", "clock_offset_us": 0, "nominal_rate_hz": sc.material_rate_hz},
        ],
        "parameters": dict(sc.parameters),
    }
    canonical.dump(manifest_doc, out / "session.json")

    truth = {
        "version": TRUTH_VERSION,
        "session_id": sc.session_id,
        "seed": sc.seed,
        "origin": {"lat_deg": sc.origin_lat, "lon_deg": sc.origin_lon},
        "transform": {
            "scale": sc.slam_scale,
            "rotation": rot.reshape(-1).tolist(),
            "translation": list(sc.slam_translation),
        },
        "sample_periods_us": {
            "gaze": int(round(1e6 / sc.gaze_rate_hz)),
            "eda": int(round(1e6 / sc.eda_sample_hz)),
            "imu": int(round(1e6 / sc.imu_rate_hz)),
            "slam": int(round(1e6 / sc.slam_rate_hz)),
        },
        "true_positions": {
            "t_us": slam_t.tolist(),
            "e": world[:, 0].tolist(),
            "n": world[:, 1].tolist(),
            "u": world[:, 2].tolist(),
        },
        "route_length_m": route.length,
        "fixations": truth_fixations,
        "scr_t_us": scr_truth_us,
        "strides": truth_strides,
        "width_profile": [[t, v] for t, v in sc.width_profile],
        "material_profile": [[t, v] for t, v in sc.material_profile],
        "scenario": {
            k: v for k, v in asdict(sc).items() if k != "parameters"
        },
    }
    canonical.dump(truth, out / "ground_truth.json")
    return out / "session.json", truth


def _match_events(detected: list[int], truth: list[int], tol_us: int) -> int:
    i = j = matched = 0
    while i < len(detected) and j < len(truth):
        d = detected[i] - truth[j]
        if abs(d) <= tol_us:
            matched += 1
            i += 1
            j += 1
        elif detected[i] < truth[j]:
            i += 1
        else:
            j += 1
    return matched


def _pr(matched: int, n_detected: int, n_truth: int) -> dict:
    return {
        "matched": matched,
        "n_detected": n_detected,
        "n_true": n_truth,
        "precision": None if n_detected == 0 else matched / n_detected,
        "recall": None if n_truth == 0 else matched / n_truth,
    }


def score_against_truth(bundle: SessionBundle, truth: dict) -> dict:
    """Compare a fused bundle to its generator's ground truth."""
    if truth.get("version") != TRUTH_VERSION:
        raise VersionError(f"unsupported truth version {truth.get('version')!r}")
    if truth.get("session_id") != bundle.session_id:
        raise ScenarioMismatch(
            f"bundle session {bundle.session_id!r} != truth session {truth.get('session_id')!r}"
        )
    periods = truth["sample_periods_us"]
    report: dict = {}

    # fixations: both boundaries within one gaze sample period
    det = [(r.fixation.t_start_us, r.fixation.t_end_us) for r in bundle.fixation_records]
    tru = [(f["t_start_us"], f["t_end_us"]) for f in truth["fixations"]]
    tol = periods["gaze"]
    i = j = matched = 0
    while i < len(det) and j < len(tru):
        ds, de = det[i]
        ts, te = tru[j]
        if abs(ds - ts) <= tol and abs(de - te) <= tol:
            matched += 1
            i += 1
            j += 1
        elif ds < ts:
            i += 1
        else:
            j += 1
    report["fixations"] = _pr(matched, len(det), len(tru))

    report["scr"] = _pr(
        _match_events([p.t_peak_us for p in bundle.scr_peaks], truth["scr_t_us"], periods["eda"]),
        len(bundle.scr_peaks),
        len(truth["scr_t_us"]),
    )

    stride_report = {}
    for foot in ("left", "right"):
        det_f = [e.t_heel_strike_us for e in bundle.strides if e.foot == foot]
        tru_f = truth["strides"][foot]
        stride_report[foot] = _pr(_match_events(det_f, tru_f, periods["imu"]), len(det_f), len(tru_f))
    report["strides"] = stride_report

    # transform errors (global fit vs generator similarity)
    tf = bundle.transform
    report["transform"] = None
    if tf is not None:
        r_true = np.array(truth["transform"]["rotation"]).reshape(3, 3)
        r_est = np.array(tf["rotation"]).reshape(3, 3)
        r_delta = r_est @ r_true.T
        angle = math.acos(min(1.0, max(-1.0, (np.trace(r_delta) - 1.0) / 2.0)))
        scen_origin = GpsFix(truth["origin"]["lat_deg"], truth["origin"]["lon_deg"])
        bundle_origin = bundle.trajectory.origin
        off = wgs84_to_enu(scen_origin.lat_deg, scen_origin.lon_deg, bundle_origin)
        t_true = np.array(truth["transform"]["translation"]) + off
        report["transform"] = {
            "scale_rel_err": abs(tf["scale"] - truth["transform"]["scale"]) / truth["transform"]["scale"],
            "rotation_err_deg": math.degrees(angle),
            "translation_err_m": float(np.linalg.norm(np.array(tf["translation"]) - t_true)),
            "mode": tf.get("mode"),
        }

    # trajectory RMSE in the bundle's ENU frame (horizontal components)
    tp = truth["true_positions"]
    t_true_us = np.array(tp["t_us"], dtype=np.int64)
    enu_scen = np.stack([np.array(tp["e"]), np.array(tp["n"]), np.array(tp["u"])], axis=1)
    scen_origin = GpsFix(truth["origin"]["lat_deg"], truth["origin"]["lon_deg"])
    lat, lon = enu_to_wgs84(enu_scen, scen_origin)
    enu_true = wgs84_to_enu(lat, lon, bundle.trajectory.origin)
    traj = bundle.trajectory
    if len(traj) == len(t_true_us) and np.array_equal(traj.t_us, t_true_us):
        est = traj.enu
    else:
        est = np.stack(
            [np.interp(t_true_us, traj.t_us, traj.enu[:, k]) for k in range(3)], axis=1
        )
    d2 = (est[:, 0] - enu_true[:, 0]) ** 2 + (est[:, 1] - enu_true[:, 1]) ** 2
    report["trajectory_rmse_m"] = float(np.sqrt(d2.mean()))
    gaps = np.linalg.norm(np.diff(traj.enu, axis=0), axis=1)
    true_gaps = np.linalg.norm(np.diff(enu_true, axis=0), axis=1)
    report["max_point_gap_m"] = float(gaps.max()) if gaps.size else 0.0
    report["native_slam_gap_m"] = float(true_gaps.max()) if true_gaps.size else 0.0

    # per-segment walkway attributes vs the planted profiles
    width_err = []
    mat_hits = []
    t0 = BASE_EPOCH_US
    for seg in bundle.segments:
        mid_s = ((seg.t_start_us + seg.t_end_us) // 2 - t0) / US_PER_S
        if seg.metrics.get("mean_width_m") is not None:
            width_err.append(
                abs(seg.metrics["mean_width_m"] - _piecewise_value([tuple(p) for p in truth["width_profile"]], mid_s))
            )
        if seg.metrics.get("material_mode") is not None:
            expected = _piecewise_value([tuple(p) for p in truth["material_profile"]], mid_s)
            mat_hits.append(1.0 if seg.metrics["material_mode"] == expected else 0.0)
    report["segments"] = {
        "width_mae_m": float(np.mean(width_err)) if width_err else None,
        "material_accuracy": float(np.mean(mat_hits)) if mat_hits else None,
    }
    return report
