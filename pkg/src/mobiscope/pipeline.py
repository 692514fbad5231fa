"""Wires ingest -> trajectory alignment -> per-modality analysis -> fusion.

Missing optional streams degrade gracefully (metrics absent, warning
recorded); gps and slam_pose are required because the trajectory is the
spatial backbone everything else attaches to.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import params as params_mod
from .core import US_PER_S, SampleSeries, SessionManifest
from .errors import (
    DegenerateGeometry,
    InsufficientAnchors,
    InsufficientData,
    ManifestError,
    MobiscopeError,
)
from .fusion import (
    FixationRecord,
    FusionInputs,
    SegmentSpec,
    SessionBundle,
    attach_metrics,
    build_segments,
    hotspot_zscores,
)
from .gait import detect_strides, gait_metrics, gait_windows
from .gaze import (
    attention_metrics,
    compensate_head_motion,
    detect_fixations_idt,
    intersect_fixations,
    load_label_rasters,
)
from .geo import (
    GpsFix,
    anchor_bbox_diagonal,
    fuse_trajectory,
    fuse_trajectory_piecewise,
    pair_anchors,
    piecewise_transforms,
    select_gps_anchors,
    umeyama_align,
)
from .ingest import parse_stream, resample_uniform
from .physio import clean_ibi, decompose_eda, detect_scr_peaks, physio_windows
from .walkway import classify_material, estimate_width, load_probe_model, pixel_scale, smooth_materials
from .errors import SkeletonIncomplete, TooSmall, EdgeOrderError, StaleScale


def manifest_echo(manifest: SessionManifest) -> dict:
    return {
        "session_id": manifest.session_id,
        "participant": {
            "id": manifest.participant.id,
            "stature_m": manifest.participant.stature_m,
            "cohort_tag": manifest.participant.cohort_tag,
        },
        "streams": [
            {
                "kind": d.kind,
                "path": d.path,
                "clock_offset_us": d.clock_offset_us,
                "nominal_rate_hz": d.nominal_rate_hz,
            }
            for d in manifest.streams
        ],
        "parameters": dict(manifest.parameters),
    }


def run_session(manifest: SessionManifest, overrides: dict | None = None) -> SessionBundle:
    params = params_mod.resolve(manifest.parameters, overrides)
    warnings: list[str] = []
    counts: dict = {}

    streams: dict = {}
    for decl in manifest.streams:
        streams[decl.kind] = parse_stream(decl, manifest.base_dir)
        counts[f"samples_{decl.kind}"] = len(streams[decl.kind])

    gps = streams.get("gps")
    slam = streams.get("slam_pose")
    if gps is None or slam is None:
        raise ManifestError("/streams", "fusion requires both gps and slam_pose streams")

    # --- trajectory backbone ---
    selection = select_gps_anchors(gps, params["geo.max_h_acc_m"], params["geo.max_speed_mps"])
    counts["gps_anchors"] = len(selection.kept)
    counts["gps_rejected"] = len(selection.rejected)
    if len(selection.kept) == 0:
        raise InsufficientAnchors("no GPS fixes passed the anchor gates")
    origin = GpsFix(
        float(selection.kept.col("lat_deg")[0]),
        float(selection.kept.col("lon_deg")[0]),
        float(selection.kept.col("h_acc_m")[0]),
    )
    pairs = pair_anchors(
        slam, selection.kept, origin, params["geo.pairing_tol_us"], params["geo.use_altitude"]
    )
    counts["anchor_pairs"] = len(pairs)
    if len(pairs) < 3:
        raise InsufficientAnchors(f"only {len(pairs)} anchor pairs matched SLAM poses")
    if anchor_bbox_diagonal(pairs) < params["geo.min_anchor_span_m"]:
        raise DegenerateGeometry(
            f"anchor bounding box diagonal {anchor_bbox_diagonal(pairs):.1f} m "
            f"below minimum {params['geo.min_anchor_span_m']} m"
        )
    scale_bounds = (params["geo.scale_min"], params["geo.scale_max"])
    global_tf = umeyama_align(pairs, scale_bounds)
    transform = {
        "mode": "global",
        "scale": global_tf.scale,
        "rotation": global_tf.rotation.reshape(-1).tolist(),
        "translation": global_tf.translation.tolist(),
        "n_anchors": len(pairs),
        "n_windows": None,
    }
    if params["geo.piecewise"]:
        windows = piecewise_transforms(
            pairs,
            int(params["geo.piecewise_window_s"] * US_PER_S),
            params["geo.piecewise_min_anchors"],
            params["geo.min_anchor_span_m"],
            scale_bounds,
            params["geo.piecewise_refit"],
        )
        if len(windows) >= 2:
            traj = fuse_trajectory_piecewise(slam, windows, origin)
            transform["mode"] = "piecewise"
            transform["n_windows"] = len(windows)
        else:
            warnings.append("piecewise alignment fell back to a single global transform")
            traj = fuse_trajectory(slam, global_tf, origin)
    else:
        traj = fuse_trajectory(slam, global_tf, origin)
    span_us = traj.t_end - traj.t_start
    traj_span = (traj.t_start, traj.t_end)

    # --- gaze ---
    fixation_records: list[FixationRecord] = []
    gaze_span = None
    attention = None
    gaze = streams.get("gaze")
    if gaze is None:
        warnings.append("gaze stream missing; attention metrics absent")
    elif len(gaze) == 0:
        warnings.append("gaze stream empty; attention metrics absent")
    else:
        flow = streams.get("head_flow")
        if flow is None:
            warnings.append("head_flow stream missing; gaze not head-motion compensated")
            stabilized = gaze
        else:
            stabilized, uncovered = compensate_head_motion(gaze, flow)
            counts["gaze_uncompensated"] = uncovered
        fixations = detect_fixations_idt(
            stabilized,
            min_confidence=params["gaze.min_confidence"],
            min_fix_duration_us=params["gaze.min_fix_duration_us"],
            theta_base=params["gaze.theta_base"],
            k_noise=params["gaze.k_noise"],
            noise_window_us=params["gaze.noise_window_us"],
        )
        counts["fixations"] = len(fixations)
        by_key: dict[tuple[int, int], tuple[str, int]] = {}
        raster_index = streams.get("label_raster")
        if raster_index is not None:
            rasters = load_label_rasters(raster_index)
            result = intersect_fixations(fixations, rasters, params["gaze.raster_tol_us"])
            counts["fixations_unmatched"] = result.unmatched
            counts["fixations_out_of_frame"] = result.out_of_frame
            for rec in result.records:
                by_key[(rec.fixation.t_start_us, rec.fixation.t_end_us)] = (
                    rec.class_name,
                    rec.raster_t_us,
                )
        for f in fixations:
            cls = by_key.get((f.t_start_us, f.t_end_us))
            fixation_records.append(
                FixationRecord(f, cls[0] if cls else None, cls[1] if cls else None)
            )
        gaze_span = (gaze.t_first, gaze.t_last)
        targets = [
            _as_target(rec) for rec in fixation_records if rec.class_name is not None
        ]
        attention = attention_metrics([r.fixation for r in fixation_records], targets, span_us)

    # --- physiology ---
    scr_peaks = []
    eda_span = None
    eda = streams.get("eda")
    if eda is None:
        warnings.append("eda stream missing; arousal metrics absent")
    elif len(eda) < 2:
        warnings.append("eda stream too short; arousal metrics absent")
    else:
        uniform = resample_uniform(eda, params["physio.eda_rate_hz"])
        try:
            decomp = decompose_eda(uniform, params["physio.tonic_window_s"])
            scr_peaks = detect_scr_peaks(
                decomp.phasic,
                params["physio.scr_min_amplitude_us"],
                params["physio.scr_refractory_us"],
            )
            counts["scr_peaks"] = len(scr_peaks)
            eda_span = (uniform.t_first, uniform.t_last)
        except MobiscopeError as exc:
            warnings.append(f"eda decomposition skipped: {exc}")

    phys_windows = []
    ibi = streams.get("ibi")
    if ibi is None:
        warnings.append("ibi stream missing; HRV metrics absent")
    else:
        cleaned, dropped = clean_ibi(ibi, params["physio.ibi_min_ms"], params["physio.ibi_max_ms"])
        counts["ibi_dropped"] = dropped
        phys_windows = physio_windows(
            cleaned,
            scr_peaks,
            int(params["physio.window_s"] * US_PER_S),
            int(params["physio.step_s"] * US_PER_S),
            params["physio.min_beats"],
            span=traj_span,
        )
        counts["physio_windows"] = len(phys_windows)

    # --- gait ---
    strides = []
    imu_spans: list[tuple[int, int]] = []
    per_foot: dict[str, list] = {}
    for foot, kind in (("left", "imu_foot_left"), ("right", "imu_foot_right")):
        imu = streams.get(kind)
        if imu is None:
            warnings.append(f"{kind} stream missing")
            per_foot[foot] = []
            continue
        per_foot[foot] = detect_strides(
            imu,
            foot,
            axis=params["gait.axis"],
            omega_min=params["gait.omega_min"],
            min_stride_gap_us=params["gait.min_stride_gap_us"],
            min_rate_hz=params["gait.min_rate_hz"],
        )
        if len(imu) > 0:
            imu_spans.append((imu.t_first, imu.t_last))
    strides = sorted(per_foot["left"] + per_foot["right"], key=lambda e: e.t_heel_strike_us)
    counts["strides"] = len(strides)
    gait_summary = None
    g_windows = []
    if strides:
        try:
            gait_summary = gait_metrics(
                per_foot["left"], per_foot["right"], params["gait.max_stride_time_s"]
            )
        except InsufficientData as exc:
            warnings.append(f"gait summary skipped: {exc}")
        g_windows = gait_windows(
            per_foot["left"],
            per_foot["right"],
            int(params["gait.window_s"] * US_PER_S),
            int(params["gait.step_s"] * US_PER_S),
            span=traj_span,
            max_stride_time_s=params["gait.max_stride_time_s"],
        )
        counts["gait_windows"] = len(g_windows)

    # --- walkway attributes ---
    widths = []
    width_span = None
    skeleton = streams.get("skeleton")
    edges = streams.get("walkway_edges")
    if skeleton is not None and edges is not None and len(skeleton) and len(edges):
        scales = _pixel_scales(skeleton, manifest.participant.stature_m, params, counts)
        widths = _widths(edges, scales, params, counts)
        if len(edges) > 0:
            width_span = (edges.t_first, edges.t_last)
        counts["width_estimates"] = len(widths)
    elif edges is not None and skeleton is None:
        warnings.append("skeleton stream missing; width estimation skipped")

    materials = []
    material_span = None
    emb = streams.get("material_embedding")
    if emb is not None and len(emb):
        probe_path = manifest.base_dir / params["walkway.probe_path"]
        if not probe_path.is_file():
            warnings.append(f"probe model {probe_path.name} not found; materials skipped")
        else:
            model = load_probe_model(probe_path)
            labels = [
                classify_material(emb.values[i], model, int(emb.t_us[i]))
                for i in range(len(emb))
            ]
            materials = smooth_materials(labels, params["walkway.smooth_window"])
            material_span = (emb.t_first, emb.t_last)
            counts["material_labels"] = len(materials)

    # --- fusion ---
    spec = SegmentSpec(
        params["fusion.segment_mode"], params["fusion.segment_length"], params["fusion.min_fill"]
    )
    segments = build_segments(traj, spec)
    inputs = FusionInputs(
        fixation_records=fixation_records if gaze is not None else None,
        gaze_span=gaze_span,
        scr_peaks=scr_peaks if eda_span is not None else None,
        eda_span=eda_span,
        physio_windows=phys_windows if ibi is not None else None,
        physio_win_us=int(params["physio.window_s"] * US_PER_S),
        strides=strides if imu_spans else None,
        imu_spans=tuple(imu_spans),
        gait_windows=g_windows if imu_spans else None,
        gait_win_us=int(params["gait.window_s"] * US_PER_S),
        widths=widths if width_span is not None else None,
        width_span=width_span,
        materials=materials if material_span is not None else None,
        material_span=material_span,
    )
    segments = attach_metrics(segments, inputs)
    report = hotspot_zscores(
        segments,
        tuple(params["fusion.hotspot_metrics"]),
        params["fusion.z_thresh"],
        params["fusion.coverage_min"],
    )

    counts["segments"] = len(segments)
    counts["events_outside_trajectory"] = _count_outside(
        traj_span, fixation_records, scr_peaks, strides
    )

    return SessionBundle(
        session_id=manifest.session_id,
        manifest=manifest_echo(manifest),
        params={k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()},
        warnings=warnings,
        transform=transform,
        attention=attention,
        gait_summary=gait_summary,
        counts=counts,
        trajectory=traj,
        fixation_records=fixation_records,
        scr_peaks=scr_peaks,
        strides=strides,
        physio_windows=phys_windows,
        gait_windows=g_windows,
        window_meta={
            "physio_win_us": int(params["physio.window_s"] * US_PER_S),
            "physio_step_us": int(params["physio.step_s"] * US_PER_S),
            "gait_win_us": int(params["gait.window_s"] * US_PER_S),
            "gait_step_us": int(params["gait.step_s"] * US_PER_S),
        },
        segments=segments,
        report=report,
    )


def _as_target(rec: FixationRecord):
    from .gaze import GazeTargetRecord

    return GazeTargetRecord(rec.fixation, rec.class_name, rec.raster_t_us)


def _pixel_scales(skeleton: SampleSeries, stature_m: float, params: dict, counts: dict):
    scales = []
    skipped = 0
    joints = sorted({c[:-3] for c in skeleton.columns if c.endswith("_px")})
    for i in range(len(skeleton)):
        frame = {}
        for j in joints:
            conf = skeleton.col(f"{j}_conf")[i]
            if np.isfinite(conf):
                frame[j] = (
                    float(skeleton.col(f"{j}_px")[i]),
                    float(skeleton.col(f"{j}_py")[i]),
                    float(conf),
                )
        try:
            scales.append(
                pixel_scale(
                    frame,
                    stature_m,
                    head_joint=params["walkway.head_joint"],
                    min_kp_conf=params["walkway.min_kp_conf"],
                    stature_fraction=params["walkway.stature_fraction"],
                    min_skeleton_px=params["walkway.min_skeleton_px"],
                    t_us=int(skeleton.t_us[i]),
                )
            )
        except (SkeletonIncomplete, TooSmall):
            skipped += 1
    counts["skeleton_frames_skipped"] = skipped
    return scales


def _widths(edges: SampleSeries, scales: list, params: dict, counts: dict):
    widths = []
    skipped = 0
    if not scales:
        counts["width_frames_skipped"] = len(edges)
        return widths
    scale_t = np.array([s.t_us for s in scales], dtype=np.int64)
    for i in range(len(edges)):
        t = int(edges.t_us[i])
        pos = int(np.searchsorted(scale_t, t))
        best = None
        for cand in (pos - 1, pos):
            if 0 <= cand < len(scales):
                if best is None or abs(int(scale_t[cand]) - t) < abs(int(scale_t[best]) - t):
                    best = cand
        try:
            widths.append(
                estimate_width(
                    t,
                    float(edges.col("left_px")[i]),
                    float(edges.col("right_px")[i]),
                    scales[best],
                    params["walkway.max_scale_age_us"],
                )
            )
        except (EdgeOrderError, StaleScale):
            skipped += 1
    counts["width_frames_skipped"] = skipped
    return widths


def _count_outside(span: tuple[int, int], fixation_records, scr_peaks, strides) -> int:
    lo, hi = span
    n = 0
    for rec in fixation_records:
        if not (lo <= rec.fixation.midpoint_us <= hi):
            n += 1
    for p in scr_peaks:
        if not (lo <= p.t_peak_us <= hi):
            n += 1
    for e in strides:
        if not (lo <= e.t_heel_strike_us <= hi):
            n += 1
    return n
