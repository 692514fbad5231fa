"""Central registry of every tunable pipeline parameter.

A session manifest (and the CLI ``--set`` flag) may override any key listed
here; unknown keys are rejected at manifest validation so that a run is
reproducible from its manifest alone.  ``run_report.json`` echoes the full
effective table.
"""

from __future__ import annotations

from typing import Any

from .errors import ManifestError

# key -> (type, default).  "strlist" is a comma-separated list of names.
DEFAULTS: dict[str, tuple[str, Any]] = {
    # GPS anchoring / trajectory alignment
    "geo.max_h_acc_m": ("float", 10.0),
    "geo.max_speed_mps": ("float", 3.0),
    "geo.pairing_tol_us": ("int", 200_000),
    "geo.min_anchor_span_m": ("float", 20.0),
    "geo.use_altitude": ("bool", False),
    "geo.scale_min": ("float", 0.2),
    "geo.scale_max": ("float", 5.0),
    "geo.piecewise": ("bool", False),
    "geo.piecewise_window_s": ("float", 120.0),
    "geo.piecewise_min_anchors": ("int", 10),
    "geo.piecewise_refit": ("str", "translation"),
    # gaze / fixation detection
    "gaze.min_confidence": ("float", 0.6),
    "gaze.min_fix_duration_us": ("int", 100_000),
    "gaze.theta_base": ("float", 0.03),
    "gaze.k_noise": ("float", 3.0),
    "gaze.noise_window_us": ("int", 1_000_000),
    "gaze.raster_tol_us": ("int", 500_000),
    # electrodermal / heart-rate
    "physio.eda_rate_hz": ("float", 4.0),
    "physio.tonic_window_s": ("float", 8.0),
    "physio.scr_min_amplitude_us": ("float", 0.05),
    "physio.scr_refractory_us": ("int", 1_000_000),
    "physio.ibi_min_ms": ("float", 300.0),
    "physio.ibi_max_ms": ("float", 2000.0),
    "physio.window_s": ("float", 60.0),
    "physio.step_s": ("float", 5.0),
    "physio.min_beats": ("int", 20),
    # gait
    "gait.axis": ("str", "gy"),
    "gait.omega_min": ("float", 1.0),
    "gait.min_stride_gap_us": ("int", 400_000),
    "gait.min_rate_hz": ("float", 50.0),
    "gait.max_stride_time_s": ("float", 2.5),
    "gait.window_s": ("float", 60.0),
    "gait.step_s": ("float", 5.0),
    # walkway attributes
    "walkway.min_kp_conf": ("float", 0.5),
    "walkway.stature_fraction": ("float", 0.93),
    "walkway.min_skeleton_px": ("float", 50.0),
    "walkway.max_scale_age_us": ("int", 2_000_000),
    "walkway.smooth_window": ("int", 5),
    "walkway.head_joint": ("str", "nose"),
    "walkway.probe_path": ("str", "probe.csv"),
    # segment fusion / hotspots
    "fusion.segment_mode": ("str", "by_distance"),
    "fusion.segment_length": ("float", 10.0),
    "fusion.min_fill": ("float", 0.5),
    "fusion.z_thresh": ("float", 2.0),
    "fusion.coverage_min": ("float", 0.5),
    "fusion.hotspot_metrics": (
        "strlist",
        ("scr_rate_per_min", "mean_disp_h", "mean_disp_v", "stv_s"),
    ),
}

_COERCERS = {
    "float": float,
    "int": int,
    "str": str,
}


def _coerce(key: str, kind: str, value: Any) -> Any:
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ManifestError(f"/parameters/{key}", f"expected bool, got {value!r}")
    if kind == "strlist":
        if isinstance(value, str):
            return tuple(part.strip() for part in value.split(",") if part.strip())
        if isinstance(value, (list, tuple)):
            return tuple(str(v) for v in value)
        raise ManifestError(f"/parameters/{key}", f"expected list of names, got {value!r}")
    if kind == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ManifestError(f"/parameters/{key}", f"expected int, got {value!r}")
    try:
        return _COERCERS[kind](value)
    except (TypeError, ValueError):
        raise ManifestError(f"/parameters/{key}", f"expected {kind}, got {value!r}") from None


def resolve(*override_layers: dict[str, Any] | None) -> dict[str, Any]:
    """Merge defaults with override layers (later layers win), validating keys."""
    effective = {key: default for key, (_, default) in DEFAULTS.items()}
    for layer in override_layers:
        if not layer:
            continue
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ManifestError(f"/parameters/{key}", "unknown parameter key")
            effective[key] = _coerce(key, DEFAULTS[key][0], value)
    return effective
