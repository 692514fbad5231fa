"""Shared domain types and timeline arithmetic.

Timestamps are integer microseconds since the Unix epoch (UTC) throughout;
long sessions stay drift-free and equality is exact.  All containers are
immutable after construction and safe to share across readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import EmptyStream, InvalidRange, ManifestError

US_PER_S = 1_000_000
US_PER_MS = 1_000

STREAM_KINDS = (
    "gps",
    "slam_pose",
    "gaze",
    "head_flow",
    "label_raster",
    "eda",
    "ibi",
    "imu_foot_left",
    "imu_foot_right",
    "skeleton",
    "walkway_edges",
    "material_embedding",
)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampleSeries:
    """A timestamped multichannel stream.

    ``t_us`` is int64 (n,), strictly increasing.  ``values`` is float64
    (n, k) with ``columns`` naming the k channels.  NaN marks absent cells
    (only the skeleton pivot produces them).
    """

    t_us: np.ndarray
    values: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        t = np.ascontiguousarray(self.t_us, dtype=np.int64)
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2 or len(t) != len(v):
            raise ValueError("timestamps and values must have matching length")
        if v.shape[1] != len(self.columns):
            raise ValueError("values width does not match columns")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "t_us", _readonly(t))
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return len(self.t_us)

    def col(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    @property
    def t_first(self) -> int:
        if len(self.t_us) == 0:
            raise EmptyStream("series is empty")
        return int(self.t_us[0])

    @property
    def t_last(self) -> int:
        if len(self.t_us) == 0:
            raise EmptyStream("series is empty")
        return int(self.t_us[-1])


def duration(series: SampleSeries) -> int:
    """Last minus first timestamp, microseconds."""
    if len(series) == 0:
        raise EmptyStream("duration of empty series")
    return series.t_last - series.t_first


def slice_by_time(series: SampleSeries, t0: int, t1: int) -> SampleSeries:
    """Samples with t0 <= t < t1 (half-open); empty result allowed."""
    if t0 > t1:
        raise InvalidRange(f"t0 {t0} > t1 {t1}")
    lo = int(np.searchsorted(series.t_us, t0, side="left"))
    hi = int(np.searchsorted(series.t_us, t1, side="left"))
    return SampleSeries(series.t_us[lo:hi].copy(), series.values[lo:hi].copy(), series.columns)


def concat_series(parts: list[SampleSeries]) -> SampleSeries:
    parts = [p for p in parts if len(p) > 0]
    if not parts:
        raise EmptyStream("nothing to concatenate")
    cols = parts[0].columns
    if any(p.columns != cols for p in parts):
        raise ValueError("column mismatch")
    return SampleSeries(
        np.concatenate([p.t_us for p in parts]),
        np.vstack([p.values for p in parts]),
        cols,
    )


def window_starts(t0: int, t1: int, win_us: int, step_us: int) -> np.ndarray:
    """Start times of sliding windows [s, s+win) fully inside [t0, t1]."""
    if step_us <= 0 or win_us < step_us:
        raise ValueError("require win >= step > 0")
    if t1 - t0 < win_us:
        return np.empty(0, dtype=np.int64)
    n = (t1 - t0 - win_us) // step_us + 1
    return t0 + step_us * np.arange(n, dtype=np.int64)


@dataclass(frozen=True)
class StreamDecl:
    kind: str
    path: str
    clock_offset_us: int = 0
    nominal_rate_hz: float | None = None


@dataclass(frozen=True)
class Participant:
    id: str
    stature_m: float
    cohort_tag: str = ""


@dataclass(frozen=True)
class SessionManifest:
    """Binds a session's streams, participant, and parameter overrides."""

    session_id: str
    participant: Participant
    streams: tuple[StreamDecl, ...]
    parameters: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def stream(self, kind: str) -> StreamDecl | None:
        for decl in self.streams:
            if decl.kind == kind:
                return decl
        return None

    def stream_path(self, decl: StreamDecl) -> Path:
        return self.base_dir / decl.path


def validate_manifest_dict(doc: Any, base_dir: Path) -> SessionManifest:
    """Build a SessionManifest from a parsed session.json document.

    Raises ManifestError with a JSON pointer to the offending field.
    """
    if not isinstance(doc, dict):
        raise ManifestError("", "manifest root must be an object")

    def require(obj: dict, key: str, pointer: str) -> Any:
        if key not in obj:
            raise ManifestError(f"{pointer}/{key}", "missing required field")
        return obj[key]

    session_id = require(doc, "session_id", "")
    if not isinstance(session_id, str) or not session_id:
        raise ManifestError("/session_id", "must be a non-empty string")

    part = require(doc, "participant", "")
    if not isinstance(part, dict):
        raise ManifestError("/participant", "must be an object")
    pid = require(part, "id", "/participant")
    stature = require(part, "stature_m", "/participant")
    if not isinstance(stature, (int, float)) or isinstance(stature, bool):
        raise ManifestError("/participant/stature_m", "must be a number")
    if not 1.0 < float(stature) < 2.2:
        raise ManifestError("/participant/stature_m", f"{stature} outside (1.0, 2.2) m")
    cohort = part.get("cohort_tag", "")

    raw_streams = require(doc, "streams", "")
    if not isinstance(raw_streams, list) or not raw_streams:
        raise ManifestError("/streams", "must be a non-empty array")
    decls: list[StreamDecl] = []
    seen_kinds: set[str] = set()
    for i, raw in enumerate(raw_streams):
        ptr = f"/streams/{i}"
        if not isinstance(raw, dict):
            raise ManifestError(ptr, "must be an object")
        kind = require(raw, "kind", ptr)
        if kind not in STREAM_KINDS:
            raise ManifestError(f"{ptr}/kind", f"unknown stream kind {kind!r}")
        if kind in seen_kinds:
            raise ManifestError(f"{ptr}/kind", f"duplicate stream kind {kind!r}")
        seen_kinds.add(kind)
        path = require(raw, "path", ptr)
        offset = raw.get("clock_offset_us", 0)
        if not isinstance(offset, int) or isinstance(offset, bool):
            raise ManifestError(f"{ptr}/clock_offset_us", "must be an integer")
        rate = raw.get("nominal_rate_hz")
        if rate is not None and (not isinstance(rate, (int, float)) or rate <= 0):
            raise ManifestError(f"{ptr}/nominal_rate_hz", "must be a positive number")
        if not (base_dir / path).exists():
            raise ManifestError(f"{ptr}/path", f"file not found: {path}")
        decls.append(StreamDecl(kind, path, offset, None if rate is None else float(rate)))

    parameters = doc.get("parameters", {})
    if not isinstance(parameters, dict):
        raise ManifestError("/parameters", "must be an object")
    # validates keys and types; the resolved dict is rebuilt by the pipeline
    from . import params as _params

    _params.resolve(parameters)

    return SessionManifest(
        session_id=session_id,
        participant=Participant(str(pid), float(stature), str(cohort)),
        streams=tuple(decls),
        parameters=dict(parameters),
        base_dir=base_dir,
    )
