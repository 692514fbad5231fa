"""Stream parsing, validation, clock correction, and resampling.

Every stream is a CSV with a mandatory header and timestamps (integer
microseconds) in the first column.  Parsing is strict: errors name the file
and line, rows are never silently skipped, and non-monotonic timestamps are
rejected rather than repaired.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .core import SampleSeries, SessionManifest, StreamDecl, validate_manifest_dict
from .errors import EmptyStream, IoError, ManifestError, ParseError, StreamOrderError

# fixed column schemas (after t_us); material_embedding width comes from the header
SCHEMAS: dict[str, tuple[str, ...]] = {
    "gps": ("lat_deg", "lon_deg", "h_acc_m"),
    "slam_pose": ("x_m", "y_m", "z_m", "qx", "qy", "qz", "qw"),
    "gaze": ("gx_norm", "gy_norm", "confidence"),
    "head_flow": ("du_norm", "dv_norm"),
    "eda": ("eda_us",),
    "ibi": ("ibi_ms",),
    "imu_foot_left": ("ax", "ay", "az", "gx", "gy", "gz"),
    "imu_foot_right": ("ax", "ay", "az", "gx", "gy", "gz"),
    "walkway_edges": ("left_px", "right_px", "foot_row_px"),
}

_RANGE_CHECKS = {
    "gps": {"lat_deg": (-90.0, 90.0), "lon_deg": (-180.0, 180.0)},
    "gaze": {"gx_norm": (0.0, 1.0), "gy_norm": (0.0, 1.0), "confidence": (0.0, 1.0)},
}

QUAT_NORM_TOL = 1e-6


def parse_manifest(path: str | Path) -> SessionManifest:
    """Load and fully validate session.json."""
    path = Path(path)
    if not path.is_file():
        raise IoError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError("", f"invalid JSON: {exc}") from exc
    return validate_manifest_dict(doc, path.parent)


def _read_header(path: Path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            first = fh.readline()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not first:
        raise ParseError(path, 1, "empty file (missing header)")
    return [c.strip() for c in first.rstrip("\r\n").split(",")]


def _expected_columns(kind: str, header: list[str], path: Path) -> tuple[str, ...]:
    if kind == "material_embedding":
        if len(header) < 2 or header[0] != "t_us" or header[1:] != [f"e{i}" for i in range(len(header) - 1)]:
            raise ParseError(path, 1, f"bad material_embedding header: {header}")
        return tuple(header[1:])
    cols = SCHEMAS[kind]
    if header != ["t_us", *cols]:
        raise ParseError(path, 1, f"header {header} does not match schema for {kind!r}")
    return cols


def _parse_numeric_slow(path: Path, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Line-by-line parse used to localize errors precisely."""
    ts: list[int] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header validated separately
        for line_no, row in enumerate(reader, start=2):
            if len(row) != n_cols + 1:
                raise ParseError(path, line_no, f"expected {n_cols + 1} columns, got {len(row)}")
            try:
                t = int(row[0])
            except ValueError:
                raise ParseError(path, line_no, f"bad timestamp {row[0]!r}") from None
            vals = []
            for cell in row[1:]:
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(path, line_no, f"bad value {cell!r}") from None
                if not math.isfinite(v):
                    raise ParseError(path, line_no, f"non-finite value {cell!r}")
                vals.append(v)
            if ts and t <= ts[-1]:
                raise StreamOrderError(path, line_no)
            ts.append(t)
            rows.append(vals)
    t_arr = np.array(ts, dtype=np.int64)
    v_arr = np.array(rows, dtype=np.float64).reshape(len(rows), n_cols)
    return t_arr, v_arr


def _parse_numeric(path: Path, columns: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Fast pandas parse; falls back to the slow scanner to report errors."""
    n_cols = len(columns)
    try:
        df = pd.read_csv(
            path,
            header=0,
            dtype={0: np.int64, **{i: np.float64 for i in range(1, n_cols + 1)}},
            na_filter=False,
        )
        if df.shape[1] != n_cols + 1:
            raise ValueError("column count mismatch")
        t_arr = df.iloc[:, 0].to_numpy(dtype=np.int64)
        v_arr = df.iloc[:, 1:].to_numpy(dtype=np.float64)
    except (ValueError, pd.errors.ParserError, OverflowError):
        return _parse_numeric_slow(path, n_cols)
    if len(t_arr) and not np.all(np.isfinite(v_arr)):
        return _parse_numeric_slow(path, n_cols)
    if len(t_arr) > 1:
        bad = np.nonzero(np.diff(t_arr) <= 0)[0]
        if bad.size:
            raise StreamOrderError(path, int(bad[0]) + 3)  # header + 1-based + next row
    return t_arr, v_arr


def _check_ranges(kind: str, columns: tuple[str, ...], t: np.ndarray, v: np.ndarray, path: Path):
    checks = _RANGE_CHECKS.get(kind)
    if checks:
        for name, (lo, hi) in checks.items():
            col = v[:, columns.index(name)]
            bad = np.nonzero((col < lo) | (col > hi))[0]
            if bad.size:
                raise ParseError(path, int(bad[0]) + 2, f"{name} out of range [{lo}, {hi}]")
    if kind == "gps":
        col = v[:, columns.index("h_acc_m")]
        bad = np.nonzero(col <= 0)[0]
        if bad.size:
            raise ParseError(path, int(bad[0]) + 2, "h_acc_m must be positive")
    if kind == "slam_pose":
        q = v[:, 3:7]
        norm = np.linalg.norm(q, axis=1)
        bad = np.nonzero(np.abs(norm - 1.0) > QUAT_NORM_TOL)[0]
        if bad.size:
            raise ParseError(path, int(bad[0]) + 2, "quaternion norm not within 1e-6 of 1")


def _parse_skeleton(path: Path) -> SampleSeries:
    """Pivot the long-format skeleton stream to one row per frame.

    Rows within a frame share a timestamp; frame timestamps must be
    strictly increasing.  Columns become <joint>_px/_py/_conf with NaN for
    joints absent in a frame.
    """
    frames: list[tuple[int, dict[str, tuple[float, float, float]]]] = []
    joints: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        last_t: int | None = None
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ParseError(path, line_no, f"expected 5 columns, got {len(row)}")
            try:
                t = int(row[0])
                px, py, conf = float(row[2]), float(row[3]), float(row[4])
            except ValueError:
                raise ParseError(path, line_no, "bad numeric value") from None
            if not all(math.isfinite(x) for x in (px, py, conf)):
                raise ParseError(path, line_no, "non-finite value")
            joint = row[1]
            if last_t is not None and t < last_t:
                raise StreamOrderError(path, line_no)
            if last_t is None or t > last_t:
                frames.append((t, {}))
                last_t = t
            if joint in frames[-1][1]:
                raise ParseError(path, line_no, f"duplicate joint {joint!r} in frame")
            frames[-1][1][joint] = (px, py, conf)
            joints.add(joint)
    names = sorted(joints)
    columns = tuple(f"{j}_{f}" for j in names for f in ("px", "py", "conf"))
    t_arr = np.array([t for t, _ in frames], dtype=np.int64)
    v_arr = np.full((len(frames), len(columns)), np.nan)
    for i, (_, jmap) in enumerate(frames):
        for j, name in enumerate(names):
            if name in jmap:
                v_arr[i, 3 * j : 3 * j + 3] = jmap[name]
    return SampleSeries(t_arr, v_arr, columns)


class RasterIndex:
    """Parsed label-raster index: timestamps plus grid/legend references.

    Grid paths and legend files resolve relative to the index file's
    directory (``base_dir``).
    """

    def __init__(self, t_us: np.ndarray, grid_paths: list[str], legend_ids: list[str], base_dir: Path = Path(".")):
        self.t_us = t_us
        self.grid_paths = grid_paths
        self.legend_ids = legend_ids
        self.base_dir = base_dir

    def __len__(self) -> int:
        return len(self.t_us)


def _parse_raster_index(path: Path) -> RasterIndex:
    ts: list[int] = []
    paths: list[str] = []
    legends: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t_us", "grid_path", "legend_id"]:
            raise ParseError(path, 1, f"bad raster index header: {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(path, line_no, f"expected 3 columns, got {len(row)}")
            try:
                t = int(row[0])
            except ValueError:
                raise ParseError(path, line_no, f"bad timestamp {row[0]!r}") from None
            if ts and t <= ts[-1]:
                raise StreamOrderError(path, line_no)
            ts.append(t)
            paths.append(row[1])
            legends.append(row[2])
    return RasterIndex(np.array(ts, dtype=np.int64), paths, legends)


def parse_stream(decl: StreamDecl, base_dir: str | Path = ".") -> SampleSeries | RasterIndex:
    """Parse one declared stream with its clock offset applied."""
    path = Path(base_dir) / decl.path
    if not path.is_file():
        raise IoError(f"stream file not found: {path}")
    if decl.kind == "label_raster":
        idx = _parse_raster_index(path)
        return RasterIndex(idx.t_us + decl.clock_offset_us, idx.grid_paths, idx.legend_ids, path.parent)
    if decl.kind == "skeleton":
        series = _parse_skeleton(path)
        return SampleSeries(series.t_us + decl.clock_offset_us, series.values, series.columns)
    header = _read_header(path)
    columns = _expected_columns(decl.kind, header, path)
    t_arr, v_arr = _parse_numeric(path, columns)
    _check_ranges(decl.kind, columns, t_arr, v_arr, path)
    return SampleSeries(t_arr + decl.clock_offset_us, v_arr, columns)


def write_stream(series: SampleSeries, kind: str, path: str | Path) -> None:
    """Serialize a parsed series back to its CSV form (exact float repr)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if kind == "skeleton":
            fh.write("t_us,joint_name,px,py,confidence\n")
            names = sorted({c[:-3] for c in series.columns if c.endswith("_px")})
            for i in range(len(series)):
                t = int(series.t_us[i])
                for name in names:
                    px = series.col(f"{name}_px")[i]
                    if math.isnan(px):
                        continue
                    py = series.col(f"{name}_py")[i]
                    conf = series.col(f"{name}_conf")[i]
                    fh.write(f"{t},{name},{px!r},{py!r},{conf!r}\n")
            return
        fh.write(",".join(("t_us", *series.columns)) + "\n")
        for i in range(len(series)):
            cells = ",".join(repr(float(x)) for x in series.values[i])
            fh.write(f"{int(series.t_us[i])},{cells}\n")


def write_raster_index(index: RasterIndex, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t_us,grid_path,legend_id\n")
        for k in range(len(index)):
            fh.write(f"{int(index.t_us[k])},{index.grid_paths[k]},{index.legend_ids[k]}\n")


def resample_uniform(series: SampleSeries, rate_hz: float) -> SampleSeries:
    """Linear interpolation onto a uniform grid spanning [first, last].

    Grid timestamps are first + round(k * 1e6 / rate); no extrapolation
    beyond the original span.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    if len(series) < 2:
        raise EmptyStream("resample needs at least 2 samples")
    t0, t1 = series.t_first, series.t_last
    period = 1e6 / rate_hz
    n = int(math.floor((t1 - t0) / period + 1e-9)) + 1
    grid = t0 + np.rint(np.arange(n, dtype=np.float64) * period).astype(np.int64)
    grid = grid[grid <= t1]
    src_t = series.t_us.astype(np.float64)
    out = np.empty((len(grid), series.values.shape[1]))
    gf = grid.astype(np.float64)
    for j in range(series.values.shape[1]):
        out[:, j] = np.interp(gf, src_t, series.values[:, j])
    return SampleSeries(grid, out, series.columns)
