"""Fixation detection and visual-attention metrics.

Gaze is first world-stabilized by subtracting the cumulative scene shift
reported by the head optical-flow stream, then swept with a dispersion-
threshold (I-DT) detector whose threshold adapts to the recent sample-to-
sample noise level.  Fixations are intersected with semantic label rasters
to attribute attention to scene classes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import US_PER_S, SampleSeries
from .errors import EmptyWindow, ParseError
from .ingest import RasterIndex


@dataclass(frozen=True)
class Fixation:
    t_start_us: int
    t_end_us: int
    cx: float
    cy: float
    disp_h: float
    disp_v: float
    n_samples: int
    theta: float  # dispersion threshold in force when emitted

    @property
    def duration_us(self) -> int:
        return self.t_end_us - self.t_start_us

    @property
    def midpoint_us(self) -> int:
        return (self.t_start_us + self.t_end_us) // 2


@dataclass(frozen=True)
class LabelRaster:
    t_us: int
    width: int
    height: int
    classes: np.ndarray  # (height, width) int ids
    legend: dict[int, str]

    def __post_init__(self):
        grid = np.asarray(self.classes)
        missing = set(np.unique(grid).tolist()) - set(self.legend)
        if missing:
            raise ValueError(f"grid ids missing from legend: {sorted(missing)}")

    def class_at(self, gx: float, gy: float) -> str:
        col = min(int(math.floor(gx * self.width)), self.width - 1)
        row = min(int(math.floor(gy * self.height)), self.height - 1)
        return self.legend[int(self.classes[row, col])]


@dataclass(frozen=True)
class GazeTargetRecord:
    fixation: Fixation
    class_name: str
    raster_t_us: int


@dataclass(frozen=True)
class AttentionMetrics:
    fixation_rate_per_min: float
    mean_duration_ms: float
    mean_disp_h: float
    mean_disp_v: float
    dwell_by_class: dict[str, float]  # class -> total ms


def compensate_head_motion(
    gaze: SampleSeries, flow: SampleSeries
) -> tuple[SampleSeries, int]:
    """Subtract the cumulative scene displacement from gaze coordinates.

    Returns the stabilized series plus the count of gaze samples outside
    the flow stream's time span, which pass through unchanged.
    """
    if len(gaze) == 0:
        return gaze, 0
    gx = gaze.col("gx_norm").copy()
    gy = gaze.col("gy_norm").copy()
    conf = gaze.col("confidence")
    if len(flow) == 0:
        return gaze, len(gaze)
    cum_u = np.cumsum(flow.col("du_norm"))
    cum_v = np.cumsum(flow.col("dv_norm"))
    idx = np.searchsorted(flow.t_us, gaze.t_us, side="right") - 1
    covered = (gaze.t_us >= flow.t_us[0]) & (gaze.t_us <= flow.t_us[-1])
    sel = covered & (idx >= 0)
    gx[sel] -= cum_u[idx[sel]]
    gy[sel] -= cum_v[idx[sel]]
    values = np.stack([gx, gy, conf], axis=1)
    return SampleSeries(gaze.t_us.copy(), values, gaze.columns), int((~covered).sum())


def dispersion(gx, gy) -> tuple[float, float]:
    """(max-min horizontal, max-min vertical) extent of a sample window."""
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.size == 0:
        raise EmptyWindow("dispersion of empty window")
    return float(gx.max() - gx.min()), float(gy.max() - gy.min())


def detect_fixations_idt(
    gaze: SampleSeries,
    min_confidence: float = 0.6,
    min_fix_duration_us: int = 100_000,
    theta_base: float = 0.03,
    k_noise: float = 3.0,
    noise_window_us: int = 1_000_000,
) -> list[Fixation]:
    """Dispersion-threshold fixation sweep with an adaptive threshold.

    A candidate window spanning the minimum duration is grown while its
    dispersion (disp_h + disp_v) stays within theta; theta is the larger of
    theta_base and k_noise times a robust noise estimate (1.4826 * median
    absolute deviation of sample-to-sample displacement over the trailing
    noise window).  Samples below the confidence floor are excluded before
    the sweep.  Emitted fixations are disjoint and time-ordered, each
    recording the threshold used.
    """
    keep = gaze.col("confidence") >= min_confidence
    t = gaze.t_us[keep]
    x = gaze.col("gx_norm")[keep]
    y = gaze.col("gy_norm")[keep]
    n = len(t)
    if n == 0:
        return []
    disp_step = np.hypot(np.diff(x), np.diff(y))
    t_step = t[1:]  # displacement j occurs at the later sample's time

    def theta_at(i: int) -> float:
        lo = int(np.searchsorted(t_step, t[i] - noise_window_us, side="right"))
        hi = int(np.searchsorted(t_step, t[i], side="right"))
        window = disp_step[lo:hi]
        if window.size == 0:
            return theta_base
        mad = float(np.median(np.abs(window - np.median(window))))
        return max(theta_base, k_noise * 1.4826 * mad)

    fixations: list[Fixation] = []
    i = 0
    while i < n - 1:
        j = int(np.searchsorted(t, t[i] + min_fix_duration_us, side="left"))
        if j >= n:
            break  # remaining samples cannot span the minimum duration
        wx = x[i : j + 1]
        wy = y[i : j + 1]
        max_x, min_x = float(wx.max()), float(wx.min())
        max_y, min_y = float(wy.max()), float(wy.min())
        disp = (max_x - min_x) + (max_y - min_y)
        theta = theta_at(i)
        if disp > theta:
            i += 1
            continue
        while j + 1 < n:
            nx_max = max(max_x, float(x[j + 1]))
            nx_min = min(min_x, float(x[j + 1]))
            ny_max = max(max_y, float(y[j + 1]))
            ny_min = min(min_y, float(y[j + 1]))
            if (nx_max - nx_min) + (ny_max - ny_min) > theta:
                break
            max_x, min_x, max_y, min_y = nx_max, nx_min, ny_max, ny_min
            j += 1
        fixations.append(
            Fixation(
                t_start_us=int(t[i]),
                t_end_us=int(t[j]),
                cx=float(x[i : j + 1].mean()),
                cy=float(y[i : j + 1].mean()),
                disp_h=max_x - min_x,
                disp_v=max_y - min_y,
                n_samples=j - i + 1,
                theta=theta,
            )
        )
        i = j + 1
    return fixations


def load_label_rasters(index: RasterIndex, base_dir: str | Path | None = None) -> list[LabelRaster]:
    """Materialize grids and legends referenced by a raster index.

    Legend id ``X`` resolves to ``X.csv`` next to the index file; grid
    paths are relative to the same directory.
    """
    base = Path(base_dir) if base_dir is not None else index.base_dir
    legends: dict[str, dict[int, str]] = {}
    rasters: list[LabelRaster] = []
    for k in range(len(index)):
        legend_id = index.legend_ids[k]
        if legend_id not in legends:
            legends[legend_id] = _load_legend(base / f"{legend_id}.csv")
        grid_path = base / index.grid_paths[k]
        width, height, grid = _load_grid(grid_path)
        rasters.append(
            LabelRaster(int(index.t_us[k]), width, height, grid, legends[legend_id])
        )
    return rasters


def _load_legend(path: Path) -> dict[int, str]:
    legend: dict[int, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "class_name"]:
            raise ParseError(path, 1, f"bad legend header: {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(path, line_no, "expected 2 columns")
            try:
                legend[int(row[0])] = row[1]
            except ValueError:
                raise ParseError(path, line_no, f"bad class id {row[0]!r}") from None
    return legend


def _load_grid(path: Path) -> tuple[int, int, np.ndarray]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read grid: {exc}") from exc
    tokens = text.split()
    if len(tokens) < 2:
        raise ParseError(path, 1, "grid header must be 'W H'")
    try:
        width, height = int(tokens[0]), int(tokens[1])
        ids = np.array([int(tok) for tok in tokens[2:]], dtype=np.int64)
    except ValueError:
        raise ParseError(path, 1, "grid must contain only integers") from None
    if width <= 0 or height <= 0 or ids.size != width * height:
        raise ParseError(path, 1, f"expected {width}x{height} ids, got {ids.size}")
    return width, height, ids.reshape(height, width)


@dataclass(frozen=True)
class IntersectionResult:
    records: tuple[GazeTargetRecord, ...]
    unmatched: int  # fixations with no raster within tolerance
    out_of_frame: int  # centroids outside the unit square


def intersect_fixations(
    fixations: list[Fixation],
    rasters: list[LabelRaster],
    tol_us: int,
) -> IntersectionResult:
    """Look up the scene class under each fixation centroid.

    Uses the raster nearest in time to the fixation midpoint (earlier wins
    an exact tie); the centroid cell follows the floor convention.
    """
    if not rasters:
        return IntersectionResult((), len(fixations), 0)
    times = np.array([r.t_us for r in rasters], dtype=np.int64)
    records: list[GazeTargetRecord] = []
    unmatched = 0
    out_of_frame = 0
    for fix in fixations:
        if not (0.0 <= fix.cx <= 1.0 and 0.0 <= fix.cy <= 1.0):
            out_of_frame += 1
            continue
        mid = fix.midpoint_us
        pos = int(np.searchsorted(times, mid))
        best = None
        for cand in (pos - 1, pos):
            if 0 <= cand < len(times):
                if best is None or abs(int(times[cand]) - mid) < abs(int(times[best]) - mid):
                    best = cand
        if best is None or abs(int(times[best]) - mid) > tol_us:
            unmatched += 1
            continue
        raster = rasters[best]
        records.append(GazeTargetRecord(fix, raster.class_at(fix.cx, fix.cy), raster.t_us))
    return IntersectionResult(tuple(records), unmatched, out_of_frame)


def attention_metrics(
    fixations: list[Fixation],
    targets: list[GazeTargetRecord],
    span_us: int,
) -> AttentionMetrics:
    """Aggregate fixation statistics over a time span."""
    if span_us <= 0:
        raise ValueError("span must be positive")
    if not fixations:
        return AttentionMetrics(0.0, 0.0, 0.0, 0.0, {})
    minutes = span_us / (60 * US_PER_S)
    durations_ms = [f.duration_us / 1000.0 for f in fixations]
    dwell: dict[str, float] = {}
    for rec in targets:
        dwell[rec.class_name] = dwell.get(rec.class_name, 0.0) + rec.fixation.duration_us / 1000.0
    return AttentionMetrics(
        fixation_rate_per_min=len(fixations) / minutes,
        mean_duration_ms=float(np.mean(durations_ms)),
        mean_disp_h=float(np.mean([f.disp_h for f in fixations])),
        mean_disp_v=float(np.mean([f.disp_v for f in fixations])),
        dwell_by_class=dwell,
    )
