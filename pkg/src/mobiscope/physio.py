"""Electrodermal decomposition, SCR peak detection, and HRV metrics.

The tonic skin-conductance level is a centered moving median (deterministic
and parameter-light); the phasic component is the residual, so the two
always sum back to the input.  Heart-rate variability uses RMSSD and the
fraction of successive inter-beat differences above 10 ms.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import US_PER_S, SampleSeries, window_starts
from .errors import InsufficientData, WindowTooLong


@dataclass(frozen=True)
class EdaDecomposition:
    tonic: SampleSeries
    phasic: SampleSeries


@dataclass(frozen=True)
class ScrPeak:
    t_peak_us: int
    amplitude_us: float  # rise above the preceding trough
    rise_time_ms: float


@dataclass(frozen=True)
class PhysioWindow:
    t_center_us: int
    rmssd_ms: float
    pnn10: float
    n_intervals: int
    scr_rate_per_min: float


def _require_uniform(series: SampleSeries) -> float:
    """Return the sample period (us); reject non-uniform timelines."""
    if len(series) < 2:
        raise InsufficientData("need at least 2 samples")
    dt = np.diff(series.t_us)
    period = float(np.median(dt))
    if np.any(np.abs(dt - period) > 1.0):
        raise ValueError("series must be uniformly sampled (resample first)")
    return period


def decompose_eda(eda: SampleSeries, tonic_window_s: float = 8.0) -> EdaDecomposition:
    """Split skin conductance into tonic (moving median) and phasic parts.

    The window shrinks at the edges; phasic = input - tonic, so the
    decomposition reconstructs the input exactly.
    """
    x = eda.values[:, 0]
    if np.any(x < 0):
        raise ValueError("EDA values must be non-negative")
    period_us = _require_uniform(eda)
    n = len(x)
    w = int(round(tonic_window_s * US_PER_S / period_us))
    if w % 2 == 0:
        w += 1  # centered window needs odd length
    if w > n:
        raise WindowTooLong(f"tonic window {w} samples > series length {n}")
    h = w // 2
    tonic = np.empty(n)
    if n >= w:
        view = np.lib.stride_tricks.sliding_window_view(x, w)
        tonic[h : n - h] = np.median(view, axis=1)
    for i in range(h):
        tonic[i] = np.median(x[: i + h + 1])
    for i in range(n - h, n):
        tonic[i] = np.median(x[i - h :])
    phasic = x - tonic
    cols = eda.columns
    return EdaDecomposition(
        tonic=SampleSeries(eda.t_us.copy(), tonic, cols),
        phasic=SampleSeries(eda.t_us.copy(), phasic, cols),
    )


def detect_scr_peaks(
    phasic: SampleSeries,
    min_amplitude_us: float = 0.05,
    refractory_us: int = 1_000_000,
) -> list[ScrPeak]:
    """Local maxima of the phasic signal, measured from the preceding trough.

    Peaks closer than the refractory interval conflict; the larger
    amplitude wins, the earlier peak on an exact tie.
    """
    x = phasic.values[:, 0]
    t = phasic.t_us
    n = len(x)
    if n < 3:
        return []
    rising = x[1:-1] > x[:-2]
    falling = x[1:-1] >= x[2:]
    cand_idx = np.nonzero(rising & falling)[0] + 1

    candidates: list[tuple[int, float, float]] = []  # (t_us, amplitude, rise_ms)
    prev_peak = 0
    for k in cand_idx:
        seg = x[prev_peak : k + 1]
        m = seg.min()
        trough = prev_peak + int(np.nonzero(seg == m)[0][-1])
        amp = float(x[k] - m)
        if amp >= min_amplitude_us:
            rise_ms = (int(t[k]) - int(t[trough])) / 1000.0
            candidates.append((int(t[k]), amp, rise_ms))
        prev_peak = int(k)

    accepted_times: list[int] = []
    accepted: list[tuple[int, float, float]] = []
    for cand in sorted(candidates, key=lambda c: (-c[1], c[0])):
        pos = bisect.bisect_left(accepted_times, cand[0])
        ok = True
        for neighbor in (pos - 1, pos):
            if 0 <= neighbor < len(accepted_times):
                if abs(accepted_times[neighbor] - cand[0]) < refractory_us:
                    ok = False
        if ok:
            accepted_times.insert(pos, cand[0])
            accepted.insert(pos, cand)
    return [ScrPeak(t_us, amp, rise) for (t_us, amp, rise) in accepted]


def rmssd(ibi_ms: Sequence[float]) -> float:
    """Root mean square of successive inter-beat differences, ms."""
    if len(ibi_ms) < 2:
        raise InsufficientData("rmssd needs >= 2 intervals")
    diffs = np.diff(np.asarray(ibi_ms, dtype=np.float64))
    return float(math.sqrt(float(np.mean(diffs**2))))


def pnn10(ibi_ms: Sequence[float]) -> float:
    """Fraction of successive differences strictly greater than 10 ms."""
    if len(ibi_ms) < 2:
        raise InsufficientData("pnn10 needs >= 2 intervals")
    diffs = np.abs(np.diff(np.asarray(ibi_ms, dtype=np.float64)))
    return float(np.count_nonzero(diffs > 10.0) / diffs.size)


def clean_ibi(ibi: SampleSeries, lo_ms: float = 300.0, hi_ms: float = 2000.0) -> tuple[SampleSeries, int]:
    """Drop physiologically impossible inter-beat intervals; report the count."""
    vals = ibi.values[:, 0]
    keep = (vals >= lo_ms) & (vals <= hi_ms)
    dropped = int((~keep).sum())
    if dropped == 0:
        return ibi, 0
    return SampleSeries(ibi.t_us[keep].copy(), ibi.values[keep].copy(), ibi.columns), dropped


def physio_windows(
    ibi: SampleSeries,
    scr_peaks: list[ScrPeak],
    win_us: int = 60 * US_PER_S,
    step_us: int = 5 * US_PER_S,
    min_beats: int = 20,
    span: tuple[int, int] | None = None,
) -> list[PhysioWindow]:
    """Sliding-window HRV metrics plus SCR rate.

    Windows are [s, s+win) over ``span`` (default: the IBI series span);
    windows with fewer than ``min_beats`` intervals are omitted.
    """
    if span is None:
        if len(ibi) == 0:
            return []
        span = (ibi.t_first, ibi.t_last)
    scr_times = np.array([p.t_peak_us for p in scr_peaks], dtype=np.int64)
    win_minutes = win_us / (60 * US_PER_S)
    out: list[PhysioWindow] = []
    for s in window_starts(span[0], span[1], win_us, step_us):
        lo = int(np.searchsorted(ibi.t_us, s, side="left"))
        hi = int(np.searchsorted(ibi.t_us, s + win_us, side="left"))
        vals = ibi.values[lo:hi, 0]
        if vals.size < min_beats or vals.size < 2:
            continue
        n_scr = int(np.searchsorted(scr_times, s + win_us) - np.searchsorted(scr_times, s))
        out.append(
            PhysioWindow(
                t_center_us=int(s + win_us // 2),
                rmssd_ms=rmssd(vals),
                pnn10=pnn10(vals),
                n_intervals=int(vals.size),
                scr_rate_per_min=n_scr / win_minutes,
            )
        )
    return out
