"""Stride segmentation from foot-mounted IMUs and gait-stability metrics.

Mid-swing shows up as a prominent positive peak in the sagittal angular
velocity of a foot-worn gyroscope; the heel strike is the first
negative-going zero crossing after it.  Stride time is the interval
between successive heel strikes of the same foot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .core import US_PER_S, SampleSeries, window_starts
from .errors import InsufficientData, RateError


@dataclass(frozen=True)
class StrideEvent:
    t_heel_strike_us: int
    foot: str  # "left" | "right"
    t_midswing_us: int


@dataclass(frozen=True)
class GaitMetrics:
    step_count: int
    mean_stride_time_s: float
    stv_s: float  # stride-time variability (population SD)
    stv_cv: float
    asymmetry: float | None  # |meanL - meanR| / pooled mean; None if one foot absent
    n_pause_excluded: int


@dataclass(frozen=True)
class GaitWindow:
    t_center_us: int
    mean_stride_time_s: float
    stv_s: float
    n_strides: int


def detect_strides(
    imu: SampleSeries,
    foot: str,
    axis: str = "gy",
    omega_min: float = 1.0,
    min_stride_gap_us: int = 400_000,
    min_rate_hz: float = 50.0,
) -> list[StrideEvent]:
    """Detect mid-swing peaks and the heel strike following each.

    Peaks need prominence >= omega_min and spacing >= the stride gap; a
    peak with no negative-going zero crossing before the next peak is
    dropped.  Heel-strike times are sub-sample interpolated.
    """
    if foot not in ("left", "right"):
        raise ValueError(f"foot must be left/right, got {foot!r}")
    if len(imu) < 3:
        return []
    dt = np.diff(imu.t_us)
    period_us = float(np.median(dt))
    rate = US_PER_S / period_us
    if rate < min_rate_hz:
        raise RateError(f"IMU rate {rate:.1f} Hz below minimum {min_rate_hz} Hz")
    sig = imu.col(axis)
    t = imu.t_us
    distance = max(1, int(round(min_stride_gap_us / period_us)))
    peaks, _ = find_peaks(sig, prominence=omega_min, distance=distance)
    if peaks.size == 0:
        return []
    crossings = np.nonzero((sig[:-1] > 0) & (sig[1:] <= 0))[0] + 1

    events: list[StrideEvent] = []
    for k, p in enumerate(peaks):
        nxt = peaks[k + 1] if k + 1 < peaks.size else len(sig)
        pos = int(np.searchsorted(crossings, p, side="right"))
        if pos >= crossings.size or crossings[pos] > nxt:
            continue
        j = int(crossings[pos])
        frac = sig[j - 1] / (sig[j - 1] - sig[j])
        t_hs = int(round(int(t[j - 1]) + frac * (int(t[j]) - int(t[j - 1]))))
        if events and t_hs - events[-1].t_heel_strike_us < min_stride_gap_us:
            continue
        events.append(StrideEvent(t_hs, foot, int(t[p])))
    return events


def _stride_times_s(events: list[StrideEvent], max_stride_time_s: float) -> tuple[np.ndarray, int]:
    if len(events) < 2:
        return np.empty(0), 0
    hs = np.array([e.t_heel_strike_us for e in events], dtype=np.int64)
    times = np.diff(hs) / US_PER_S
    keep = times <= max_stride_time_s  # standing pauses are not gait variability
    return times[keep], int((~keep).sum())


def gait_metrics(
    left: list[StrideEvent],
    right: list[StrideEvent],
    max_stride_time_s: float = 2.5,
) -> GaitMetrics:
    """Pooled stride-time statistics over both feet."""
    lt, l_excl = _stride_times_s(left, max_stride_time_s)
    rt, r_excl = _stride_times_s(right, max_stride_time_s)
    if len(left) < 2 and len(right) < 2:
        raise InsufficientData("fewer than 2 heel strikes on both feet")
    pooled = np.concatenate([lt, rt])
    if pooled.size == 0:
        raise InsufficientData("no valid stride times after pause exclusion")
    mean = float(pooled.mean())
    stv = float(pooled.std(ddof=0))
    asym = None
    if lt.size > 0 and rt.size > 0:
        asym = abs(float(lt.mean()) - float(rt.mean())) / mean
    return GaitMetrics(
        step_count=len(left) + len(right),
        mean_stride_time_s=mean,
        stv_s=stv,
        stv_cv=stv / mean,
        asymmetry=asym,
        n_pause_excluded=l_excl + r_excl,
    )


def gait_windows(
    left: list[StrideEvent],
    right: list[StrideEvent],
    win_us: int = 60 * US_PER_S,
    step_us: int = 5 * US_PER_S,
    span: tuple[int, int] | None = None,
    max_stride_time_s: float = 2.5,
) -> list[GaitWindow]:
    """Sliding-window stride statistics for mapping along the trajectory."""
    feet = [
        np.array(sorted(e.t_heel_strike_us for e in events), dtype=np.int64)
        for events in (left, right)
    ]
    if span is None:
        merged = np.sort(np.concatenate(feet)) if (len(left) + len(right)) else np.empty(0)
        if merged.size == 0:
            return []
        span = (int(merged[0]), int(merged[-1]))
    out: list[GaitWindow] = []
    for s in window_starts(span[0], span[1], win_us, step_us):
        times: list[np.ndarray] = []
        for hs in feet:
            lo = int(np.searchsorted(hs, s, side="left"))
            hi = int(np.searchsorted(hs, s + win_us, side="left"))
            if hi - lo >= 2:
                st = np.diff(hs[lo:hi]) / US_PER_S
                times.append(st[st <= max_stride_time_s])
        arr = np.concatenate(times) if times else np.empty(0)
        if arr.size < 2:
            continue
        out.append(
            GaitWindow(
                t_center_us=int(s + win_us // 2),
                mean_stride_time_s=float(arr.mean()),
                stv_s=float(arr.std(ddof=0)),
                n_strides=int(arr.size),
            )
        )
    return out
