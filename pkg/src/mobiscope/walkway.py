"""Walkway width estimation and surface-material classification.

Width works in pixels at the participant's foot row and converts to meters
with a body-height pixel scale; materials come from a linear probe applied
to precomputed patch embeddings (the probe weights are a session input,
never trained here).
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    DimError,
    EdgeOrderError,
    ParseError,
    SkeletonIncomplete,
    StaleScale,
    TooSmall,
)

N_MATERIAL_CLASSES = 14


@dataclass(frozen=True)
class PixelScale:
    t_us: int
    meters_per_pixel: float
    source_skeleton_px: float


@dataclass(frozen=True)
class WidthEstimate:
    t_us: int
    width_m: float
    width_px: float


@dataclass(frozen=True)
class LinearProbeModel:
    weights: np.ndarray  # (14, d)
    bias: np.ndarray  # (14,)
    class_names: tuple[str, ...]
    embedding_dim: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if len(self.class_names) != N_MATERIAL_CLASSES or w.shape != (N_MATERIAL_CLASSES, self.embedding_dim):
            raise ValueError(f"probe must have exactly {N_MATERIAL_CLASSES} classes")
        if b.shape != (N_MATERIAL_CLASSES,):
            raise ValueError("bias length must match class count")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class MaterialLabel:
    t_us: int
    class_name: str
    score: float  # winning logit minus runner-up


def pixel_scale(
    frame: Mapping[str, tuple[float, float, float]],
    stature_m: float,
    head_joint: str = "nose",
    min_kp_conf: float = 0.5,
    stature_fraction: float = 0.93,
    min_skeleton_px: float = 50.0,
    t_us: int = 0,
) -> PixelScale:
    """Meters-per-pixel from the participant's on-screen skeleton height.

    skeleton_px is the vertical pixel span from the head reference joint to
    the ankle midpoint; stature_fraction accounts for that joint sitting
    below the true vertex of the head.
    """
    required = (head_joint, "left_ankle", "right_ankle")
    pts = {}
    for name in required:
        kp = frame.get(name)
        if kp is None or not np.all(np.isfinite(kp)) or kp[2] < min_kp_conf:
            raise SkeletonIncomplete(f"joint {name!r} missing or below confidence")
        pts[name] = kp
    ankle_mid_y = (pts["left_ankle"][1] + pts["right_ankle"][1]) / 2.0
    skeleton_px = abs(ankle_mid_y - pts[head_joint][1])
    if skeleton_px < min_skeleton_px:
        raise TooSmall(f"skeleton height {skeleton_px:.1f} px below {min_skeleton_px}")
    return PixelScale(t_us, stature_m * stature_fraction / skeleton_px, skeleton_px)


def estimate_width(
    t_us: int,
    left_px: float,
    right_px: float,
    scale: PixelScale,
    max_scale_age_us: int = 2_000_000,
) -> WidthEstimate:
    """Walkway width at the foot row, meters."""
    if right_px <= left_px:
        raise EdgeOrderError(f"right edge {right_px} not right of left edge {left_px}")
    if abs(t_us - scale.t_us) > max_scale_age_us:
        raise StaleScale(f"pixel scale is {abs(t_us - scale.t_us)} us old")
    width_px = right_px - left_px
    return WidthEstimate(t_us, width_px * scale.meters_per_pixel, width_px)


def classify_material(
    embedding: np.ndarray,
    model: LinearProbeModel,
    t_us: int = 0,
) -> MaterialLabel:
    """Linear-probe argmax; exact ties go to the lowest class index."""
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.shape != (model.embedding_dim,):
        raise DimError(f"embedding shape {emb.shape} != ({model.embedding_dim},)")
    if not np.all(np.isfinite(emb)):
        raise ValueError("embedding must be finite")
    scores = model.weights @ emb + model.bias
    best = int(np.argmax(scores))  # argmax returns the first (lowest) index on ties
    others = np.delete(scores, best)
    return MaterialLabel(t_us, model.class_names[best], float(scores[best] - others.max()))


def smooth_materials(labels: list[MaterialLabel], window: int = 5) -> list[MaterialLabel]:
    """Temporal mode filter over class names; ties keep the center label.

    The window shrinks symmetrically at the sequence edges.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    if window == 1 or len(labels) <= 1:
        return list(labels)
    h = window // 2
    out: list[MaterialLabel] = []
    for i, label in enumerate(labels):
        lo = max(0, i - h)
        hi = min(len(labels), i + h + 1)
        counts = Counter(lbl.class_name for lbl in labels[lo:hi])
        top = counts.most_common()
        best, best_n = top[0]
        tied = [name for name, n in top if n == best_n]
        if len(tied) > 1 and label.class_name in tied:
            best = label.class_name
        out.append(replace(label, class_name=best))
    return out


def load_probe_model(path: str | Path) -> LinearProbeModel:
    """Parse a probe-weights CSV: class_name,bias,w0..w{d-1}; 14 rows."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[:2] != ["class_name", "bias"]:
            raise ParseError(path, 1, f"bad probe header: {header}")
        d = len(header) - 2
        if header[2:] != [f"w{i}" for i in range(d)]:
            raise ParseError(path, 1, "weight columns must be w0..w{d-1}")
        names: list[str] = []
        bias: list[float] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != d + 2:
                raise ParseError(path, line_no, f"expected {d + 2} columns, got {len(row)}")
            try:
                bias.append(float(row[1]))
                rows.append([float(c) for c in row[2:]])
            except ValueError:
                raise ParseError(path, line_no, "bad numeric value") from None
            names.append(row[0])
    if len(names) != N_MATERIAL_CLASSES:
        raise ParseError(path, len(names) + 1, f"probe needs exactly {N_MATERIAL_CLASSES} rows, got {len(names)}")
    return LinearProbeModel(np.array(rows), np.array(bias), tuple(names), d)
