"""Dataset-level depth error metrics.

Errors are pooled over every valid ground-truth pixel of the whole set before
dividing, so large frames weigh more than small ones. Accumulators add, which
lets frames be processed in any order or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyEvaluationError, ShapeError
from .pseudolidar import DepthMap

THRESHOLDS = (1.25, 1.25**2, 1.25**3)
DEFAULT_CAP = 80.0
MIN_PRED_DEPTH = 1e-3

Crop = tuple[int, int, int, int]  # top, bottom, left, right (half-open rows/cols)


@dataclass
class MetricAccumulator:
    n: int = 0
    abs_rel: float = 0.0
    sq_rel: float = 0.0
    sq_err: float = 0.0
    sq_log: float = 0.0
    inliers: tuple[int, int, int] = (0, 0, 0)

    def __add__(self, other: "MetricAccumulator") -> "MetricAccumulator":
        return MetricAccumulator(
            n=self.n + other.n,
            abs_rel=self.abs_rel + other.abs_rel,
            sq_rel=self.sq_rel + other.sq_rel,
            sq_err=self.sq_err + other.sq_err,
            sq_log=self.sq_log + other.sq_log,
            inliers=tuple(a + b for a, b in zip(self.inliers, other.inliers)),
        )


@dataclass(frozen=True)
class DepthMetricReport:
    abs_rel: float
    sq_rel: float
    rms: float
    rms_log: float
    delta1: float
    delta2: float
    delta3: float
    n: int
    cap: float
    pred_clamp: tuple[float, float] | None = field(default=None)
    median_scaling: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pred_clamp"] = None if self.pred_clamp is None else list(self.pred_clamp)
        return out


def select_pixels(
    pred: DepthMap,
    gt: DepthMap,
    cap: float = DEFAULT_CAP,
    crop: Crop | None = None,
    clamp: bool = True,
    median_scaling: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Return the flat (gt, pred) vectors a frame contributes to the pool."""
    if pred.values.shape != gt.values.shape:
        raise ShapeError(f"prediction shape {pred.values.shape} != ground-truth shape {gt.values.shape}")
    if not cap > 0:
        raise ValueError(f"cap must be positive, got {cap}")
    sel = gt.valid & (gt.values <= cap)
    if crop is not None:
        top, bottom, left, right = crop
        window = np.zeros_like(sel)
        window[top:bottom, left:right] = True
        sel &= window
    g = gt.values[sel]
    # invalid predictions read as 0 and are clamped below, never dropped from n
    p = pred.values[sel]
    if median_scaling and g.size:
        p = p * (np.median(g) / max(np.median(p), MIN_PRED_DEPTH))
    if clamp:
        p = np.clip(p, MIN_PRED_DEPTH, cap)
    return g, p


def accumulate(
    pred: DepthMap,
    gt: DepthMap,
    cap: float = DEFAULT_CAP,
    crop: Crop | None = None,
    clamp: bool = True,
    median_scaling: bool = False,
) -> MetricAccumulator:
    g, p = select_pixels(pred, gt, cap, crop, clamp, median_scaling)
    if g.size == 0:
        return MetricAccumulator()
    diff = g - p
    ratio = np.maximum(g / p, p / g)
    return MetricAccumulator(
        n=int(g.size),
        abs_rel=float(np.sum(np.abs(diff) / g)),
        sq_rel=float(np.sum(diff**2 / g)),
        sq_err=float(np.sum(diff**2)),
        sq_log=float(np.sum((np.log(g) - np.log(p)) ** 2)),
        inliers=tuple(int(np.count_nonzero(ratio < t)) for t in THRESHOLDS),
    )


def finalize(
    acc: MetricAccumulator,
    cap: float = DEFAULT_CAP,
    clamp: bool = True,
    median_scaling: bool = False,
) -> DepthMetricReport:
    if acc.n == 0:
        raise EmptyEvaluationError("no valid ground-truth pixels to evaluate")
    n = acc.n
    d1, d2, d3 = (c / n for c in acc.inliers)
    return DepthMetricReport(
        abs_rel=acc.abs_rel / n,
        sq_rel=acc.sq_rel / n,
        rms=math.sqrt(acc.sq_err / n),
        rms_log=math.sqrt(acc.sq_log / n),
        delta1=d1,
        delta2=d2,
        delta3=d3,
        n=n,
        cap=cap,
        pred_clamp=(MIN_PRED_DEPTH, cap) if clamp else None,
        median_scaling=median_scaling,
    )


def merge(accs: Iterable[MetricAccumulator]) -> MetricAccumulator:
    total = MetricAccumulator()
    for a in accs:
        total = total + a
    return total


def evaluate_dataset(
    pred_maps: Sequence[DepthMap],
    gt_maps: Sequence[DepthMap],
    cap: float = DEFAULT_CAP,
    crop: Crop | None = None,
    clamp: bool = True,
    median_scaling: bool = False,
) -> DepthMetricReport:
    if len(pred_maps) != len(gt_maps):
        raise ShapeError(f"{len(pred_maps)} predictions for {len(gt_maps)} ground-truth maps")
    total = MetricAccumulator()
    for i, (p, g) in enumerate(zip(pred_maps, gt_maps)):
        try:
            total = total + accumulate(p, g, cap, crop, clamp, median_scaling)
        except ShapeError as exc:
            raise ShapeError(f"frame {i}: {exc}") from exc
    return finalize(total, cap, clamp, median_scaling)
