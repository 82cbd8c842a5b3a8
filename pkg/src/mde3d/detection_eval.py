"""KITTI-style 3D detection evaluation (AP_BEV / AP_3D).

Ground truth is bucketed into easy/moderate/hard by 2D box height, occlusion
and truncation. Detections are matched greedily in descending score order and
the resulting precision/recall curve is summarised by 11- or 40-point
interpolated average precision.
"""

from __future__ import annotations

import enum
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import UndefinedRecallError
from .geometry import Box3D, Point3, box3d_bev_iou, iou_3d

DONT_CARE = "DontCare"


class Difficulty(enum.IntEnum):
    EASY = 0
    MODERATE = 1
    HARD = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class MatchFlag(enum.Enum):
    TP = "tp"
    FP = "fp"
    IGNORED = "ignored"


@dataclass(frozen=True)
class ObjectLabel:
    """One KITTI label line. ``score`` is set for detections, ``None`` for ground truth."""

    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    h: float
    w: float
    l: float
    location: Point3
    rotation_y: float
    score: float | None = None

    @property
    def box(self) -> Box3D:
        x, y, z = self.location
        return Box3D(x, y, z, self.h, self.w, self.l, self.rotation_y)

    @property
    def bbox_height(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]


GtObject = ObjectLabel
Detection = ObjectLabel


@dataclass(frozen=True)
class DifficultyRules:
    min_height: tuple[float, float, float] = (40.0, 25.0, 25.0)
    max_occlusion: tuple[int, int, int] = (0, 1, 2)
    max_truncation: tuple[float, float, float] = (0.15, 0.30, 0.50)


KITTI_RULES = DifficultyRules()

# easy / moderate / hard
DEFAULT_IOU_THRESHOLDS = (0.7, 0.5, 0.5)
STOCK_IOU_THRESHOLDS = (0.7, 0.7, 0.7)

IOU_FUNCS: dict[str, Callable[[Box3D, Box3D], float]] = {
    "bev": box3d_bev_iou,
    "3d": iou_3d,
}


def assign_difficulty(gt: ObjectLabel, rules: DifficultyRules = KITTI_RULES) -> Difficulty | None:
    if gt.class_name == DONT_CARE:
        return None
    for d in Difficulty:
        if (
            gt.bbox_height >= rules.min_height[d]
            and gt.occlusion <= rules.max_occlusion[d]
            and gt.truncation <= rules.max_truncation[d]
        ):
            return d
    return None


@dataclass
class FrameMatch:
    scores: list[float] = field(default_factory=list)
    flags: list[MatchFlag] = field(default_factory=list)
    n_gt: int = 0


def sort_by_score(dets: Sequence[ObjectLabel]) -> list[ObjectLabel]:
    # stable: equal scores keep input order
    return sorted(dets, key=lambda d: -d.score)


def match_frame(
    dets: Sequence[ObjectLabel],
    gts: Sequence[ObjectLabel],
    difficulty: Difficulty,
    iou_fn: Callable[[Box3D, Box3D], float],
    iou_threshold: float,
    class_name: str = "Car",
    rules: DifficultyRules = KITTI_RULES,
) -> FrameMatch:
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    cands = [g for g in gts if g.class_name == class_name]
    counted = []
    for g in cands:
        d = assign_difficulty(g, rules)
        counted.append(d is not None and d <= difficulty)
    taken = [False] * len(cands)
    gt_boxes = [g.box for g in cands]

    out = FrameMatch(n_gt=sum(counted))
    for det in sort_by_score([d for d in dets if d.class_name == class_name]):
        box = det.box
        best, best_iou = -1, -1.0
        for j, gbox in enumerate(gt_boxes):
            if taken[j]:
                continue
            iou = iou_fn(box, gbox)
            if iou >= iou_threshold and iou > best_iou:
                best, best_iou = j, iou
        out.scores.append(det.score)
        if best < 0:
            out.flags.append(MatchFlag.FP)
            continue
        taken[best] = True
        out.flags.append(MatchFlag.TP if counted[best] else MatchFlag.IGNORED)
    return out


def recall_points(mode: str) -> np.ndarray:
    mode = mode.upper()
    if mode == "R11":
        return np.arange(11) / 10
    if mode == "R40":
        return np.arange(1, 41) / 40
    raise ValueError(f"unknown AP mode {mode!r}; expected R11 or R40")


def average_precision(
    scores: Sequence[float],
    is_tp: Sequence[bool],
    n_gt: int,
    mode: str = "R11",
) -> float:
    """Interpolated AP in percent over the pooled, non-ignored detections."""
    points = recall_points(mode)
    if n_gt <= 0:
        raise UndefinedRecallError("no counted ground truth; recall is undefined")
    scores = np.asarray(scores, dtype=np.float64)
    tp = np.asarray(is_tp, dtype=bool)
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = tp[order]
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # envelope: best precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, points, side="left")
    interp = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(100.0 * interp.mean())


@dataclass(frozen=True)
class APReport:
    class_name: str
    mode: str
    results: dict[str, dict[str, float | None]]

    def to_dict(self) -> dict:
        return {self.class_name: self.results, "mode": self.mode}


def _match_all(args):
    dets, gts, class_name, rules, thresholds = args
    out = {}
    for kind, fn in IOU_FUNCS.items():
        for d in Difficulty:
            out[kind, d] = match_frame(dets, gts, d, fn, thresholds[d], class_name, rules)
    return out


def evaluate(
    dets_per_frame: Sequence[Sequence[ObjectLabel]],
    gts_per_frame: Sequence[Sequence[ObjectLabel]],
    class_name: str = "Car",
    rules: DifficultyRules = KITTI_RULES,
    mode: str = "R11",
    iou_thresholds: tuple[float, float, float] = DEFAULT_IOU_THRESHOLDS,
    jobs: int = 1,
) -> APReport:
    if len(dets_per_frame) != len(gts_per_frame):
        raise ValueError(f"{len(dets_per_frame)} detection frames for {len(gts_per_frame)} label frames")
    recall_points(mode)
    tasks = [(d, g, class_name, rules, iou_thresholds) for d, g in zip(dets_per_frame, gts_per_frame)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_frame = list(pool.map(_match_all, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        per_frame = [_match_all(t) for t in tasks]

    results: dict[str, dict[str, float | None]] = {}
    for d in Difficulty:
        entry: dict[str, float | None] = {}
        for kind in IOU_FUNCS:
            scores, flags, n_gt = _pool((f[kind, d] for f in per_frame))
            try:
                entry[f"ap_{kind}"] = average_precision(scores, flags, n_gt, mode)
            except UndefinedRecallError:
                warnings.warn(f"{class_name}/{d.label}: no counted ground truth, AP undefined")
                entry[f"ap_{kind}"] = None
        results[d.label] = entry
    return APReport(class_name, mode.upper(), results)


def _pool(matches: Iterable[FrameMatch]) -> tuple[list[float], list[bool], int]:
    scores, flags, n_gt = [], [], 0
    for m in matches:
        n_gt += m.n_gt
        for s, f in zip(m.scores, m.flags):
            if f is MatchFlag.IGNORED:
                continue
            scores.append(s)
            flags.append(f is MatchFlag.TP)
    return scores, flags, n_gt
