"""Independent reference computations used to check the library.

Nothing here calls into ``mde3d`` numerics: IoU goes through shapely, matching
enumerates every assignment, and AP scans every score cut-off.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
from shapely import affinity
from shapely.geometry import box as shp_box

# easy, moderate, hard
MIN_HEIGHT = (40, 25, 25)
MAX_OCC = (0, 1, 2)
MAX_TRUNC = (0.15, 0.30, 0.50)


def footprint(obj):
    x, _, z = obj.location
    rect = shp_box(x - obj.l / 2, z - obj.w / 2, x + obj.l / 2, z + obj.w / 2)
    # KITTI yaw turns +x toward -z, i.e. clockwise in the (x, z) plane
    return affinity.rotate(rect, -obj.rotation_y, origin=(x, z), use_radians=True)


def oracle_iou(a, b, kind):
    pa, pb = footprint(a), footprint(b)
    inter = pa.intersection(pb).area
    if kind == "bev":
        return inter / (pa.area + pb.area - inter)
    ya, yb = a.location[1], b.location[1]
    dy = max(0.0, min(ya, yb) - max(ya - a.h, yb - b.h))
    vi = inter * dy
    return vi / (pa.area * a.h + pb.area * b.h - vi)


def oracle_difficulty(obj):
    if obj.class_name == "DontCare":
        return None
    height = obj.bbox2d[3] - obj.bbox2d[1]
    for d in range(3):
        if height >= MIN_HEIGHT[d] and obj.occlusion <= MAX_OCC[d] and obj.truncation <= MAX_TRUNC[d]:
            return d
    return None


def _assignments(n_det, gts_ok):
    """Every injective partial map det -> gt, restricted to allowed pairs."""
    def rec(i, used):
        if i == n_det:
            yield ()
            return
        for rest in rec(i + 1, used):
            yield (None,) + rest
        for j in gts_ok[i]:
            if j not in used:
                for rest in rec(i + 1, used | {j}):
                    yield (j,) + rest
    yield from rec(0, frozenset())


def oracle_frame(dets, gts, difficulty, kind, threshold, class_name="Car"):
    """Return ([(score, 'tp'|'fp'|'ignored')], n_counted) for one frame."""
    cand = [g for g in gts if g.class_name == class_name]
    counted = [
        (d := oracle_difficulty(g)) is not None and d <= difficulty for g in cand
    ]
    ds = [d for d in dets if d.class_name == class_name]
    order = sorted(range(len(ds)), key=lambda i: (-ds[i].score, i))
    ds = [ds[i] for i in order]
    iou = [[oracle_iou(d, g, kind) for g in cand] for d in ds]
    ok = [[j for j in range(len(cand)) if iou[i][j] >= threshold] for i in range(len(ds))]

    def key(assign):
        # lexicographic by score rank: matched beats unmatched, higher IoU wins, then lower index
        return tuple(
            (0, 0.0, 0) if j is None else (1, iou[i][j], -j) for i, j in enumerate(assign)
        )

    best = max(_assignments(len(ds), ok), key=key)
    out = []
    for det, j in zip(ds, best):
        if j is None:
            out.append((det.score, "fp"))
        else:
            out.append((det.score, "tp" if counted[j] else "ignored"))
    return out, sum(counted)


def oracle_ap(pairs, n_gt, mode):
    """pairs: (score, is_tp) with ignored detections already dropped."""
    pts = [i / 10 for i in range(11)] if mode == "R11" else [i / 40 for i in range(1, 41)]
    ranked = sorted(range(len(pairs)), key=lambda i: (-pairs[i][0], i))
    curve = []
    for k in range(1, len(ranked) + 1):
        tp = sum(1 for i in ranked[:k] if pairs[i][1])
        curve.append((tp / n_gt, tp / k))
    total = 0.0
    for r in pts:
        cands = [p for rec, p in curve if rec >= r]
        total += max(cands) if cands else 0.0
    return 100 * total / len(pts)


THRESHOLDS = (0.7, 0.5, 0.5)


def oracle_evaluate(dets_per_frame, gts_per_frame, mode="R11", class_name="Car"):
    out = {}
    for d, name in enumerate(("easy", "moderate", "hard")):
        entry = {}
        for kind in ("bev", "3d"):
            pairs, n_gt = [], 0
            for dets, gts in zip(dets_per_frame, gts_per_frame):
                flags, n = oracle_frame(dets, gts, d, kind, THRESHOLDS[d], class_name)
                n_gt += n
                pairs += [(s, f == "tp") for s, f in flags if f != "ignored"]
            entry[f"ap_{kind}"] = oracle_ap(pairs, n_gt, mode) if n_gt else None
        out[name] = entry
    return out


def brute_force_inversions(a, b):
    pa = {m: i for i, m in enumerate(a)}
    pb = {m: i for i, m in enumerate(b)}
    return sum(1 for x, y in combinations(a, 2) if (pa[x] - pa[y]) * (pb[x] - pb[y]) < 0)


def segments_cross(p1, p2, q1, q2):
    """Proper intersection of two closed segments (shared endpoints excluded)."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def monte_carlo_iou(corners_a, corners_b, n, rng):
    """Uniform sampling over the joint bounding box; returns (estimate, sigma)."""
    pts_all = np.vstack([corners_a, corners_b])
    lo, hi = pts_all.min(axis=0), pts_all.max(axis=0)
    xy = rng.uniform(lo, hi, size=(n, 2))
    ina, inb = _inside(xy, corners_a), _inside(xy, corners_b)
    union = np.count_nonzero(ina | inb)
    inter = np.count_nonzero(ina & inb)
    p = inter / union
    return p, math.sqrt(max(p * (1 - p), 1e-300) / union)


def _inside(xy, rect):
    """Membership in a rectangle given by 4 consecutive corners, via two edge projections."""
    rect = np.asarray(rect, dtype=np.float64)
    e1, e2 = rect[1] - rect[0], rect[3] - rect[0]
    rel = xy - rect[0]
    s = rel @ e1
    t = rel @ e2
    return (s >= 0) & (s <= e1 @ e1) & (t >= 0) & (t <= e2 @ e2)
