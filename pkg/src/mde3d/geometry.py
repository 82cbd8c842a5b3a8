"""Pinhole camera model and rotated-box overlap primitives.

Frame convention is the KITTI camera frame: x right, y down, z forward.
The bird's-eye-view (BEV) plane is x-z and yaw is KITTI ``rotation_y``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateGeometryError,
    IntrinsicsWarning,
    InvalidDepthError,
)

AREA_EPS = 1e-12

Vertex = tuple[float, float]


@dataclass(frozen=True)
class CameraIntrinsics:
    cu: float
    cv: float
    f: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.f > 0 and math.isfinite(self.f)):
            raise ValueError(f"focal length must be positive, got {self.f}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cu < self.width and 0 <= self.cv < self.height):
            # cropped images legitimately move the principal point off-image
            warnings.warn(
                f"principal point ({self.cu}, {self.cv}) lies outside the "
                f"{self.width}x{self.height} image",
                IntrinsicsWarning,
                stacklevel=3,
            )


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    out = math.remainder(yaw, 2 * math.pi)
    if out <= -math.pi:
        out += 2 * math.pi
    return out


@dataclass(frozen=True)
class RotatedBevBox:
    cx: float
    cz: float
    l: float
    w: float
    yaw: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0):
            raise DegenerateGeometryError(f"box extents must be positive, got l={self.l}, w={self.w}")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def area(self) -> float:
        return self.l * self.w

    def corners(self) -> list[Vertex]:
        """Footprint corners in the x-z plane, consistently wound."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.l / 2, self.w / 2
        out = []
        for dx, dz in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
            # rotation about the (downward) y axis
            out.append((self.cx + c * dx + s * dz, self.cz - s * dx + c * dz))
        return out


@dataclass(frozen=True)
class Box3D:
    """Upright 3D box; (x, y, z) is the bottom-face center, so it spans [y - h, y]."""

    x: float
    y: float
    z: float
    h: float
    w: float
    l: float
    ry: float

    def __post_init__(self):
        if not (self.h > 0 and self.w > 0 and self.l > 0):
            raise DegenerateGeometryError(
                f"box dimensions must be positive, got h={self.h}, w={self.w}, l={self.l}"
            )

    def bev(self) -> RotatedBevBox:
        return RotatedBevBox(self.x, self.z, self.l, self.w, self.ry)

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l


def backproject(u: float, v: float, z: float, k: CameraIntrinsics) -> Point3:
    if not (math.isfinite(z) and z > 0):
        raise InvalidDepthError(f"depth must be positive and finite, got {z}")
    s = z / k.f
    return Point3(s * (u - k.cu), s * (v - k.cv), z)


def backproject_pixels(u: np.ndarray, v: np.ndarray, z: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Vectorized :func:`backproject`; returns an (N, 3) float64 array.

    Same arithmetic as the scalar path so both produce identical values.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.size and not (np.all(np.isfinite(z)) and np.all(z > 0)):
        raise InvalidDepthError("all depths must be positive and finite")
    s = z / k.f
    x = s * (np.asarray(u, dtype=np.float64) - k.cu)
    y = s * (np.asarray(v, dtype=np.float64) - k.cv)
    return np.stack([x, y, z], axis=-1)


def project(p: Point3 | Sequence[float], k: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = p
    if not z > 0:
        raise BehindCameraError(f"point has z={z}, must be in front of the camera")
    return k.cu + k.f * x / z, k.cv + k.f * y / z


def _signed_area(poly: Sequence[Vertex]) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def polygon_area(poly: Sequence[Vertex]) -> float:
    """Shoelace area; 0 for fewer than three vertices."""
    return abs(_signed_area(poly))


def convex_clip(subject: Sequence[Vertex], clip: Sequence[Vertex]) -> list[Vertex]:
    """Clip ``subject`` against the convex polygon ``clip`` (Sutherland-Hodgman).

    Either winding is accepted for ``clip``; the output follows the winding of
    ``subject``. Returns ``[]`` when the overlap has no area.
    """
    orient = _signed_area(clip)
    if len(clip) < 3 or abs(orient) < AREA_EPS:
        raise DegenerateGeometryError("clip polygon is degenerate")
    sign = 1.0 if orient > 0 else -1.0

    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return sign * (ex * (p[1] - ay) - ey * (p[0] - ax))

        inp = output
        output = []
        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    output.append(_lerp(prev, cur, s_prev, s_cur))
                output.append(cur)
            elif s_prev >= 0:
                output.append(_lerp(prev, cur, s_prev, s_cur))
            prev, s_prev = cur, s_cur

    if len(output) < 3:
        return []
    return output


def _lerp(p: Vertex, q: Vertex, sp: float, sq: float) -> Vertex:
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def bev_intersection_area(a: RotatedBevBox, b: RotatedBevBox) -> float:
    return polygon_area(convex_clip(a.corners(), b.corners()))


def bev_iou(a: RotatedBevBox, b: RotatedBevBox) -> float:
    inter = bev_intersection_area(a, b)
    union = a.area + b.area - inter
    return min(max(inter / union, 0.0), 1.0)


def vertical_overlap(a: Box3D, b: Box3D) -> float:
    return max(0.0, min(a.y, b.y) - max(a.y - a.h, b.y - b.h))


def iou_3d(a: Box3D, b: Box3D) -> float:
    inter_area = bev_intersection_area(a.bev(), b.bev())
    if a.y == b.y and a.h == b.h:
        # identical vertical extent: reduces exactly to the BEV ratio
        union_area = a.bev().area + b.bev().area - inter_area
        return min(max(inter_area / union_area, 0.0), 1.0)
    inter = inter_area * vertical_overlap(a, b)
    union = a.volume + b.volume - inter
    return min(max(inter / union, 0.0), 1.0)


def box3d_bev_iou(a: Box3D, b: Box3D) -> float:
    return bev_iou(a.bev(), b.bev())
