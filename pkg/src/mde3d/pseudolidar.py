"""Depth map to Pseudo-LiDAR conversion.

Two flavours are produced: a dense cloud with one point per valid pixel, and a
cloud restricted to the pixels a virtual rotating LiDAR would hit. The virtual
sensor fires ``n_beams`` rays at evenly spaced elevations and steps them in
azimuth by ``h_res``; each ray is pushed through the pinhole model and snapped
to its nearest pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .geometry import CameraIntrinsics, backproject_pixels

KITTI_BEAMS = 64
KITTI_H_RES_DEG = 0.08
KITTI_V_FOV_DEG = 26.9
KITTI_D_MAX = 80.0
KITTI_H_MAX = 1.0
KITTI_R_MIN_FRAC = 0.4


@dataclass(frozen=True)
class DepthMap:
    """Metric depth in meters, row-major ``(height, width)``; invalid pixels hold 0."""

    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"depth map must be 2-D, got shape {values.shape}")
        if self.valid is None:
            valid = np.isfinite(values) & (values > 0)
        else:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise ShapeError(f"mask shape {valid.shape} != depth shape {values.shape}")
            valid = valid & np.isfinite(values) & (values > 0)
        values = np.where(valid, values, 0.0)
        values.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LidarSamplingSpec:
    """Parameters of the virtual LiDAR.

    Angles are radians. ``h_fov``, when set, is a window centred on the optical
    axis intersected with the image frustum. ``v_fov`` only limits the vertical
    extent when ``clamp_v_fov`` is true; otherwise the vertical extent comes from
    the image rows below the ``r_min_frac`` cutoff.
    """

    n_beams: int
    h_res: float
    d_max: float = KITTI_D_MAX
    h_max: float = KITTI_H_MAX
    r_min_frac: float = KITTI_R_MIN_FRAC
    v_fov: float | None = None
    h_fov: float | None = None
    clamp_v_fov: bool = False

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValueError(f"n_beams must be >= 1, got {self.n_beams}")
        if not self.h_res > 0:
            raise ValueError(f"h_res must be > 0, got {self.h_res}")
        if not self.d_max > 0:
            raise ValueError(f"d_max must be > 0, got {self.d_max}")
        if not 0 <= self.r_min_frac < 1:
            raise ValueError(f"r_min_frac must be in [0, 1), got {self.r_min_frac}")
        if self.h_fov is not None and self.h_fov < 0:
            raise ValueError("h_fov must be non-negative")
        if self.v_fov is not None and self.v_fov < 0:
            raise ValueError("v_fov must be non-negative")

    def to_dict(self) -> dict:
        return {
            "n_beams": self.n_beams,
            "h_res_deg": math.degrees(self.h_res),
            "d_max": self.d_max,
            "h_max": self.h_max,
            "r_min_frac": self.r_min_frac,
            "v_fov_deg": None if self.v_fov is None else math.degrees(self.v_fov),
            "h_fov_deg": None if self.h_fov is None else math.degrees(self.h_fov),
            "clamp_v_fov": self.clamp_v_fov,
        }


def kitti_velodyne_spec(n_beams: int = KITTI_BEAMS) -> LidarSamplingSpec:
    """HDL-64E-like preset; angular extents are resolved against the image at mask time."""
    return LidarSamplingSpec(
        n_beams=n_beams,
        h_res=math.radians(KITTI_H_RES_DEG),
        d_max=KITTI_D_MAX,
        h_max=KITTI_H_MAX,
        r_min_frac=KITTI_R_MIN_FRAC,
        v_fov=math.radians(KITTI_V_FOV_DEG),
        h_fov=2 * math.pi,
    )


@dataclass(frozen=True)
class PointCloud:
    """``points`` is an (N, 4) float32 array of x, y, z, intensity."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32).reshape(-1, 4)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_xyz(cls, xyz: np.ndarray) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        return cls(np.hstack([xyz, np.ones((len(xyz), 1))]))


@dataclass(frozen=True)
class SampleMask:
    selected: np.ndarray

    @property
    def height(self) -> int:
        return self.selected.shape[0]

    @property
    def width(self) -> int:
        return self.selected.shape[1]

    def count(self) -> int:
        return int(self.selected.sum())


def r_min_row(height: int, r_min_frac: float) -> int:
    # exact-fraction products would otherwise creep above an integer (0.4 * 100)
    return math.ceil(round(r_min_frac * height, 9))


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def angular_extents(k: CameraIntrinsics, spec: LidarSamplingSpec) -> tuple[float, float, float, float]:
    """Return ``(az_min, az_max, el_top, el_bottom)`` in radians.

    Empty ranges come back with max < min.
    """
    az_min = math.atan((0.5 - k.cu) / k.f)
    az_max = math.atan((k.width - 0.5 - k.cu) / k.f)
    if spec.h_fov is not None:
        half = spec.h_fov / 2
        az_min, az_max = max(az_min, -half), min(az_max, half)

    top_row = r_min_row(k.height, spec.r_min_frac)
    el_top = math.atan((top_row - k.cv) / k.f)
    el_bottom = math.atan((k.height - 0.5 - k.cv) / k.f)
    if spec.clamp_v_fov and spec.v_fov is not None:
        el_bottom = min(el_bottom, el_top + spec.v_fov)
    return az_min, az_max, el_top, el_bottom


def ray_angles(k: CameraIntrinsics, spec: LidarSamplingSpec) -> tuple[np.ndarray, np.ndarray]:
    az_min, az_max, el_top, el_bottom = angular_extents(k, spec)
    span = az_max - az_min
    n_az = math.ceil(span / spec.h_res) if span > 0 else 0
    azimuths = az_min + (np.arange(n_az) + 0.5) * spec.h_res

    v_span = el_bottom - el_top
    if v_span <= 0:
        # frustum below the cutoff collapses to a single scan line
        v_span = 0.0
    step = v_span / spec.n_beams
    elevations = el_top + np.arange(spec.n_beams) * step
    return azimuths, elevations


def build_sample_mask(k: CameraIntrinsics, spec: LidarSamplingSpec) -> SampleMask:
    azimuths, elevations = ray_angles(k, spec)
    selected = np.zeros((k.height, k.width), dtype=bool)
    if azimuths.size == 0 or elevations.size == 0:
        return SampleMask(selected)

    el, az = np.meshgrid(elevations, azimuths, indexing="ij")
    dx = np.cos(el) * np.sin(az)
    dy = np.sin(el)
    dz = np.cos(el) * np.cos(az)
    u = k.cu + k.f * dx / dz
    v = k.cv + k.f * dy / dz

    cols = _round_half_away(u).astype(np.int64)
    rows = _round_half_away(v).astype(np.int64)
    top = r_min_row(k.height, spec.r_min_frac)
    keep = (cols >= 0) & (cols < k.width) & (rows >= top) & (rows < k.height)
    selected[rows[keep], cols[keep]] = True
    return SampleMask(selected)


def _check_dims(d: DepthMap, k: CameraIntrinsics) -> None:
    if (d.width, d.height) != (k.width, k.height):
        raise ShapeError(
            f"depth map is {d.width}x{d.height} but intrinsics describe {k.width}x{k.height}"
        )


def _cloud_from_pixels(d: DepthMap, k: CameraIntrinsics, pick: np.ndarray) -> np.ndarray:
    rows, cols = np.nonzero(pick)
    return backproject_pixels(cols, rows, d.values[rows, cols], k)


def dense_cloud(
    d: DepthMap,
    k: CameraIntrinsics,
    d_max: float | None = None,
    h_max: float | None = None,
    r_min_frac: float | None = None,
) -> PointCloud:
    """One point per valid pixel, in row-major pixel order. All bounds are opt-in."""
    _check_dims(d, k)
    pick = d.valid.copy()
    if r_min_frac is not None:
        pick[: r_min_row(d.height, r_min_frac)] = False
    xyz = _cloud_from_pixels(d, k, pick)
    keep = np.ones(len(xyz), dtype=bool)
    if d_max is not None:
        keep &= xyz[:, 2] <= d_max
    if h_max is not None:
        keep &= -xyz[:, 1] <= h_max
    return PointCloud.from_xyz(xyz[keep])


def sampled_cloud(
    d: DepthMap,
    k: CameraIntrinsics,
    spec: LidarSamplingSpec,
    mask: SampleMask | None = None,
) -> PointCloud:
    _check_dims(d, k)
    if mask is None:
        mask = build_sample_mask(k, spec)
    xyz = _cloud_from_pixels(d, k, mask.selected & d.valid)
    keep = (xyz[:, 2] <= spec.d_max) & (-xyz[:, 1] <= spec.h_max)
    return PointCloud.from_xyz(xyz[keep])
