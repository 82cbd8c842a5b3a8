"""Codecs for the KITTI on-disk formats the pipeline reads and writes."""

from __future__ import annotations

import io
import warnings

import numpy as np
from PIL import Image

from .detection_eval import ObjectLabel
from .errors import FocalMismatchWarning, FormatError, ParseError, TruncationError, ValidationError
from .geometry import CameraIntrinsics, Point3
from .pseudolidar import DepthMap, PointCloud, SampleMask

KITTI_WIDTH = 1242
KITTI_HEIGHT = 375
FOCAL_TOLERANCE = 1e-3
DEPTH_SCALE = 256.0

_POINT_DTYPE = np.dtype("<f4")


def parse_calib_matrices(text: str) -> dict[str, np.ndarray]:
    """All ``key: v0 v1 ...`` lines; 12 values become 3x4, 9 values 3x3."""
    mats = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(f"line {lineno}: expected 'key: values'")
        key, rest = line.split(":", 1)
        try:
            vals = np.array([float(t) for t in rest.split()], dtype=np.float64)
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric token in {key.strip()!r}") from None
        if vals.size == 12:
            vals = vals.reshape(3, 4)
        elif vals.size == 9:
            vals = vals.reshape(3, 3)
        mats[key.strip()] = vals
    return mats


def intrinsics_from_p2(p2: np.ndarray, width: int = KITTI_WIDTH, height: int = KITTI_HEIGHT) -> CameraIntrinsics:
    p2 = np.asarray(p2, dtype=np.float64).reshape(3, 4)
    fu, fv = p2[0, 0], p2[1, 1]
    if not fu > 0:
        raise FormatError(f"P2[0][0] must be positive, got {fu}")
    if abs(fu - fv) / fu > FOCAL_TOLERANCE:
        warnings.warn(f"f_u={fu} and f_v={fv} differ; using f_u", FocalMismatchWarning, stacklevel=2)
    return CameraIntrinsics(cu=float(p2[0, 2]), cv=float(p2[1, 2]), f=float(fu), width=width, height=height)


def parse_calib(text: str, width: int = KITTI_WIDTH, height: int = KITTI_HEIGHT) -> CameraIntrinsics:
    mats = parse_calib_matrices(text)
    if "P2" not in mats:
        raise FormatError("calibration has no P2 line")
    if mats["P2"].size != 12:
        raise FormatError(f"P2 must have 12 values, got {mats['P2'].size}")
    return intrinsics_from_p2(mats["P2"], width, height)


def _homogeneous(m: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    m = np.asarray(m, dtype=np.float64)
    out[: m.shape[0], : m.shape[1]] = m
    return out


def camera_to_velo(cloud: PointCloud, mats: dict[str, np.ndarray]) -> PointCloud:
    """Map a rectified-camera cloud into the LiDAR frame (inverse of R0_rect @ Tr_velo_to_cam)."""
    if "Tr_velo_to_cam" not in mats:
        raise FormatError("calibration has no Tr_velo_to_cam line")
    fwd = _homogeneous(mats["Tr_velo_to_cam"])
    if "R0_rect" in mats:
        fwd = _homogeneous(mats["R0_rect"]) @ fwd
    inv = np.linalg.inv(fwd)
    pts = cloud.points.astype(np.float64)
    xyz = pts[:, :3] @ inv[:3, :3].T + inv[:3, 3]
    return PointCloud(np.hstack([xyz, pts[:, 3:]]))


def parse_labels(text: str) -> list[ObjectLabel]:
    """15 fields per ground-truth line, 16 when a detection score is appended."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) not in (15, 16):
            raise ParseError(f"line {lineno}: expected 15 or 16 fields, got {len(toks)}")
        try:
            nums = [float(t) for t in toks[1:]]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field") from None
        if not nums[1].is_integer():
            raise ParseError(f"line {lineno}: occlusion must be an integer, got {toks[2]}")
        out.append(
            ObjectLabel(
                class_name=toks[0],
                truncation=nums[0],
                occlusion=int(nums[1]),
                alpha=nums[2],
                bbox2d=(nums[3], nums[4], nums[5], nums[6]),
                h=nums[7],
                w=nums[8],
                l=nums[9],
                location=Point3(nums[10], nums[11], nums[12]),
                rotation_y=nums[13],
                score=nums[14] if len(nums) == 15 else None,
            )
        )
    return out


def format_label(obj: ObjectLabel) -> str:
    fields = [
        obj.class_name,
        f"{obj.truncation:.2f}",
        f"{obj.occlusion:d}",
        f"{obj.alpha:.2f}",
        *(f"{v:.2f}" for v in obj.bbox2d),
        f"{obj.h:.2f}",
        f"{obj.w:.2f}",
        f"{obj.l:.2f}",
        *(f"{v:.2f}" for v in obj.location),
        f"{obj.rotation_y:.2f}",
    ]
    if obj.score is not None:
        fields.append(f"{obj.score:.4f}")
    return " ".join(fields)


def format_labels(objs) -> str:
    return "".join(format_label(o) + "\n" for o in objs)


def read_depth_image(data: bytes) -> DepthMap:
    """KITTI depth PNG: uint16, depth = raw / 256, raw 0 means no measurement."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise FormatError(f"cannot decode depth image: {exc}") from None
    if img.format != "PNG":
        raise FormatError(f"depth images must be PNG, got {img.format}")
    if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise FormatError(f"depth image must be single-channel 16-bit, got mode {img.mode}")
    raw = np.array(img)
    if img.mode == "I" and (raw.min(initial=0) < 0 or raw.max(initial=0) > 0xFFFF):
        raise FormatError("depth image values exceed the 16-bit range")
    raw = raw.astype(np.uint16)
    return DepthMap(raw / DEPTH_SCALE, raw > 0)


def write_depth_image(d: DepthMap) -> bytes:
    raw = np.where(d.valid, np.round(d.values * DEPTH_SCALE), 0)
    if raw.max(initial=0) > 0xFFFF:
        raise ValueError("depth exceeds the 16-bit encodable range (255.996 m)")
    # a valid depth that rounds to 0 would turn invalid on reload
    raw = np.where(d.valid & (raw == 0), 1, raw).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(raw).save(buf, format="PNG")
    return buf.getvalue()


def write_pointcloud(cloud: PointCloud) -> bytes:
    return np.ascontiguousarray(cloud.points, dtype=_POINT_DTYPE).tobytes()


def read_pointcloud(data: bytes) -> PointCloud:
    if len(data) % 16:
        raise TruncationError(f"point cloud byte length {len(data)} is not a multiple of 16")
    return PointCloud(np.frombuffer(data, dtype=_POINT_DTYPE).reshape(-1, 4))


def parse_split(text: str) -> list[str]:
    ids, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        fid = line.strip()
        if not fid:
            continue
        if fid in seen:
            raise ValidationError(f"line {lineno}: duplicate frame id {fid!r}")
        seen.add(fid)
        ids.append(fid)
    return ids


def write_mask_image(mask: SampleMask) -> bytes:
    """8-bit grayscale PNG, sampled pixels white (255)."""
    buf = io.BytesIO()
    Image.fromarray(np.where(mask.selected, 255, 0).astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def read_mask_image(data: bytes) -> SampleMask:
    img = Image.open(io.BytesIO(data))
    if img.mode != "L":
        raise FormatError(f"mask image must be 8-bit grayscale, got mode {img.mode}")
    return SampleMask(np.array(img) > 127)

