"""Published depth and detection tables shipped with the package."""

from __future__ import annotations

from importlib import resources

from .ranking import MetricTable

DETECTOR_FILES = {
    "Point R-CNN": "table3_point_rcnn.csv",
    "Voxel R-CNN": "table3_voxel_rcnn.csv",
    "CenterPoint": "table3_centerpoint.csv",
}
DEPTH_FILE = "table2_depth.csv"


def _read(name: str) -> str:
    return resources.files("mde3d.data").joinpath(name).read_text()


def depth_table() -> MetricTable:
    return MetricTable.from_csv(_read(DEPTH_FILE))


def detector_tables() -> dict[str, MetricTable]:
    return {det: MetricTable.from_csv(_read(f)) for det, f in DETECTOR_FILES.items()}
