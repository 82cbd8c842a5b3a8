"""Pseudo-LiDAR generation and evaluation tools for monocular depth models."""

from .depth_metrics import DepthMetricReport, MetricAccumulator, accumulate, evaluate_dataset, finalize
from .detection_eval import APReport, Difficulty, ObjectLabel, assign_difficulty, average_precision, evaluate, match_frame
from .geometry import Box3D, CameraIntrinsics, Point3, RotatedBevBox, backproject, bev_iou, convex_clip, iou_3d, polygon_area, project
from .pseudolidar import DepthMap, LidarSamplingSpec, PointCloud, SampleMask, build_sample_mask, dense_cloud, kitti_velodyne_spec, sampled_cloud
from .ranking import ConcordanceReport, MetricTable, Ranking, concordance_report, inversion_count, rank_models, render_diagram

__version__ = "0.1.0"
