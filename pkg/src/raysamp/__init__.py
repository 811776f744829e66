"""Guided ray sampling for radiance-field training on a dense voxel grid."""

from .probmap import BetaSchedule, ProbMap, beta, clamp, depth_std_map, fuse, normalize_map, pixel_std_map
from .scene import Camera, SceneSpec, default_rig, default_scene, look_at, render_ground_truth, voxelize
from .trainer import TrainConfig, compare_strategies, desk_config, train

__all__ = [
    "BetaSchedule", "Camera", "ProbMap", "SceneSpec", "TrainConfig", "beta", "clamp",
    "compare_strategies", "default_rig", "default_scene", "depth_std_map", "desk_config", "fuse",
    "look_at", "normalize_map", "pixel_std_map", "render_ground_truth", "train", "voxelize",
]
