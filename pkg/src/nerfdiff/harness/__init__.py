"""Synthetic scenes, metrics, and the end-to-end render/enhance experiment."""

from nerfdiff.harness.features import FeatureExtractor, extract_patches, image_features
from nerfdiff.harness.metrics import fid, gaussian_window, kid, psnr, psnr_from_mse, ssim, ssim_map, to_gray
from nerfdiff.harness.pipeline import (MetricsReport, PipelineConfig, PipelineResult, ZoomResult, camera_rig, smoke_config,
                                       comparison_strip, enhance_views, evaluate, render_views, run_pipeline,
                                       split_indices, zoom_camera, zoom_experiment, zoom_views)
from nerfdiff.harness.scene_models import measurement_model, random_scene_spec, voxel_scene_models
from nerfdiff.harness.voxel import VoxelScene, gen_voxel_scene, oracle_render, oracle_render_rays

__all__ = [
    "FeatureExtractor", "extract_patches", "image_features", "fid", "gaussian_window", "kid", "psnr",
    "psnr_from_mse", "ssim", "ssim_map", "to_gray", "MetricsReport", "PipelineConfig", "PipelineResult",
    "ZoomResult", "camera_rig", "smoke_config", "comparison_strip", "enhance_views", "evaluate", "render_views",
    "run_pipeline", "split_indices", "zoom_camera", "zoom_experiment", "zoom_views", "VoxelScene", "gen_voxel_scene",
    "oracle_render", "oracle_render_rays", "measurement_model", "random_scene_spec", "voxel_scene_models",
]
