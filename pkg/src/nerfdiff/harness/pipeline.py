"""End-to-end experiment: voxel scene -> oracle views -> field -> denoiser -> metrics."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from nerfdiff.diffusion import (ConditionalDenoiser, DenoiserTrainResult, DiffusionConfig, DiffusionSchedule,
                                enhance_many, train_denoiser)
from nerfdiff.errors import ContractError, StageError
from nerfdiff.field import (Camera, FieldConfig, FieldTrainResult, PosedImage, RadianceField,
                            fibonacci_sphere, look_at, render_image, train_field, write_png)
from nerfdiff.harness.features import FeatureExtractor, image_features
from nerfdiff.harness.metrics import fid, kid, psnr, ssim
from nerfdiff.harness.voxel import VoxelScene, gen_voxel_scene, oracle_render
from nerfdiff.rng import child_seed, stream

log = logging.getLogger(__name__)

METRICS = ("psnr", "ssim", "fid", "kid")


@dataclass
class PipelineConfig:
    image_size: int = 64
    n_views: int = 72
    test_every: int = 9  # every 9th view is held out (9:1 split)
    radius: float = 3.2
    focal_factor: float = 1.2  # focal length in pixels per image width
    near: float = 0.1
    far: float = 6.0
    render_samples: int = 64
    patch_size: int = 8
    patch_stride: int = 4
    feature_seed: int = 0
    enhance_batch: int = 8
    clip_denoised: bool = False  # clamp the implied clean image at every reverse step
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    diffusion: DiffusionConfig = dc_field(default_factory=DiffusionConfig)


def smoke_config() -> PipelineConfig:
    """16x16 liveness configuration: 200 field steps, 500 denoiser steps."""
    return PipelineConfig(
        image_size=16, render_samples=32,
        field=FieldConfig(steps=200, batch_rays=256, lr=1e-3, lr_final=1e-4, n_samples=32, log_every=50),
        diffusion=DiffusionConfig(steps=500, batch=4, crop=None, lr=1e-3, lr_final=1e-4, log_every=100),
    )


def camera_rig(cfg: PipelineConfig) -> list[Camera]:
    """Cameras on a Fibonacci sphere, all looking at the origin."""
    w = cfg.image_size
    return [look_at(p, np.zeros(3), w, w, cfg.focal_factor * w, near=cfg.near, far=cfg.far)
            for p in fibonacci_sphere(cfg.n_views, cfg.radius)]


def split_indices(n: int, every: int) -> tuple[list[int], list[int]]:
    test = list(range(0, n, every))
    return [i for i in range(n) if i % every], test


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


@dataclass
class MetricsReport:
    """Per-view rows plus pooled aggregates for each image variant."""

    rows: list[tuple[str, int, str, float]] = dc_field(default_factory=list)  # variant, view, metric, value
    aggregate: dict[str, dict[str, float]] = dc_field(default_factory=dict)

    def value(self, variant: str, metric: str) -> float:
        return self.aggregate[variant][metric]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "view", "metric", "value"])
        for variant, view, metric, value in self.rows:
            w.writerow([variant, view, metric, _fmt(value)])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {v: {m: _fmt(x) if math.isinf(x) else x for m, x in d.items()} for v, d in self.aggregate.items()}

    def save(self, out_dir, stem: str = "report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(self.csv_text())
        (out / f"{stem}.json").write_text(json.dumps(self.to_json_dict(), indent=1, sort_keys=True) + "\n")


def evaluate(oracle: list[PosedImage], variants: dict[str, list[PosedImage]], cfg: PipelineConfig,
             views: list[int] | None = None) -> MetricsReport:
    """Compare each variant against the oracle images view by view and pooled.

    Distribution metrics use features of all patches; the per-view rows use
    that view's patches only.
    """
    views = list(range(len(oracle))) if views is None else views
    ext = FeatureExtractor(cfg.feature_seed)
    real = [image_features(im.pixels, ext, cfg.patch_size, cfg.patch_stride) for im in oracle]
    report = MetricsReport()
    for name, images in variants.items():
        if len(images) != len(oracle):
            raise ContractError(f"variant '{name}' has {len(images)} images for {len(oracle)} oracle views")
        feats = [image_features(im.pixels, ext, cfg.patch_size, cfg.patch_stride) for im in images]
        per = {m: [] for m in METRICS}
        for k, (o, im) in enumerate(zip(oracle, images)):
            vals = {"psnr": psnr(im.pixels, o.pixels), "ssim": ssim(im.pixels, o.pixels),
                    "fid": fid(feats[k], real[k]), "kid": kid(feats[k], real[k])}
            for m in METRICS:
                report.rows.append((name, views[k], m, vals[m]))
                per[m].append(vals[m])
        all_real, all_fake = np.concatenate(real), np.concatenate(feats)
        report.aggregate[name] = {"psnr": float(np.mean(per["psnr"])), "ssim": float(np.mean(per["ssim"])),
                                  "fid": fid(all_fake, all_real), "kid": kid(all_fake, all_real)}
    return report


@dataclass
class PipelineResult:
    cfg: PipelineConfig
    seed: int
    scene: VoxelScene
    cameras: list[Camera]
    train_idx: list[int]
    test_idx: list[int]
    oracle: list[PosedImage]  # every view
    field_result: FieldTrainResult
    denoiser_result: DenoiserTrainResult
    renders: list[PosedImage]  # test views
    enhanced: list[PosedImage]
    report: MetricsReport

    @property
    def field(self) -> RadianceField:
        return self.field_result.field

    @property
    def net(self) -> ConditionalDenoiser:
        """Weights used for enhancement (the moving average when training kept one)."""
        return self.denoiser_result.sampler

    @property
    def schedule(self) -> DiffusionSchedule:
        return self.denoiser_result.schedule


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def render_views(field: RadianceField, cams: list[Camera], cfg: PipelineConfig) -> list[PosedImage]:
    return [render_image(field, c, cfg.render_samples, clip=cfg.field.clip, background=cfg.field.background)
            for c in cams]


def enhance_views(renders: list[PosedImage], net: ConditionalDenoiser, sched: DiffusionSchedule,
                  cfg: PipelineConfig, seed: int, tag: str = "enhance") -> list[PosedImage]:
    rngs = [stream(seed, tag, i) for i in range(len(renders))]
    return enhance_many(renders, net, sched, rngs, cfg.enhance_batch, cfg.clip_denoised)


def save_images(out_dir, groups: dict[str, list[PosedImage]], views: list[int]) -> None:
    for name, images in groups.items():
        for v, im in zip(views, images):
            write_png(Path(out_dir) / name / f"view_{v:03d}.png", im.pixels)


def run_pipeline(scene_spec: dict, cfg: PipelineConfig, seed: int, out_dir=None,
                 progress: Callable[[str], None] | None = None) -> PipelineResult:
    """Run every stage; failures are re-raised as StageError naming the stage."""
    say = progress or (lambda msg: log.info(msg))
    scene = _stage("scene", gen_voxel_scene, scene_spec, child_seed(seed, "scene"))
    cams = camera_rig(cfg)
    train_idx, test_idx = split_indices(len(cams), cfg.test_every)
    oracle = _stage("oracle", lambda: [oracle_render(scene, c, cfg.field.background) for c in cams])
    say(f"oracle: {len(train_idx)} train / {len(test_idx)} test views")
    fres = _stage("field", train_field, [oracle[i] for i in train_idx], cfg.field, stream(seed, "field"),
                  progress=lambda s, v: say(f"field step {s}: loss {v:.5f}"))
    train_renders = _stage("render", render_views, fres.field, [cams[i] for i in train_idx], cfg)
    renders = _stage("render", render_views, fres.field, [cams[i] for i in test_idx], cfg)
    pairs = list(zip(train_renders, [oracle[i] for i in train_idx]))
    dres = _stage("diffusion", train_denoiser, pairs, cfg.diffusion, stream(seed, "diffusion"),
                  progress=lambda s, v: say(f"diffusion step {s}: loss {v:.5f}"))
    enhanced = _stage("enhance", enhance_views, renders, dres.sampler, dres.schedule, cfg, seed)
    test_oracle = [oracle[i] for i in test_idx]
    report = _stage("evaluate", evaluate, test_oracle, {"render": renders, "enhanced": enhanced}, cfg, test_idx)
    if out_dir is not None:
        save_images(out_dir, {"oracle": test_oracle, "render": renders, "enhanced": enhanced}, test_idx)
        report.save(out_dir)
    return PipelineResult(cfg, seed, scene, cams, train_idx, test_idx, oracle, fres, dres, renders, enhanced, report)


def zoom_camera(cam: Camera, factor: float, scene: VoxelScene, step: float = 0.02) -> Camera:
    """Move a camera looking at the origin to 1/factor of its distance.

    If the new centre sits in an occupied voxel it is pushed back outwards
    until free, with a warning.
    """
    if factor <= 0:
        raise ContractError("zoom factor must be positive")
    eye = cam.translation / factor
    direction = cam.translation / np.linalg.norm(cam.translation)
    moved = False
    while scene.density_at(eye)[0] > 0:
        eye = eye + step * direction
        moved = True
    if moved:
        warnings.warn(f"zoomed camera was inside solid voxels; moved out to distance {np.linalg.norm(eye):.3f}",
                      stacklevel=2)
    return cam.moved_to(eye)


@dataclass
class ZoomResult:
    factor: float
    cameras: list[Camera]
    oracle: list[PosedImage]
    renders: list[PosedImage]
    enhanced: list[PosedImage]
    report: MetricsReport


def zoom_views(scene: VoxelScene, cameras: list[Camera], views: list[int], field: RadianceField,
               net: ConditionalDenoiser, sched: DiffusionSchedule, cfg: PipelineConfig, seed: int,
               factor: float, renders: list[PosedImage] | None = None,
               enhanced: list[PosedImage] | None = None, out_dir=None) -> ZoomResult:
    """Oracle, field and enhanced images from cameras moved ``factor`` times closer.

    Pass ``renders``/``enhanced`` to reuse images already made at these poses.
    """
    cams = [zoom_camera(c, factor, scene) for c in cameras]
    oracle = _stage("zoom-oracle", lambda: [oracle_render(scene, c, cfg.field.background) for c in cams])
    if renders is None:
        renders = _stage("zoom-render", render_views, field, cams, cfg)
    if enhanced is None:
        enhanced = _stage("zoom-enhance", enhance_views, renders, net, sched, cfg, seed, f"zoom-{factor:g}")
    report = _stage("zoom-evaluate", evaluate, oracle, {"render": renders, "enhanced": enhanced}, cfg, views)
    if out_dir is not None:
        save_images(out_dir, {"oracle": oracle, "render": renders, "enhanced": enhanced}, views)
        for v, o, r, e in zip(views, oracle, renders, enhanced):
            write_png(Path(out_dir) / "comparison" / f"view_{v:03d}.png", comparison_strip(o, r, e))
        report.save(out_dir)
    return ZoomResult(factor, cams, oracle, renders, enhanced, report)


def zoom_experiment(result: PipelineResult, factor: float, out_dir=None) -> ZoomResult:
    """Evaluate held-out views from cameras moved closer to the object.

    Factor 1 reuses the pipeline's own renders and samples, so its metrics
    equal the standard test metrics.
    """
    reuse = factor == 1
    return zoom_views(result.scene, [result.cameras[i] for i in result.test_idx], result.test_idx,
                      result.field, result.net, result.schedule, result.cfg, result.seed, factor,
                      renders=result.renders if reuse else None, enhanced=result.enhanced if reuse else None,
                      out_dir=out_dir)


def comparison_strip(oracle: PosedImage, render: PosedImage, enhanced: PosedImage, gap: int = 2) -> np.ndarray:
    """Side-by-side render | enhanced | oracle image with white separators."""
    h, w, _ = oracle.pixels.shape
    canvas = np.ones((h, 3 * w + 2 * gap, 3), dtype=np.float32)
    for k, im in enumerate((render, enhanced, oracle)):
        canvas[:, k * (w + gap):k * (w + gap) + w] = im.pixels
    return canvas
