"""Finite measurement models built from voxel scenes and their exact renderer."""

from __future__ import annotations

import numpy as np

from nerfdiff.field import fibonacci_sphere, look_at
from nerfdiff.harness.metrics import to_gray
from nerfdiff.harness.voxel import VoxelScene, gen_voxel_scene, oracle_render
from nerfdiff.rng import child_seed, stream
from nerfdiff.scene_calculus import DiscreteSceneModel, deterministic_model


def random_scene_spec(rng: np.random.Generator, resolution: int = 12) -> dict:
    ctr = rng.uniform(-0.4, 0.4, 3)
    lo = rng.uniform(-0.8, 0.0, 3)
    return {"resolution": resolution, "shapes": [
        {"type": "sphere", "center": ctr.tolist(), "radius": float(rng.uniform(0.2, 0.5)),
         "color": rng.uniform(0, 1, 3).tolist(), "density": float(rng.uniform(2, 20))},
        {"type": "box", "min": lo.tolist(), "max": (lo + rng.uniform(0.2, 0.8, 3)).tolist(),
         "color": rng.uniform(0, 1, 3).tolist(), "density": float(rng.uniform(2, 20))},
    ]}


def measurement_model(scenes: list[VoxelScene], n_configs: int = 4, levels: int = 4,
                      image_size: int = 8, prior=None) -> DiscreteSceneModel:
    """h(S, c) = mean luma of the central quarter of the oracle view from camera c
    (black background), quantized to ``levels`` equal bins over [0, 0.4].

    The measurement is a deterministic function of scene and camera, so
    the result is a deterministic scene model.
    """
    cams = [look_at(p, np.zeros(3), image_size, image_size, 1.2 * image_size, near=0.1, far=6.0)
            for p in fibonacci_sphere(n_configs, 3.0)]
    out = np.empty((len(scenes), n_configs), dtype=int)
    for s, scene in enumerate(scenes):
        for c, cam in enumerate(cams):
            px = oracle_render(scene, cam, background=(0.0, 0.0, 0.0)).pixels
            q = image_size // 4
            luma = float(np.mean(to_gray(px[q:-q, q:-q])))
            out[s, c] = min(int(luma / 0.4 * levels), levels - 1)
    return deterministic_model(out, prior, levels)


def voxel_scene_models(seed: int, n_models: int = 4, scenes_per_model: int = 3) -> list[DiscreteSceneModel]:
    models = []
    for m in range(n_models):
        rng = stream(seed, "voxel-model", m)
        scenes = [gen_voxel_scene(random_scene_spec(rng), child_seed(seed, "voxel-model", m, k))
                  for k in range(scenes_per_model)]
        models.append(measurement_model(scenes, prior=rng.dirichlet(np.ones(scenes_per_model))))
    return models
