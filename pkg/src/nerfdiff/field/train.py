from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

import nerfdiff.numerics as nx
from nerfdiff.errors import ContractError, NumericError, TrainingError
from nerfdiff.field.camera import generate_rays
from nerfdiff.field.dataset import PosedImage
from nerfdiff.field.model import FieldArch, RadianceField
from nerfdiff.field.render import WHITE, ray_bounds, render_rays
from nerfdiff.numerics import Adam, Graph, OptimState, Tensor


@dataclass
class FieldConfig:
    steps: int = 20000
    batch_rays: int = 1024
    lr: float = 5e-4
    lr_final: float = 5e-5
    n_samples: int = 64
    clip: float | None = 1.0
    background: tuple = WHITE
    log_every: int = 100
    arch: FieldArch = dc_field(default_factory=FieldArch)


@dataclass
class FieldTrainResult:
    field: RadianceField
    losses: list[float]  # one entry per step
    trace: list[float]  # mean loss per `log_every` block
    state: OptimState


def cosine_lr(step: int, total: int, lr0: float, lr1: float) -> float:
    frac = min(step / max(total, 1), 1.0)
    return lr1 + 0.5 * (lr0 - lr1) * (1.0 + math.cos(math.pi * frac))


def gather_rays(dataset: list[PosedImage], clip: float | None):
    """Stack every training pixel; drops rays whose interval misses the scene box."""
    os_, ds_, cols, t0s, t1s, miss_cols = [], [], [], [], [], []
    for im in dataset:
        o, d = generate_rays(im.camera)
        t0, t1, hit = ray_bounds(o, d, im.camera.near, im.camera.far, clip)
        px = im.pixels.reshape(-1, 3)
        os_.append(o[hit]); ds_.append(d[hit]); cols.append(px[hit])
        t0s.append(t0[hit]); t1s.append(t1[hit]); miss_cols.append(px[~hit])
    return (np.concatenate(os_), np.concatenate(ds_), np.concatenate(cols).astype(np.float32),
            np.concatenate(t0s), np.concatenate(t1s), np.concatenate(miss_cols))


def train_field(dataset: list[PosedImage], cfg: FieldConfig, rng: np.random.Generator,
                init: RadianceField | None = None, state: OptimState | None = None,
                until: int | None = None, progress=None) -> FieldTrainResult:
    """Fit a radiance field to posed images by per-ray MSE with Adam.

    Rays that miss the scene box render the background exactly and carry no
    gradient, so batches are drawn only from rays that hit it. ``init`` and
    ``state`` resume a previous run; the lr schedule continues from
    ``state.step``; ``until`` stops early at that step without changing it.
    """
    if len(dataset) < 2:
        raise ContractError("need at least two posed images")
    cam0 = dataset[0].camera
    for im in dataset[1:]:
        c = im.camera
        if (c.fx, c.fy, c.cx, c.cy, c.width, c.height) != (cam0.fx, cam0.fy, cam0.cx, cam0.cy, cam0.width, cam0.height):
            raise ContractError("dataset cameras must share intrinsics")
    o, d, target, t0, t1, _ = gather_rays(dataset, cfg.clip)
    if o.shape[0] == 0:
        raise ContractError("no training ray intersects the scene bounds")
    field = init if init is not None else RadianceField.init(rng, cfg.arch)
    opt = Adam(field.params, lr=cfg.lr)
    if state is not None:
        opt.state = state
    start = opt.state.step
    losses: list[float] = []
    trace: list[float] = []
    block: list[float] = []
    for step in range(start, cfg.steps if until is None else min(until, cfg.steps)):
        sel = rng.integers(0, o.shape[0], size=min(cfg.batch_rays, o.shape[0]))
        try:
            with Graph() as g:
                color = render_rays(field, o[sel], d[sel], t0[sel], t1[sel], cfg.n_samples,
                                    cfg.background, rng)
                loss = nx.mse(color, Tensor(target[sel]))
            grads = nx.backward(g, loss)
            opt.step(grads, lr=cosine_lr(step, cfg.steps, cfg.lr, cfg.lr_final))
        except NumericError as exc:
            raise TrainingError(f"field training diverged at step {step}: {exc}") from exc
        val = loss.item()
        losses.append(val)
        block.append(val)
        if len(block) == cfg.log_every:
            trace.append(float(np.mean(block)))
            block = []
            if progress is not None:
                progress(step + 1, trace[-1])
    if block:
        trace.append(float(np.mean(block)))
    return FieldTrainResult(field, losses, trace, opt.state)
