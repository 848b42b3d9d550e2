from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

import nerfdiff.numerics as nx
from nerfdiff.diffusion.denoiser import ConditionalDenoiser, DenoiserArch
from nerfdiff.diffusion.schedule import DiffusionSchedule, forward_noise, make_schedule
from nerfdiff.errors import ContractError, NumericError, TrainingError
from nerfdiff.field.dataset import PosedImage
from nerfdiff.field.train import cosine_lr
from nerfdiff.numerics import Adam, Graph, OptimState, Tensor


@dataclass
class DiffusionConfig:
    T: int = 200
    beta_min: float = 1e-4
    beta_max: float = 0.04  # 0.02 would leave alpha_bar_T = 0.13 at T=200
    steps: int = 5000
    batch: int = 8
    crop: int | None = 32  # train on random crops; None uses full images
    lr: float = 5e-4
    lr_final: float = 5e-5
    flip: bool = True
    ema_decay: float | None = 0.999  # sample from an exponential moving average of the weights
    residual_scale: float | None = 4.0  # diffuse (target - render) * scale; None diffuses the image
    log_every: int = 100
    arch: DenoiserArch = dc_field(default_factory=DenoiserArch)

    def schedule(self) -> DiffusionSchedule:
        return make_schedule(self.T, self.beta_min, self.beta_max)


@dataclass
class DenoiserTrainResult:
    net: ConditionalDenoiser
    schedule: DiffusionSchedule
    losses: list[float]
    trace: list[float]
    state: OptimState
    ema: ConditionalDenoiser | None = None

    @property
    def sampler(self) -> ConditionalDenoiser:
        """The weights to sample with: the moving average when kept."""
        return self.ema if self.ema is not None else self.net


def ema_decay_at(step: int, decay: float) -> float:
    # short warm-up so early averages are not dominated by the initialization
    return min(decay, (1.0 + step) / (10.0 + step))


def _ema_update(ema: ConditionalDenoiser, net: ConditionalDenoiser, d: float) -> None:
    for k, p in net.params.items():
        e = ema.params[k].data
        e *= np.float32(d)
        e += np.float32(1.0 - d) * p.data


def to_signed(img: np.ndarray) -> np.ndarray:
    return (np.asarray(img, dtype=np.float32) * 2.0 - 1.0).astype(np.float32)


def to_unit(img: np.ndarray) -> np.ndarray:
    return np.clip((np.asarray(img, dtype=np.float32) + 1.0) * 0.5, 0.0, 1.0)


def training_loss(net: ConditionalDenoiser, y0: np.ndarray, condition: np.ndarray,
                  sched: DiffusionSchedule, rng: np.random.Generator) -> Tensor:
    """Noise-prediction MSE at uniformly drawn steps; y0 and condition are NHWC in [-1, 1]."""
    y0 = np.asarray(y0, dtype=np.float32)
    condition = np.asarray(condition, dtype=np.float32)
    if y0.shape != condition.shape or y0.ndim != 4:
        raise ContractError(f"target {y0.shape} and condition {condition.shape} must be matching NHWC batches")
    t = rng.integers(1, sched.T + 1, size=y0.shape[0])
    eps = rng.standard_normal(y0.shape).astype(np.float32)
    y_t = forward_noise(y0, t, eps, sched)
    return nx.mse(net(Tensor(y_t), t, Tensor(condition)), Tensor(eps))


def _pixels(im) -> np.ndarray:
    return im.pixels if isinstance(im, PosedImage) else np.asarray(im, dtype=np.float32)


def stack_pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    """(condition, target) image pairs to two signed NHWC arrays."""
    if not pairs:
        raise ContractError("need at least one (render, target) pair")
    cond = np.stack([_pixels(c) for c, _ in pairs])
    tgt = np.stack([_pixels(t) for _, t in pairs])
    if cond.shape != tgt.shape or cond.ndim != 4 or cond.shape[-1] != 3:
        raise ContractError("pairs must share one HxWx3 shape")
    return to_signed(cond), to_signed(tgt)


def _minibatch(cond, tgt, cfg: DiffusionConfig, rng):
    idx = rng.integers(0, cond.shape[0], size=cfg.batch)
    _, h, w, _ = cond.shape
    if cfg.crop is None or cfg.crop >= min(h, w):
        c, y = cond[idx], tgt[idx]
    else:
        k = cfg.crop
        oy = rng.integers(0, h - k + 1, size=cfg.batch)
        ox = rng.integers(0, w - k + 1, size=cfg.batch)
        rows = oy[:, None] + np.arange(k)[None, :]
        cols = ox[:, None] + np.arange(k)[None, :]
        sel = (idx[:, None, None], rows[:, :, None], cols[:, None, :])
        c, y = cond[sel], tgt[sel]
    if cfg.flip:
        flip = rng.random(cfg.batch) < 0.5
        c = np.where(flip[:, None, None, None], c[:, :, ::-1], c)
        y = np.where(flip[:, None, None, None], y[:, :, ::-1], y)
    return np.ascontiguousarray(c), np.ascontiguousarray(y)


def train_denoiser(pairs, cfg: DiffusionConfig, rng: np.random.Generator,
                   init: ConditionalDenoiser | None = None, state: OptimState | None = None,
                   until: int | None = None, progress=None,
                   ema: ConditionalDenoiser | None = None) -> DenoiserTrainResult:
    """Fit eps_theta so that targets are generated conditioned on their renders.

    Resuming works as in field training: pass the previous net, optimizer
    state and moving average; ``until`` stops early without changing the lr
    schedule.
    """
    cond, tgt = stack_pairs(pairs)
    sched = cfg.schedule()
    step_mult = 2 ** (len(cfg.arch.widths) - 1)
    size = cfg.crop if cfg.crop is not None and cfg.crop < min(cond.shape[1:3]) else min(cond.shape[1:3])
    if size % step_mult or cond.shape[1] % step_mult or cond.shape[2] % step_mult:
        raise ContractError(f"image and crop sizes must be multiples of {step_mult}")
    if cfg.residual_scale is not None:
        tgt = ((tgt - cond) * np.float32(cfg.residual_scale)).astype(np.float32)
    if init is not None and init.residual_scale != cfg.residual_scale:
        raise ContractError(f"init net has residual_scale {init.residual_scale}, config has {cfg.residual_scale}")
    net = init if init is not None else ConditionalDenoiser.init(rng, cfg.arch, cfg.T, cfg.residual_scale)
    opt = Adam(net.params, lr=cfg.lr)
    if state is not None:
        opt.state = state
    if cfg.ema_decay is not None and ema is None:
        ema = net.copy()
    elif cfg.ema_decay is None:
        ema = None
    losses: list[float] = []
    trace: list[float] = []
    block: list[float] = []
    for step in range(opt.state.step, cfg.steps if until is None else min(until, cfg.steps)):
        c, y = _minibatch(cond, tgt, cfg, rng)
        try:
            with Graph() as g:
                loss = training_loss(net, y, c, sched, rng)
            grads = nx.backward(g, loss)
            opt.step(grads, lr=cosine_lr(step, cfg.steps, cfg.lr, cfg.lr_final))
        except NumericError as exc:
            raise TrainingError(f"denoiser training diverged at step {step}: {exc}") from exc
        if ema is not None:
            _ema_update(ema, net, ema_decay_at(step, cfg.ema_decay))
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
    return DenoiserTrainResult(net, sched, losses, trace, opt.state, ema)
