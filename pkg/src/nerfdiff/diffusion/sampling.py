from __future__ import annotations

from typing import Callable

import numpy as np

from nerfdiff.diffusion.denoiser import ConditionalDenoiser
from nerfdiff.diffusion.schedule import DiffusionSchedule
from nerfdiff.diffusion.train import to_signed, to_unit
from nerfdiff.errors import NumericError, SamplingError
from nerfdiff.field.dataset import PosedImage
from nerfdiff.numerics import Tensor


def _ancestral(net, cond: np.ndarray, sched: DiffusionSchedule,
               noise: Callable[[], np.ndarray], clip_denoised: bool = False) -> np.ndarray:
    beta, alpha, abar = sched.beta, sched.alpha, sched.alpha_bar
    abar_prev = np.concatenate([[1.0], abar[:-1]])
    y = noise()
    c_t = Tensor(cond)
    for t in range(sched.T, 0, -1):
        try:
            eps = net(Tensor(y), np.full(cond.shape[0], t), c_t)
        except NumericError as exc:
            raise SamplingError(f"non-finite denoiser output at step {t}: {exc}") from exc
        eps = eps.data if isinstance(eps, Tensor) else np.asarray(eps, dtype=np.float32)
        k = t - 1
        if clip_denoised:
            # same mean written through the implied clean image, which is clamped to [-1, 1]
            x0 = np.clip((y - np.sqrt(1.0 - abar[k]) * eps) / np.sqrt(abar[k]), -1.0, 1.0)
            y = ((np.sqrt(abar_prev[k]) * beta[k] * x0 + np.sqrt(alpha[k]) * (1.0 - abar_prev[k]) * y)
                 / (1.0 - abar[k])).astype(np.float32)
        else:
            coef = beta[k] / np.sqrt(1.0 - abar[k])
            y = ((y - coef * eps) / np.sqrt(alpha[k])).astype(np.float32)
        if t > 1:
            y += np.float32(np.sqrt(beta[t - 1])) * noise()
        if not np.all(np.isfinite(y)):
            raise SamplingError(f"non-finite sample at step {t}")
    scale = getattr(net, "residual_scale", None)
    return y if scale is None else (cond + y / np.float32(scale)).astype(np.float32)


def sample(net, condition: np.ndarray, sched: DiffusionSchedule, rng: np.random.Generator,
           return_signed: bool = False, clip_denoised: bool = False) -> np.ndarray:
    """Ancestral sampling with sigma_t^2 = beta_t, conditioned on a [-1, 1] image.

    ``condition`` is HWC or NHWC; the result has the same shape, remapped to
    [0, 1] and clamped (or left in signed space with ``return_signed``).
    ``net`` is any callable ``net(y_t, t, condition)`` returning the noise
    estimate, so closed-form checks can substitute a fixed predictor.

    With ``clip_denoised`` each step clamps the clean image implied by the
    noise estimate to [-1, 1] before forming the mean; without any clamping
    this is the same update. A net with ``residual_scale`` generates the
    scaled residual, which is added back onto the condition at the end.
    """
    cond = np.asarray(condition, dtype=np.float32)
    single = cond.ndim == 3
    if single:
        cond = cond[None]
    y = _ancestral(net, cond, sched, lambda: rng.standard_normal(cond.shape).astype(np.float32), clip_denoised)
    out = y if return_signed else to_unit(y)
    return out[0] if single else out


def enhance(render: PosedImage, net: ConditionalDenoiser, sched: DiffusionSchedule,
            rng: np.random.Generator, clip_denoised: bool = False) -> PosedImage:
    """One conditional draw given a field rendering; keeps the render's camera."""
    return PosedImage(render.camera, sample(net, to_signed(render.pixels), sched, rng,
                                            clip_denoised=clip_denoised))


def enhance_many(renders: list[PosedImage], net: ConditionalDenoiser, sched: DiffusionSchedule,
                 rngs: list[np.random.Generator], batch: int = 8,
                 clip_denoised: bool = False) -> list[PosedImage]:
    """Enhance several renders, one noise stream per image.

    Images go through the network in batches for speed. Each keeps its own
    generator, so a result equals ``enhance(render, ..., rng)`` for that image.
    """
    out = []
    for s in range(0, len(renders), batch):
        group, gens = renders[s:s + batch], rngs[s:s + batch]
        cond = np.stack([to_signed(r.pixels) for r in group])
        shape = cond.shape[1:]
        y = _ancestral(net, cond, sched,
                       lambda: np.stack([g.standard_normal(shape).astype(np.float32) for g in gens]),
                       clip_denoised)
        out.extend(PosedImage(r.camera, to_unit(img)) for r, img in zip(group, y))
    return out
