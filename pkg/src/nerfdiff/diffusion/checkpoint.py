from __future__ import annotations

from typing import NamedTuple

import numpy as np

from nerfdiff.diffusion.denoiser import ConditionalDenoiser
from nerfdiff.diffusion.schedule import DiffusionSchedule
from nerfdiff.numerics import OptimState, Tensor, load_arrays, save_arrays


class DenoiserCheckpoint(NamedTuple):
    net: ConditionalDenoiser
    schedule: DiffusionSchedule
    state: OptimState | None
    ema: ConditionalDenoiser | None

    @property
    def sampler(self) -> ConditionalDenoiser:
        return self.ema if self.ema is not None else self.net


def save_denoiser(path, net: ConditionalDenoiser, sched: DiffusionSchedule,
                  state: OptimState | None = None, ema: ConditionalDenoiser | None = None) -> None:
    arrays = dict(net.to_arrays())
    arrays["beta"] = sched.beta.astype(np.float32)
    if state is not None:
        arrays.update(state.to_arrays())
    if ema is not None:
        arrays.update({f"ema.{k}": v.data for k, v in ema.params.items()})
    save_arrays(path, arrays)


def load_denoiser(path) -> DenoiserCheckpoint:
    arrays = load_arrays(path)
    sched = DiffusionSchedule(arrays["beta"].astype(np.float64))
    state = OptimState.from_arrays(arrays) if any(k.startswith("adam.") for k in arrays) else None
    plain = {k: v for k, v in arrays.items() if not k.startswith("ema.")}
    net = ConditionalDenoiser.from_arrays(plain, sched.T)
    ema = None
    if any(k.startswith("ema.") for k in arrays):
        ema = ConditionalDenoiser({k[4:]: Tensor(v.copy(), name=k[4:]) for k, v in arrays.items()
                                   if k.startswith("ema.")}, net.arch, sched.T, net.residual_scale)
    return DenoiserCheckpoint(net, sched, state, ema)
