"""Bias-corrected adaptive-moment (Adam) optimizer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nerfdiff.errors import ContractError, OptimizerError
from nerfdiff.numerics.tensor import DTYPE, Tensor


@dataclass
class OptimState:
    """Per-parameter first/second moment accumulators plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def to_arrays(self, prefix: str = "adam") -> dict[str, np.ndarray]:
        out = {f"{prefix}.step": np.array([self.step], dtype=np.float32)}
        for k in self.m:
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], prefix: str = "adam") -> "OptimState":
        state = cls(step=int(arrays[f"{prefix}.step"][0]))
        for key, arr in arrays.items():
            if key.startswith(f"{prefix}.m."):
                state.m[key[len(prefix) + 3:]] = arr.astype(DTYPE)
            elif key.startswith(f"{prefix}.v."):
                state.v[key[len(prefix) + 3:]] = arr.astype(DTYPE)
        return state


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, Tensor], OptimState]:
    """Apply one Adam update in place and return ``(params, state)``.

    Parameters without an entry in ``grads`` are treated as having zero
    gradient, so their moments still decay.
    """
    if state.step < 0:
        raise ContractError("optimizer step counter must be non-negative")
    for name, g in grads.items():
        if name not in params:
            raise ContractError(f"gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise ContractError(f"gradient for '{name}' has shape {g.shape}, expected {params[name].shape}")
        if not math.isfinite(float(g.sum(dtype=np.float64))):
            raise OptimizerError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape, dtype=DTYPE)
            state.v[name] = np.zeros(p.shape, dtype=DTYPE)
        m, v = state.m[name], state.v[name]
        if g is None:
            m *= beta1
            v *= beta2
        else:
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        p.data -= update.astype(DTYPE)
    return params, state


class Adam:
    """Stateful wrapper around :func:`adam_step` for a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = OptimState()

    def step(self, grads: dict[Tensor, np.ndarray], lr: float | None = None) -> None:
        by_name = {}
        for name, p in self.params.items():
            g = grads.get(p)
            if g is not None:
                by_name[name] = g
        adam_step(self.params, by_name, self.state, self.lr if lr is None else lr,
                  self.beta1, self.beta2, self.eps)
