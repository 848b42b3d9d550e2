"""Linear-variance noising schedule and the closed-form forward process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nerfdiff.errors import ContractError


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step variances ``beta[t-1]`` for t = 1..T, with derived products (float64)."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ContractError("beta must be a non-empty 1-d array")
        if np.any(b <= 0) or np.any(b >= 1):
            raise ContractError("every beta must lie in (0, 1)")
        if np.any(np.diff(b) < 0):
            raise ContractError("beta must be non-decreasing")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    @property
    def T(self) -> int:
        return self.beta.size

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)

    def check_t(self, t) -> np.ndarray:
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer) or np.any(t < 1) or np.any(t > self.T):
            raise ContractError(f"diffusion step must be an integer in [1, {self.T}]")
        return t


def make_schedule(T: int = 200, beta_min: float = 1e-4, beta_max: float = 0.04) -> DiffusionSchedule:
    if T < 1:
        raise ContractError("T must be at least 1")
    if not 0 < beta_min <= beta_max < 1:
        raise ContractError("need 0 < beta_min <= beta_max < 1")
    # betas are rounded to float32 so checkpoints (float32 payloads) reload the exact schedule
    return DiffusionSchedule(np.linspace(beta_min, beta_max, T).astype(np.float32).astype(np.float64))


def forward_noise(y0: np.ndarray, t, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """y_t = sqrt(abar_t) y0 + sqrt(1 - abar_t) eps.

    ``t`` is a scalar or one step per leading (batch) entry of ``y0``.
    """
    y0 = np.asarray(y0)
    eps = np.asarray(eps)
    if y0.shape != eps.shape:
        raise ContractError(f"noise shape {eps.shape} differs from image shape {y0.shape}")
    t = sched.check_t(t)
    ab = sched.alpha_bar[t - 1]
    if ab.ndim:
        ab = ab.reshape(ab.shape + (1,) * (y0.ndim - ab.ndim))
    out = np.sqrt(ab) * y0 + np.sqrt(1.0 - ab) * eps
    return out.astype(np.result_type(y0.dtype, np.float32), copy=False)
