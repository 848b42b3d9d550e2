"""Exponential-transmittance volume compositing.

For samples with density sigma_i and segment length delta_i::

    T_i = exp(-sum_{j<i} sigma_j delta_j)
    w_i = T_i (1 - exp(-sigma_i delta_i))
    color = sum_i w_i c_i + T_final * background
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nerfdiff.errors import ContractError
from nerfdiff.numerics import DTYPE, Tensor, custom


@dataclass
class RaySampleSet:
    """Per-sample quantities for a batch of R rays with S samples each."""

    positions: np.ndarray  # (R, S, 3)
    deltas: np.ndarray  # (R, S)
    sigma: np.ndarray  # (R, S)
    rgb: np.ndarray  # (R, S, 3)
    transmittance: np.ndarray | None = None  # (R, S)
    weights: np.ndarray | None = None  # (R, S)
    final_transmittance: np.ndarray | None = None  # (R,)


def _weights(sigma: np.ndarray, delta: np.ndarray):
    tau = (sigma.astype(np.float64) * delta)
    cum = np.cumsum(tau, axis=-1)
    T = np.exp(-(cum - tau))
    alpha = -np.expm1(-tau)
    return T, T * alpha, np.exp(-cum[..., -1])


def composite(samples: RaySampleSet, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Composite every ray to a color (R, 3); fills T, w and T_final on ``samples``."""
    sigma, delta = np.asarray(samples.sigma), np.asarray(samples.deltas)
    if np.any(sigma < 0) or np.any(delta < 0):
        raise ContractError("densities and segment lengths must be non-negative")
    T, w, T_f = _weights(sigma, delta)
    bg = np.asarray(background, dtype=np.float64)
    color = np.einsum("rs,rsc->rc", w, samples.rgb.astype(np.float64)) + T_f[:, None] * bg
    samples.transmittance = T
    samples.weights = w
    samples.final_transmittance = T_f
    return color


def composite_op(sigma: Tensor, rgb: Tensor, delta: np.ndarray, background) -> Tensor:
    """Differentiable compositing of (R, S) densities and (R, S, 3) radiance.

    The backward pass is analytic: with a_k = sigma_k delta_k,
    d color / d a_k = T_{k+1} c_k - (sum_{i>k} w_i c_i + T_final bg).
    """
    s, c = sigma.data, rgb.data
    if np.any(s < 0) or np.any(delta < 0):
        raise ContractError("densities and segment lengths must be non-negative")
    T, w, T_f = _weights(s, delta)
    bg = np.asarray(background, dtype=np.float64)
    wc = w[..., None] * c
    color = wc.sum(axis=1) + T_f[:, None] * bg

    def bw(g):
        g = g.astype(np.float64)
        after = np.cumsum(wc[:, ::-1], axis=1)[:, ::-1] - wc  # sum over i > k
        tail = after + (T_f[:, None] * bg)[:, None, :]
        T_next = T * np.exp(-s * delta)
        da = np.einsum("rc,rsc->rs", g, T_next[..., None] * c - tail)
        return (da * delta).astype(DTYPE), (g[:, None, :] * w[..., None]).astype(DTYPE)

    return custom("composite", color, (sigma, rgb), bw)
