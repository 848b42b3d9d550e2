from __future__ import annotations

import numpy as np

from nerfdiff.errors import ContractError


def positional_encode(x, order: int) -> np.ndarray:
    """Frequency encoding ``(x, sin(2^k pi x), cos(2^k pi x)) for k < order``.

    Works on a scalar, a vector, or a batch (..., D); the output's last axis
    has ``D * (1 + 2 * order)`` entries laid out component-major: for each
    input component its raw value followed by its sin/cos pairs.
    """
    if order < 0:
        raise ContractError("encoding order must be >= 0")
    x = np.asarray(x, dtype=np.float32)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    freqs = (2.0 ** np.arange(order, dtype=np.float32)) * np.float32(np.pi)
    ang = x[..., None] * freqs  # (..., D, L)
    parts = np.empty(x.shape + (1 + 2 * order,), dtype=np.float32)
    parts[..., 0] = x
    parts[..., 1::2] = np.sin(ang)
    parts[..., 2::2] = np.cos(ang)
    out = parts.reshape(x.shape[:-1] + (-1,))
    return out if not scalar else out.reshape(-1)
