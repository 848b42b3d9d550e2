"""Fixed random convolutional features for distribution metrics."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from nerfdiff.errors import DimensionError
from nerfdiff.rng import stream


def extract_patches(images, size: int = 8, stride: int = 4) -> np.ndarray:
    """All ``size`` x ``size`` patches at ``stride`` from an (N, H, W, C) stack."""
    imgs = np.asarray(images, dtype=np.float32)
    if imgs.ndim == 3:
        imgs = imgs[None]
    if imgs.ndim != 4 or min(imgs.shape[1:3]) < size:
        raise DimensionError(f"cannot take {size}x{size} patches from shape {imgs.shape}")
    win = sliding_window_view(imgs, (size, size), axis=(1, 2))[:, ::stride, ::stride]
    # N, nh, nw, C, size, size -> P, size, size, C
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(-1, size, size, imgs.shape[-1])


class FeatureExtractor:
    """Three 3x3 stride-2 ReLU convolutions (16, 32, 64 filters), then global average pooling.

    Weights are He-normal draws from a seeded stream and never trained, so the
    embedding is a fixed nonlinear feature space shared by all comparisons.
    """

    def __init__(self, seed: int = 0, widths: tuple[int, ...] = (16, 32, 64), in_channels: int = 3):
        rng = stream(seed, "feature-extractor")
        self.seed = seed
        self.weights = []
        self.biases = []
        prev = in_channels
        for c in widths:
            self.weights.append(rng.standard_normal((3 * 3 * prev, c)) * np.sqrt(2.0 / (9 * prev)))
            self.biases.append(rng.standard_normal(c) * 0.1)
            prev = c

    @property
    def dim(self) -> int:
        return self.weights[-1].shape[1]

    def __call__(self, patches, batch: int = 4096) -> np.ndarray:
        x = np.asarray(patches, dtype=np.float64)
        if x.ndim != 4:
            raise DimensionError("features expect an (N, H, W, C) batch")
        return np.concatenate([self._forward(x[s:s + batch]) for s in range(0, x.shape[0], batch)])

    def _forward(self, x: np.ndarray) -> np.ndarray:
        # map [0,1] pixels to zero-centred inputs
        x = x * 2.0 - 1.0
        for w, b in zip(self.weights, self.biases):
            xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
            win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::2, ::2]
            n, ho, wo, c = win.shape[:4]
            cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, 9 * c)
            x = np.maximum(cols @ w + b, 0.0).reshape(n, ho, wo, -1)
        return x.mean(axis=(1, 2))


def image_features(images, extractor: FeatureExtractor, size: int = 8, stride: int = 4) -> np.ndarray:
    return extractor(extract_patches(images, size, stride))
