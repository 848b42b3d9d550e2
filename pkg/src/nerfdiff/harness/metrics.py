"""Similarity metrics (PSNR, SSIM) and distribution metrics (FID, KID)."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from nerfdiff.errors import DimensionError, SizeError

LUMA = np.array([0.299, 0.587, 0.114])
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _same_shape(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr_from_mse(mse: float) -> float:
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio for unit-range images; +inf when identical."""
    a, b = _same_shape(a, b)
    return psnr_from_mse(float(np.mean((a - b) ** 2)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img @ LUMA if img.ndim == 3 else img


def _filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable valid-mode filtering
    k = g.size
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b, size: int = 11, sigma: float = 1.5) -> np.ndarray:
    a, b = _same_shape(to_gray(a), to_gray(b))
    if min(a.shape) < size:
        raise SizeError(f"SSIM needs images of at least {size}x{size}, got {a.shape}")
    g = gaussian_window(size, sigma)
    mu_a, mu_b = _filter(a, g), _filter(b, g)
    var_a = _filter(a * a, g) - mu_a ** 2
    var_b = _filter(b * b, g) - mu_b ** 2
    cov = _filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    """Mean local SSIM of the luma channel, 11x11 Gaussian window, valid region only."""
    return float(np.mean(ssim_map(a, b)))


def _features(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"{name} must be a (samples, dim) matrix")
    if x.shape[0] < 2:
        raise SizeError(f"{name} needs at least 2 samples")
    return x


def _psd_sqrt(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fid(feats_a, feats_b) -> float:
    """Frechet distance between Gaussians fit to two feature sets.

    tr((S_a S_b)^{1/2}) is evaluated as tr((A S_b A)^{1/2}) with A = S_a^{1/2},
    a symmetric PSD form whose eigenvalues are clamped at zero.
    """
    a, b = _features(feats_a, "feats_a"), _features(feats_b, "feats_b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    mu = a.mean(axis=0) - b.mean(axis=0)
    ca = np.atleast_2d(np.cov(a, rowvar=False))
    cb = np.atleast_2d(np.cov(b, rowvar=False))
    sa = _psd_sqrt(ca)
    m = sa @ cb @ sa
    cross = np.sum(np.sqrt(np.clip(np.linalg.eigvalsh((m + m.T) / 2), 0.0, None)))
    return float(max(mu @ mu + np.trace(ca) + np.trace(cb) - 2.0 * cross, 0.0))


def polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x @ y.T / x.shape[1] + 1.0) ** 3


def kid(feats_a, feats_b) -> float:
    """Unbiased squared MMD with the cubic polynomial kernel."""
    a, b = _features(feats_a, "feats_a"), _features(feats_b, "feats_b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    m, n = a.shape[0], b.shape[0]
    kaa = polynomial_kernel(a, a)
    kbb = polynomial_kernel(b, b)
    kab = polynomial_kernel(a, b)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * kab.mean())
