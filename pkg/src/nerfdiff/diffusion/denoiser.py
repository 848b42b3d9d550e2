"""Three-level convolutional encoder-decoder predicting the injected noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import nerfdiff.numerics as nx
from nerfdiff.errors import ContractError, DimensionError
from nerfdiff.numerics import Tensor


@dataclass(frozen=True)
class DenoiserArch:
    widths: tuple[int, ...] = (32, 64, 128)
    time_dim: int = 32
    image_channels: int = 3

    @property
    def in_channels(self) -> int:
        # noisy image, condition image, broadcast t/T
        return 2 * self.image_channels + 1


def time_embedding(t: np.ndarray, dim: int, T: int) -> np.ndarray:
    """Sinusoidal features of the step index, (N, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(float(T)) * np.arange(half) / half)
    arg = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1).astype(np.float32)


def _layer_shapes(arch: DenoiserArch) -> dict[str, tuple[int, ...]]:
    w = arch.widths
    shapes: dict[str, tuple[int, ...]] = {"temb0": (arch.time_dim, 2 * arch.time_dim)}
    prev = arch.in_channels
    for i, c in enumerate(w):
        shapes[f"down{i}a"] = (3, 3, prev, c)
        shapes[f"down{i}b"] = (3, 3, c, c)
        shapes[f"tdown{i}"] = (2 * arch.time_dim, c)
        prev = c
    for i in reversed(range(len(w) - 1)):
        shapes[f"up{i}a"] = (3, 3, prev + w[i], w[i])
        shapes[f"up{i}b"] = (3, 3, w[i], w[i])
        shapes[f"tup{i}"] = (2 * arch.time_dim, w[i])
        prev = w[i]
    shapes["out"] = (3, 3, prev, arch.image_channels)
    return shapes


class ConditionalDenoiser:
    """eps_theta(y_t, t, condition) on NHWC batches in [-1, 1].

    Each level runs two 3x3 ReLU convolutions with a projected time
    embedding added after the first; levels are joined by 2x average
    pooling going down and nearest upsampling plus skip concatenation going
    up. The output convolution starts at zero, so a fresh net predicts 0.

    With ``residual_scale`` set, the diffused variable is the scaled
    difference ``(target - condition) * residual_scale`` rather than the
    image itself; samplers undo the mapping.
    """

    def __init__(self, params: dict[str, Tensor], arch: DenoiserArch = DenoiserArch(), T: int = 200,
                 residual_scale: float | None = None):
        self.params = params
        self.arch = arch
        self.T = T
        if residual_scale is not None and not residual_scale > 0:
            raise ContractError("residual_scale must be positive")
        self.residual_scale = None if residual_scale is None else float(residual_scale)
        expected = _layer_shapes(arch)
        for name, shape in expected.items():
            for suffix in (".w", ".b"):
                if name + suffix not in params:
                    raise ContractError(f"missing denoiser parameter '{name}{suffix}'")
            if params[name + ".w"].shape != shape:
                raise ContractError(f"parameter '{name}.w' has shape {params[name + '.w'].shape}, expected {shape}")

    @classmethod
    def init(cls, rng: np.random.Generator, arch: DenoiserArch = DenoiserArch(), T: int = 200,
             residual_scale: float | None = None) -> "ConditionalDenoiser":
        params = {}
        for name, shape in _layer_shapes(arch).items():
            fan_in = int(np.prod(shape[:-1]))
            scale = 0.0 if name == "out" else np.sqrt(2.0 / fan_in)
            params[f"{name}.w"] = Tensor(rng.standard_normal(shape) * scale, requires_grad=True, name=f"{name}.w")
            params[f"{name}.b"] = Tensor(np.zeros(shape[-1]), requires_grad=True, name=f"{name}.b")
        return cls(params, arch, T, residual_scale)

    def copy(self) -> "ConditionalDenoiser":
        return ConditionalDenoiser({k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k)
                                    for k, v in self.params.items()}, self.arch, self.T, self.residual_scale)

    @property
    def levels(self) -> int:
        return len(self.arch.widths)

    def __call__(self, y_t, t, condition) -> Tensor:
        y_t, condition = nx.as_tensor(y_t), nx.as_tensor(condition)
        if y_t.ndim != 4 or y_t.shape != condition.shape or y_t.shape[3] != self.arch.image_channels:
            raise DimensionError(f"noisy image {y_t.shape} and condition {condition.shape} must be matching NHWC")
        n, h, w, _ = y_t.shape
        step = 2 ** (self.levels - 1)
        if h % step or w % step:
            raise DimensionError(f"spatial dims must be multiples of {step}, got {h}x{w}")
        t = np.broadcast_to(np.asarray(t), (n,))
        p = self.params
        tmap = Tensor(np.broadcast_to((t / self.T).astype(np.float32)[:, None, None, None], (n, h, w, 1)))
        x = nx.concat([y_t, condition, tmap], axis=3)
        emb = nx.relu(nx.linear(Tensor(time_embedding(t, self.arch.time_dim, self.T)), p["temb0.w"], p["temb0.b"]))

        def block(x, name, tname):
            x = nx.relu(nx.conv2d(x, p[name + "a.w"], p[name + "a.b"]))
            x = nx.add_channel(x, nx.linear(emb, p[tname + ".w"], p[tname + ".b"]))
            return nx.relu(nx.conv2d(x, p[name + "b.w"], p[name + "b.b"]))

        skips = []
        for i in range(self.levels):
            if i:
                x = nx.avg_pool2(x)
            x = block(x, f"down{i}", f"tdown{i}")
            skips.append(x)
        for i in reversed(range(self.levels - 1)):
            x = nx.concat([nx.upsample2(x), skips[i]], axis=3)
            x = block(x, f"up{i}", f"tup{i}")
        return nx.conv2d(x, p["out.w"], p["out.b"])

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {k: v.data for k, v in self.params.items()}
        out["arch"] = np.array([*self.arch.widths, self.arch.time_dim, self.arch.image_channels], dtype=np.float32)
        if self.residual_scale is not None:
            out["residual_scale"] = np.array([self.residual_scale], dtype=np.float32)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], T: int) -> "ConditionalDenoiser":
        a = [int(v) for v in arrays["arch"]]
        arch = DenoiserArch(tuple(a[:-2]), a[-2], a[-1])
        params = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in arrays.items()
                  if k not in ("arch", "beta", "residual_scale") and not k.startswith("adam.")}
        scale = float(arrays["residual_scale"][0]) if "residual_scale" in arrays else None
        return cls(params, arch, T, scale)
