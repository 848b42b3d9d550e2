"""Density + view-dependent radiance MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import nerfdiff.numerics as nx
from nerfdiff.errors import ContractError
from nerfdiff.field.encoding import positional_encode
from nerfdiff.numerics import Tensor


@dataclass(frozen=True)
class FieldArch:
    pos_order: int = 6
    dir_order: int = 4
    width: int = 128
    depth: int = 4
    color_width: int = 64


class RadianceField:
    """Named float32 parameters plus the forward query.

    Trunk: ``depth`` ReLU layers on the encoded position. Density is a linear
    head on the trunk with softplus. Radiance concatenates the trunk features
    with the encoded view direction, applies one ReLU layer and a sigmoid.
    """

    def __init__(self, params: dict[str, Tensor], arch: FieldArch = FieldArch()):
        self.params = params
        self.arch = arch
        self._check()

    @classmethod
    def init(cls, rng: np.random.Generator, arch: FieldArch = FieldArch()) -> "RadianceField":
        pin = 3 * (1 + 2 * arch.pos_order)
        din = 3 * (1 + 2 * arch.dir_order)
        shapes = {}
        prev = pin
        for i in range(arch.depth):
            shapes[f"trunk{i}"] = (prev, arch.width)
            prev = arch.width
        shapes["density"] = (arch.width, 1)
        shapes["color0"] = (arch.width + din, arch.color_width)
        shapes["color1"] = (arch.color_width, 3)
        params = {}
        for name, (fan_in, fan_out) in shapes.items():
            gain = np.sqrt(2.0) if name.startswith("trunk") or name == "color0" else 1.0
            w = rng.standard_normal((fan_in, fan_out)) * (gain / np.sqrt(fan_in))
            params[f"{name}.w"] = Tensor(w, requires_grad=True, name=f"{name}.w")
            params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b")
        return cls(params, arch)

    @classmethod
    def zeros(cls, arch: FieldArch = FieldArch()) -> "RadianceField":
        f = cls.init(np.random.default_rng(0), arch)
        for p in f.params.values():
            p.data[...] = 0.0
        return f

    def _check(self) -> None:
        a = self.arch
        prev = 3 * (1 + 2 * a.pos_order)
        for i in range(a.depth):
            w = self.params[f"trunk{i}.w"]
            if w.shape[0] != prev:
                raise ContractError(f"trunk{i} expects {w.shape[0]} inputs, chain provides {prev}")
            prev = w.shape[1]
        if self.params["color0.w"].shape[0] != prev + 3 * (1 + 2 * a.dir_order):
            raise ContractError("color branch input width does not chain")
        for name, p in self.params.items():
            if not np.all(np.isfinite(p.data)):
                raise ContractError(f"parameter '{name}' has non-finite entries")

    def query(self, points: np.ndarray, dirs: np.ndarray) -> tuple[Tensor, Tensor]:
        """Density (P,) and radiance (P, 3) at world points with unit view directions."""
        p = self.params
        h = Tensor(positional_encode(points, self.arch.pos_order))
        for i in range(self.arch.depth):
            h = nx.relu(nx.linear(h, p[f"trunk{i}.w"], p[f"trunk{i}.b"]))
        raw_sigma = nx.linear(h, p["density.w"], p["density.b"])
        sigma = nx.softplus(nx.reshape(raw_sigma, (-1,)))
        d = Tensor(positional_encode(dirs, self.arch.dir_order))
        c = nx.relu(nx.linear(nx.concat([h, d], axis=1), p["color0.w"], p["color0.b"]))
        rgb = nx.sigmoid(nx.linear(c, p["color1.w"], p["color1.b"]))
        return sigma, rgb

    def to_arrays(self) -> dict[str, np.ndarray]:
        a = self.arch
        out = {k: v.data for k, v in self.params.items()}
        out["arch"] = np.array([a.pos_order, a.dir_order, a.width, a.depth, a.color_width],
                               dtype=np.float32)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "RadianceField":
        a = [int(v) for v in arrays["arch"]]
        arch = FieldArch(*a)
        params = {k: Tensor(v.copy(), requires_grad=True, name=k)
                  for k, v in arrays.items() if k != "arch" and not k.startswith("adam.")}
        return cls(params, arch)
