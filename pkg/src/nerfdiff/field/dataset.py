"""Posed images and the on-disk dataset layout (PNG files + cameras.json)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from nerfdiff.errors import ContractError
from nerfdiff.field.camera import Camera


@dataclass
class PosedImage:
    camera: Camera
    pixels: np.ndarray  # (H, W, 3) in [0, 1]

    def __post_init__(self):
        px = np.clip(np.asarray(self.pixels, dtype=np.float32), 0.0, 1.0)
        if px.shape != (self.camera.height, self.camera.width, 3):
            raise ContractError(
                f"image shape {px.shape} does not match camera {self.camera.height}x{self.camera.width}")
        self.pixels = px


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str | os.PathLike, pixels: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # explicit compress level keeps the encoded bytes stable
    Image.fromarray(to_uint8(pixels), mode="RGB").save(path, format="PNG", compress_level=6)


def read_png(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def save_dataset(directory: str | os.PathLike, images: list[PosedImage], split: list[str] | None = None,
                 views: list[int] | None = None) -> None:
    """Write PNGs plus cameras.json; ``views`` keeps global view indices in names and metadata."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    views = list(range(len(images))) if views is None else list(views)
    if len(views) != len(images) or (split is not None and len(split) != len(images)):
        raise ContractError("split and views must have one entry per image")
    frames = []
    for i, (v, im) in enumerate(zip(views, images)):
        name = f"view_{v:03d}.png"
        write_png(d / name, im.pixels)
        entry = {"file": name, "view": int(v), **im.camera.to_dict()}
        if split is not None:
            entry["split"] = split[i]
        frames.append(entry)
    with open(d / "cameras.json", "w") as fh:
        json.dump({"frames": frames}, fh, indent=1)


def _frames(directory, split):
    d = Path(directory)
    with open(d / "cameras.json") as fh:
        meta = json.load(fh)
    return [fr for fr in meta["frames"] if split is None or fr.get("split", split) == split]


def load_dataset(directory: str | os.PathLike, split: str | None = None) -> list[PosedImage]:
    d = Path(directory)
    return [PosedImage(Camera.from_dict(fr), read_png(d / fr["file"])) for fr in _frames(d, split)]


def dataset_views(directory: str | os.PathLike, split: str | None = None) -> list[int]:
    """Global view index of each frame ``load_dataset`` returns (position when unrecorded)."""
    return [int(fr.get("view", k)) for k, fr in enumerate(_frames(directory, split))]
