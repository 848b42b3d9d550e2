"""Pinhole cameras and ray generation.

Camera frame follows the x-right, y-down, z-forward convention; ``rotation``
maps camera coordinates to world coordinates and ``translation`` is the
camera centre in world units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nerfdiff.errors import ContractError


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 0.1
    far: float = 4.0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.width, self.height = int(self.width), int(self.height)
        R = self.rotation
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-5):
            raise ContractError("camera rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-5:
            raise ContractError("camera rotation must have determinant +1")
        if not (0 < self.near < self.far):
            raise ContractError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if self.width <= 0 or self.height <= 0 or self.fx <= 0 or self.fy <= 0:
            raise ContractError("camera size and focal lengths must be positive")

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy), "cx": float(self.cx), "cy": float(self.cy),
            "width": self.width, "height": self.height,
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
            "near": float(self.near), "far": float(self.far),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"], width=d["width"], height=d["height"],
            rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
            translation=d["translation"], near=d["near"], far=d["far"],
        )

    def moved_to(self, translation) -> "Camera":
        return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                      self.rotation.copy(), np.asarray(translation, dtype=np.float64),
                      self.near, self.far)


def look_at(eye, target, width: int, height: int, focal: float,
            near: float = 0.1, far: float = 4.0, up=(0.0, 0.0, 1.0)) -> Camera:
    """Camera at ``eye`` whose optical axis passes through ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(fwd)
    if norm == 0:
        raise ContractError("eye and target coincide")
    fwd /= norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-6:
        right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd], axis=1)
    return Camera(focal, focal, width / 2.0, height / 2.0, width, height, R, eye, near, far)


def generate_ray(cam: Camera, px: float, py: float) -> tuple[np.ndarray, np.ndarray]:
    """World-space origin and unit direction of the ray through pixel (px, py)."""
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise ContractError(f"pixel ({px}, {py}) outside {cam.width}x{cam.height} image")
    d = np.array([(px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0])
    d = cam.rotation @ (d / np.linalg.norm(d))
    return cam.translation.copy(), d


def generate_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions for every pixel, row-major, shape (H*W, 3)."""
    ys, xs = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
    d = np.stack([(xs + 0.5 - cam.cx) / cam.fx, (ys + 0.5 - cam.cy) / cam.fy,
                  np.ones_like(xs, dtype=np.float64)], axis=-1).reshape(-1, 3)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d = d @ cam.rotation.T
    o = np.broadcast_to(cam.translation, d.shape).copy()
    return o, d


def fibonacci_sphere(n: int, radius: float) -> np.ndarray:
    """``n`` roughly uniform points on a sphere; deterministic."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
