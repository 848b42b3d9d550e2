from __future__ import annotations

import numpy as np

from nerfdiff.errors import NumericError
from nerfdiff.field.camera import Camera, generate_rays
from nerfdiff.field.composite import composite_op
from nerfdiff.field.dataset import PosedImage
from nerfdiff.field.model import RadianceField
from nerfdiff.field.sampling import ray_box_bounds, sample_along_ray
from nerfdiff.numerics import Tensor, reshape

WHITE = (1.0, 1.0, 1.0)


def ray_bounds(origins, dirs, near: float, far: float, clip: float | None):
    """Per-ray sampling interval; ``clip`` bounds it to the cube [-clip, clip]^3."""
    n = origins.shape[0]
    if clip is None:
        return np.full(n, near), np.full(n, far), np.ones(n, dtype=bool)
    return ray_box_bounds(origins, dirs, near, far, -clip, clip)


def render_rays(field: RadianceField, origins, dirs, t_near, t_far, n_samples: int,
                background=WHITE, rng: np.random.Generator | None = None) -> Tensor:
    """Colors (R, 3) for rays that all have a non-empty interval."""
    t, delta = sample_along_ray(t_near, t_far, n_samples, stratified=rng is not None, rng=rng)
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    r, s = t.shape
    view = np.broadcast_to(dirs[:, None, :], (r, s, 3)).reshape(-1, 3)
    sigma, rgb = field.query(pts.reshape(-1, 3), view)
    return composite_op(reshape(sigma, (r, s)), reshape(rgb, (r, s, 3)),
                        delta.astype(np.float32), background)


def render_image(field: RadianceField, cam: Camera, n_samples: int = 64,
                 rng: np.random.Generator | None = None, background=WHITE,
                 clip: float | None = 1.0, chunk: int = 2048) -> PosedImage:
    """Render every pixel of ``cam``; deterministic bin midpoints unless ``rng`` is given."""
    o, d = generate_rays(cam)
    t0, t1, hit = ray_bounds(o, d, cam.near, cam.far, clip)
    out = np.tile(np.asarray(background, dtype=np.float64), (o.shape[0], 1))
    idx = np.flatnonzero(hit)
    for start in range(0, idx.size, chunk):
        sel = idx[start:start + chunk]
        try:
            col = render_rays(field, o[sel], d[sel], t0[sel], t1[sel], n_samples, background, rng)
        except NumericError as exc:
            ys, xs = np.divmod(sel, cam.width)
            raise NumericError(
                f"{exc} while rendering pixels (x, y) from ({xs[0]}, {ys[0]}) to ({xs[-1]}, {ys[-1]})"
            ) from exc
        out[sel] = col.data
    return PosedImage(cam, out.reshape(cam.height, cam.width, 3))
