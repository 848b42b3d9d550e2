from __future__ import annotations

import numpy as np

from nerfdiff.errors import ContractError


def sample_along_ray(near, far, n: int, stratified: bool = False,
                     rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Depths and segment lengths for ``n`` samples in each of ``n`` equal bins.

    ``near``/``far`` may be scalars or arrays of shape (R,). Deterministic mode
    takes bin midpoints; stratified mode draws one uniform depth per bin.
    Segment lengths are ``t[i+1] - t[i]`` with the last one running to ``far``.
    Returns arrays of shape (R, n) (or (n,) for scalar bounds).
    """
    if n < 1:
        raise ContractError("need at least one sample per ray")
    near = np.asarray(near, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    scalar = near.ndim == 0 and far.ndim == 0
    near, far = np.broadcast_arrays(np.atleast_1d(near), np.atleast_1d(far))
    if np.any(far <= near):
        raise ContractError("far must exceed near on every ray")
    width = (far - near)[:, None] / n
    if stratified:
        if rng is None:
            raise ContractError("stratified sampling needs an rng")
        u = rng.random((near.shape[0], n))
    else:
        u = np.full((near.shape[0], n), 0.5)
    t = near[:, None] + (np.arange(n)[None, :] + u) * width
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = far - t[:, -1]
    if scalar:
        return t[0], delta[0]
    return t, delta


def ray_box_bounds(origins: np.ndarray, dirs: np.ndarray, near: float, far: float,
                   lo: float = -1.0, hi: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clip each ray's [near, far] interval to the axis-aligned box [lo, hi]^3.

    Returns per-ray (t_near, t_far, hit) where ``hit`` marks rays whose clipped
    interval is non-empty.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (lo - origins) * inv
        t1 = (hi - origins) * inv
    tmin = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    # rays parallel to a slab: inside the slab -> unbounded, outside -> miss
    par = dirs == 0
    inside = (origins >= lo) & (origins <= hi)
    tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
    t_near = np.maximum(tmin.max(axis=1), near)
    t_far = np.minimum(tmax.min(axis=1), far)
    hit = t_far > t_near + 1e-9
    return t_near, t_far, hit
