"""Finite scene models: a prior over scenes and per-configuration likelihood tables."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from nerfdiff.errors import ContractError

MAX_SIZE = 8


@dataclass
class DiscreteSceneModel:
    """``prior[s]`` = P(S=s); ``likelihood[s, c, y]`` = p(y | S=s, c)."""

    prior: np.ndarray
    likelihood: np.ndarray

    def __post_init__(self):
        self.prior = np.asarray(self.prior, dtype=np.float64)
        self.likelihood = np.asarray(self.likelihood, dtype=np.float64)
        if self.prior.ndim != 1 or self.likelihood.ndim != 3:
            raise ContractError("prior must be 1-d and likelihood 3-d [S][C][M]")
        if self.likelihood.shape[0] != self.prior.shape[0]:
            raise ContractError("likelihood and prior disagree on the number of scenes")
        if np.any(self.prior < 0) or np.any(self.likelihood < 0):
            raise ContractError("probabilities must be non-negative")
        if abs(self.prior.sum() - 1.0) > 1e-12:
            raise ContractError(f"prior sums to {self.prior.sum()!r}, not 1")
        sums = self.likelihood.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            s, c = np.argwhere(np.abs(sums - 1.0) > 1e-12)[0]
            raise ContractError(f"likelihood slice (scene {s}, config {c}) sums to {sums[s, c]!r}")

    @property
    def n_scenes(self) -> int:
        return self.likelihood.shape[0]

    @property
    def n_configs(self) -> int:
        return self.likelihood.shape[1]

    @property
    def n_measurements(self) -> int:
        return self.likelihood.shape[2]

    def to_json(self) -> str:
        return json.dumps({"prior": self.prior.tolist(), "likelihood": self.likelihood.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DiscreteSceneModel":
        d = json.loads(text)
        return cls(d["prior"], d["likelihood"])

    def relabel(self, perm) -> "DiscreteSceneModel":
        """Model whose scene ``i`` is this model's scene ``perm[i]``."""
        perm = np.asarray(perm)
        return DiscreteSceneModel(self.prior[perm], self.likelihood[perm])

    def split(self, fractions=None) -> "DiscreteSceneModel":
        """Duplicate every scene into two copies sharing its likelihood.

        Copy ``2s`` gets ``fractions[s]`` of the prior mass, ``2s+1`` the rest.
        """
        f = np.full(self.n_scenes, 0.5) if fractions is None else np.asarray(fractions, dtype=np.float64)
        prior = np.empty(2 * self.n_scenes)
        prior[0::2] = self.prior * f
        prior[1::2] = self.prior * (1 - f)
        prior /= prior.sum()
        return DiscreteSceneModel(prior, np.repeat(self.likelihood, 2, axis=0))


def _normalize(a: np.ndarray, axis: int) -> np.ndarray:
    return a / a.sum(axis=axis, keepdims=True)


def random_model(rng: np.random.Generator, n_scenes: int, n_configs: int, n_measurements: int,
                 concentration: float = 1.0) -> DiscreteSceneModel:
    """Dirichlet-random prior and likelihood rows (full support almost surely)."""
    for k in (n_scenes, n_configs, n_measurements):
        if not 1 <= k <= MAX_SIZE:
            raise ContractError(f"model sizes must lie in [1, {MAX_SIZE}]")
    prior = rng.dirichlet(np.full(n_scenes, concentration))
    lik = rng.dirichlet(np.full(n_measurements, concentration), size=(n_scenes, n_configs))
    # Dirichlet draws can underflow to exact zeros for small concentrations
    lik = _normalize(np.maximum(lik, 1e-6), axis=2)
    prior = _normalize(np.maximum(prior, 1e-6), axis=0)
    return DiscreteSceneModel(prior, lik)


def duplicated_model(base: DiscreteSceneModel, copies) -> DiscreteSceneModel:
    """Repeat scene ``s`` of ``base`` ``copies[s]`` times, splitting its prior mass evenly."""
    copies = np.asarray(copies, dtype=int)
    idx = np.repeat(np.arange(base.n_scenes), copies)
    prior = base.prior[idx] / copies[idx]
    return DiscreteSceneModel(prior / prior.sum(), base.likelihood[idx])


def deterministic_model(outputs, prior=None, n_measurements: int | None = None) -> DiscreteSceneModel:
    """Scenes that emit ``outputs[s][c]`` with probability one."""
    out = np.asarray(outputs, dtype=int)
    n_s, n_c = out.shape
    m = int(out.max()) + 1 if n_measurements is None else n_measurements
    lik = np.zeros((n_s, n_c, m))
    lik[np.arange(n_s)[:, None], np.arange(n_c)[None, :], out] = 1.0
    p = np.full(n_s, 1.0 / n_s) if prior is None else np.asarray(prior, dtype=np.float64)
    return DiscreteSceneModel(p, lik)
