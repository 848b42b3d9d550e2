"""Exact computations on finite scene models.

Everything here is brute-force enumeration in float64; instance sizes are
small enough that exhaustive evaluation is the ground truth.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from nerfdiff.errors import ConditioningError, ContractError, PreconditionError, SizeError
from nerfdiff.scene_calculus.model import DiscreteSceneModel

TOL = 1e-10
ROW_TOL = 1e-12
MAX_JOINT_ENTRIES = 8 ** 8

ObservationSequence = Sequence[tuple[int, int]]  # ordered (config, measurement) pairs


@dataclass(frozen=True)
class StatisticMap:
    """A function of the scene, stored as a cell label per scene.

    Labels are canonical: cells are numbered in order of first appearance.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        seen: dict[int, int] = {}
        canon = tuple(seen.setdefault(int(v), len(seen)) for v in self.labels)
        object.__setattr__(self, "labels", canon)

    @classmethod
    def identity(cls, n: int) -> "StatisticMap":
        return cls(tuple(range(n)))

    @classmethod
    def from_cells(cls, cells: Sequence[Sequence[int]], n: int | None = None) -> "StatisticMap":
        n = sum(len(c) for c in cells) if n is None else n
        labels = [-1] * n
        for k, cell in enumerate(cells):
            if not cell:
                raise ContractError("cells must be non-empty")
            for s in cell:
                if labels[s] != -1:
                    raise ContractError(f"scene {s} assigned to two cells")
                labels[s] = k
        if -1 in labels:
            raise ContractError(f"scene {labels.index(-1)} is not in any cell")
        return cls(tuple(labels))

    @property
    def n_cells(self) -> int:
        return max(self.labels) + 1 if self.labels else 0

    def cells(self) -> list[tuple[int, ...]]:
        out: list[list[int]] = [[] for _ in range(self.n_cells)]
        for s, k in enumerate(self.labels):
            out[k].append(s)
        return [tuple(c) for c in out]

    def factors_through(self, finer: "StatisticMap") -> bool:
        """True iff this map is a function of ``finer`` (each finer cell maps to one cell here)."""
        image: dict[int, int] = {}
        for mine, theirs in zip(self.labels, finer.labels):
            if image.setdefault(theirs, mine) != mine:
                return False
        return True


def _check_configs(model: DiscreteSceneModel, configs: Sequence[int]) -> None:
    for c in configs:
        if not 0 <= c < model.n_configs:
            raise ContractError(f"config {c} out of range [0, {model.n_configs})")


def _mixture(weights: np.ndarray, lik: np.ndarray, configs: Sequence[int]) -> np.ndarray:
    out = weights.copy()
    for c in configs:
        out = out[..., None] * lik[(slice(None),) + (None,) * (out.ndim - 1) + (c, slice(None))]
    return out.sum(axis=0)


def joint(model: DiscreteSceneModel, configs: Sequence[int] | int, n: int | None = None) -> np.ndarray:
    """p(y_1..y_n) for measurements taken at ``configs``: sum_S P(S) prod_i p(y_i|S,c_i).

    ``configs`` may be a single config repeated ``n`` times. The result has
    one axis of length |M| per measurement.
    """
    if isinstance(configs, (int, np.integer)):
        if n is None:
            raise ContractError("pass n when giving a single config")
        configs = [int(configs)] * n
    configs = list(configs)
    if not 1 <= len(configs) <= 8:
        raise SizeError("joint enumeration supports 1 to 8 measurements")
    if model.n_measurements ** len(configs) > MAX_JOINT_ENTRIES:
        raise SizeError(f"|M|^n = {model.n_measurements}^{len(configs)} is too large to enumerate")
    _check_configs(model, configs)
    return _mixture(model.prior, model.likelihood, configs)


def sequence_probability(model: DiscreteSceneModel, obs: ObservationSequence) -> float:
    """Joint probability of an observed (config, measurement) sequence."""
    w = model.prior.copy()
    for c, y in obs:
        w = w * model.likelihood[:, c, y]
    return float(w.sum())


def posterior(model: DiscreteSceneModel, obs: ObservationSequence) -> np.ndarray:
    _check_configs(model, [c for c, _ in obs])
    w = model.prior.copy()
    for c, y in obs:
        if not 0 <= y < model.n_measurements:
            raise ContractError(f"measurement {y} out of range")
        w = w * model.likelihood[:, c, y]
    total = w.sum()
    if total <= 0:
        raise ConditioningError("observation sequence has probability zero under the model")
    return w / total


def predictive(model: DiscreteSceneModel, obs: ObservationSequence, c_next: int) -> np.ndarray:
    """p(y | observations, c_next) as a posterior-weighted mixture of presentations."""
    _check_configs(model, [c_next])
    return posterior(model, obs) @ model.likelihood[:, c_next, :]


def _mutual_information(p: np.ndarray) -> float:
    p1 = p.sum(axis=1, keepdims=True)
    p2 = p.sum(axis=0, keepdims=True)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / (p1 * p2)[mask])))


def conditional_mutual_information(model: DiscreteSceneModel, candidate: StatisticMap | None,
                                   c1: int, c2: int) -> float:
    """I(y_1; y_2 | T(S)) for one measurement at ``c1`` and one at ``c2``."""
    candidate = StatisticMap.identity(model.n_scenes) if candidate is None else candidate
    total = 0.0
    for cell in candidate.cells():
        idx = list(cell)
        mass = model.prior[idx].sum()
        if mass <= 0:
            continue
        pair = _mixture(model.prior[idx] / mass, model.likelihood[idx], [c1, c2])
        total += mass * _mutual_information(pair)
    return total


def is_scene(model: DiscreteSceneModel, candidate: StatisticMap | None = None) -> bool:
    """Does conditioning on ``candidate`` (default: S itself) make measurements independent?

    Checks every pair of configurations, including a config with itself.
    """
    if candidate is not None and len(candidate.labels) != model.n_scenes:
        raise ContractError("statistic map does not cover the model's scenes")
    for c1 in range(model.n_configs):
        for c2 in range(c1, model.n_configs):
            if conditional_mutual_information(model, candidate, c1, c2) >= TOL:
                return False
    return True


def is_exchangeable(table: np.ndarray, tol: float = TOL) -> bool:
    """Is a joint table invariant under every permutation of its axes?"""
    table = np.asarray(table)
    for perm in itertools.permutations(range(table.ndim)):
        if np.max(np.abs(table - table.transpose(perm))) >= tol:
            return False
    return True


def exchangeability_check(model: DiscreteSceneModel, n: int, config: int) -> bool:
    if n > 6:
        raise SizeError("exchangeability checks enumerate n! permutations; n <= 6")
    return is_exchangeable(joint(model, config, n))


def is_sufficient(model: DiscreteSceneModel, stat: StatisticMap) -> bool:
    """Do all scenes sharing a cell have identical presentations?"""
    for cell in stat.cells():
        rows = model.likelihood[list(cell)]
        if np.max(np.abs(rows - rows[0])) > ROW_TOL:
            return False
    return True


def check_full_support(model: DiscreteSceneModel) -> None:
    """Every scene must give every (config, measurement) positive likelihood."""
    bad = np.argwhere(model.likelihood <= 0)
    if bad.size:
        s, c, y = (int(v) for v in bad[0])
        raise PreconditionError(
            f"posterior support varies with the measurement: p(y={y} | S={s}, c={c}) = 0")


def likelihood_ratio_profile(model: DiscreteSceneModel, ref: tuple[int, int] = (0, 0)) -> np.ndarray:
    """L(S, (c, y)) = p(S|y,c) / p(S|y0,c0), flattened over (c, y); one row per scene.

    The prior and the evidence terms cancel up to factors that do not depend
    on S, so rows can be compared directly from the likelihood tables.
    """
    check_full_support(model)
    lik = model.likelihood.reshape(model.n_scenes, -1)
    evidence = (model.prior @ lik)  # p(y | c) per column
    post_ratio = lik / evidence
    c0, y0 = ref
    return post_ratio / post_ratio[:, [c0 * model.n_measurements + y0]]


def _same_profile(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.abs(a - b) <= TOL * np.maximum(np.abs(a), np.abs(b))))


def minimal_sufficient(model: DiscreteSceneModel) -> StatisticMap:
    """Partition scenes by equality of their likelihood-ratio profiles."""
    prof = likelihood_ratio_profile(model)
    reps: list[int] = []
    labels = []
    for s in range(model.n_scenes):
        for k, r in enumerate(reps):
            if _same_profile(prof[s], prof[r]):
                labels.append(k)
                break
        else:
            reps.append(s)
            labels.append(len(reps) - 1)
    return StatisticMap(tuple(labels))


def equivalence_class(model: DiscreteSceneModel, s: int) -> set[int]:
    """Scenes whose presentation equals scene ``s``'s for every configuration."""
    diff = np.abs(model.likelihood - model.likelihood[s]).reshape(model.n_scenes, -1).max(axis=1)
    return {int(i) for i in np.flatnonzero(diff <= ROW_TOL)}


def set_partitions(n: int) -> Iterator[StatisticMap]:
    """All partitions of ``range(n)`` as restricted-growth label strings."""
    if n == 0:
        yield StatisticMap(())
        return

    def grow(prefix: list[int], top: int):
        if len(prefix) == n:
            yield StatisticMap(tuple(prefix))
            return
        for k in range(top + 2):
            yield from grow(prefix + [k], max(top, k))

    yield from grow([0], 0)


def joints_match(a: DiscreteSceneModel, b: DiscreteSceneModel, max_len: int = 3, tol: float = TOL) -> bool:
    """Compare joints over every config sequence of length up to ``max_len``."""
    if (a.n_configs, a.n_measurements) != (b.n_configs, b.n_measurements):
        return False
    for n in range(1, max_len + 1):
        for seq in itertools.product(range(a.n_configs), repeat=n):
            if np.max(np.abs(joint(a, seq) - joint(b, seq))) > tol:
                return False
    return True


class UniquenessResult(NamedTuple):
    holds: bool
    bijection: dict[int, int]  # minimal cell of A -> minimal cell of B
    counterexample: tuple[str, int] | None  # ("A" | "B", cell) without a partner


def _cell_tables(model: DiscreteSceneModel, stat: StatisticMap) -> list[np.ndarray]:
    return [model.likelihood[cell[0]] for cell in stat.cells()]


def verify_strong_uniqueness(a: DiscreteSceneModel, b: DiscreteSceneModel,
                             max_len: int = 3) -> UniquenessResult:
    """Match the minimal sufficient cells of two models of the same joint.

    Two cells correspond when their presentations coincide; the theorem holds
    on this instance iff that correspondence is a bijection.
    """
    if not joints_match(a, b, max_len):
        raise PreconditionError("models do not induce the same joint distribution")
    ta = _cell_tables(a, minimal_sufficient(a))
    tb = _cell_tables(b, minimal_sufficient(b))
    mapping: dict[int, int] = {}
    used: set[int] = set()
    for i, t in enumerate(ta):
        match = [j for j, u in enumerate(tb) if np.max(np.abs(t - u)) <= ROW_TOL]
        if len(match) != 1 or match[0] in used:
            return UniquenessResult(False, mapping, ("A", i))
        mapping[i] = match[0]
        used.add(match[0])
    missing = sorted(set(range(len(tb))) - used)
    if missing:
        return UniquenessResult(False, mapping, ("B", missing[0]))
    return UniquenessResult(True, mapping, None)


def coupled_model(a: DiscreteSceneModel, b: DiscreteSceneModel) -> tuple[DiscreteSceneModel, list[tuple[int, int]]]:
    """The tuple scene (S, S'): pairs of scenes that share a presentation.

    P(s, s') = P_A(s) P_B(s') / m, where m is the prior mass of that shared
    presentation (equal in both models when their joints agree) and the pair
    emits measurements through the common presentation. Returns the model and
    the (s, s') pair behind each of its scenes.
    """
    pairs, prior, rows = [], [], []
    for s in range(a.n_scenes):
        cls_a = equivalence_class(a, s)
        mass = a.prior[list(cls_a)].sum()
        for t in range(b.n_scenes):
            if np.max(np.abs(a.likelihood[s] - b.likelihood[t])) <= ROW_TOL:
                pairs.append((s, t))
                prior.append(a.prior[s] * b.prior[t] / mass if mass > 0 else 0.0)
                rows.append(a.likelihood[s])
    prior = np.asarray(prior)
    if not pairs or prior.sum() <= 0:
        raise PreconditionError("the two models share no presentation")
    return DiscreteSceneModel(prior / prior.sum(), np.asarray(rows)), pairs


def coupled_bijection(a: DiscreteSceneModel, b: DiscreteSceneModel) -> dict[int, int]:
    """Bijection read off the minimal sufficient statistic of the tuple scene.

    Each minimal cell of the coupled model projects to exactly one minimal
    cell of A and one of B; that pairing is the correspondence.
    """
    pair_model, pairs = coupled_model(a, b)
    la, lb = minimal_sufficient(a).labels, minimal_sufficient(b).labels
    out: dict[int, int] = {}
    for cell in minimal_sufficient(pair_model).cells():
        ka = {la[pairs[i][0]] for i in cell}
        kb = {lb[pairs[i][1]] for i in cell}
        if len(ka) != 1 or len(kb) != 1:
            raise PreconditionError("a tuple-scene cell straddles several minimal cells")
        out[ka.pop()] = kb.pop()
    return out


def indistinguishability_experiment(model: DiscreteSceneModel, s: int, s_alt: int, n_trials: int,
                                    rng: np.random.Generator, seq_len: int = 20,
                                    require_equivalent: bool = True) -> float:
    """Accuracy of the Bayes-optimal guess of a fair coin choosing scene ``s`` or ``s_alt``.

    Each trial flips z, draws ``seq_len`` measurements from the chosen scene at
    uniformly random configurations, and guesses z from the likelihood ratio,
    flipping a fair coin on exact ties.
    """
    if require_equivalent and s_alt not in equivalence_class(model, s):
        raise PreconditionError(f"scenes {s} and {s_alt} have different presentations")
    lik = model.likelihood
    z = rng.integers(0, 2, size=n_trials)
    chosen = np.where(z == 0, s, s_alt)
    configs = rng.integers(0, model.n_configs, size=(n_trials, seq_len))
    cdf = np.cumsum(lik[chosen[:, None], configs], axis=-1)
    u = rng.random((n_trials, seq_len, 1))
    ys = np.minimum((u > cdf).sum(axis=-1), model.n_measurements - 1)
    with np.errstate(divide="ignore"):
        la = np.log(lik[s][configs, ys]).sum(axis=1)
        lb = np.log(lik[s_alt][configs, ys]).sum(axis=1)
    with np.errstate(invalid="ignore"):
        llr = la - lb
    coin = rng.integers(0, 2, size=n_trials)
    guess = np.where(llr > 0, 0, np.where(llr < 0, 1, coin))
    return float(np.mean(guess == z))
