"""Brute-force verification sweep over random and adversarial scene models."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from nerfdiff.rng import stream
from nerfdiff.scene_calculus.model import (DiscreteSceneModel, deterministic_model, duplicated_model,
                                           random_model)
from nerfdiff.scene_calculus.theory import (StatisticMap, coupled_bijection, equivalence_class,
                                            exchangeability_check, indistinguishability_experiment,
                                            is_exchangeable, is_scene, is_sufficient, joint,
                                            minimal_sufficient, predictive, sequence_probability,
                                            set_partitions, verify_strong_uniqueness)


@dataclass
class ClaimResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_models(seed: int, count: int, max_size: int = 6) -> list[DiscreteSceneModel]:
    out = []
    for i in range(count):
        rng = stream(seed, "random-model", i)
        s, c, m = (int(v) for v in rng.integers(1, max_size + 1, size=3))
        out.append(random_model(rng, s, c, m, concentration=float(rng.choice([0.3, 1.0, 3.0]))))
    return out


def adversarial_models(seed: int, count: int, max_scenes: int = 6) -> list[DiscreteSceneModel]:
    """Models with likelihood-identical scene copies, so non-trivial cells exist."""
    out = []
    for i in range(count):
        rng = stream(seed, "adversarial-model", i)
        base_s = int(rng.integers(1, 4))
        base = random_model(rng, base_s, int(rng.integers(1, 5)), int(rng.integers(2, 6)))
        copies = rng.integers(1, 4, size=base_s)
        while copies.sum() > max_scenes:
            copies[np.argmax(copies)] -= 1
        model = duplicated_model(base, copies)
        out.append(model.relabel(rng.permutation(model.n_scenes)))
    return out


def markov_chain_table(n: int = 3) -> np.ndarray:
    """A sticky two-state chain started off-stationary: not exchangeable."""
    trans = np.array([[0.9, 0.1], [0.3, 0.7]])
    start = np.array([0.8, 0.2])
    table = np.empty((2,) * n)
    for ys in itertools.product(range(2), repeat=n):
        table[ys] = start[ys[0]] * np.prod([trans[a, b] for a, b in zip(ys, ys[1:])])
    return table


def _check_definition(models, dup_models) -> ClaimResult:
    bad = [i for i, m in enumerate(models) if not is_scene(m)]
    # merging copies keeps independence; merging distinct scenes breaks it
    merged_ok = all(is_scene(m, minimal_sufficient(m)) for m in dup_models)
    leak = 0
    for m in models:
        if m.n_scenes >= 2 and is_scene(m, StatisticMap((0,) * m.n_scenes)):
            leak += 1
    passed = not bad and merged_ok
    return ClaimResult("Def. 1", passed,
                       f"identity is a scene on {len(models) - len(bad)}/{len(models)} models; "
                       f"copy-merges independent={merged_ok}; single-cell collapses that stay independent={leak}")


def _check_existence(models, max_n: int) -> ClaimResult:
    checked = failures = 0
    for m in models:
        for c in range(m.n_configs):
            for n in range(1, max_n + 1):
                checked += 1
                failures += not exchangeability_check(m, n, c)
    control = not is_exchangeable(markov_chain_table(3))
    return ClaimResult("Existence", failures == 0 and control,
                       f"{checked - failures}/{checked} fixed-config joints exchangeable (n <= {max_n}); "
                       f"Markov-chain control rejected={control}")


def _check_real_scene(real_models: Iterable[DiscreteSceneModel]) -> ClaimResult:
    real_models = list(real_models)
    ok = sum(is_scene(m) for m in real_models)
    return ClaimResult("Thm 2", ok == len(real_models) and ok > 0,
                       f"{ok}/{len(real_models)} exported deterministic scene models are scenes")


def _duplicate_pairs(models) -> list[tuple[DiscreteSceneModel, int, int]]:
    pairs = []
    for m in models:
        for s in range(m.n_scenes):
            alt = sorted(equivalence_class(m, s) - {s})
            if alt and alt[0] > s:
                pairs.append((m, s, alt[0]))
                break
    return pairs


def _check_indistinguishable(seed: int, dup_models, n_pairs: int, n_trials: int) -> ClaimResult:
    pairs = _duplicate_pairs(dup_models)[:n_pairs]
    sigma = math.sqrt(0.25 / n_trials)
    accs = [indistinguishability_experiment(m, s, t, n_trials, stream(seed, "claim1", i))
            for i, (m, s, t) in enumerate(pairs)]
    inside = all(abs(a - 0.5) <= 3 * sigma for a in accs)
    # control: an eps-perturbed twin must be told apart
    rng = stream(seed, "claim1-control")
    base = random_model(rng, 1, 3, 4)
    row = base.likelihood[0]
    alt = 0.9 * row + 0.1 * rng.dirichlet(np.ones(row.shape[-1]), size=row.shape[0])
    ctrl = DiscreteSceneModel([0.5, 0.5], np.stack([row, alt]))
    ctrl_acc = indistinguishability_experiment(ctrl, 0, 1, n_trials, rng, seq_len=200, require_equivalent=False)
    control = ctrl_acc > 0.5 + 3 * sigma
    worst = max((abs(a - 0.5) for a in accs), default=float("nan"))
    return ClaimResult("Claim 1", inside and control and bool(pairs),
                       f"{len(pairs)} pairs x {n_trials} trials, max |acc-0.5| = {worst:.4f} "
                       f"(3 sigma = {3 * sigma:.4f}); perturbed control acc = {ctrl_acc:.3f}")


def _check_minimality(models) -> ClaimResult:
    checked = failures = 0
    for m in models:
        if m.n_scenes > 6:
            continue
        t_min = minimal_sufficient(m)
        if not is_sufficient(m, t_min):
            failures += 1
        for part in set_partitions(m.n_scenes):
            if is_sufficient(m, part):
                checked += 1
                failures += not t_min.factors_through(part)
        # restricting to one representative per cell leaves nothing to merge
        reps = [cell[0] for cell in t_min.cells()]
        sub = DiscreteSceneModel(m.prior[reps] / m.prior[reps].sum(), m.likelihood[reps])
        failures += minimal_sufficient(sub) != StatisticMap.identity(len(reps))
    return ClaimResult("Thm 4", failures == 0,
                       f"minimal statistic factors through {checked - failures}/{checked} "
                       f"sufficient partitions found by exhaustive search")


def _check_uniqueness(seed: int, models, n_pairs: int) -> ClaimResult:
    ok = 0
    notes = []
    for i in range(n_pairs):
        rng = stream(seed, "uniqueness", i)
        a = models[i % len(models)]
        if i % 2 == 0:
            perm = rng.permutation(a.n_scenes)
            b = a.relabel(perm)
        else:
            b = a.split(rng.uniform(0.1, 0.9, size=a.n_scenes))
        res = verify_strong_uniqueness(a, b)
        ta, tb = minimal_sufficient(a).cells(), minimal_sufficient(b).cells()
        valid = (res.holds and len(res.bijection) == len(ta) == len(tb)
                 and sorted(res.bijection.values()) == list(range(len(tb)))
                 and all(np.allclose(a.likelihood[ta[k][0]], b.likelihood[tb[v][0]], rtol=0, atol=1e-12)
                         for k, v in res.bijection.items()))
        if i % 2 == 0:
            # cell k of a holds scene s; b's scene perm^-1[s] is the same scene
            inv = np.argsort(perm)
            lb = minimal_sufficient(b).labels
            valid &= all(res.bijection[k] == lb[inv[cell[0]]] for k, cell in enumerate(ta))
        valid &= coupled_bijection(a, b) == res.bijection
        ok += bool(valid)
        if not valid:
            notes.append(i)
    return ClaimResult("Thm 5", ok == n_pairs,
                       f"valid bijection on {ok}/{n_pairs} relabel/split pairs, tuple-scene construction agrees"
                       + (f"; failing pairs {notes}" if notes else ""))


def _check_classes(models) -> ClaimResult:
    bad = 0
    for m in models:
        cells = {frozenset(c) for c in minimal_sufficient(m).cells()}
        classes = {frozenset(equivalence_class(m, s)) for s in range(m.n_scenes)}
        bad += cells != classes
    return ClaimResult("Claim 2", bad == 0,
                       f"equivalence classes equal minimal cells on {len(models) - bad}/{len(models)} models")


def _check_chain_rule(seed: int, models, seq_len: int = 4) -> ClaimResult:
    worst = 0.0
    for i, m in enumerate(models):
        rng = stream(seed, "chain", i)
        configs = [int(c) for c in rng.integers(0, m.n_configs, size=seq_len)]
        table = joint(m, configs)
        for ys in itertools.product(range(m.n_measurements), repeat=seq_len):
            obs: list[tuple[int, int]] = []
            prob = 1.0
            for c, y in zip(configs, ys):
                if prob == 0.0:
                    break
                prob *= predictive(m, obs, c)[y]
                obs.append((c, y))
            worst = max(worst, abs(prob - table[ys]), abs(sequence_probability(m, obs) - table[ys]) if len(obs) == seq_len else 0.0)
    return ClaimResult("Chain rule", worst <= 1e-10,
                       f"product of predictives vs enumerated joint: max error {worst:.2e}")


def default_real_models(seed: int) -> list[DiscreteSceneModel]:
    """Deterministic models with random measurement functions h(S, c)."""
    out = []
    for i in range(5):
        rng = stream(seed, "real-scene", i)
        s, c = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        out.append(deterministic_model(rng.integers(0, 4, size=(s, c)), rng.dirichlet(np.ones(s)), 4))
    return out


def run_theory_suite(seed: int = 0, n_models: int = 200, n_adversarial: int = 40,
                     real_scene_models: Iterable[DiscreteSceneModel] | None = None,
                     max_n: int = 5, n_uniqueness: int = 50, n_pairs: int = 10, n_trials: int = 10_000,
                     progress: Callable[[ClaimResult], None] | None = None) -> list[ClaimResult]:
    models = random_models(seed, n_models)
    dups = adversarial_models(seed, n_adversarial)
    everything = models + dups
    real = list(real_scene_models) if real_scene_models is not None else default_real_models(seed)
    checks = [
        lambda: _check_definition(everything, dups),
        lambda: _check_existence(everything, max_n),
        lambda: _check_real_scene(real),
        lambda: _check_indistinguishable(seed, dups, n_pairs, n_trials),
        lambda: _check_minimality(everything),
        lambda: _check_uniqueness(seed, dups + models, n_uniqueness),
        lambda: _check_classes(everything),
        lambda: _check_chain_rule(seed, [m for m in everything if m.n_measurements <= 5][:60]),
    ]
    results = []
    for check in checks:
        res = check()
        results.append(res)
        if progress is not None:
            progress(res)
    return results
