import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nerfdiff.errors import ConditioningError, ContractError, PreconditionError, SizeError
from nerfdiff.scene_calculus import (DiscreteSceneModel, StatisticMap, coupled_bijection, coupled_model,
                                     deterministic_model, duplicated_model, equivalence_class,
                                     exchangeability_check, indistinguishability_experiment, is_exchangeable,
                                     is_scene, is_sufficient, joint, minimal_sufficient, predictive,
                                     random_model, run_theory_suite, sequence_probability, set_partitions,
                                     verify_strong_uniqueness)
from nerfdiff.scene_calculus.suite import markov_chain_table

seeds = st.integers(0, 2**32 - 1)


def model_from(seed, s=None, c=None, m=None):
    rng = np.random.default_rng(seed)
    s = s or int(rng.integers(1, 6))
    c = c or int(rng.integers(1, 4))
    m = m or int(rng.integers(2, 5))
    return random_model(rng, s, c, m)


def brute_force_joint(model, configs):
    """Sum over (S, y_1..y_n) one tuple at a time."""
    out = np.zeros((model.n_measurements,) * len(configs))
    for s in range(model.n_scenes):
        for ys in itertools.product(range(model.n_measurements), repeat=len(configs)):
            p = model.prior[s]
            for c, y in zip(configs, ys):
                p *= model.likelihood[s, c, y]
            out[ys] += p
    return out


# -- model -------------------------------------------------------------------

def test_model_validates_sums():
    with pytest.raises(ContractError):
        DiscreteSceneModel([0.5, 0.4], np.full((2, 1, 2), 0.5))
    with pytest.raises(ContractError):
        DiscreteSceneModel([1.0], [[[0.7, 0.4]]])
    with pytest.raises(ContractError):
        DiscreteSceneModel([1.0], [[[1.2, -0.2]]])


def test_json_round_trip():
    m = model_from(3)
    back = DiscreteSceneModel.from_json(m.to_json())
    np.testing.assert_allclose(back.likelihood, m.likelihood, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.prior, m.prior, rtol=0, atol=1e-12)


# -- joint -------------------------------------------------------------------

def test_single_scene_joint_is_product():
    m = model_from(0, s=1, c=2, m=3)
    j = joint(m, [0, 1])
    np.testing.assert_allclose(j, np.outer(m.likelihood[0, 0], m.likelihood[0, 1]), atol=1e-15)


def test_opposite_deterministic_scenes_joint():
    m = deterministic_model([[0], [1]])
    j = joint(m, 0, 2)
    np.testing.assert_allclose(j, [[0.5, 0], [0, 0.5]])
    np.testing.assert_allclose(j.sum(axis=0), [0.5, 0.5])
    assert not np.allclose(j, np.outer(j.sum(1), j.sum(0)))


def test_joint_matches_brute_force():
    m = model_from(11, s=3, c=3, m=3)
    configs = [2, 0, 2]
    np.testing.assert_allclose(joint(m, configs), brute_force_joint(m, configs), atol=1e-15)


@given(seeds, st.integers(1, 4))
def test_joint_sums_to_one(seed, n):
    m = model_from(seed)
    assert abs(joint(m, [0] * n).sum() - 1) <= 1e-10


def test_joint_size_guard():
    m = model_from(0, s=1, c=1, m=8)
    with pytest.raises(SizeError):
        joint(m, 0, 9)


def test_joint_rejects_unknown_config():
    with pytest.raises(ContractError):
        joint(model_from(0, c=1), [1])


# -- independence ------------------------------------------------------------

@given(seeds)
def test_identity_is_scene(seed):
    assert is_scene(model_from(seed))


def test_collapsing_distinct_scenes_is_not_scene():
    m = model_from(2, s=2, c=2, m=3)
    assert not is_scene(m, StatisticMap((0, 0)))


def test_collapsing_identical_scenes_is_scene():
    m = duplicated_model(model_from(4, s=2, c=2, m=3), [2, 1])
    assert is_scene(m, StatisticMap((0, 0, 1)))


# -- exchangeability ---------------------------------------------------------

@given(seeds, st.integers(1, 5))
def test_fixed_config_joints_are_exchangeable(seed, n):
    m = model_from(seed)
    assert exchangeability_check(m, n, m.n_configs - 1)


def test_markov_chain_is_not_exchangeable():
    assert not is_exchangeable(markov_chain_table(3))


def test_symmetric_two_table_is_exchangeable():
    assert is_exchangeable(np.array([[0.1, 0.3], [0.3, 0.3]]))


def test_exchangeability_guard():
    with pytest.raises(SizeError):
        exchangeability_check(model_from(0), 7, 0)


# -- predictive --------------------------------------------------------------

def test_empty_observation_gives_prior_predictive():
    m = model_from(5)
    np.testing.assert_allclose(predictive(m, [], 0), m.prior @ m.likelihood[:, 0], atol=1e-15)


def test_deterministic_scene_posterior_collapses():
    m = deterministic_model([[0, 1], [1, 0], [2, 2]], n_measurements=3)
    np.testing.assert_allclose(predictive(m, [(0, 1)], 1), m.likelihood[1, 1])


def test_predictive_matches_joint_ratio():
    m = model_from(9, s=4, c=3, m=3)
    obs = [(0, 1), (2, 0), (1, 2)]
    prev = joint(m, [c for c, _ in obs])[tuple(y for _, y in obs)]
    nxt = joint(m, [c for c, _ in obs] + [1])[tuple(y for _, y in obs)]
    np.testing.assert_allclose(predictive(m, obs, 1), nxt / prev, rtol=0, atol=1e-12)


@given(seeds, st.lists(st.tuples(st.integers(0, 2), st.integers(0, 3)), max_size=4))
def test_chain_rule(seed, obs):
    m = model_from(seed, c=3, m=4)
    prob = 1.0
    for t, (c, y) in enumerate(obs):
        prob *= predictive(m, obs[:t], c)[y]
    assert abs(prob - sequence_probability(m, obs)) <= 1e-10


def test_zero_probability_observation():
    m = deterministic_model([[0], [0]], n_measurements=2)
    with pytest.raises(ConditioningError):
        predictive(m, [(0, 1)], 0)


# -- sufficiency and minimality ----------------------------------------------

def test_identity_partition_is_sufficient():
    m = model_from(6)
    assert is_sufficient(m, StatisticMap.identity(m.n_scenes))


def test_merging_equal_rows_is_sufficient():
    m = duplicated_model(model_from(6, s=2), [2, 1])
    assert is_sufficient(m, StatisticMap((0, 0, 1)))


def test_merging_perturbed_duplicate_is_not_sufficient():
    base = model_from(6, s=1, c=2, m=3)
    lik = np.concatenate([base.likelihood, base.likelihood])
    lik[1, 0] = 0.9 * lik[1, 0] + 0.1 / 3
    m = DiscreteSceneModel([0.5, 0.5], lik)
    assert not is_sufficient(m, StatisticMap((0, 0)))


def test_distinct_scenes_give_identity_partition():
    m = model_from(8, s=5)
    assert minimal_sufficient(m) == StatisticMap.identity(5)


def test_duplicates_form_cells_of_size_k():
    m = duplicated_model(model_from(12, s=3, c=2, m=3), [3, 3, 3])
    assert sorted(len(c) for c in minimal_sufficient(m).cells()) == [3, 3, 3]


@given(st.integers(0, 10_000))
def test_minimal_factors_through_every_sufficient_partition(seed):
    rng = np.random.default_rng(seed)
    base = random_model(rng, int(rng.integers(1, 4)), 2, 3)
    m = duplicated_model(base, rng.integers(1, 3, size=base.n_scenes))
    t_min = minimal_sufficient(m)
    assert is_sufficient(m, t_min)
    for part in set_partitions(m.n_scenes):
        if is_sufficient(m, part):
            assert t_min.factors_through(part)


def test_set_partitions_are_bell_numbers():
    assert [sum(1 for _ in set_partitions(n)) for n in range(1, 7)] == [1, 2, 5, 15, 52, 203]


def test_minimality_fixed_point():
    m = duplicated_model(model_from(13, s=3), [2, 1, 3])
    cells = minimal_sufficient(m).cells()
    reps = [c[0] for c in cells]
    sub = DiscreteSceneModel(m.prior[reps] / m.prior[reps].sum(), m.likelihood[reps])
    assert minimal_sufficient(sub) == StatisticMap.identity(len(reps))


def test_support_violation_names_scene_and_measurement():
    m = deterministic_model([[0], [1]])
    with pytest.raises(PreconditionError, match=r"y=1 \| S=0, c=0"):
        minimal_sufficient(m)


def test_statistic_map_validation():
    with pytest.raises(ContractError):
        StatisticMap.from_cells([[0, 1], [1]])
    with pytest.raises(ContractError):
        StatisticMap.from_cells([[0], []], n=1)
    assert StatisticMap((5, 5, 2)).labels == (0, 0, 1)


# -- equivalence classes -----------------------------------------------------

def test_unique_scene_is_singleton():
    assert equivalence_class(model_from(14, s=4), 2) == {2}


def test_duplicate_class_has_both_copies():
    m = duplicated_model(model_from(15, s=2), [1, 2])
    assert equivalence_class(m, 1) == {1, 2}


@given(st.integers(0, 10_000))
def test_classes_coincide_with_minimal_cells(seed):
    rng = np.random.default_rng(seed)
    base = random_model(rng, int(rng.integers(1, 4)), 2, 3)
    m = duplicated_model(base, rng.integers(1, 4, size=base.n_scenes))
    m = m.relabel(rng.permutation(m.n_scenes))
    cells = {frozenset(c) for c in minimal_sufficient(m).cells()}
    assert cells == {frozenset(equivalence_class(m, s)) for s in range(m.n_scenes)}


# -- strong uniqueness -------------------------------------------------------

def test_relabel_gives_relabel_bijection():
    a = model_from(16, s=4)
    perm = np.array([2, 0, 3, 1])
    res = verify_strong_uniqueness(a, a.relabel(perm))
    assert res.holds
    # b's scene i is a's scene perm[i]; identity partitions
    assert res.bijection == {int(perm[i]): i for i in range(4)}


def test_split_cells_re_merge():
    a = model_from(17, s=3)
    b = a.split([0.3, 0.5, 0.9])
    res = verify_strong_uniqueness(a, b)
    assert res.holds and len(res.bijection) == 3
    assert all(len(c) == 2 for c in minimal_sufficient(b).cells())


def test_tuple_construction_reproduces_bijection():
    a = duplicated_model(model_from(18, s=3), [1, 2, 1])
    b = a.split([0.2, 0.4, 0.6, 0.8]).relabel(np.random.default_rng(0).permutation(8))
    res = verify_strong_uniqueness(a, b)
    assert res.holds
    assert coupled_bijection(a, b) == res.bijection
    pair_model, _ = coupled_model(a, b)
    assert is_scene(pair_model)
    np.testing.assert_allclose(joint(pair_model, [0, 1, 0]), joint(a, [0, 1, 0]), atol=1e-12)


def test_uniqueness_requires_equal_joints():
    with pytest.raises(PreconditionError):
        verify_strong_uniqueness(model_from(1, s=2, c=2, m=3), model_from(2, s=2, c=2, m=3))


# -- indistinguishability ----------------------------------------------------

def test_identical_scenes_are_at_chance():
    m = duplicated_model(model_from(19, s=2, c=2, m=4), [2, 1])
    acc = indistinguishability_experiment(m, 0, 1, 10_000, np.random.default_rng(0))
    assert 0.485 <= acc <= 0.515


def test_perturbed_scenes_are_distinguishable():
    base = model_from(20, s=1, c=2, m=4)
    alt = 0.9 * base.likelihood[0] + 0.1 * np.random.default_rng(1).dirichlet(np.ones(4), size=2)
    m = DiscreteSceneModel([0.5, 0.5], np.stack([base.likelihood[0], alt]))
    acc = indistinguishability_experiment(m, 0, 1, 10_000, np.random.default_rng(2), seq_len=200,
                                          require_equivalent=False)
    assert acc > 0.5 + 3 * 0.005


def test_single_trial_is_fair_coin():
    m = duplicated_model(model_from(21, s=1), [2])
    outcomes = [indistinguishability_experiment(m, 0, 1, 1, np.random.default_rng(s)) for s in range(4000)]
    assert set(outcomes) <= {0.0, 1.0}
    assert abs(np.mean(outcomes) - 0.5) <= 3 * np.sqrt(0.25 / 4000)


def test_indistinguishability_requires_equivalence():
    with pytest.raises(PreconditionError):
        indistinguishability_experiment(model_from(22, s=2), 0, 1, 10, np.random.default_rng(0))


# -- the sweep ---------------------------------------------------------------

def test_small_suite_passes():
    results = run_theory_suite(seed=3, n_models=20, n_adversarial=10, n_uniqueness=6, n_pairs=3, n_trials=2000)
    assert [r.name for r in results][:7] == ["Def. 1", "Existence", "Thm 2", "Claim 1", "Thm 4", "Thm 5", "Claim 2"]
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
