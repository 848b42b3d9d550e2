"""Exact, enumerable scene models and checks on sufficiency and identifiability."""

from nerfdiff.scene_calculus.model import (MAX_SIZE, DiscreteSceneModel, deterministic_model,
                                           duplicated_model, random_model)
from nerfdiff.scene_calculus.suite import ClaimResult, run_theory_suite
from nerfdiff.scene_calculus.theory import (ObservationSequence, StatisticMap, UniquenessResult,
                                            check_full_support, conditional_mutual_information,
                                            coupled_bijection, coupled_model, equivalence_class,
                                            exchangeability_check, indistinguishability_experiment,
                                            is_exchangeable, is_scene, is_sufficient, joint,
                                            joints_match, likelihood_ratio_profile, minimal_sufficient,
                                            posterior, predictive, sequence_probability, set_partitions,
                                            verify_strong_uniqueness)

__all__ = [
    "MAX_SIZE", "DiscreteSceneModel", "deterministic_model", "duplicated_model", "random_model",
    "ClaimResult", "run_theory_suite", "ObservationSequence", "StatisticMap", "UniquenessResult",
    "check_full_support", "conditional_mutual_information", "coupled_bijection", "coupled_model",
    "equivalence_class", "exchangeability_check", "indistinguishability_experiment", "is_exchangeable",
    "is_scene", "is_sufficient", "joint", "joints_match", "likelihood_ratio_profile",
    "minimal_sufficient", "posterior", "predictive", "sequence_probability", "set_partitions",
    "verify_strong_uniqueness",
]
