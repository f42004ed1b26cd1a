"""Off-policy evaluation for ranking (slate) bandit policies.

Provides the IPS, IIPS, RIPS, and Cascade-DR estimators, a synthetic
slate-bandit environment with configurable reward structures, exact
enumeration oracles for unbiasedness and variance checks, and an
experiment harness with a CLI.
"""

from slate_ope.core import (
    AlphaWeights,
    LoggedDataset,
    LoggedRecord,
    make_alpha_weights,
    slate_reward,
)
from slate_ope.estimators import (
    EstimateReport,
    cascade_dr_estimate,
    iips_estimate,
    importance_weights,
    ips_estimate,
    on_policy_estimate,
    rips_estimate,
)
from slate_ope.policy import (
    FactorizableSoftmaxPolicy,
    LinearScorer,
    PlackettLucePolicy,
    UniformPolicy,
    make_behavior_policy,
    make_evaluation_policy,
)
from slate_ope.harness import (
    ExperimentConfig,
    ResultRow,
    aggregate_mse,
    bootstrap_evaluate,
    load_dataset,
    run_experiment,
    save_dataset,
)
from slate_ope.regression import LearnerConfig, QModel, ZeroQ, fit_q_model
from slate_ope.synth import SyntheticEnv, generate_dataset, make_synthetic_env, true_policy_value

__all__ = [
    "AlphaWeights",
    "EstimateReport",
    "ExperimentConfig",
    "LearnerConfig",
    "ResultRow",
    "aggregate_mse",
    "bootstrap_evaluate",
    "generate_dataset",
    "load_dataset",
    "run_experiment",
    "save_dataset",
    "true_policy_value",
    "FactorizableSoftmaxPolicy",
    "LinearScorer",
    "LoggedDataset",
    "LoggedRecord",
    "PlackettLucePolicy",
    "QModel",
    "SyntheticEnv",
    "UniformPolicy",
    "ZeroQ",
    "cascade_dr_estimate",
    "fit_q_model",
    "iips_estimate",
    "importance_weights",
    "ips_estimate",
    "make_alpha_weights",
    "make_behavior_policy",
    "make_evaluation_policy",
    "make_synthetic_env",
    "on_policy_estimate",
    "rips_estimate",
    "slate_reward",
]
