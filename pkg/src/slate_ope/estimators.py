"""Off-policy estimators for slate policies: IPS, IIPS, RIPS, Cascade-DR.

All estimators average per-record contributions built from importance
weights between the evaluation and behavior policies:

* IPS weights the slate reward by the full slate weight ``w(x, a)``.
* IIPS weights each slot reward by the marginal slot weight ``w_l``.
* RIPS weights slot l by the cumulative prefix weight ``w_{1:l}``.
* Cascade-DR subtracts a per-slot baseline from the RIPS terms and adds
  back its expectation under the evaluation policy, weighted one slot
  earlier, acting as a control variate.

Behavior propensities come either from a supplied behavior policy
(synthetic path) or from the per-slot values logged with the dataset
(real-data path, which presumes factorizable logging so that per-slot
conditionals double as slot marginals). No weight clipping or
self-normalization is applied; ``weight_max`` in the report surfaces
instability instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from slate_ope.core import LoggedDataset, LoggedRecord
from slate_ope.policy import RankingPolicy

__all__ = [
    "ESTIMATORS",
    "EstimateReport",
    "WeightProfile",
    "cascade_dr_estimate",
    "compute_weight_profile",
    "iips_estimate",
    "importance_weights",
    "ips_estimate",
    "on_policy_estimate",
    "rips_estimate",
]

BehaviorSource = Union[RankingPolicy, None]


@dataclass(frozen=True)
class WeightProfile:
    """Importance weights of one dataset (or one record).

    Attributes
    ----------
    cumulative:
        (n, L) prefix weights ``w_{1:l}``; column l is the product of the
        per-slot conditional ratios up to slot l.
    slot_marginal:
        (n, L) marginal slot weights ``w_l`` used by IIPS.
    full:
        (n,) full slate weights ``w(x, a) = w_{1:L}``.
    """

    cumulative: np.ndarray
    slot_marginal: np.ndarray
    full: np.ndarray


@dataclass(frozen=True)
class EstimateReport:
    """Estimator output: the value plus weight diagnostics."""

    value: float
    per_record_contributions: np.ndarray
    weight_max: float
    weight_mean: float


def _report(contributions: np.ndarray, weights: np.ndarray) -> EstimateReport:
    return EstimateReport(
        value=float(np.mean(contributions)),
        per_record_contributions=contributions,
        weight_max=float(np.max(weights)),
        weight_mean=float(np.mean(weights)),
    )


def _behavior_probs(
    dataset: LoggedDataset, pi_b_source: BehaviorSource
) -> tuple[np.ndarray, np.ndarray]:
    """(conditional, marginal) behavior probabilities of the logged actions."""
    if pi_b_source is None:
        if dataset.propensities is None:
            raise ValueError(
                "no behavior policy supplied and the dataset carries no logged propensities; "
                "the full-support assumption cannot be checked"
            )
        return dataset.propensities, dataset.propensities
    cond = pi_b_source.action_prob_matrix(dataset.contexts, dataset.slates)
    marg = pi_b_source.marginal_prob_matrix(dataset.contexts, dataset.slates)
    return cond, marg


def compute_weight_profile(
    dataset: LoggedDataset, pi_e: RankingPolicy, pi_b_source: BehaviorSource = None
) -> WeightProfile:
    """Importance weights of every record in `dataset`.

    Raises if any behavior probability of a logged action is zero, which
    would violate the full-support assumption the estimators rely on.
    """
    if pi_e.slate_size != dataset.slate_size or pi_e.n_actions != dataset.n_actions:
        raise ValueError("evaluation policy shape does not match the dataset")
    b_cond, b_marg = _behavior_probs(dataset, pi_b_source)
    if np.any(b_cond <= 0) or np.any(b_marg <= 0):
        raise ValueError(
            "behavior propensity of a logged action is zero; "
            "the full-support assumption over slate actions is violated"
        )
    e_cond = pi_e.action_prob_matrix(dataset.contexts, dataset.slates)
    e_marg = pi_e.marginal_prob_matrix(dataset.contexts, dataset.slates)
    cumulative = np.cumprod(e_cond / b_cond, axis=1)
    return WeightProfile(
        cumulative=cumulative,
        slot_marginal=e_marg / b_marg,
        full=cumulative[:, -1],
    )


def importance_weights(
    pi_e: RankingPolicy,
    pi_b_source: BehaviorSource,
    record: LoggedRecord,
) -> WeightProfile:
    """Weight profile of a single record; arrays have shape (L,)."""
    L = len(record.slate)
    x = record.context
    if pi_b_source is None:
        if record.propensities is None:
            raise ValueError("record has no logged propensities and no behavior policy was given")
        b_cond = record.propensities
        b_marg = record.propensities
    else:
        b_cond = np.array(
            [pi_b_source.conditional_pmf(x, record.slate[:l])[record.slate[l]] for l in range(L)]
        )
        b_marg = np.array(
            [pi_b_source.marginal_slot_pmf(x, l)[record.slate[l]] for l in range(L)]
        )
    if np.any(b_cond <= 0) or np.any(b_marg <= 0):
        raise ValueError(
            "behavior propensity of the logged slate is zero; full support is violated"
        )
    e_cond = np.array(
        [pi_e.conditional_pmf(x, record.slate[:l])[record.slate[l]] for l in range(L)]
    )
    e_marg = np.array([pi_e.marginal_slot_pmf(x, l)[record.slate[l]] for l in range(L)])
    cumulative = np.cumprod(e_cond / b_cond)
    return WeightProfile(
        cumulative=cumulative,
        slot_marginal=e_marg / b_marg,
        full=cumulative[-1:].copy(),
    )


def ips_estimate(
    dataset: LoggedDataset, pi_e: RankingPolicy, pi_b_source: BehaviorSource = None
) -> EstimateReport:
    """Full-slate importance sampling: mean of ``w(x, a) * r*``."""
    wp = compute_weight_profile(dataset, pi_e, pi_b_source)
    contributions = wp.full * dataset.slate_rewards()
    return _report(contributions, wp.full)


def iips_estimate(
    dataset: LoggedDataset, pi_e: RankingPolicy, pi_b_source: BehaviorSource = None
) -> EstimateReport:
    """Slot-independent weighting: mean of ``sum_l w_l * alpha_l * r_l``."""
    wp = compute_weight_profile(dataset, pi_e, pi_b_source)
    contributions = (wp.slot_marginal * dataset.rewards) @ dataset.alpha.values
    return _report(contributions, wp.slot_marginal)


def rips_estimate(
    dataset: LoggedDataset, pi_e: RankingPolicy, pi_b_source: BehaviorSource = None
) -> EstimateReport:
    """Cascade weighting: mean of ``sum_l w_{1:l} * alpha_l * r_l``."""
    wp = compute_weight_profile(dataset, pi_e, pi_b_source)
    contributions = (wp.cumulative * dataset.rewards) @ dataset.alpha.values
    return _report(contributions, wp.cumulative)


def cascade_dr_estimate(
    dataset: LoggedDataset,
    pi_e: RankingPolicy,
    pi_b_source: BehaviorSource,
    q_model,
) -> EstimateReport:
    """Doubly robust estimator under the cascade assumption.

    Per record the contribution is

    ``sum_l [ w_{1:l} (alpha_l r_l - Qhat_l(x, a_{1:l}))
              + w_{1:l-1} E_{a' ~ pi_e}[Qhat_l(x, a_{1:l-1}, a')] ]``

    with ``w_{1:0} = 1``. The inner expectation is an exact sum over the
    action set weighted by the evaluation policy's conditional pmf.
    `q_model` must expose ``predict_many(contexts, prefixes, rows=None)``;
    with an all-zero model the estimator collapses to RIPS per record.
    """
    wp = compute_weight_profile(dataset, pi_e, pi_b_source)
    n, L = dataset.slates.shape
    alpha = dataset.alpha.values
    rows = np.arange(n)
    w_prev = np.hstack([np.ones((n, 1)), wp.cumulative[:, :-1]])
    contributions = np.zeros(n)
    for l in range(L):
        prefix = dataset.slates[:, : l + 1]
        q_hat = q_model.predict_many(dataset.contexts, prefix, rows=rows)
        cond = pi_e.conditional_prob_matrix(dataset.contexts, dataset.slates[:, :l])
        expected_q = np.zeros(n)
        for a in range(dataset.n_actions):
            pref_a = np.hstack(
                [dataset.slates[:, :l], np.full((n, 1), a, dtype=np.int64)]
            )
            expected_q += cond[:, a] * q_model.predict_many(dataset.contexts, pref_a, rows=rows)
        contributions += (
            wp.cumulative[:, l] * (alpha[l] * dataset.rewards[:, l] - q_hat)
            + w_prev[:, l] * expected_q
        )
    return _report(contributions, wp.cumulative)


def on_policy_estimate(dataset: LoggedDataset) -> EstimateReport:
    """Empirical mean of the slate rewards, valid when the logging policy
    is the one being valued."""
    contributions = dataset.slate_rewards()
    return _report(contributions, np.ones(dataset.n))


def _ips(dataset, pi_e, pi_b_source, q_model=None):
    return ips_estimate(dataset, pi_e, pi_b_source)


def _iips(dataset, pi_e, pi_b_source, q_model=None):
    return iips_estimate(dataset, pi_e, pi_b_source)


def _rips(dataset, pi_e, pi_b_source, q_model=None):
    return rips_estimate(dataset, pi_e, pi_b_source)


def _cascade_dr(dataset, pi_e, pi_b_source, q_model=None):
    if q_model is None:
        raise ValueError("cascade_dr requires a fitted or tabular baseline model")
    return cascade_dr_estimate(dataset, pi_e, pi_b_source, q_model)


# Uniform call signature (dataset, pi_e, pi_b_source, q_model) used by the
# harness and the enumeration oracles.
ESTIMATORS = {
    "ips": _ips,
    "iips": _iips,
    "rips": _rips,
    "cascade_dr": _cascade_dr,
}
