"""Synthetic slate-bandit environment with configurable reward structures.

The slot-level mean reward is ``sigmoid(base(x, a_l) + F(x, a))`` where
``base(x, a) = theta_a . x + b_a`` and ``F`` aggregates pairwise
interactions between slots:

* ``independence``: no interactions, F = 0.
* ``cascade``: interactions only from higher slots (k < l).
* ``standard``: interactions from every other slot (k != l).

Two interaction kinds are supported: ``additive`` reads a symmetric
action-by-action matrix W, and ``decay`` subtracts neighbors' base
rewards damped by ``(|k - l| + 1)^-1``. Slot rewards are independent
Bernoulli draws at their mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from slate_ope.core import AlphaWeights, LoggedDataset, make_alpha_weights
from slate_ope.policy import RankingPolicy, _FactorizablePolicy, enumerate_slates

__all__ = [
    "SyntheticEnv",
    "make_synthetic_env",
    "generate_dataset",
    "true_policy_value",
]

REWARD_STRUCTURES = ("standard", "cascade", "independence")
INTERACTION_KINDS = ("additive", "decay")

# Exact policy-value enumeration refuses above this many slates.
EXACT_ENUMERATION_LIMIT = 10**6
# Chunk size budget (contexts x prefixes) for the vectorized enumeration.
_CHUNK_CELLS = 4 * 10**6


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class SyntheticEnv:
    """Ground-truth reward model for synthetic experiments.

    Attributes
    ----------
    base_theta, base_bias:
        Parameters of the slot-level base reward ``theta_a . x + b_a``.
    reward_structure:
        Which slots interact: ``standard``, ``cascade``, or ``independence``.
    interaction_kind:
        ``additive`` (symmetric matrix W) or ``decay`` (damped base rewards).
    interaction_scale:
        Multiplier on the interaction term; 1.0 reproduces the default setup.
    """

    dim: int
    n_actions: int
    slate_size: int
    alpha: AlphaWeights
    base_theta: np.ndarray
    base_bias: np.ndarray
    reward_structure: str
    interaction_kind: str
    interaction_matrix: np.ndarray
    interaction_scale: float = 1.0

    def __post_init__(self):
        if self.reward_structure not in REWARD_STRUCTURES:
            raise ValueError(f"unknown reward structure: {self.reward_structure!r}")
        if self.interaction_kind not in INTERACTION_KINDS:
            raise ValueError(f"unknown interaction kind: {self.interaction_kind!r}")
        theta = np.asarray(self.base_theta, dtype=float)
        bias = np.asarray(self.base_bias, dtype=float)
        W = np.asarray(self.interaction_matrix, dtype=float)
        if theta.shape != (self.n_actions, self.dim):
            raise ValueError(f"base_theta must have shape {(self.n_actions, self.dim)}")
        if bias.shape != (self.n_actions,):
            raise ValueError(f"base_bias must have shape {(self.n_actions,)}")
        if W.shape != (self.n_actions, self.n_actions):
            raise ValueError(f"interaction matrix must be {(self.n_actions, self.n_actions)}")
        if not np.allclose(W, W.T, atol=1e-12):
            raise ValueError("interaction matrix must be symmetric")
        if len(self.alpha) != self.slate_size:
            raise ValueError("alpha length must equal slate_size")
        object.__setattr__(self, "base_theta", theta)
        object.__setattr__(self, "base_bias", bias)
        object.__setattr__(self, "interaction_matrix", W)

    # -- base rewards -------------------------------------------------

    def base_reward(self, x: np.ndarray, action: int) -> float:
        """Pre-sigmoid base reward ``theta_a . x + b_a`` of one action."""
        if not 0 <= action < self.n_actions:
            raise IndexError(f"action {action} out of range [0, {self.n_actions})")
        return float(self.base_theta[action] @ np.asarray(x, dtype=float) + self.base_bias[action])

    def base_reward_matrix(self, contexts: np.ndarray) -> np.ndarray:
        """(n, n_actions) base rewards for a context batch."""
        return np.asarray(contexts, dtype=float) @ self.base_theta.T + self.base_bias

    # -- interactions -------------------------------------------------

    def _interacting_slots(self, slot: int, slate_size: Optional[int] = None) -> list[int]:
        L = self.slate_size if slate_size is None else slate_size
        if self.reward_structure == "independence":
            return []
        if self.reward_structure == "cascade":
            return list(range(slot))
        return [k for k in range(L) if k != slot]

    def interaction_term(self, x: np.ndarray, slate: Sequence[int], slot: int) -> float:
        """Interaction contribution F to slot `slot` (0-based) of `slate`."""
        slate = tuple(int(a) for a in slate)
        if not 0 <= slot < len(slate):
            raise IndexError(f"slot {slot} out of range for slate of size {len(slate)}")
        total = 0.0
        for k in self._interacting_slots(slot, len(slate)):
            if self.interaction_kind == "additive":
                total += float(self.interaction_matrix[slate[k], slate[slot]])
            else:
                decay = 1.0 / (abs(k - slot) + 1)
                total -= decay * self.base_reward(x, slate[k])
        return self.interaction_scale * total

    # -- slot-level mean rewards --------------------------------------

    def slot_mean_reward(self, x: np.ndarray, slate: Sequence[int], slot: int) -> float:
        """Mean reward ``sigmoid(base + F)`` of one slot; lies in (0, 1)."""
        base = self.base_reward(x, int(slate[slot]))
        return float(sigmoid(np.array(base + self.interaction_term(x, slate, slot))))

    def slot_mean_rewards(self, x: np.ndarray, slate: Sequence[int]) -> np.ndarray:
        """(L,) vector of slot mean rewards for one slate."""
        return np.array([self.slot_mean_reward(x, slate, l) for l in range(len(slate))])

    def slot_mean_reward_matrix(self, contexts: np.ndarray, slates: np.ndarray) -> np.ndarray:
        """(n, L) slot mean rewards, vectorized over records."""
        base = self.base_reward_matrix(contexts)
        return self._slot_means_from_base(base, np.asarray(slates, dtype=np.int64))

    def _slot_means_from_base(self, base: np.ndarray, slates: np.ndarray) -> np.ndarray:
        n, L = slates.shape
        args = np.take_along_axis(base, slates, axis=1)
        if self.reward_structure != "independence":
            F = np.zeros((n, L))
            for l in range(L):
                for k in self._interacting_slots(l, L):
                    if self.interaction_kind == "additive":
                        F[:, l] += self.interaction_matrix[slates[:, k], slates[:, l]]
                    else:
                        decay = 1.0 / (abs(k - l) + 1)
                        F[:, l] -= decay * np.take_along_axis(base, slates[:, k : k + 1], axis=1)[:, 0]
            args = args + self.interaction_scale * F
        return sigmoid(args)

    # -- sampling -----------------------------------------------------

    def sample_contexts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, dim) i.i.d. standard normal contexts."""
        if n < 1:
            raise ValueError("n must be positive")
        return rng.standard_normal((n, self.dim))

    def sample_rewards(self, x: np.ndarray, slate: Sequence[int], rng: np.random.Generator) -> np.ndarray:
        """(L,) Bernoulli slot rewards at their mean."""
        q = self.slot_mean_rewards(x, slate)
        return (rng.random(q.size) < q).astype(float)


def make_synthetic_env(
    slate_size: int,
    dim: int = 5,
    n_actions: int = 5,
    reward_structure: str = "cascade",
    interaction_kind: str = "additive",
    alpha: Optional[AlphaWeights] = None,
    interaction_scale: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> SyntheticEnv:
    """Draw a random environment.

    Base reward parameters are i.i.d. standard normal. Interaction matrix
    entries are uniform on [-1, 1] and symmetrized as ``(W + W.T) / 2``,
    keeping interactions zero-mean and bounded so slot means stay away
    from saturation.
    """
    rng = np.random.default_rng() if rng is None else rng
    if alpha is None:
        alpha = make_alpha_weights("uniform", slate_size)
    W = rng.uniform(-1.0, 1.0, size=(n_actions, n_actions))
    return SyntheticEnv(
        dim=dim,
        n_actions=n_actions,
        slate_size=slate_size,
        alpha=alpha,
        base_theta=rng.standard_normal((n_actions, dim)),
        base_bias=rng.standard_normal(n_actions),
        reward_structure=reward_structure,
        interaction_kind=interaction_kind,
        interaction_matrix=(W + W.T) / 2.0,
        interaction_scale=interaction_scale,
    )


def generate_dataset(
    env: SyntheticEnv, policy: RankingPolicy, n: int, rng: np.random.Generator
) -> LoggedDataset:
    """Draw ``n`` logged records: x ~ p(x), a ~ policy, r_l ~ Bern(q_l).

    Logged propensities are filled with the behavior policy's per-slot
    conditional probabilities of the chosen actions.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if policy.slate_size != env.slate_size or policy.n_actions != env.n_actions:
        raise ValueError("policy slate size / action space must match the environment")
    contexts = env.sample_contexts(n, rng)
    if isinstance(policy, _FactorizablePolicy):
        slates = policy.sample_slates(contexts, rng)
    else:
        slates = np.array([policy.sample_slate(x, rng) for x in contexts])
    q = env.slot_mean_reward_matrix(contexts, slates)
    rewards = (rng.random(q.shape) < q).astype(float)
    propensities = policy.action_prob_matrix(contexts, slates)
    return LoggedDataset(
        contexts=contexts,
        slates=slates,
        rewards=rewards,
        n_actions=env.n_actions,
        alpha=env.alpha,
        propensities=propensities,
    )


def true_policy_value(
    env: SyntheticEnv,
    policy: RankingPolicy,
    contexts: np.ndarray,
    mode: str = "exact",
    mc_samples: int = 10**4,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Policy value averaged over the supplied context sample.

    ``exact`` mode enumerates the slate support (products for
    factorizable policies, permutations otherwise) and is refused above
    ``EXACT_ENUMERATION_LIMIT`` slates. ``monte_carlo`` mode samples
    `mc_samples` slates per context instead. The outer context
    expectation is always approximated by the given sample.
    """
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim != 2 or contexts.shape[0] < 1:
        raise ValueError("contexts must be a non-empty (n, d) matrix")
    if policy.slate_size != env.slate_size or policy.n_actions != env.n_actions:
        raise ValueError("policy slate size / action space must match the environment")
    if mode == "exact":
        return _exact_policy_value(env, policy, contexts)
    if mode == "monte_carlo":
        if rng is None:
            raise ValueError("monte_carlo mode requires an rng")
        return _mc_policy_value(env, policy, contexts, mc_samples, rng)
    raise ValueError(f"unknown mode: {mode!r}")


def _exact_policy_value(env: SyntheticEnv, policy: RankingPolicy, contexts: np.ndarray) -> float:
    A, L = env.n_actions, env.slate_size
    if A**L > EXACT_ENUMERATION_LIMIT:
        raise ValueError(
            f"exact enumeration over {A}^{L} slates exceeds the limit {EXACT_ENUMERATION_LIMIT}"
        )
    if isinstance(policy, _FactorizablePolicy):
        if env.reward_structure == "independence":
            return _exact_value_independence(env, policy, contexts)
        if env.reward_structure == "cascade":
            return _exact_value_cascade(env, policy, contexts)
        return _exact_value_standard(env, policy, contexts)
    return _exact_value_generic(env, policy, contexts)


def _exact_value_independence(env, policy, contexts) -> float:
    base = env.base_reward_matrix(contexts)
    probs = policy.slot_prob_rows(contexts)
    per_slot = np.sum(probs * sigmoid(base), axis=1)
    return float(np.mean(per_slot) * np.sum(env.alpha.values))


def _chunk_sizes(n_ctx: int, n_cols: int) -> list[slice]:
    step = max(1, _CHUNK_CELLS // max(1, n_cols))
    return [slice(i, min(i + step, n_ctx)) for i in range(0, n_ctx, step)]


def _exact_value_cascade(env, policy, contexts) -> float:
    """Exact value under the cascade structure by prefix enumeration.

    Slot l's mean reward depends only on the prefix a_{1:l}, so slot l
    contributes a sum over |A|^l prefixes instead of |A|^L slates.
    """
    A, L = env.n_actions, env.slate_size
    alpha = env.alpha.values
    scale = env.interaction_scale
    additive = env.interaction_kind == "additive"
    W = env.interaction_matrix
    total = 0.0
    for ctx_slice in _chunk_sizes(contexts.shape[0], A**L):
        X = contexts[ctx_slice]
        m = X.shape[0]
        base = env.base_reward_matrix(X)
        probs = policy.slot_prob_rows(X)
        prefixes = np.empty((1, 0), dtype=np.int64)
        pref_prob = np.ones((m, 1))
        chunk_value = np.zeros(m)
        for l in range(L):
            n_old = prefixes.shape[0]
            prefixes = np.hstack(
                [
                    np.repeat(prefixes, A, axis=0),
                    np.tile(np.arange(A, dtype=np.int64), n_old)[:, None],
                ]
            )
            pref_prob = (pref_prob[:, :, None] * probs[:, None, :]).reshape(m, n_old * A)
            last = prefixes[:, -1]
            args = base[:, last]
            if additive:
                c = np.zeros(prefixes.shape[0])
                for k in range(l):
                    c += W[prefixes[:, k], last]
                args = args + scale * c[None, :]
            else:
                for k in range(l):
                    decay = 1.0 / (l - k + 1)
                    args = args - scale * decay * base[:, prefixes[:, k]]
            chunk_value += alpha[l] * np.sum(pref_prob * sigmoid(args), axis=1)
        total += float(np.sum(chunk_value))
    return total / contexts.shape[0]


def _exact_value_standard(env, policy, contexts) -> float:
    A, L = env.n_actions, env.slate_size
    alpha = env.alpha.values
    scale = env.interaction_scale
    additive = env.interaction_kind == "additive"
    W = env.interaction_matrix
    slates = np.array(list(enumerate_slates(A, L)), dtype=np.int64)
    n_slates = slates.shape[0]
    if additive:
        # Context-free interaction offsets, one per (slate, slot).
        offsets = np.zeros((n_slates, L))
        for l in range(L):
            for k in range(L):
                if k != l:
                    offsets[:, l] += W[slates[:, k], slates[:, l]]
        offsets *= scale
    total = 0.0
    for ctx_slice in _chunk_sizes(contexts.shape[0], n_slates):
        X = contexts[ctx_slice]
        base = env.base_reward_matrix(X)
        probs = policy.slot_prob_rows(X)
        slate_prob = np.ones((X.shape[0], n_slates))
        for l in range(L):
            slate_prob *= probs[:, slates[:, l]]
        value = np.zeros(X.shape[0])
        for l in range(L):
            args = base[:, slates[:, l]]
            if additive:
                args = args + offsets[None, :, l]
            else:
                for k in range(L):
                    if k != l:
                        decay = 1.0 / (abs(k - l) + 1)
                        args = args - scale * decay * base[:, slates[:, k]]
            value += alpha[l] * np.sum(slate_prob * sigmoid(args), axis=1)
        total += float(np.sum(value))
    return total / contexts.shape[0]


def _exact_value_generic(env, policy, contexts) -> float:
    """Fallback for non-factorizable policies: per-context support loop."""
    alpha = env.alpha.values
    total = 0.0
    support = list(enumerate_slates(env.n_actions, env.slate_size, factorizable=False))
    for x in contexts:
        for slate in support:
            p = policy.slate_pmf(x, slate)
            if p == 0.0:
                continue
            total += p * float(alpha @ env.slot_mean_rewards(x, slate))
    return total / contexts.shape[0]


def _mc_policy_value(env, policy, contexts, mc_samples, rng) -> float:
    n_ctx = contexts.shape[0]
    total = 0.0
    for ctx_slice in _chunk_sizes(n_ctx, mc_samples * env.slate_size):
        X = contexts[ctx_slice]
        m = X.shape[0]
        if isinstance(policy, _FactorizablePolicy):
            rows = policy.slot_prob_rows(X)
            cum = np.cumsum(rows, axis=1)
            cum[:, -1] = 1.0
            u = rng.random((m, mc_samples, env.slate_size))
            slates = (u[:, :, :, None] > cum[:, None, None, :]).sum(axis=3)
            flat_slates = slates.reshape(m * mc_samples, env.slate_size)
            base = np.repeat(env.base_reward_matrix(X), mc_samples, axis=0)
            q = env._slot_means_from_base(base, flat_slates)
        else:
            flat_slates = np.array(
                [policy.sample_slate(x, rng) for x in X for _ in range(mc_samples)]
            )
            base = np.repeat(env.base_reward_matrix(X), mc_samples, axis=0)
            q = env._slot_means_from_base(base, flat_slates)
        total += float(np.sum(q @ env.alpha.values)) / mc_samples
    return total / n_ctx
