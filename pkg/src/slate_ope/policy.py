"""Ranking policies: distributions over slates given a context.

Two families are provided. *Factorizable* policies pick each slot's item
independently given the context (duplicates allowed), so the slate
probability is a product of identical per-slot probabilities. The
*Plackett-Luce* policy samples without replacement, renormalizing scores
over the remaining actions, and never produces duplicates.

All policies are immutable and safe to share across workers; sampling
takes a caller-supplied ``numpy.random.Generator``.
"""

from __future__ import annotations

import itertools
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "FactorizableSoftmaxPolicy",
    "LinearScorer",
    "PlackettLucePolicy",
    "RankingPolicy",
    "UniformPolicy",
    "load_policy",
    "make_behavior_policy",
    "make_evaluation_policy",
    "policy_from_dict",
    "policy_to_dict",
    "save_policy",
]

# Exact Plackett-Luce marginals are enumerated up to this many slates;
# larger instances fall back to Monte Carlo.
ENUMERATION_LIMIT = 10**6
MARGINAL_MC_SAMPLES = 10**5


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-logit subtraction)."""
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass(frozen=True)
class LinearScorer:
    """Per-action linear score ``theta_a . x + b_a``.

    Attributes
    ----------
    theta:
        (n_actions, d) coefficient matrix.
    bias:
        (n_actions,) bias vector.
    """

    theta: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        bias = np.asarray(self.bias, dtype=float)
        if theta.ndim != 2:
            raise ValueError("theta must be an (n_actions, d) matrix")
        if bias.shape != (theta.shape[0],):
            raise ValueError("bias must have one entry per action")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(bias))):
            raise ValueError("scorer parameters must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "bias", bias)

    @property
    def n_actions(self) -> int:
        return self.theta.shape[0]

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    def scores(self, x: np.ndarray) -> np.ndarray:
        """(n_actions,) scores for one context."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"context must have dimension {self.dim}, got shape {x.shape}")
        return self.theta @ x + self.bias

    def score_matrix(self, contexts: np.ndarray) -> np.ndarray:
        """(n, n_actions) scores for a batch of contexts."""
        contexts = np.asarray(contexts, dtype=float)
        if contexts.ndim != 2 or contexts.shape[1] != self.dim:
            raise ValueError(f"contexts must be (n, {self.dim})")
        return contexts @ self.theta.T + self.bias


class RankingPolicy(ABC):
    """Common interface of slate policies.

    Slots are 0-based everywhere in this API. `conditional_pmf` is the
    distribution of the next slot's action given the actions already
    placed; for factorizable policies it does not depend on the prefix.
    """

    n_actions: int
    slate_size: int

    @abstractmethod
    def conditional_pmf(self, x: np.ndarray, prefix: Sequence[int]) -> np.ndarray:
        """(n_actions,) pmf of the action at slot ``len(prefix)`` given `prefix`."""

    @abstractmethod
    def sample_slate(self, x: np.ndarray, rng: np.random.Generator) -> tuple[int, ...]:
        """Draw one slate; deterministic given the generator state."""

    def slot_pmf(self, x: np.ndarray) -> np.ndarray:
        """(slate_size, n_actions) matrix of marginal per-slot pmfs."""
        return np.stack([self.marginal_slot_pmf(x, l) for l in range(self.slate_size)])

    def slate_pmf(self, x: np.ndarray, slate: Sequence[int]) -> float:
        """Probability of the full slate, as the product of conditionals."""
        slate = tuple(int(a) for a in slate)
        if len(slate) != self.slate_size:
            raise ValueError(f"slate must have {self.slate_size} slots")
        p = 1.0
        for l, a in enumerate(slate):
            p *= float(self.conditional_pmf(x, slate[:l])[a])
        return p

    @abstractmethod
    def marginal_slot_pmf(self, x: np.ndarray, slot: int) -> np.ndarray:
        """(n_actions,) marginal pmf of the action shown at `slot`."""

    # Batch hooks used by the estimators; subclasses override the generic
    # per-record loops where a vectorized path exists.

    def conditional_prob_matrix(self, contexts: np.ndarray, prefixes: np.ndarray) -> np.ndarray:
        """(n, n_actions) conditional pmfs for per-record prefixes."""
        return np.stack(
            [self.conditional_pmf(x, tuple(pref)) for x, pref in zip(contexts, prefixes)]
        )

    def action_prob_matrix(self, contexts: np.ndarray, slates: np.ndarray) -> np.ndarray:
        """(n, L) conditional probabilities of each logged action given its prefix."""
        n, L = slates.shape
        out = np.empty((n, L))
        for i in range(n):
            slate = tuple(int(a) for a in slates[i])
            for l in range(L):
                out[i, l] = self.conditional_pmf(contexts[i], slate[:l])[slate[l]]
        return out

    def marginal_prob_matrix(self, contexts: np.ndarray, slates: np.ndarray) -> np.ndarray:
        """(n, L) marginal slot probabilities of the logged actions."""
        n, L = slates.shape
        out = np.empty((n, L))
        for i in range(n):
            for l in range(L):
                out[i, l] = self.marginal_slot_pmf(contexts[i], l)[slates[i, l]]
        return out


class _FactorizablePolicy(RankingPolicy):
    """Shared machinery for policies whose slots are i.i.d. given context."""

    def slot_prob_row(self, x: np.ndarray) -> np.ndarray:
        """(n_actions,) per-slot pmf; identical across slots."""
        raise NotImplementedError

    def slot_prob_rows(self, contexts: np.ndarray) -> np.ndarray:
        """(n, n_actions) per-slot pmfs for a batch of contexts."""
        raise NotImplementedError

    def conditional_pmf(self, x: np.ndarray, prefix: Sequence[int]) -> np.ndarray:
        if len(prefix) >= self.slate_size:
            raise ValueError("prefix must be shorter than the slate")
        return self.slot_prob_row(x)

    def marginal_slot_pmf(self, x: np.ndarray, slot: int) -> np.ndarray:
        if not 0 <= slot < self.slate_size:
            raise ValueError(f"slot must be in [0, {self.slate_size})")
        return self.slot_prob_row(x)

    def slate_pmf(self, x: np.ndarray, slate: Sequence[int]) -> float:
        slate = np.asarray(slate, dtype=np.int64)
        if slate.shape != (self.slate_size,):
            raise ValueError(f"slate must have {self.slate_size} slots")
        row = self.slot_prob_row(x)
        return float(np.prod(row[slate]))

    def sample_slate(self, x: np.ndarray, rng: np.random.Generator) -> tuple[int, ...]:
        row = self.slot_prob_row(x)
        draws = rng.choice(self.n_actions, size=self.slate_size, p=row)
        return tuple(int(a) for a in draws)

    def sample_slates(self, contexts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """(n, L) slates drawn independently per record via inverse CDF."""
        rows = self.slot_prob_rows(contexts)
        cum = np.cumsum(rows, axis=1)
        cum[:, -1] = 1.0
        u = rng.random((contexts.shape[0], self.slate_size))
        return (u[:, :, None] > cum[:, None, :]).sum(axis=2).astype(np.int64)

    def conditional_prob_matrix(self, contexts: np.ndarray, prefixes: np.ndarray) -> np.ndarray:
        return self.slot_prob_rows(contexts)

    def action_prob_matrix(self, contexts: np.ndarray, slates: np.ndarray) -> np.ndarray:
        rows = self.slot_prob_rows(contexts)
        return np.take_along_axis(rows, slates, axis=1)

    def marginal_prob_matrix(self, contexts: np.ndarray, slates: np.ndarray) -> np.ndarray:
        return self.action_prob_matrix(contexts, slates)


class FactorizableSoftmaxPolicy(_FactorizablePolicy):
    """Softmax over linear scores, applied independently at every slot.

    The per-slot logits are ``logit_scale * f(x, a) + logit_offset``. The
    additive offset cannot change a softmax output; it is kept so that the
    similarity-transformed evaluation policy can be written down exactly
    as configured, and the invariance is covered by a regression test.
    """

    def __init__(
        self,
        scorer: LinearScorer,
        slate_size: int,
        logit_scale: float = 1.0,
        logit_offset: float = 0.0,
    ):
        if slate_size < 1:
            raise ValueError("slate_size must be positive")
        self.scorer = scorer
        self.slate_size = int(slate_size)
        self.logit_scale = float(logit_scale)
        self.logit_offset = float(logit_offset)
        self.n_actions = scorer.n_actions

    def slot_prob_row(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logit_scale * self.scorer.scores(x) + self.logit_offset)

    def slot_prob_rows(self, contexts: np.ndarray) -> np.ndarray:
        return softmax(self.logit_scale * self.scorer.score_matrix(contexts) + self.logit_offset, axis=1)


class UniformPolicy(_FactorizablePolicy):
    """Uniform random factorizable policy: every slot pmf is ``1 / n_actions``."""

    def __init__(self, n_actions: int, slate_size: int):
        if n_actions < 1 or slate_size < 1:
            raise ValueError("n_actions and slate_size must be positive")
        self.n_actions = int(n_actions)
        self.slate_size = int(slate_size)

    def slot_prob_row(self, x: np.ndarray) -> np.ndarray:
        return np.full(self.n_actions, 1.0 / self.n_actions)

    def slot_prob_rows(self, contexts: np.ndarray) -> np.ndarray:
        return np.full((contexts.shape[0], self.n_actions), 1.0 / self.n_actions)


class PlackettLucePolicy(RankingPolicy):
    """Sequential sampling without replacement over softmax scores.

    The conditional pmf at slot ``l`` zeroes out the prefix actions and
    renormalizes the remaining softmax weights, so sampled slates never
    contain duplicates. Querying `slate_pmf` with a duplicated slate
    returns probability zero rather than raising.
    """

    def __init__(self, scorer: LinearScorer, slate_size: int):
        if slate_size < 1 or slate_size > scorer.n_actions:
            raise ValueError("slate_size must be in [1, n_actions] for sampling without replacement")
        self.scorer = scorer
        self.slate_size = int(slate_size)
        self.n_actions = scorer.n_actions

    def conditional_pmf(self, x: np.ndarray, prefix: Sequence[int]) -> np.ndarray:
        prefix = tuple(int(a) for a in prefix)
        if len(prefix) >= self.slate_size:
            raise ValueError("prefix must be shorter than the slate")
        weights = softmax(self.scorer.scores(x))
        weights[list(prefix)] = 0.0
        total = weights.sum()
        if total <= 0:
            raise ValueError("prefix exhausts the action set")
        return weights / total

    def slate_pmf(self, x: np.ndarray, slate: Sequence[int]) -> float:
        slate = tuple(int(a) for a in slate)
        if len(slate) != self.slate_size:
            raise ValueError(f"slate must have {self.slate_size} slots")
        if len(set(slate)) != len(slate):
            return 0.0
        return super().slate_pmf(x, slate)

    def marginal_slot_pmf(self, x: np.ndarray, slot: int) -> np.ndarray:
        if not 0 <= slot < self.slate_size:
            raise ValueError(f"slot must be in [0, {self.slate_size})")
        if self.n_actions**self.slate_size <= ENUMERATION_LIMIT:
            return self._marginal_by_enumeration(x, slot)
        return self._marginal_by_sampling(x, slot)

    def _marginal_by_enumeration(self, x: np.ndarray, slot: int) -> np.ndarray:
        weights = softmax(self.scorer.scores(x))
        out = np.zeros(self.n_actions)
        # Accumulate probability of each (slot + 1)-permutation prefix.
        stack = [((), 1.0)]
        for depth in range(slot + 1):
            nxt = []
            for prefix, p in stack:
                w = weights.copy()
                w[list(prefix)] = 0.0
                w /= w.sum()
                for a in range(self.n_actions):
                    if w[a] == 0.0:
                        continue
                    if depth == slot:
                        out[a] += p * w[a]
                    else:
                        nxt.append((prefix + (a,), p * w[a]))
            stack = nxt
        return out

    def _marginal_by_sampling(self, x: np.ndarray, slot: int) -> np.ndarray:
        rng = np.random.default_rng(0)
        counts = np.zeros(self.n_actions)
        for _ in range(MARGINAL_MC_SAMPLES):
            counts[self.sample_slate(x, rng)[slot]] += 1
        return counts / MARGINAL_MC_SAMPLES

    def sample_slate(self, x: np.ndarray, rng: np.random.Generator) -> tuple[int, ...]:
        weights = softmax(self.scorer.scores(x))
        slate = []
        for _ in range(self.slate_size):
            w = weights.copy()
            w[slate] = 0.0
            w /= w.sum()
            slate.append(int(rng.choice(self.n_actions, p=w)))
        return tuple(slate)


def make_behavior_policy(
    dim: int, n_actions: int, slate_size: int, rng: np.random.Generator
) -> FactorizableSoftmaxPolicy:
    """Random behavior policy: scorer entries i.i.d. uniform on [0, 1)."""
    if dim < 1 or n_actions < 1 or slate_size < 1:
        raise ValueError("dim, n_actions, and slate_size must be positive")
    scorer = LinearScorer(
        theta=rng.random((n_actions, dim)),
        bias=rng.random(n_actions),
    )
    return FactorizableSoftmaxPolicy(scorer, slate_size=slate_size)


def make_evaluation_policy(
    behavior: FactorizableSoftmaxPolicy, lam: float
) -> FactorizableSoftmaxPolicy:
    """Similarity-transformed evaluation policy.

    Reuses the behavior policy's scorer with logits
    ``lam * f(x, a) + (1 - |lam|)``. ``lam = 0`` gives the uniform random
    policy; values near 1 approach the behavior policy and negative
    values reverse its preference order.
    """
    if not -1.0 <= lam < 1.0:
        raise ValueError(f"lam must lie in [-1, 1), got {lam}")
    return FactorizableSoftmaxPolicy(
        scorer=behavior.scorer,
        slate_size=behavior.slate_size,
        logit_scale=lam,
        logit_offset=1.0 - abs(lam),
    )


def policy_to_dict(policy: RankingPolicy) -> dict:
    """Serializable description of a policy (inverse of `policy_from_dict`)."""
    if isinstance(policy, UniformPolicy):
        return {
            "kind": "uniform",
            "n_actions": policy.n_actions,
            "slate_size": policy.slate_size,
        }
    if isinstance(policy, FactorizableSoftmaxPolicy):
        return {
            "kind": "factorizable_softmax",
            "theta": policy.scorer.theta.tolist(),
            "bias": policy.scorer.bias.tolist(),
            "logit_scale": policy.logit_scale,
            "logit_offset": policy.logit_offset,
            "slate_size": policy.slate_size,
        }
    if isinstance(policy, PlackettLucePolicy):
        return {
            "kind": "plackett_luce",
            "theta": policy.scorer.theta.tolist(),
            "bias": policy.scorer.bias.tolist(),
            "slate_size": policy.slate_size,
        }
    raise TypeError(f"cannot serialize policy of type {type(policy).__name__}")


def policy_from_dict(data: dict) -> RankingPolicy:
    kind = data.get("kind")
    if kind == "uniform":
        return UniformPolicy(n_actions=data["n_actions"], slate_size=data["slate_size"])
    if kind == "factorizable_softmax":
        scorer = LinearScorer(theta=np.array(data["theta"]), bias=np.array(data["bias"]))
        return FactorizableSoftmaxPolicy(
            scorer,
            slate_size=data["slate_size"],
            logit_scale=data.get("logit_scale", 1.0),
            logit_offset=data.get("logit_offset", 0.0),
        )
    if kind == "plackett_luce":
        scorer = LinearScorer(theta=np.array(data["theta"]), bias=np.array(data["bias"]))
        return PlackettLucePolicy(scorer, slate_size=data["slate_size"])
    raise ValueError(f"unknown policy kind: {kind!r}")


def save_policy(policy: RankingPolicy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(policy), fh, indent=2)
        fh.write("\n")


def load_policy(path) -> RankingPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))


def enumerate_slates(n_actions: int, slate_size: int, factorizable: bool = True):
    """Iterator over the slate support: products or L-permutations."""
    if factorizable:
        return itertools.product(range(n_actions), repeat=slate_size)
    return itertools.permutations(range(n_actions), slate_size)
