"""Domain types shared across the toolkit.

A *slate* is an ordered list of ``L`` action indices shown together (a
ranking). Each slot ``l`` yields its own reward ``r_l``, and the
slate-level reward is the weighted sum ``sum_l alpha_l * r_l``. Slots are
1-based in documentation and 0-based in code.

Contexts are plain one-dimensional ``numpy`` arrays; the richer types in
this module exist to keep datasets internally consistent (shared slate
size, feature dimension, and action-space size).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "AlphaWeights",
    "LoggedDataset",
    "LoggedRecord",
    "make_alpha_weights",
    "slate_reward",
]


class AlphaWeights:
    """Non-negative per-slot weights defining the slate-level reward.

    With all weights equal to 1 the slate reward is the plain sum of slot
    rewards; with ``1 / log2(l + 1)`` it is the DCG metric.
    """

    def __init__(self, weights: Sequence[float]):
        values = np.asarray(weights, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("alpha weights must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)):
            raise ValueError("alpha weights must be finite")
        if np.any(values < 0):
            raise ValueError("alpha weights must be non-negative")
        values = values.copy()
        values.flags.writeable = False
        self._values = values

    @property
    def values(self) -> np.ndarray:
        """Read-only array of the L slot weights."""
        return self._values

    def __len__(self) -> int:
        return self._values.size

    def __getitem__(self, index):
        return self._values[index]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._values, dtype=dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlphaWeights):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __repr__(self) -> str:
        return f"AlphaWeights({self._values.tolist()})"


def make_alpha_weights(kind: str, slate_size: int, values: Optional[Sequence[float]] = None) -> AlphaWeights:
    """Build slot weights of the requested kind.

    Parameters
    ----------
    kind:
        One of ``"uniform"`` (all ones), ``"dcg"`` (``1 / log2(l + 1)``
        with 1-based slot ``l``), or ``"custom"`` (copy of `values`).
    slate_size:
        Number of slots L; must be positive.
    values:
        Required for ``kind="custom"``; length must equal `slate_size`.
    """
    if slate_size < 1:
        raise ValueError(f"slate_size must be positive, got {slate_size}")
    if kind == "uniform":
        return AlphaWeights(np.ones(slate_size))
    if kind == "dcg":
        slots = np.arange(1, slate_size + 1)
        return AlphaWeights(1.0 / np.log2(slots + 1))
    if kind == "custom":
        if values is None:
            raise ValueError("custom alpha weights require explicit values")
        if len(values) != slate_size:
            raise ValueError(f"expected {slate_size} custom weights, got {len(values)}")
        return AlphaWeights(values)
    raise ValueError(f"unknown alpha kind: {kind!r}")


def slate_reward(rewards: Sequence[float], alpha: AlphaWeights) -> float:
    """Weighted sum of slot-level rewards, ``sum_l alpha_l * r_l``."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size != len(alpha):
        raise ValueError(f"reward vector length {r.size} does not match {len(alpha)} slot weights")
    return float(r @ alpha.values)


def _as_context(context: Sequence[float]) -> np.ndarray:
    x = np.asarray(context, dtype=float)
    if x.ndim != 1:
        raise ValueError("context must be a 1-d vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("context entries must be finite")
    return x


@dataclass(frozen=True)
class LoggedRecord:
    """One logged interaction: context, chosen slate, observed slot rewards.

    `propensities`, when present, holds the behavior policy's per-slot
    conditional probabilities ``pi_b(a_l | x, a_{1:l-1})`` of the logged
    actions; each must lie in (0, 1].
    """

    context: np.ndarray
    slate: tuple[int, ...]
    rewards: np.ndarray
    propensities: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "context", _as_context(self.context))
        slate = tuple(int(a) for a in self.slate)
        if len(slate) < 1:
            raise ValueError("slate must contain at least one slot")
        if any(a < 0 for a in slate):
            raise ValueError("slate entries must be non-negative action indices")
        object.__setattr__(self, "slate", slate)
        rewards = np.asarray(self.rewards, dtype=float)
        if rewards.shape != (len(slate),):
            raise ValueError(f"expected {len(slate)} slot rewards, got shape {rewards.shape}")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("slot rewards must be finite")
        object.__setattr__(self, "rewards", rewards)
        if self.propensities is not None:
            p = np.asarray(self.propensities, dtype=float)
            if p.shape != (len(slate),):
                raise ValueError(f"expected {len(slate)} propensities, got shape {p.shape}")
            if np.any(p <= 0) or np.any(p > 1):
                raise ValueError("logged propensities must lie in (0, 1]")
            object.__setattr__(self, "propensities", p)


@dataclass
class LoggedDataset:
    """A logged bandit dataset of n records sharing L, d, and |A|.

    Internally the records are stored as dense arrays so estimators can
    operate vectorized; the `records` iterator reconstructs per-record
    views. All arrays are treated as immutable after construction.

    Attributes
    ----------
    contexts:
        (n, d) context matrix.
    slates:
        (n, L) integer matrix of chosen action indices.
    rewards:
        (n, L) slot-level reward matrix.
    n_actions:
        Size of the action set; slate entries must lie in [0, n_actions).
    alpha:
        Slot weights defining the slate-level reward.
    propensities:
        Optional (n, L) matrix of logged behavior propensities.
    """

    contexts: np.ndarray
    slates: np.ndarray
    rewards: np.ndarray
    n_actions: int
    alpha: AlphaWeights
    propensities: Optional[np.ndarray] = None

    def __post_init__(self):
        self.contexts = np.asarray(self.contexts, dtype=float)
        self.slates = np.asarray(self.slates, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if self.contexts.ndim != 2 or self.contexts.shape[0] < 1:
            raise ValueError("contexts must be a non-empty (n, d) matrix")
        n = self.contexts.shape[0]
        if self.slates.ndim != 2 or self.slates.shape[0] != n:
            raise ValueError("slates must be an (n, L) matrix matching contexts")
        L = self.slates.shape[1]
        if self.rewards.shape != (n, L):
            raise ValueError(f"rewards must have shape {(n, L)}, got {self.rewards.shape}")
        if not np.all(np.isfinite(self.contexts)) or not np.all(np.isfinite(self.rewards)):
            raise ValueError("contexts and rewards must be finite")
        if self.n_actions < 1:
            raise ValueError("n_actions must be positive")
        if np.any(self.slates < 0) or np.any(self.slates >= self.n_actions):
            raise ValueError("slate entries must be valid action indices in [0, n_actions)")
        if len(self.alpha) != L:
            raise ValueError(f"alpha has {len(self.alpha)} weights but slate size is {L}")
        if self.propensities is not None:
            self.propensities = np.asarray(self.propensities, dtype=float)
            if self.propensities.shape != (n, L):
                raise ValueError(f"propensities must have shape {(n, L)}")
            if np.any(self.propensities <= 0) or np.any(self.propensities > 1):
                raise ValueError("logged propensities must lie in (0, 1]")
        for arr in (self.contexts, self.slates, self.rewards, self.propensities):
            if arr is not None:
                arr.flags.writeable = False

    @classmethod
    def from_records(
        cls, records: Sequence[LoggedRecord], n_actions: int, alpha: AlphaWeights
    ) -> "LoggedDataset":
        """Assemble a dataset from per-record objects, validating consistency."""
        if len(records) < 1:
            raise ValueError("a dataset needs at least one record")
        d = records[0].context.size
        L = len(records[0].slate)
        for i, rec in enumerate(records):
            if rec.context.size != d:
                raise ValueError(f"record {i} has context dimension {rec.context.size}, expected {d}")
            if len(rec.slate) != L:
                raise ValueError(f"record {i} has slate size {len(rec.slate)}, expected {L}")
        have_props = [rec.propensities is not None for rec in records]
        if any(have_props) and not all(have_props):
            raise ValueError("either all records carry propensities or none do")
        props = np.stack([rec.propensities for rec in records]) if all(have_props) else None
        return cls(
            contexts=np.stack([rec.context for rec in records]),
            slates=np.array([rec.slate for rec in records]),
            rewards=np.stack([rec.rewards for rec in records]),
            n_actions=n_actions,
            alpha=alpha,
            propensities=props,
        )

    @property
    def n(self) -> int:
        return self.contexts.shape[0]

    @property
    def slate_size(self) -> int:
        return self.slates.shape[1]

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    @property
    def records(self) -> Iterator[LoggedRecord]:
        for i in range(self.n):
            yield LoggedRecord(
                context=self.contexts[i],
                slate=tuple(self.slates[i]),
                rewards=self.rewards[i],
                propensities=None if self.propensities is None else self.propensities[i],
            )

    def slate_rewards(self) -> np.ndarray:
        """(n,) vector of slate-level rewards ``sum_l alpha_l * r_l``."""
        return self.rewards @ self.alpha.values

    def subset(self, index: np.ndarray) -> "LoggedDataset":
        """Dataset restricted to the given record indices (used by bootstrap)."""
        index = np.asarray(index)
        return LoggedDataset(
            contexts=self.contexts[index],
            slates=self.slates[index],
            rewards=self.rewards[index],
            n_actions=self.n_actions,
            alpha=self.alpha,
            propensities=None if self.propensities is None else self.propensities[index],
        )
