"""Baseline model for Cascade-DR: per-slot regressors fit backward.

Slot L is fit first on ``alpha_L * r_L``; each earlier slot l is then fit
on ``alpha_l * r_l`` plus the evaluation-policy expectation of the
already-fitted slot l+1 model. Fitting is weighted by the cumulative
importance weights ``w_{1:l}`` to mitigate the bias of learning under the
behavior policy's action distribution; no weight truncation is applied.

Features are the context concatenated with one-hot codes of the prefix
actions. The default learner is a depth-limited regression tree grown
with weighted variance reduction; a closed-form ridge regressor is
available as a deterministic alternative for tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from slate_ope.core import LoggedDataset
from slate_ope.estimators import BehaviorSource, compute_weight_profile
from slate_ope.policy import RankingPolicy

__all__ = [
    "ConstantQ",
    "FeatureEncoder",
    "LearnerConfig",
    "QModel",
    "RegressionTreeLearner",
    "RidgeLearner",
    "ZeroQ",
    "expected_q_under_policy",
    "fit_q_model",
    "make_learner",
    "predict_q",
]


@dataclass(frozen=True)
class FeatureEncoder:
    """Encodes (context, action prefix) pairs for the slot-l regressor.

    The output is the context followed by one one-hot block per prefix
    slot, so two distinct prefixes never collide. Output length is
    ``dim + slot_count * n_actions``.
    """

    dim: int
    n_actions: int
    slot_count: int

    @property
    def output_dim(self) -> int:
        return self.dim + self.slot_count * self.n_actions

    def encode(self, x: np.ndarray, prefix: Sequence[int]) -> np.ndarray:
        return self.encode_many(np.asarray(x, dtype=float)[None, :], np.asarray([prefix]))[0]

    def encode_many(self, contexts: np.ndarray, prefixes: np.ndarray) -> np.ndarray:
        contexts = np.asarray(contexts, dtype=float)
        prefixes = np.asarray(prefixes, dtype=np.int64)
        n = contexts.shape[0]
        if prefixes.shape != (n, self.slot_count):
            raise ValueError(f"prefixes must have shape {(n, self.slot_count)}, got {prefixes.shape}")
        out = np.zeros((n, self.output_dim))
        out[:, : self.dim] = contexts
        rows = np.arange(n)
        for l in range(self.slot_count):
            offset = self.dim + l * self.n_actions
            out[rows, offset + prefixes[:, l]] = 1.0
        return out


class RidgeLearner:
    """Weighted ridge regression with an unpenalized intercept."""

    def __init__(self, penalty: float = 1.0):
        if penalty < 0:
            raise ValueError("penalty must be non-negative")
        self.penalty = float(penalty)
        self.coef_: Optional[np.ndarray] = None

    def fit(self, features: np.ndarray, targets: np.ndarray, sample_weights: Optional[np.ndarray] = None):
        features = np.asarray(features, dtype=float)
        targets = np.asarray(targets, dtype=float)
        n, p = features.shape
        w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sample weights must be finite and non-negative")
        aug = np.hstack([features, np.ones((n, 1))])
        wx = aug * w[:, None]
        gram = aug.T @ wx
        reg = np.eye(p + 1) * self.penalty
        reg[p, p] = 0.0
        rhs = wx.T @ targets
        try:
            self.coef_ = np.linalg.solve(gram + reg, rhs)
        except np.linalg.LinAlgError:
            self.coef_ = np.linalg.pinv(gram + reg) @ rhs
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("learner is not fitted")
        features = np.asarray(features, dtype=float)
        return features @ self.coef_[:-1] + self.coef_[-1]


class RegressionTreeLearner:
    """Depth-limited CART regressor with weighted variance-reduction splits.

    Splits minimize the weighted sum of squared errors of the two
    children; both children must keep at least `min_samples_leaf`
    records. Ties break on the lowest feature index, so fitting is
    deterministic given the data.
    """

    def __init__(self, max_depth: int = 3, min_samples_leaf: int = 5):
        if max_depth < 0 or min_samples_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")
        self.max_depth = int(max_depth)
        self.min_samples_leaf = int(min_samples_leaf)
        # Flat arrays: feature < 0 marks a leaf holding `value`.
        self._feature: list[int] = []
        self._threshold: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._value: list[float] = []
        self._fitted = False

    def fit(self, features: np.ndarray, targets: np.ndarray, sample_weights: Optional[np.ndarray] = None):
        X = np.asarray(features, dtype=float)
        y = np.asarray(targets, dtype=float)
        n = X.shape[0]
        w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sample weights must be finite and non-negative")
        if np.sum(w) <= 0:
            w = np.ones(n)
        self._feature, self._threshold = [], []
        self._left, self._right, self._value = [], [], []
        self._build(X, y, w, depth=0)
        # Freeze to arrays so predict can walk all rows level by level.
        self._node_feature = np.array(self._feature, dtype=np.int64)
        self._node_threshold = np.array(self._threshold)
        self._node_left = np.array(self._left, dtype=np.int64)
        self._node_right = np.array(self._right, dtype=np.int64)
        self._node_value = np.array(self._value)
        self._fitted = True
        return self

    def _new_node(self) -> int:
        self._feature.append(-1)
        self._threshold.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._value.append(0.0)
        return len(self._feature) - 1

    def _build(self, X, y, w, depth) -> int:
        node = self._new_node()
        wsum = np.sum(w)
        mean = float(np.sum(w * y) / wsum) if wsum > 0 else float(np.mean(y))
        self._value[node] = mean
        if depth >= self.max_depth or X.shape[0] < 2 * self.min_samples_leaf:
            return node
        split = self._best_split(X, y, w)
        if split is None:
            return node
        feature, threshold = split
        mask = X[:, feature] <= threshold
        self._feature[node] = feature
        self._threshold[node] = threshold
        self._left[node] = self._build(X[mask], y[mask], w[mask], depth + 1)
        self._right[node] = self._build(X[~mask], y[~mask], w[~mask], depth + 1)
        return node

    def _best_split(self, X, y, w):
        n, p = X.shape
        best = None
        best_sse = np.inf
        for feature in range(p):
            order = np.argsort(X[:, feature], kind="stable")
            xs = X[order, feature]
            ys = y[order]
            ws = w[order]
            cw = np.cumsum(ws)
            cwy = np.cumsum(ws * ys)
            cwy2 = np.cumsum(ws * ys * ys)
            total_w, total_wy, total_wy2 = cw[-1], cwy[-1], cwy2[-1]
            # Candidate split after position i (left = [0..i]).
            idx = np.arange(n - 1)
            valid = (xs[idx] < xs[idx + 1]) & (idx + 1 >= self.min_samples_leaf)
            valid &= (n - idx - 1) >= self.min_samples_leaf
            valid &= cw[idx] > 0
            valid &= (total_w - cw[idx]) > 0
            if not np.any(valid):
                continue
            i = idx[valid]
            sse_left = cwy2[i] - cwy[i] ** 2 / cw[i]
            wr = total_w - cw[i]
            sse_right = (total_wy2 - cwy2[i]) - (total_wy - cwy[i]) ** 2 / wr
            sse = sse_left + sse_right
            j = int(np.argmin(sse))
            if sse[j] < best_sse - 1e-15:
                best_sse = sse[j]
                pos = i[j]
                best = (feature, float((xs[pos] + xs[pos + 1]) / 2.0))
        return best

    def predict(self, features: np.ndarray) -> np.ndarray:
        if not self._fitted:
            raise RuntimeError("learner is not fitted")
        X = np.asarray(features, dtype=float)
        node_of = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.max_depth):
            feats = self._node_feature[node_of]
            rows = np.nonzero(feats >= 0)[0]
            if rows.size == 0:
                break
            nodes = node_of[rows]
            go_left = X[rows, feats[rows]] <= self._node_threshold[nodes]
            node_of[rows] = np.where(go_left, self._node_left[nodes], self._node_right[nodes])
        return self._node_value[node_of]


@dataclass(frozen=True)
class LearnerConfig:
    """Configuration of the per-slot regressor."""

    kind: str = "tree"
    max_depth: int = 3
    min_samples_leaf: int = 5
    ridge_penalty: float = 1.0

    def __post_init__(self):
        if self.kind not in ("tree", "ridge"):
            raise ValueError(f"unknown learner kind: {self.kind!r}")


def make_learner(config: LearnerConfig):
    if config.kind == "tree":
        return RegressionTreeLearner(
            max_depth=config.max_depth, min_samples_leaf=config.min_samples_leaf
        )
    return RidgeLearner(penalty=config.ridge_penalty)


class ZeroQ:
    """Baseline that predicts zero everywhere (collapses Cascade-DR to RIPS)."""

    def predict_many(self, contexts, prefixes, rows=None) -> np.ndarray:
        return np.zeros(np.asarray(contexts).shape[0])


class ConstantQ:
    """Baseline that predicts the same constant for every slot and input."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict_many(self, contexts, prefixes, rows=None) -> np.ndarray:
        return np.full(np.asarray(contexts).shape[0], self.value)


@dataclass
class QModel:
    """Fitted per-slot baseline regressors.

    `learners[l]` predicts the slot-(l+1) baseline from a length-(l+1)
    prefix. With cross-fitting, `fold_learners[l][f]` was fit without
    fold f and `record_folds` maps training records to folds; passing
    ``rows`` to `predict_many` routes each record to the model that never
    saw it, while predictions for unseen inputs average the fold models.
    """

    encoders: list[FeatureEncoder]
    learners: Optional[list] = None
    fold_learners: Optional[list[list]] = None
    record_folds: Optional[np.ndarray] = None

    @property
    def slate_size(self) -> int:
        return len(self.encoders)

    def predict_many(self, contexts, prefixes, rows: Optional[np.ndarray] = None) -> np.ndarray:
        prefixes = np.asarray(prefixes, dtype=np.int64)
        slot_count = prefixes.shape[1]
        if not 1 <= slot_count <= self.slate_size:
            raise ValueError(f"prefix length must be in [1, {self.slate_size}]")
        features = self.encoders[slot_count - 1].encode_many(contexts, prefixes)
        if self.fold_learners is None:
            learner = self.learners[slot_count - 1]
            if learner is None:
                raise RuntimeError(f"slot {slot_count} has no trained learner")
            return learner.predict(features)
        models = self.fold_learners[slot_count - 1]
        if rows is not None:
            out = np.empty(features.shape[0])
            folds = self.record_folds[np.asarray(rows)]
            for f, model in enumerate(models):
                mask = folds == f
                if np.any(mask):
                    out[mask] = model.predict(features[mask])
            return out
        return np.mean([model.predict(features) for model in models], axis=0)


def predict_q(model: QModel, x: np.ndarray, prefix: Sequence[int]) -> float:
    """Baseline prediction for one (context, prefix) pair."""
    value = model.predict_many(np.asarray(x, dtype=float)[None, :], np.asarray([prefix]))[0]
    if not np.isfinite(value):
        raise ValueError("baseline prediction is not finite")
    return float(value)


def expected_q_under_policy(
    model: QModel, pi_e: RankingPolicy, x: np.ndarray, prefix: Sequence[int]
) -> float:
    """Exact ``E_{a'}[Qhat_l]`` over the evaluation policy's conditional pmf."""
    prefix = tuple(int(a) for a in prefix)
    cond = pi_e.conditional_pmf(x, prefix)
    return float(
        sum(cond[a] * predict_q(model, x, prefix + (a,)) for a in range(pi_e.n_actions))
    )


def fit_q_model(
    dataset: LoggedDataset,
    pi_e: RankingPolicy,
    pi_b_source: BehaviorSource = None,
    learner_config: Optional[LearnerConfig] = None,
    cross_fit: int = 0,
) -> QModel:
    """Fit the baseline by backward recursion over slots.

    For l = L down to 1 the regression target is
    ``alpha_l * r_l + E_{a'}[Qhat_{l+1}(x, a_{1:l}, a')]`` (zero beyond
    the last slot) and the fit is weighted by ``w_{1:l}``. With
    ``cross_fit = k >= 2``, every record's target and prediction come
    only from models fit on the other folds.
    """
    config = LearnerConfig() if learner_config is None else learner_config
    wp = compute_weight_profile(dataset, pi_e, pi_b_source)
    n, L = dataset.slates.shape
    alpha = dataset.alpha.values
    X = dataset.contexts
    encoders = [
        FeatureEncoder(dim=dataset.dim, n_actions=dataset.n_actions, slot_count=l + 1)
        for l in range(L)
    ]
    k = int(cross_fit)
    if k in (0, 1):
        return _fit_plain(dataset, pi_e, wp, config, encoders)
    if k < 2 or k > n:
        raise ValueError(f"cross_fit must be 0 or in [2, n], got {cross_fit}")
    folds = np.arange(n) % k
    fold_sizes = np.bincount(folds, minlength=k)
    if np.any(fold_sizes < 1):
        raise ValueError("degenerate fold sizes")
    fold_learners: list[list] = [[] for _ in range(L)]
    eq_next = np.zeros(n)
    for l in range(L - 1, -1, -1):
        features = encoders[l].encode_many(X, dataset.slates[:, : l + 1])
        targets = alpha[l] * dataset.rewards[:, l] + eq_next
        for f in range(k):
            train = folds != f
            learner = make_learner(config)
            learner.fit(features[train], targets[train], wp.cumulative[train, l])
            fold_learners[l].append(learner)
        if l > 0:
            eq_next = _expected_next(
                dataset, pi_e, fold_learners[l], encoders[l], l, folds=folds
            )
    return QModel(encoders=encoders, fold_learners=fold_learners, record_folds=folds)


def _fit_plain(dataset, pi_e, wp, config, encoders) -> QModel:
    n, L = dataset.slates.shape
    alpha = dataset.alpha.values
    X = dataset.contexts
    learners = [None] * L
    eq_next = np.zeros(n)
    for l in range(L - 1, -1, -1):
        features = encoders[l].encode_many(X, dataset.slates[:, : l + 1])
        targets = alpha[l] * dataset.rewards[:, l] + eq_next
        learner = make_learner(config)
        learner.fit(features, targets, wp.cumulative[:, l])
        learners[l] = learner
        if l > 0:
            eq_next = _expected_next(dataset, pi_e, learner, encoders[l], l)
    return QModel(encoders=encoders, learners=learners)


def _expected_next(dataset, pi_e, learner_or_models, encoder, l, folds=None) -> np.ndarray:
    """``E_{a'}[Qhat_{l+1}(x, a_{1:l}, a')]`` for every record (0-based slot l)."""
    n = dataset.n
    cond = pi_e.conditional_prob_matrix(dataset.contexts, dataset.slates[:, :l])
    out = np.zeros(n)
    for a in range(dataset.n_actions):
        prefix = np.hstack([dataset.slates[:, :l], np.full((n, 1), a, dtype=np.int64)])
        features = encoder.encode_many(dataset.contexts, prefix)
        if folds is None:
            preds = learner_or_models.predict(features)
        else:
            preds = np.empty(n)
            for f, model in enumerate(learner_or_models):
                mask = folds == f
                preds[mask] = model.predict(features[mask])
        out += cond[:, a] * preds
    return out
