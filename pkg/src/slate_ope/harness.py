"""Experiment orchestration: randomized-configuration protocol, MSE
aggregation, bootstrap evaluation of external logged data, and file I/O.

Each random seed samples one experimental configuration (data size, slate
size, reward structure, interaction kind, policy similarity), builds the
environment and policies, generates a dataset, and records the squared
error of every estimator against the enumerated ground-truth policy
value. Sweep modes iterate one variable over its grid while sampling the
companions once per seed, so the ground truth is shared across the grid
where the configuration allows it.

Seeds are independent work units; set ``SLATE_OPE_THREADS`` to run them
in a process pool. Results are ordered by seed before writing, so the
output is scheduler-independent and byte-identical across reruns.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from slate_ope.core import AlphaWeights, LoggedDataset, make_alpha_weights
from slate_ope.estimators import ESTIMATORS
from slate_ope.policy import RankingPolicy, make_behavior_policy, make_evaluation_policy
from slate_ope.regression import LearnerConfig, fit_q_model
from slate_ope.synth import (
    INTERACTION_KINDS,
    REWARD_STRUCTURES,
    generate_dataset,
    make_synthetic_env,
    true_policy_value,
)

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "ResultRow",
    "aggregate_mse",
    "bootstrap_evaluate",
    "load_dataset",
    "read_rows_csv",
    "run_experiment",
    "save_dataset",
    "write_rows_csv",
]

CSV_HEADER = [
    "seed",
    "n",
    "L",
    "reward_structure",
    "interaction",
    "lambda",
    "estimator",
    "estimate",
    "ground_truth",
    "squared_error",
]

SWEEP_MODES = ("sweep_n", "sweep_L", "sweep_lambda", "full_random")

# Salts for per-seed random streams, so environment, ground-truth
# contexts, and dataset draws are independent but reproducible.
_ENV_SALT = 11
_GT_SALT = 13
_DATA_SALT = 17


@dataclass(frozen=True)
class ExperimentConfig:
    """Grids and defaults of the synthetic experiment.

    The default grids match the synthetic-experiment configuration table:
    five data sizes, slate sizes 3..7, three reward structures, two
    interaction kinds, and nine policy-similarity values.
    """

    n_grid: tuple[int, ...] = (250, 500, 1000, 2000, 4000)
    slate_grid: tuple[int, ...] = (3, 4, 5, 6, 7)
    reward_structures: tuple[str, ...] = REWARD_STRUCTURES
    interaction_kinds: tuple[str, ...] = INTERACTION_KINDS
    lambda_grid: tuple[float, ...] = (-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8)
    n_actions: int = 5
    dim: int = 5
    alpha_kind: str = "uniform"
    estimators: tuple[str, ...] = ("ips", "iips", "rips", "cascade_dr")
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    cross_fit: int = 0
    n_seeds: int = 1000
    ground_truth_contexts: int = 2000
    ground_truth_mode: str = "exact"
    ground_truth_mc_samples: int = 10**4

    def __post_init__(self):
        for name in ("n_grid", "slate_grid", "reward_structures", "interaction_kinds", "lambda_grid", "estimators"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be non-empty")
        for est in self.estimators:
            if est not in ESTIMATORS:
                raise ValueError(f"unknown estimator: {est!r}")
        if self.ground_truth_mode not in ("exact", "monte_carlo"):
            raise ValueError(f"unknown ground-truth mode: {self.ground_truth_mode!r}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["learner"] = asdict(self.learner)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "learner" in data and isinstance(data["learner"], dict):
            data["learner"] = LearnerConfig(**data["learner"])
        for key in ("n_grid", "slate_grid", "reward_structures", "interaction_kinds", "lambda_grid", "estimators"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ResultRow:
    """One (seed, configuration, estimator) outcome."""

    seed: int
    n: int
    slate_size: int
    reward_structure: str
    interaction: str
    lam: float
    estimator: str
    estimate: float
    ground_truth: float
    squared_error: float


def _sample_points(config: ExperimentConfig, seed: int, mode: str) -> list[tuple]:
    """Deterministic (n, L, F, G, lambda) points for one seed.

    All five components are always drawn, in a fixed order, from a
    generator seeded only by `seed`; sweep modes then override the swept
    variable with its grid and pin its companion per the study design
    (L=5 when sweeping n; n=1000 when sweeping L or lambda).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.choice(config.n_grid))
    L = int(rng.choice(config.slate_grid))
    structure = str(rng.choice(config.reward_structures))
    interaction = str(rng.choice(config.interaction_kinds))
    lam = float(rng.choice(config.lambda_grid))
    if mode == "full_random":
        return [(n, L, structure, interaction, lam)]
    if mode == "sweep_n":
        return [(int(g), 5, structure, interaction, lam) for g in config.n_grid]
    if mode == "sweep_L":
        return [(1000, int(g), structure, interaction, lam) for g in config.slate_grid]
    if mode == "sweep_lambda":
        return [(1000, L, structure, interaction, float(g)) for g in config.lambda_grid]
    raise ValueError(f"unknown mode: {mode!r} (expected one of {SWEEP_MODES})")


def _run_seed(config: ExperimentConfig, seed: int, mode: str) -> list[ResultRow]:
    rows: list[ResultRow] = []
    setup_cache: dict = {}
    for n, L, structure, interaction, lam in _sample_points(config, seed, mode):
        key = (L, structure, interaction, lam)
        if key not in setup_cache:
            s_idx = REWARD_STRUCTURES.index(structure)
            i_idx = INTERACTION_KINDS.index(interaction)
            env_rng = np.random.default_rng([seed, _ENV_SALT, L, s_idx, i_idx])
            env = make_synthetic_env(
                slate_size=L,
                dim=config.dim,
                n_actions=config.n_actions,
                reward_structure=structure,
                interaction_kind=interaction,
                alpha=make_alpha_weights(config.alpha_kind, L),
                rng=env_rng,
            )
            behavior = make_behavior_policy(config.dim, config.n_actions, L, env_rng)
            pi_e = make_evaluation_policy(behavior, lam)
            gt_rng = np.random.default_rng([seed, _GT_SALT, L, s_idx, i_idx])
            gt_contexts = env.sample_contexts(config.ground_truth_contexts, gt_rng)
            truth = true_policy_value(
                env,
                pi_e,
                gt_contexts,
                mode=config.ground_truth_mode,
                mc_samples=config.ground_truth_mc_samples,
                rng=gt_rng,
            )
            setup_cache[key] = (env, behavior, pi_e, truth)
        env, behavior, pi_e, truth = setup_cache[key]
        data_rng = np.random.default_rng([seed, _DATA_SALT, n, L])
        dataset = generate_dataset(env, behavior, n, data_rng)
        q_model = None
        if "cascade_dr" in config.estimators:
            q_model = fit_q_model(
                dataset, pi_e, behavior, learner_config=config.learner, cross_fit=config.cross_fit
            )
        for est in config.estimators:
            estimate = ESTIMATORS[est](dataset, pi_e, behavior, q_model=q_model).value
            rows.append(
                ResultRow(
                    seed=seed,
                    n=n,
                    slate_size=L,
                    reward_structure=structure,
                    interaction=interaction,
                    lam=lam,
                    estimator=est,
                    estimate=estimate,
                    ground_truth=truth,
                    squared_error=(truth - estimate) ** 2,
                )
            )
    return rows


def _seed_worker(args) -> list[ResultRow]:
    return _run_seed(*args)


def _worker_count() -> int:
    value = os.environ.get("SLATE_OPE_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"SLATE_OPE_THREADS must be an integer, got {value!r}")


def run_experiment(
    config: ExperimentConfig, mode: str, seeds: Optional[Sequence[int]] = None
) -> list[ResultRow]:
    """Run the synthetic protocol; returns rows ordered by seed.

    Rerunning any subset of seeds reproduces exactly the rows those seeds
    produced originally.
    """
    if mode not in SWEEP_MODES:
        raise ValueError(f"unknown mode: {mode!r} (expected one of {SWEEP_MODES})")
    seed_list = list(range(config.n_seeds)) if seeds is None else sorted(seeds)
    workers = _worker_count()
    if workers == 1:
        chunks = [_run_seed(config, s, mode) for s in seed_list]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_seed_worker, [(config, s, mode) for s in seed_list]))
    return [row for chunk in chunks for row in chunk]


def aggregate_mse(
    rows: Sequence[ResultRow],
    group_by: Sequence[str] = ("n",),
    relative_to: Optional[str] = "cascade_dr",
) -> list[dict]:
    """Per-group MSE table with an optional ratio column.

    `group_by` names ResultRow fields (e.g. ``("n", "reward_structure")``).
    With `relative_to` set, each estimator's MSE is also reported as a
    ratio against that estimator's MSE in the same group; the reference
    estimator must appear in every group.
    """
    if not rows:
        raise ValueError("no rows to aggregate")
    groups: dict[tuple, dict[str, list[float]]] = {}
    for row in rows:
        key = tuple(getattr(row, name) for name in group_by)
        groups.setdefault(key, {}).setdefault(row.estimator, []).append(row.squared_error)
    out = []
    for key in sorted(groups):
        by_estimator = groups[key]
        reference = None
        if relative_to is not None:
            if relative_to not in by_estimator:
                raise ValueError(f"group {key} has no {relative_to!r} rows for the ratio column")
            reference = float(np.mean(by_estimator[relative_to]))
        for est in sorted(by_estimator):
            ses = by_estimator[est]
            mse = float(np.mean(ses))
            entry = dict(zip(group_by, key))
            entry.update(estimator=est, mse=mse, count=len(ses))
            if reference is not None:
                entry["relative_mse"] = mse / reference if reference > 0 else float("nan")
            out.append(entry)
    return out


def bootstrap_evaluate(
    dataset: LoggedDataset,
    pi_e: RankingPolicy,
    pi_b_source,
    ground_truth: float,
    n_boot: int = 20,
    rng: Optional[np.random.Generator] = None,
    estimators: Sequence[str] = ("ips", "iips", "rips", "cascade_dr"),
    learner_config: Optional[LearnerConfig] = None,
    cross_fit: int = 0,
) -> list[dict]:
    """Squared errors over bootstrap resamples of a logged dataset.

    Each replicate resamples the dataset with replacement to its original
    size, recomputes every estimator (refitting the baseline on the
    resample), and scores it against the supplied ground truth, typically
    an on-policy estimate from a second dataset.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    for rep in range(n_boot):
        index = rng.integers(0, dataset.n, size=dataset.n)
        resample = dataset.subset(index)
        q_model = None
        if "cascade_dr" in estimators:
            q_model = fit_q_model(
                resample, pi_e, pi_b_source, learner_config=learner_config, cross_fit=cross_fit
            )
        for est in estimators:
            estimate = ESTIMATORS[est](resample, pi_e, pi_b_source, q_model=q_model).value
            out.append(
                {
                    "replicate": rep,
                    "estimator": est,
                    "estimate": estimate,
                    "squared_error": (ground_truth - estimate) ** 2,
                }
            )
    return out


# -- file formats ----------------------------------------------------


def save_dataset(dataset: LoggedDataset, path) -> None:
    """Line-delimited JSON: a header object, then one record per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {
            "slate_size": dataset.slate_size,
            "n_actions": dataset.n_actions,
            "dim": dataset.dim,
            "alpha": dataset.alpha.values.tolist(),
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(dataset.n):
            record = {
                "context": dataset.contexts[i].tolist(),
                "slate": dataset.slates[i].tolist(),
                "rewards": dataset.rewards[i].tolist(),
            }
            if dataset.propensities is not None:
                record["propensities"] = dataset.propensities[i].tolist()
            fh.write(json.dumps(record) + "\n")


def load_dataset(path) -> LoggedDataset:
    """Inverse of `save_dataset`; malformed lines report their number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        L = int(header["slate_size"])
        n_actions = int(header["n_actions"])
        dim = int(header["dim"])
        alpha = AlphaWeights(header["alpha"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"{path}:1: malformed header: {exc}") from exc
    if len(alpha) != L:
        raise ValueError(f"{path}:1: header alpha length {len(alpha)} != slate_size {L}")
    contexts, slates, rewards, props = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            context = rec["context"]
            slate = rec["slate"]
            reward = rec["rewards"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
        if len(context) != dim:
            raise ValueError(f"{path}:{lineno}: context has length {len(context)}, expected {dim}")
        if len(slate) != L or len(reward) != L:
            raise ValueError(f"{path}:{lineno}: slate/rewards must have length {L}")
        contexts.append(context)
        slates.append(slate)
        rewards.append(reward)
        props.append(rec.get("propensities"))
    if not contexts:
        raise ValueError(f"{path}: no records")
    have_props = [p is not None for p in props]
    if any(have_props) and not all(have_props):
        raise ValueError(f"{path}: records mix present and missing propensities")
    return LoggedDataset(
        contexts=np.array(contexts, dtype=float),
        slates=np.array(slates, dtype=np.int64),
        rewards=np.array(rewards, dtype=float),
        n_actions=n_actions,
        alpha=alpha,
        propensities=np.array(props, dtype=float) if all(have_props) else None,
    )


def write_rows_csv(rows: Sequence[ResultRow], path) -> None:
    """Canonical CSV output (UTF-8, LF, `repr` floats for exact round-trip)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.seed,
                    row.n,
                    row.slate_size,
                    row.reward_structure,
                    row.interaction,
                    repr(row.lam),
                    row.estimator,
                    repr(row.estimate),
                    repr(row.ground_truth),
                    repr(row.squared_error),
                ]
            )


def read_rows_csv(path) -> list[ResultRow]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        rows = []
        for record in reader:
            rows.append(
                ResultRow(
                    seed=int(record[0]),
                    n=int(record[1]),
                    slate_size=int(record[2]),
                    reward_structure=record[3],
                    interaction=record[4],
                    lam=float(record[5]),
                    estimator=record[6],
                    estimate=float(record[7]),
                    ground_truth=float(record[8]),
                    squared_error=float(record[9]),
                )
            )
    return rows
