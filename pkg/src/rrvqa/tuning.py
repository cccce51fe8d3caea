"""Seeded random search with k-fold cross-validation.

Each trial draws its configuration from its own generator seeded with
``(seed, trial)``, so running trials in parallel cannot change the history.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rrvqa.errors import ConfigurationError, UndefinedCorrelationError
from rrvqa.gbt import GbtParams, TrainingSet, predict_batch, train
from rrvqa.metrics import plcc
from rrvqa.parallel import map_frames

TRIAL_FIELDS = ("trial", "n_estimators", "max_depth", "learning_rate", "subsample",
                "colsample_bytree", "mean_plcc")


@dataclass(frozen=True)
class SearchSpace:
    n_estimators: Tuple[int, int] = (50, 300)
    max_depth: Tuple[int, int] = (3, 10)
    learning_rate: Tuple[float, float] = (0.01, 0.3)
    subsample: Tuple[float, float] = (0.6, 1.0)
    colsample_bytree: Tuple[float, float] = (0.6, 1.0)

    def sample(self, rng: np.random.Generator, seed: int = 0) -> GbtParams:
        n_est = int(rng.integers(self.n_estimators[0], self.n_estimators[1], endpoint=True))
        depth = int(rng.integers(self.max_depth[0], self.max_depth[1], endpoint=True))
        lo, hi = math.log(self.learning_rate[0]), math.log(self.learning_rate[1])
        lr = min(self.learning_rate[1], max(self.learning_rate[0], math.exp(rng.uniform(lo, hi))))
        sub = float(rng.uniform(*self.subsample))
        col = float(rng.uniform(*self.colsample_bytree))
        return GbtParams(n_estimators=n_est, max_depth=depth, learning_rate=lr,
                         subsample=sub, colsample_bytree=col, seed=seed)

    def contains(self, p: GbtParams) -> bool:
        return (self.n_estimators[0] <= p.n_estimators <= self.n_estimators[1]
                and self.max_depth[0] <= p.max_depth <= self.max_depth[1]
                and self.learning_rate[0] <= p.learning_rate <= self.learning_rate[1]
                and self.subsample[0] <= p.subsample <= self.subsample[1]
                and self.colsample_bytree[0] <= p.colsample_bytree <= self.colsample_bytree[1])


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    params: GbtParams
    fold_scores: List[float] = field(default_factory=list)

    @property
    def mean_plcc(self) -> float:
        return float(np.mean(self.fold_scores))


def k_fold_split(n_rows: int, k: int, seed: int) -> List[np.ndarray]:
    """Shuffle ``range(n_rows)`` with ``seed`` and cut it into k contiguous folds.

    The first ``n_rows % k`` folds get one extra row.
    """
    if k < 2:
        raise ConfigurationError(f"k must be at least 2, got {k}")
    if k > n_rows:
        raise ConfigurationError(f"cannot make {k} folds from {n_rows} rows")
    perm = np.random.default_rng(seed).permutation(n_rows)
    base, extra = divmod(n_rows, k)
    folds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(perm[start:start + size])
        start += size
    return folds


def fold_plcc(pred: np.ndarray, truth: np.ndarray) -> float:
    # a constant prediction carries no linear association with the labels
    try:
        return plcc(pred, truth)
    except UndefinedCorrelationError:
        return 0.0


def cross_validate(data: TrainingSet, params: GbtParams, folds: Sequence[np.ndarray]) -> List[float]:
    scores = []
    all_idx = np.arange(len(data))
    for fold in folds:
        if len(fold) < 2:
            raise ConfigurationError(f"a validation fold has {len(fold)} row(s); need at least 2")
        train_idx = np.setdiff1d(all_idx, fold)
        model = train(data.subset(train_idx), params)
        held = data.subset(np.sort(fold))
        scores.append(fold_plcc(predict_batch(model, held.X), held.y))
    return scores


def _trial_task(shared, trial: int) -> TrialRecord:
    data, space, folds, seed = shared
    rng = np.random.default_rng([int(seed), trial])
    params = space.sample(rng, seed=int(seed))
    return TrialRecord(trial, params, cross_validate(data, params, folds))


def random_search(data: TrainingSet, space: Optional[SearchSpace] = None, trials: int = 50,
                  k: int = 5, seed: int = 0, workers: int = 1
                  ) -> Tuple[GbtParams, List[TrialRecord]]:
    """Return the configuration with the best mean fold PLCC and the full trial history.

    Ties go to the earliest trial.
    """
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    space = space or SearchSpace()
    folds = k_fold_split(len(data), k, seed)
    if min(len(f) for f in folds) < 2:
        raise ConfigurationError(
            f"{len(data)} rows in {k} folds leaves a validation fold with fewer than 2 rows")
    history = map_frames(_trial_task, trials, workers, shared=(data, space, folds, seed))
    best = history[0]
    for rec in history[1:]:
        if rec.mean_plcc > best.mean_plcc:
            best = rec
    return best.params, history


def write_trials_csv(path, history: Sequence[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_FIELDS)
        for rec in history:
            p = rec.params
            writer.writerow([rec.trial, p.n_estimators, p.max_depth, f"{p.learning_rate:.9g}",
                             f"{p.subsample:.9g}", f"{p.colsample_bytree:.9g}",
                             f"{rec.mean_plcc:.9g}"])
