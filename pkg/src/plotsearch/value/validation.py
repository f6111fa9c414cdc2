"""Model selection: group-aware repeated cross-validation and curiosity tuning.

The selection loss is a weighted sum of false-positive rate, Brier
score, and the across-fold standard deviation of precision, in that
priority order.  Groups (all completion levels of one story) never
split across train and test; every fold outcome retains its raw
predictions so the loss can be recomputed independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import CuriosityConfig, curiosity_index
from .pipeline import FeatureRecord, assign_group_folds, fit_pipeline

DEFAULT_LOSS_WEIGHTS = (0.5, 0.3, 0.2)  # FPR, Brier, std(precision)

POSITIVE_THRESHOLD = 0.5  # probability at or above counts as predicted-good


@dataclass
class FoldOutcome:
    """Held-out predictions of one fold, kept for auditability."""

    grid_index: int
    repeat: int
    fold: int
    y_true: list
    probabilities: list
    test_groups: list
    train_groups: list
    fpr: float = 0.0
    brier: float = 0.0
    precision: float = 0.0


@dataclass
class CrossValidationResult:
    best_params: dict
    best_index: int
    best_loss: float
    losses: list
    point_metrics: list
    folds: list = field(default_factory=list)
    weights: tuple = DEFAULT_LOSS_WEIGHTS


def binary_metrics(y_true: Sequence[int], probabilities: Sequence[float]) -> tuple:
    """(FPR, Brier, precision) at the fixed 0.5 threshold.

    Precision with no predicted positives and FPR with no negatives both
    report 0.0, the conservative convention used throughout.
    """
    y = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(probabilities, dtype=np.float64)
    predicted = p >= POSITIVE_THRESHOLD
    fp = int(np.sum(predicted & (y == 0)))
    tn = int(np.sum(~predicted & (y == 0)))
    tp = int(np.sum(predicted & (y == 1)))
    fpr = fp / (fp + tn) if (fp + tn) > 0 else 0.0
    brier = float(np.mean((p - y) ** 2))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    return fpr, brier, precision


def combine_loss(fold_outcomes: Sequence[FoldOutcome], weights=DEFAULT_LOSS_WEIGHTS) -> float:
    """Selection loss from per-fold metrics: w1*FPR + w2*Brier + w3*std(precision)."""
    if not fold_outcomes:
        raise ValueError("no fold outcomes")
    fpr = float(np.mean([f.fpr for f in fold_outcomes]))
    brier = float(np.mean([f.brier for f in fold_outcomes]))
    precision_std = float(np.std([f.precision for f in fold_outcomes]))
    w1, w2, w3 = weights
    return w1 * fpr + w2 * brier + w3 * precision_std


def cross_validate(
    records: Sequence[FeatureRecord],
    grid: Sequence[dict],
    folds: int = 5,
    repeats: int = 3,
    seed: int = 0,
    weights=DEFAULT_LOSS_WEIGHTS,
) -> CrossValidationResult:
    """Pick the grid point minimizing the selection loss under repeated
    group-aware stratified k-fold cross-validation."""
    if not grid:
        raise ValueError("empty hyperparameter grid")
    group_labels = {r.group: r.target for r in records}
    if len(group_labels) < folds:
        raise ValueError(f"{len(group_labels)} groups is fewer than {folds} folds")

    # One fold assignment per repeat, shared by every grid point so the
    # comparison is paired.
    assignments = []
    for repeat in range(repeats):
        rng = np.random.default_rng([seed, repeat])
        assignments.append(assign_group_folds(group_labels, folds, rng))

    all_folds: list[FoldOutcome] = []
    losses, point_metrics = [], []
    for grid_index, point in enumerate(grid):
        outcomes = []
        for repeat, assignment in enumerate(assignments):
            fold_of = np.array([assignment[r.group] for r in records])
            for fold in range(folds):
                test_mask = fold_of == fold
                if not test_mask.any() or test_mask.all():
                    continue
                train = [r for r, held in zip(records, test_mask) if not held]
                test = [r for r, held in zip(records, test_mask) if held]
                model = fit_pipeline(train, point, seed=[seed, repeat, fold])
                probabilities = [model.predict(r.features) for r in test]
                outcome = FoldOutcome(
                    grid_index=grid_index,
                    repeat=repeat,
                    fold=fold,
                    y_true=[r.target for r in test],
                    probabilities=probabilities,
                    test_groups=sorted({r.group for r in test}, key=str),
                    train_groups=sorted({r.group for r in train}, key=str),
                )
                outcome.fpr, outcome.brier, outcome.precision = binary_metrics(
                    outcome.y_true, outcome.probabilities
                )
                outcomes.append(outcome)
        loss = combine_loss(outcomes, weights)
        losses.append(loss)
        point_metrics.append(
            {
                "fpr_mean": float(np.mean([o.fpr for o in outcomes])),
                "brier_mean": float(np.mean([o.brier for o in outcomes])),
                "precision_std": float(np.std([o.precision for o in outcomes])),
                "n_folds": len(outcomes),
            }
        )
        all_folds.extend(outcomes)

    best_index = int(np.argmin(losses))
    return CrossValidationResult(
        best_params=dict(grid[best_index]),
        best_index=best_index,
        best_loss=losses[best_index],
        losses=losses,
        point_metrics=point_metrics,
        folds=all_folds,
        weights=tuple(weights),
    )


# ---------------------------------------------------------------------------
# Curiosity parameter tuning


@dataclass
class CuriosityTuneResult:
    best_optimal: float
    best_spread: float
    f1_grid: np.ndarray  # rows follow optimal_grid, columns spread_grid
    optimal_grid: tuple
    spread_grid: tuple


def _f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def _threshold_classifier(train_x, train_y):
    """Best (threshold, direction) on the training values by F1.

    direction +1 treats values >= threshold as good, -1 the reverse.
    Ties prefer direction +1 and the smaller threshold, keeping the
    choice deterministic.
    """
    values = np.unique(train_x)
    if values.size == 1:
        candidates = [values[0]]
    else:
        candidates = (values[1:] + values[:-1]) / 2.0
    best = (-1.0, 1, 0.0)  # (f1, direction, threshold)
    for direction in (1, -1):
        for threshold in candidates:
            pred = (train_x >= threshold) if direction == 1 else (train_x <= threshold)
            score = _f1(train_y, pred.astype(np.int64))
            if score > best[0]:
                best = (score, direction, float(threshold))
    return best[1], best[2]


def tune_curiosity(
    records: Sequence[FeatureRecord],
    optimal_grid: Sequence[float],
    spread_grid: Sequence[float],
    folds: int = 5,
    seed: int = 0,
) -> CuriosityTuneResult:
    """Grid-search the interest bump parameters by held-out F1.

    For each (optimal surprisal, spread) the curiosity index is
    recomputed from each record's retained surprisal series and a
    one-feature threshold classifier is fit per fold; the cell value is
    the mean held-out F1 over folds.  The argmax cell wins, first in
    row-major order on ties.
    """
    if not optimal_grid or not spread_grid:
        raise ValueError("empty tuning grid")
    usable = [r for r in records if r.series is not None and len(r.series) > 0]
    if not usable:
        raise ValueError("no records retain a surprisal series")
    y = np.array([r.target for r in usable], dtype=np.int64)
    if len(set(y.tolist())) < 2:
        raise ValueError("degenerate corpus: single class")

    group_labels = {r.group: r.target for r in usable}
    n_folds = min(folds, len(group_labels))
    rng = np.random.default_rng(seed)
    assignment = assign_group_folds(group_labels, n_folds, rng)
    fold_of = np.array([assignment[r.group] for r in usable])

    heatmap = np.zeros((len(optimal_grid), len(spread_grid)), dtype=np.float64)
    for i, optimal in enumerate(optimal_grid):
        for j, spread in enumerate(spread_grid):
            cfg = CuriosityConfig(optimal_surprisal=optimal, spread=spread)
            x = np.array([curiosity_index(r.series, cfg) for r in usable])
            scores = []
            for fold in range(n_folds):
                test_mask = fold_of == fold
                if not test_mask.any() or test_mask.all():
                    continue
                if len(set(y[~test_mask].tolist())) < 2:
                    continue
                direction, threshold = _threshold_classifier(x[~test_mask], y[~test_mask])
                pred = (x >= threshold) if direction == 1 else (x <= threshold)
                scores.append(_f1(y[test_mask], pred[test_mask].astype(np.int64)))
            heatmap[i, j] = float(np.mean(scores)) if scores else 0.0

    flat_best = int(np.argmax(heatmap))
    best_i, best_j = divmod(flat_best, len(spread_grid))
    return CuriosityTuneResult(
        best_optimal=float(optimal_grid[best_i]),
        best_spread=float(spread_grid[best_j]),
        f1_grid=heatmap,
        optimal_grid=tuple(optimal_grid),
        spread_grid=tuple(spread_grid),
    )
