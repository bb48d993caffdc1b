"""Classification metrics, ROC / PR curves, k-fold grid search and
permutation importance for main-class predictions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .forest import Hyperparams, fit_forest
from .preprocess import N_CLASSES, main_classes


class EvaluationError(ValueError):
    pass


@dataclass
class ClassificationReport:
    accuracy: float
    precision: np.ndarray  # per class; 0 where nothing was predicted
    recall: np.ndarray  # per class; 0 where the class never occurs
    f1: np.ndarray
    macro_f1: float  # over classes present in ``actual``
    confusion: np.ndarray  # rows actual, columns predicted
    present: np.ndarray  # bool per class, occurs in ``actual``


def confusion_matrix(actual, predicted, n_classes: int = N_CLASSES) -> np.ndarray:
    a = np.asarray(actual, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if a.shape != p.shape or a.ndim != 1:
        raise EvaluationError("actual and predicted must be 1-D sequences of equal length")
    if a.size == 0:
        raise EvaluationError("no samples to evaluate")
    if a.min() < 0 or p.min() < 0 or a.max() >= n_classes or p.max() >= n_classes:
        raise EvaluationError(f"class indices must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (a, p), 1)
    return cm


def classification_metrics(actual, predicted, n_classes: int = N_CLASSES) -> ClassificationReport:
    cm = confusion_matrix(actual, predicted, n_classes)
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0).astype(float)
    act_tot = cm.sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(act_tot > 0, tp / act_tot, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    present = act_tot > 0
    return ClassificationReport(float(tp.sum() / cm.sum()), precision, recall, f1,
                                float(f1[present].mean()), cm, present)


def binary_auc(scores, positive) -> float:
    """P(random positive outranks random negative), ties counted 1/2."""
    s = np.asarray(scores, dtype=float)
    pos = np.asarray(positive, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores, positive):
    """ROC points ``(threshold, fpr, tpr)``, thresholds descending from +inf."""
    s = np.asarray(scores, dtype=float)
    pos = np.asarray(positive, dtype=bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]  # end of each tie group
    tps = np.cumsum(pos)[last]
    fps = (last + 1) - tps
    thr = np.r_[np.inf, s[last]]
    return thr, np.r_[0.0, fps / n_neg], np.r_[0.0, tps / n_pos]


def trapezoid_auc(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def _one_vs_rest(scores, actual):
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    a = np.asarray(actual, dtype=np.int64)
    if S.shape[0] != a.size:
        raise EvaluationError("one score row per sample is required")
    return S, a


def roc_auc(scores, actual):
    """Per-class one-vs-rest AUC (NaN where undefined) and their macro mean."""
    S, a = _one_vs_rest(scores, actual)
    per = np.full(S.shape[1], np.nan)
    skipped = []
    for c in range(S.shape[1]):
        pos = a == c
        if pos.any() and not pos.all():
            per[c] = binary_auc(S[:, c], pos)
        else:
            skipped.append(c)
    # a class covering every sample has no negatives and is skipped too
    absent = [c for c in skipped if not (a == c).any()]
    if absent:
        warnings.warn(f"AUC undefined for classes absent from actual: {absent}", stacklevel=2)
    if np.all(np.isnan(per)):
        raise EvaluationError("AUC undefined for every class")
    return per, float(np.nanmean(per))


def average_precision(scores, positive) -> float:
    """Step-wise area under the precision-recall curve."""
    s = np.asarray(scores, dtype=float).ravel()
    pos = np.asarray(positive, dtype=bool).ravel()
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise EvaluationError("PR undefined")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(pos)[last].astype(float)
    precision = tps / (last + 1)
    recall = tps / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def pr_curve(scores, positive):
    """PR points ``(threshold, recall, precision)`` at each distinct score."""
    s = np.asarray(scores, dtype=float).ravel()
    pos = np.asarray(positive, dtype=bool).ravel()
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise EvaluationError("PR undefined")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(pos)[last].astype(float)
    return s[last], tps / n_pos, tps / (last + 1)


def micro_indicator(actual, n_classes):
    a = np.asarray(actual, dtype=np.int64)
    Y = np.zeros((a.size, n_classes), dtype=bool)
    Y[np.arange(a.size), a] = True
    return Y


def pr_auc(scores, actual) -> float:
    """Micro-averaged average precision over all (sample, class) pairs."""
    S, a = _one_vs_rest(scores, actual)
    return average_precision(S.ravel(), micro_indicator(a, S.shape[1]).ravel())


# --------------------------------------------------------------------------
# model selection and importance

def kfold_indices(n: int, k: int = 10, seed: int = 0):
    """``k`` disjoint validation index arrays covering ``range(n)``; sizes differ by <= 1."""
    if k < 2:
        raise EvaluationError("k must be >= 2")
    if n < k:
        raise EvaluationError(f"need at least k={k} samples, got {n}")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6B66])).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def main_class_accuracy(forest, X, Y) -> float:
    mean, _ = forest.predict(X)
    return float(np.mean(main_classes(mean) == main_classes(Y)))


def kfold_grid_search(X, Y, grid, k: int = 10, seed: int = 0, backend=None):
    """Best candidate by mean validation main-class accuracy of the forest.

    Returns ``(best, scores)``; ties go to the earlier grid entry.
    """
    grid = list(grid)
    if not grid:
        raise EvaluationError("empty hyperparameter grid")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    folds = kfold_indices(len(X), k, seed)
    scores = []
    for hp in grid:
        acc = []
        for val in folds:
            train = np.ones(len(X), dtype=bool)
            train[val] = False
            f = fit_forest(X[train], Y[train], hp, backend=backend)
            acc.append(main_class_accuracy(f, X[val], Y[val]))
        scores.append(float(np.mean(acc)))
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return grid[best], scores


def permutation_importance(forest, X, Y, seed: int = 0, n_repeats: int = 10) -> np.ndarray:
    """Normalised mean drop in main-class accuracy when a column is shuffled."""
    X = np.asarray(X, dtype=float)
    y = main_classes(np.asarray(Y, dtype=float))

    def acc(Xp):
        return float(np.mean(main_classes(forest.predict(Xp)[0]) == y))

    base = acc(X)
    drops = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        d = 0.0
        for r in range(n_repeats):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), j, r]))
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(len(X)), j]
            d += base - acc(Xp)
        drops[j] = d / n_repeats
    drops = np.maximum(drops, 0.0)
    total = drops.sum()
    if total <= 0:
        warnings.warn("all permutation importances are zero; returning uniform weights",
                      stacklevel=2)
        return np.full(X.shape[1], 1.0 / X.shape[1])
    return drops / total


__all__ = [
    "ClassificationReport", "EvaluationError", "average_precision", "binary_auc",
    "classification_metrics", "confusion_matrix", "kfold_grid_search", "kfold_indices",
    "main_class_accuracy", "permutation_importance", "pr_auc", "pr_curve", "roc_auc",
    "roc_curve", "trapezoid_auc",
]
