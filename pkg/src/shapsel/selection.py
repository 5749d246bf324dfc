"""Recursive lowest-t elimination over Shapley-value regressors.

The loop fits the task-appropriate significance regression on the remaining
Shapley columns, records and removes the feature with the lowest signed
t-value, and repeats until no columns remain; each feature keeps the
statistics from the iteration it was removed in. Selection then thresholds
the recorded adjusted p-values, keeping only positive-coefficient features.
Because the trace covers every feature, one elimination run serves any
number of thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import stats
from .data import Dataset
from .errors import StatsError
from .model import TreeEnsemble
from .shap_values import ShapMatrix, tree_shap
from .stats import RegressionResult, TaskKind

DEFAULT_THRESHOLD = 0.05
DEFAULT_L1_WEIGHT = 1e-6


@dataclass(frozen=True)
class EliminationRecord:
    """One feature's statistics at the iteration it was eliminated."""

    feature_name: str
    removal_rank: int  # 1 = removed first
    t_at_removal: float
    coefficient_sign: int  # -1 | 0 | +1
    p_adjusted: float
    class_of_max_t: int | None = None  # multiclass only


@dataclass(frozen=True)
class SelectionReport:
    """Full elimination trace plus the thresholded selection."""

    task: TaskKind
    threshold: float
    records: tuple[EliminationRecord, ...]
    selected: tuple[str, ...]
    config: dict = field(default_factory=dict)

    def selected_at(self, threshold: float) -> tuple[str, ...]:
        """Features selected at an arbitrary threshold, most significant first."""
        return _selected_at(self.records, threshold)


def _selected_at(records, threshold: float) -> tuple[str, ...]:
    chosen = [r for r in records if r.coefficient_sign == 1 and r.p_adjusted < threshold]
    chosen.sort(key=lambda r: r.removal_rank, reverse=True)
    return tuple(r.feature_name for r in chosen)


def aggregate_multiclass(per_class_results: list[RegressionResult], n_classes: int):
    """Collapse per-class Wald statistics into one row per feature.

    Takes the largest signed t across classes; positive maxima convert to a
    Bonferroni-adjusted two-sided normal p (multiplied by the class count,
    capped at 1), non-positive maxima mark the feature for discarding.
    Returns (t_max, p_adjusted, sign, class_of_max_t) arrays.
    """
    if n_classes < 2:
        raise StatsError("multiclass aggregation needs at least 2 classes")
    if len(per_class_results) != n_classes:
        raise StatsError(f"expected {n_classes} per-class results, got {len(per_class_results)}")
    p = per_class_results[0].n_regressors
    if any(r.n_regressors != p for r in per_class_results):
        raise StatsError("per-class results cover different feature lists")

    t_matrix = np.vstack([r.t_values for r in per_class_results])  # (K, p)
    class_of_max = np.argmax(t_matrix, axis=0)
    t_max = t_matrix[class_of_max, np.arange(p)]
    sign = np.zeros(p, dtype=np.int64)
    p_adjusted = np.ones(p)
    for j in range(p):
        if t_max[j] > 0:
            sign[j] = 1
            p_raw = 2.0 * sps.norm.sf(t_max[j])
            p_adjusted[j] = min(1.0, n_classes * p_raw)
        elif t_max[j] < 0:
            sign[j] = -1
    return t_max, p_adjusted, sign, class_of_max


def _sign_of(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def _encode_binary(y: np.ndarray, task: TaskKind) -> np.ndarray:
    return (y == task.class_values[1]).astype(np.float64)


def _resolve_task(y: np.ndarray, task) -> TaskKind:
    if task is None or task == "auto":
        return stats.infer_task(y)
    if isinstance(task, TaskKind):
        return task
    if task == "regression":
        return TaskKind("regression")
    inferred = stats.infer_task(y)
    if task == "binary":
        if inferred.kind != "binary":
            raise StatsError("task 'binary' requires a target with exactly 2 distinct values")
        return inferred
    if task == "multiclass":
        if inferred.kind != "multiclass":
            raise StatsError(
                "task 'multiclass' requires a target with 3..10 distinct integral values"
            )
        return inferred
    raise StatsError(f"unknown task {task!r}")


def _iteration_stats(shap_columns, y, task: TaskKind, l1_weight: float, iteration: int):
    """Fit the remaining columns; return (t, sign, p_adjusted, class_of_max_t)."""
    try:
        if task.kind == "regression":
            result = stats.fit_ols(shap_columns[0], y, l1_weight)
            return result.t_values, np.sign(result.coefficients).astype(np.int64), result.p_values, None
        if task.kind == "binary":
            result = stats.fit_logistic(shap_columns[0], _encode_binary(y, task), l1_weight)
            return result.t_values, np.sign(result.coefficients).astype(np.int64), result.p_values, None
        per_class = [
            stats.fit_logistic(
                shap_columns[k],
                (y == task.class_values[k]).astype(np.float64),
                l1_weight,
            )
            for k in range(task.n_classes)
        ]
        t_max, p_adjusted, sign, class_of_max = aggregate_multiclass(per_class, task.n_classes)
        return t_max, sign, p_adjusted, class_of_max
    except StatsError as exc:
        raise StatsError(f"elimination iteration {iteration}: {exc}") from exc


def _eliminate(shap_matrix: ShapMatrix, y: np.ndarray, task: TaskKind, l1_weight: float):
    names = list(shap_matrix.feature_names)
    n_features = len(names)
    if task.kind == "multiclass":
        columns = {k: shap_matrix.values[:, :, k] for k in range(task.n_classes)}
    else:
        columns = {0: shap_matrix.values[:, :, 0]}

    remaining = list(range(n_features))
    records = []
    rank = 0
    while remaining:
        rank += 1
        sub = {k: np.ascontiguousarray(m[:, remaining]) for k, m in columns.items()}
        t, sign, p_adj, class_of_max = _iteration_stats(sub, y, task, l1_weight, rank)
        # lowest signed t goes; ties break to the lexicographically last name
        worst = 0
        for j in range(1, len(remaining)):
            if t[j] < t[worst] or (t[j] == t[worst] and names[remaining[j]] > names[remaining[worst]]):
                worst = j
        records.append(
            EliminationRecord(
                feature_name=names[remaining[worst]],
                removal_rank=rank,
                t_at_removal=float(t[worst]),
                coefficient_sign=int(sign[worst]),
                p_adjusted=float(p_adj[worst]),
                class_of_max_t=int(class_of_max[worst]) if class_of_max is not None else None,
            )
        )
        del remaining[worst]
    return tuple(records)


def shap_select(
    ensemble: TreeEnsemble,
    validation: Dataset,
    threshold: float = DEFAULT_THRESHOLD,
    task="auto",
    l1_weight: float = DEFAULT_L1_WEIGHT,
    seed: int = 0,
    n_threads: int | None = None,
) -> SelectionReport:
    """Select features whose Shapley values significantly improve the target fit.

    Computes Shapley values of the ensemble over the validation set, then
    recursively eliminates the weakest feature by signed t-value and keeps
    the features whose recorded adjusted p-value beats the threshold with a
    positive coefficient.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0,1], got {threshold!r}")
    if l1_weight < 0:
        raise ValueError(f"l1_weight must be nonnegative, got {l1_weight!r}")
    resolved = _resolve_task(validation.target, task)
    n_features = ensemble.n_features
    if validation.n_rows < n_features + 2:
        raise StatsError(
            f"too few rows: {validation.n_rows} for {n_features} features;"
            f" need at least {n_features + 2}"
        )
    expected_k = resolved.n_classes if resolved.kind == "multiclass" else 1
    if ensemble.n_classes != expected_k:
        raise StatsError(
            f"model has {ensemble.n_classes} classes but the {resolved.kind} task needs {expected_k}"
        )

    aligned = validation.select_features(ensemble.feature_names)
    shap_matrix = tree_shap(ensemble, aligned, n_threads=n_threads)
    records = _eliminate(shap_matrix, aligned.target, resolved, l1_weight)

    return SelectionReport(
        task=resolved,
        threshold=threshold,
        records=records,
        selected=_selected_at(records, threshold),
        config={
            "threshold": threshold,
            "l1_weight": l1_weight,
            "seed": seed,
            "task": task if isinstance(task, str) else resolved.kind,
        },
    )


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    n_selected: int
    selected: tuple[str, ...]
    metric_value: float | None = None


def threshold_sweep(
    ensemble: TreeEnsemble,
    validation: Dataset,
    thresholds,
    task="auto",
    l1_weight: float = DEFAULT_L1_WEIGHT,
    seed: int = 0,
    retrain=None,
    n_threads: int | None = None,
) -> tuple[SelectionReport, tuple[SweepPoint, ...]]:
    """Apply many thresholds to a single elimination run.

    ``retrain``, when given, is a callable mapping a selected feature tuple
    to a metric value (e.g. retrain the booster on the subset and score a
    holdout); it runs once per threshold.
    """
    thresholds = [float(t) for t in thresholds]
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"threshold must be in (0,1], got {t!r}")
    report = shap_select(
        ensemble,
        validation,
        threshold=DEFAULT_THRESHOLD,
        task=task,
        l1_weight=l1_weight,
        seed=seed,
        n_threads=n_threads,
    )
    points = []
    for t in thresholds:
        chosen = report.selected_at(t)
        metric_value = retrain(chosen) if retrain is not None else None
        points.append(SweepPoint(t, len(chosen), chosen, metric_value))
    return report, tuple(points)
