"""Exact Shapley values for tree ensembles.

Two routes to the same numbers:

* ``tree_shap`` — the polynomial-time path-weight recursion (compiled kernel
  with pure-Python fallback), O(trees * leaves * depth^2) per row.
* ``brute_force_shap`` — direct subset enumeration over the weighted
  marginal-contribution formula, exponential in the feature count and used
  as the testing oracle.

Both condition on feature subsets the same way: a split on a known feature
follows the row's branch, a split on an unknown feature averages the two
children weighted by their cover share (``expected_margin_given_subset``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError
from .model import Tree, TreeEnsemble

BRUTE_FORCE_MAX_FEATURES = 20


@dataclass(frozen=True)
class ShapMatrix:
    """Per-row, per-feature, per-class Shapley values.

    ``values`` has shape (n_rows, n_features, n_classes). ``base_values``
    holds one expected margin per class (identical across rows); for every
    row and class the values plus the base value sum to the margin
    prediction.
    """

    values: np.ndarray
    base_values: np.ndarray
    feature_names: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[2]


def _conditional_margin(tree: Tree, row: np.ndarray, mask: int) -> float:
    """Cover-conditional expectation of one tree given the masked feature set."""

    def walk(node: int) -> float:
        if tree.is_leaf(node):
            return float(tree.leaf_values[node])
        f = int(tree.split_features[node])
        left = int(tree.children_left[node])
        right = int(tree.children_right[node])
        if (mask >> f) & 1:
            v = row[f]
            if math.isnan(v):
                hot = left if tree.missing_left[node] else right
            elif v < tree.thresholds[node]:
                hot = left
            else:
                hot = right
            return walk(hot)
        c = float(tree.covers[node])
        return (float(tree.covers[left]) / c) * walk(left) + (
            float(tree.covers[right]) / c
        ) * walk(right)

    return walk(0)


def _subset_to_mask(fixed, n_features: int) -> int:
    mask = 0
    for f in fixed:
        f = int(f)
        if not 0 <= f < n_features:
            raise ValueError(f"feature index {f} out of range for {n_features} features")
        mask |= 1 << f
    return mask


def expected_margin_given_subset(ensemble: TreeEnsemble, row, fixed, class_k: int = 0) -> float:
    """Model output conditioned on knowing only the features in ``fixed``.

    With all features fixed this equals ``predict_margin(row)[class_k]``;
    with none it is the cover-weighted expectation of the ensemble.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (ensemble.n_features,):
        raise ValueError(f"row must have {ensemble.n_features} values")
    if not 0 <= class_k < ensemble.n_classes:
        raise ValueError(f"class {class_k} out of range for {ensemble.n_classes} classes")
    mask = _subset_to_mask(fixed, ensemble.n_features)
    total = float(ensemble.base_score[class_k])
    for tree, k in zip(ensemble.trees, ensemble.class_index):
        if k == class_k:
            total += _conditional_margin(tree, row, mask)
    return total


def _shapley_weights(n: int) -> list[float]:
    # |S|! (n - |S| - 1)! / n!  for |S| = 0..n-1, exact integer arithmetic
    return [
        math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
        for s in range(n)
    ]


def brute_force_shap(ensemble: TreeEnsemble, row) -> np.ndarray:
    """Shapley values for one row by full subset enumeration, (n_features, K).

    Evaluates the conditional margin for every feature subset and combines
    the weighted marginal contributions directly. Guarded to 20 features.
    """
    n = ensemble.n_features
    if n > BRUTE_FORCE_MAX_FEATURES:
        raise ValueError(
            f"brute-force enumeration is limited to {BRUTE_FORCE_MAX_FEATURES} features, got {n}"
        )
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (n,):
        raise ValueError(f"row must have {n} values")
    weights = _shapley_weights(n)
    phi = np.zeros((n, ensemble.n_classes))
    for class_k in range(ensemble.n_classes):
        trees = [t for t, k in zip(ensemble.trees, ensemble.class_index) if k == class_k]
        f_of = [0.0] * (1 << n)
        for mask in range(1 << n):
            f_of[mask] = sum(_conditional_margin(t, row, mask) for t in trees)
        for i in range(n):
            bit = 1 << i
            total = 0.0
            for mask in range(1 << n):
                if mask & bit:
                    continue
                total += weights[bin(mask).count("1")] * (f_of[mask | bit] - f_of[mask])
            phi[i, class_k] = total
    return phi


def ensemble_base_values(ensemble: TreeEnsemble) -> np.ndarray:
    """Expected margin per class under the cover distribution, plus base score."""
    base = ensemble.base_score.copy()
    zero_row = np.zeros(ensemble.n_features)
    for tree, k in zip(ensemble.trees, ensemble.class_index):
        base[k] += _conditional_margin(tree, zero_row, 0)
    return base


def _resolve_threads(n_threads: int | None) -> int:
    if n_threads is None:
        n_threads = os.cpu_count() or 1
    cap = os.environ.get("SHAPSEL_THREADS")
    if cap is not None:
        try:
            cap_val = int(cap)
        except ValueError:
            raise ValueError(f"SHAPSEL_THREADS must be a positive integer, got {cap!r}") from None
        if cap_val < 1:
            raise ValueError(f"SHAPSEL_THREADS must be a positive integer, got {cap!r}")
        n_threads = min(n_threads, cap_val)
    return max(1, n_threads)


def _tree_lists(tree: Tree):
    # list-of-float form for the pure-Python kernel (much faster than
    # element-wise ndarray indexing)
    return (
        tree.children_left.tolist(),
        tree.children_right.tolist(),
        tree.missing_left.tolist(),
        tree.split_features.tolist(),
        tree.thresholds.tolist(),
        tree.leaf_values.tolist(),
        tree.covers.tolist(),
        tree.max_depth,
    )


def _shap_values_array(ensemble: TreeEnsemble, X: np.ndarray, n_threads: int | None) -> np.ndarray:
    n_rows = X.shape[0]
    n_features = ensemble.n_features
    per_class = [np.zeros((n_rows, n_features)) for _ in range(ensemble.n_classes)]

    if _kernels.is_compiled():
        kernel = _kernels._module.shap_rows
        threads = min(_resolve_threads(n_threads), max(1, n_rows))

        def run_chunk(row_start: int, row_stop: int) -> None:
            for tree, k in zip(ensemble.trees, ensemble.class_index):
                kernel(
                    tree.children_left, tree.children_right, tree.missing_left,
                    tree.split_features, tree.thresholds, tree.leaf_values,
                    tree.covers, tree.max_depth,
                    X, per_class[k], row_start, row_stop,
                )

        if threads == 1:
            run_chunk(0, n_rows)
        else:
            bounds = np.linspace(0, n_rows, threads + 1, dtype=int)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [
                    pool.submit(run_chunk, int(bounds[i]), int(bounds[i + 1]))
                    for i in range(threads)
                ]
                for f in futures:
                    f.result()
    else:
        rows = X.tolist()
        kernel = _kernels._module.shap_rows
        for tree, k in zip(ensemble.trees, ensemble.class_index):
            kernel(_tree_lists(tree), rows, per_class[k], 0, n_rows)

    return np.stack(per_class, axis=2)


def tree_shap(ensemble: TreeEnsemble, dataset, n_threads: int | None = None) -> ShapMatrix:
    """Exact Shapley values for every row of ``dataset``.

    ``dataset`` is a ``shapsel.data.Dataset`` whose feature columns must
    match the ensemble's feature names exactly (same names, same order), or
    a 2-D float array with one column per ensemble feature. Rows are
    independent, so results do not depend on the worker count.
    """
    if hasattr(dataset, "feature_names"):
        if tuple(dataset.feature_names) != ensemble.feature_names:
            raise DataError(
                "dataset feature columns do not match the model: "
                f"expected {list(ensemble.feature_names)}, got {list(dataset.feature_names)}"
            )
        X = dataset.feature_matrix()
    else:
        X = np.ascontiguousarray(np.asarray(dataset, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] != ensemble.n_features:
            raise DataError(f"feature array must have shape (n, {ensemble.n_features})")
    values = _shap_values_array(ensemble, X, n_threads)
    return ShapMatrix(
        values=values,
        base_values=ensemble_base_values(ensemble),
        feature_names=ensemble.feature_names,
    )
