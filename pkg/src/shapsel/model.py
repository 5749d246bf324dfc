"""Tree-ensemble model ingestion, validation, and margin prediction.

Models arrive as a portable JSON dump (see ``parse_model``). Trees are stored
as flat parallel arrays so the SHAP kernels and the predictor can walk them
without object overhead. A split sends a row left iff ``value < threshold``;
equality goes right; missing values follow the per-node missing branch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError

OBJECTIVES = ("regression", "binary_logistic", "multiclass_softmax")

_LEAF = -1
COVER_REL_TOL = 1e-6


@dataclass(frozen=True)
class Tree:
    """One binary decision tree as flat arrays indexed by node.

    Leaves have ``children_left[i] == children_right[i] == -1`` and carry
    their margin contribution in ``leaf_values[i]``. ``covers`` holds the
    training-weight mass per node; internal nodes must have positive cover
    because unconditioned branches are weighted by cover ratios.
    """

    children_left: np.ndarray
    children_right: np.ndarray
    missing_left: np.ndarray  # uint8, 1 = missing goes left
    split_features: np.ndarray
    thresholds: np.ndarray
    leaf_values: np.ndarray
    covers: np.ndarray
    max_depth: int = field(default=0)

    @property
    def n_nodes(self) -> int:
        return len(self.children_left)

    def is_leaf(self, node: int) -> bool:
        return self.children_left[node] == _LEAF


@dataclass(frozen=True)
class TreeEnsemble:
    """Immutable forest plus per-class base scores, in margin space."""

    trees: tuple[Tree, ...]
    class_index: tuple[int, ...]
    n_classes: int
    base_score: np.ndarray
    objective: str
    feature_names: tuple[str, ...]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _tree_from_nodes(nodes, tree_id: int, n_features: int) -> Tree:
    if not nodes:
        raise ModelFormatError(f"tree {tree_id}: empty node list")
    ids = [n.get("id") for n in nodes]
    for pos, i in enumerate(ids):
        if not isinstance(i, int) or isinstance(i, bool):
            raise ModelFormatError(f"tree {tree_id}: node at position {pos} has non-integer id {i!r}")
    if len(set(ids)) != len(ids):
        raise ModelFormatError(f"tree {tree_id}: duplicate node ids")
    if 0 not in ids:
        raise ModelFormatError(f"tree {tree_id}: missing root node id 0")
    index_of = {i: pos for pos, i in enumerate(ids)}

    n = len(nodes)
    cleft = np.full(n, _LEAF, dtype=np.int32)
    cright = np.full(n, _LEAF, dtype=np.int32)
    mleft = np.zeros(n, dtype=np.uint8)
    feat = np.full(n, -1, dtype=np.int32)
    thresh = np.zeros(n, dtype=np.float64)
    leaf_val = np.zeros(n, dtype=np.float64)
    cover = np.zeros(n, dtype=np.float64)

    for node in nodes:
        i = node["id"]
        pos = index_of[i]
        c = node.get("cover")
        if not isinstance(c, (int, float)) or isinstance(c, bool) or not math.isfinite(c) or c < 0:
            raise ModelFormatError(f"tree {tree_id} node {i}: cover must be a nonnegative finite number")
        cover[pos] = float(c)
        is_split = "split_feature" in node
        is_leaf = "leaf" in node
        if is_split == is_leaf:
            raise ModelFormatError(
                f"tree {tree_id} node {i}: node must have exactly one of 'leaf' or 'split_feature'"
            )
        if is_leaf:
            v = node["leaf"]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ModelFormatError(f"tree {tree_id} node {i}: leaf value must be a finite number")
            leaf_val[pos] = float(v)
            continue
        f = node["split_feature"]
        if not isinstance(f, int) or isinstance(f, bool) or not (0 <= f < n_features):
            raise ModelFormatError(
                f"tree {tree_id} node {i}: split_feature {f!r} out of range for {n_features} features"
            )
        t = node.get("threshold")
        if not isinstance(t, (int, float)) or isinstance(t, bool) or not math.isfinite(t):
            raise ModelFormatError(f"tree {tree_id} node {i}: threshold must be a finite number")
        for key in ("left", "right"):
            child = node.get(key)
            if child not in index_of:
                raise ModelFormatError(f"tree {tree_id} node {i}: {key} child id {child!r} does not exist")
        if node["left"] == node["right"]:
            raise ModelFormatError(f"tree {tree_id} node {i}: left and right children are the same node")
        missing = node.get("missing")
        if missing not in ("left", "right"):
            raise ModelFormatError(f"tree {tree_id} node {i}: missing must be 'left' or 'right'")
        feat[pos] = f
        thresh[pos] = float(t)
        cleft[pos] = index_of[node["left"]]
        cright[pos] = index_of[node["right"]]
        mleft[pos] = 1 if missing == "left" else 0

    _validate_structure(tree_id, ids, index_of, cleft, cright, cover)

    max_depth = _compute_max_depth(cleft, cright)
    return Tree(cleft, cright, mleft, feat, thresh, leaf_val, cover, max_depth)


def _validate_structure(tree_id, ids, index_of, cleft, cright, cover) -> None:
    n = len(ids)
    parent_refs = np.zeros(n, dtype=np.int64)
    for pos in range(n):
        if cleft[pos] != _LEAF:
            parent_refs[cleft[pos]] += 1
            parent_refs[cright[pos]] += 1
    root = index_of[0]
    if parent_refs[root] != 0:
        raise ModelFormatError(f"tree {tree_id} node 0: root must not be referenced as a child")
    for pos in range(n):
        if pos != root and parent_refs[pos] != 1:
            raise ModelFormatError(
                f"tree {tree_id} node {ids[pos]}: referenced as child {parent_refs[pos]} times, expected 1"
            )
    # reachability from the root; with unique parents this rules out cycles
    seen = np.zeros(n, dtype=bool)
    stack = [root]
    while stack:
        pos = stack.pop()
        if seen[pos]:
            raise ModelFormatError(f"tree {tree_id} node {ids[pos]}: cycle detected")
        seen[pos] = True
        if cleft[pos] != _LEAF:
            stack.append(int(cleft[pos]))
            stack.append(int(cright[pos]))
    if not seen.all():
        unreachable = ids[int(np.flatnonzero(~seen)[0])]
        raise ModelFormatError(f"tree {tree_id} node {unreachable}: not reachable from the root")

    if cover[root] <= 0:
        raise ModelFormatError(f"tree {tree_id} node 0: root cover must be positive")
    for pos in range(n):
        if cleft[pos] == _LEAF:
            continue
        if cover[pos] <= 0:
            raise ModelFormatError(f"tree {tree_id} node {ids[pos]}: internal node cover must be positive")
        child_sum = cover[cleft[pos]] + cover[cright[pos]]
        if abs(child_sum - cover[pos]) > COVER_REL_TOL * cover[pos]:
            raise ModelFormatError(
                f"tree {tree_id} node {ids[pos]}: cover {cover[pos]!r} does not equal "
                f"children sum {child_sum!r} within relative tolerance {COVER_REL_TOL}"
            )


def _compute_max_depth(cleft, cright) -> int:
    depth = 0
    stack = [(0, 0)]
    while stack:
        pos, d = stack.pop()
        depth = max(depth, d)
        if cleft[pos] != _LEAF:
            stack.append((int(cleft[pos]), d + 1))
            stack.append((int(cright[pos]), d + 1))
    return depth


def parse_model(document: bytes | str) -> TreeEnsemble:
    """Parse and validate a model JSON document into a ``TreeEnsemble``.

    Raises ``ModelFormatError`` with the tree id and node id on schema
    violations, cover inconsistencies, and out-of-range feature indices.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"model document is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("top-level JSON value must be an object")

    for key in ("feature_names", "n_classes", "objective", "base_score", "trees"):
        if key not in doc:
            raise ModelFormatError(f"missing required field {key!r}")

    names = doc["feature_names"]
    if (
        not isinstance(names, list)
        or not names
        or not all(isinstance(s, str) and s for s in names)
    ):
        raise ModelFormatError("feature_names must be a non-empty list of non-empty strings")
    if len(set(names)) != len(names):
        raise ModelFormatError("feature_names must be unique")

    n_classes = doc["n_classes"]
    if not isinstance(n_classes, int) or isinstance(n_classes, bool) or n_classes < 1:
        raise ModelFormatError("n_classes must be a positive integer")

    objective = doc["objective"]
    if objective not in OBJECTIVES:
        raise ModelFormatError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if (n_classes == 1) != (objective in ("regression", "binary_logistic")):
        raise ModelFormatError(
            f"n_classes {n_classes} inconsistent with objective {objective!r}"
            " (regression/binary_logistic require 1, multiclass_softmax requires >= 2)"
        )

    base = doc["base_score"]
    if (
        not isinstance(base, list)
        or len(base) != n_classes
        or not all(isinstance(b, (int, float)) and not isinstance(b, bool) and math.isfinite(b) for b in base)
    ):
        raise ModelFormatError(f"base_score must be a list of {n_classes} finite numbers")

    raw_trees = doc["trees"]
    if not isinstance(raw_trees, list):
        raise ModelFormatError("trees must be a list")
    trees = []
    class_index = []
    for tree_id, entry in enumerate(raw_trees):
        if not isinstance(entry, dict) or "class_index" not in entry or "nodes" not in entry:
            raise ModelFormatError(f"tree {tree_id}: entry must be an object with class_index and nodes")
        k = entry["class_index"]
        if not isinstance(k, int) or isinstance(k, bool) or not (0 <= k < n_classes):
            raise ModelFormatError(f"tree {tree_id}: class_index {k!r} out of range for {n_classes} classes")
        trees.append(_tree_from_nodes(entry["nodes"], tree_id, len(names)))
        class_index.append(k)

    return TreeEnsemble(
        trees=tuple(trees),
        class_index=tuple(class_index),
        n_classes=n_classes,
        base_score=np.asarray(base, dtype=np.float64),
        objective=objective,
        feature_names=tuple(names),
    )


def serialize_model(ensemble: TreeEnsemble) -> str:
    """Serialize an ensemble back to the model JSON schema.

    Node ids are re-emitted as positional indices; round-tripping preserves
    predictions exactly (floats are written with full precision).
    """
    trees = []
    for tree, k in zip(ensemble.trees, ensemble.class_index):
        nodes = []
        for i in range(tree.n_nodes):
            if tree.is_leaf(i):
                nodes.append({"id": i, "leaf": float(tree.leaf_values[i]), "cover": float(tree.covers[i])})
            else:
                nodes.append(
                    {
                        "id": i,
                        "split_feature": int(tree.split_features[i]),
                        "threshold": float(tree.thresholds[i]),
                        "left": int(tree.children_left[i]),
                        "right": int(tree.children_right[i]),
                        "missing": "left" if tree.missing_left[i] else "right",
                        "cover": float(tree.covers[i]),
                    }
                )
        trees.append({"class_index": k, "nodes": nodes})
    doc = {
        "feature_names": list(ensemble.feature_names),
        "n_classes": ensemble.n_classes,
        "objective": ensemble.objective,
        "base_score": [float(b) for b in ensemble.base_score],
        "trees": trees,
    }
    return json.dumps(doc)


def _walk_to_leaf(tree: Tree, row: np.ndarray) -> int:
    node = 0
    while not tree.is_leaf(node):
        v = row[tree.split_features[node]]
        if math.isnan(v):
            node = tree.children_left[node] if tree.missing_left[node] else tree.children_right[node]
        elif v < tree.thresholds[node]:
            node = tree.children_left[node]
        else:
            node = tree.children_right[node]
    return node


def predict_margin(ensemble: TreeEnsemble, row) -> np.ndarray:
    """Margin-space prediction for one row, one value per class."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (ensemble.n_features,):
        raise ValueError(
            f"row has {row.shape} values, expected ({ensemble.n_features},) to match feature_names"
        )
    out = ensemble.base_score.copy()
    for tree, k in zip(ensemble.trees, ensemble.class_index):
        out[k] += tree.leaf_values[_walk_to_leaf(tree, row)]
    return out


def predict_margin_rows(ensemble: TreeEnsemble, rows) -> np.ndarray:
    """Margin predictions for a 2-D array of rows, shape (n_rows, n_classes)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != ensemble.n_features:
        raise ValueError(f"rows must have shape (n, {ensemble.n_features})")
    out = np.tile(ensemble.base_score, (rows.shape[0], 1))
    for tree, k in zip(ensemble.trees, ensemble.class_index):
        for i in range(rows.shape[0]):
            out[i, k] += tree.leaf_values[_walk_to_leaf(tree, rows[i])]
    return out
