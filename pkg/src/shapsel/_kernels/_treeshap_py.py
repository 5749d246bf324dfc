"""Pure-Python TreeSHAP path-weight kernel.

Fallback used when the compiled extension is unavailable (or forced via
SHAPSEL_BACKEND=python). The arithmetic mirrors the compiled kernel
expression by expression so both backends produce bit-identical output.

The path state lives in flat scratch arrays addressed by an offset per
recursion level: each call owns the region starting at its offset, and a
child's region starts right after the parent's copied path. A path entry
holds the feature index, the fraction of cover-weighted paths that flow
through when the feature is unknown (zero fraction), the indicator of the
row following the split (one fraction), and the permutation weight.
"""

from __future__ import annotations

import math


def _extend(fi, zf, of, pw, off, unique_depth, pzf, pof, pfi):
    fi[off + unique_depth] = pfi
    zf[off + unique_depth] = pzf
    of[off + unique_depth] = pof
    pw[off + unique_depth] = 1.0 if unique_depth == 0 else 0.0
    for i in range(unique_depth - 1, -1, -1):
        pw[off + i + 1] += pof * pw[off + i] * (i + 1) / (unique_depth + 1)
        pw[off + i] = pzf * pw[off + i] * (unique_depth - i) / (unique_depth + 1)


def _unwind(fi, zf, of, pw, off, unique_depth, path_index):
    one_fraction = of[off + path_index]
    zero_fraction = zf[off + path_index]
    next_one = pw[off + unique_depth]
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[off + i]
            pw[off + i] = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            next_one = tmp - pw[off + i] * zero_fraction * (unique_depth - i) / (unique_depth + 1)
        else:
            pw[off + i] = pw[off + i] * (unique_depth + 1) / (zero_fraction * (unique_depth - i))
    for i in range(path_index, unique_depth):
        fi[off + i] = fi[off + i + 1]
        zf[off + i] = zf[off + i + 1]
        of[off + i] = of[off + i + 1]


def _unwound_sum(zf, of, pw, off, unique_depth, path_index):
    one_fraction = of[off + path_index]
    zero_fraction = zf[off + path_index]
    next_one = pw[off + unique_depth]
    total = 0.0
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one = pw[off + i] - tmp * zero_fraction * ((unique_depth - i) / (unique_depth + 1))
        else:
            total += (pw[off + i] / zero_fraction) / ((unique_depth - i) / (unique_depth + 1))
    return total


def _recurse(
    cleft, cright, mleft, feat, thresh, leaf_val, cover,
    x, phi,
    node, unique_depth, parent_off,
    pzf, pof, pfi,
    fi, zf, of, pw,
):
    off = parent_off + unique_depth + 1
    for i in range(unique_depth + 1):
        fi[off + i] = fi[parent_off + i]
        zf[off + i] = zf[parent_off + i]
        of[off + i] = of[parent_off + i]
        pw[off + i] = pw[parent_off + i]
    _extend(fi, zf, of, pw, off, unique_depth, pzf, pof, pfi)

    if cleft[node] < 0:
        value = leaf_val[node]
        for i in range(1, unique_depth + 1):
            w = _unwound_sum(zf, of, pw, off, unique_depth, i)
            phi[fi[off + i]] += w * (of[off + i] - zf[off + i]) * value
        return

    split = feat[node]
    v = x[split]
    if math.isnan(v):
        hot = cleft[node] if mleft[node] else cright[node]
    elif v < thresh[node]:
        hot = cleft[node]
    else:
        hot = cright[node]
    cold = cright[node] if hot == cleft[node] else cleft[node]

    w = cover[node]
    hot_zero_fraction = cover[hot] / w
    cold_zero_fraction = cover[cold] / w
    incoming_zero = 1.0
    incoming_one = 1.0

    # unwind a previous occurrence of this feature so the path keeps one
    # entry per feature
    path_index = 0
    while path_index <= unique_depth:
        if fi[off + path_index] == split:
            break
        path_index += 1
    if path_index != unique_depth + 1:
        incoming_zero = zf[off + path_index]
        incoming_one = of[off + path_index]
        _unwind(fi, zf, of, pw, off, unique_depth, path_index)
        unique_depth -= 1

    _recurse(
        cleft, cright, mleft, feat, thresh, leaf_val, cover,
        x, phi,
        hot, unique_depth + 1, off,
        hot_zero_fraction * incoming_zero, incoming_one, split,
        fi, zf, of, pw,
    )
    _recurse(
        cleft, cright, mleft, feat, thresh, leaf_val, cover,
        x, phi,
        cold, unique_depth + 1, off,
        cold_zero_fraction * incoming_zero, 0.0, split,
        fi, zf, of, pw,
    )


def _scratch_len(max_depth: int) -> int:
    levels = max_depth + 4
    return levels * (levels + 1) // 2 + levels


def shap_rows(tree_arrays, X, phi, row_start, row_stop):
    """Accumulate one tree's Shapley contributions for rows [row_start, row_stop).

    ``tree_arrays`` is the tuple produced by ``shapsel.shap_values._tree_lists``;
    ``X`` is a list of row lists; ``phi`` a (n_rows, n_features) ndarray.
    """
    cleft, cright, mleft, feat, thresh, leaf_val, cover, max_depth = tree_arrays
    size = _scratch_len(max_depth)
    fi = [0] * size
    zf = [0.0] * size
    of = [0.0] * size
    pw = [0.0] * size
    for r in range(row_start, row_stop):
        row_phi = [0.0] * phi.shape[1]
        _recurse(
            cleft, cright, mleft, feat, thresh, leaf_val, cover,
            X[r], row_phi,
            0, 0, 0, 1.0, 1.0, -1,
            fi, zf, of, pw,
        )
        for j, contribution in enumerate(row_phi):
            phi[r, j] += contribution
