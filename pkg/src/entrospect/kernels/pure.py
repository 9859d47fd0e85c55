"""Pure NumPy decision-tree kernels.

Fallback for the compiled module in _speedups.pyx. Both implementations are
written against the same arithmetic, split-scan order, node layout, and
feature-subset PRNG so that they produce bit-identical trees; a dedicated
test asserts that equivalence whenever the compiled kernels are available.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix_next(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


def _draw_features(n_features: int, subset_size: int, state: int) -> tuple[list[int], int]:
    k = min(subset_size, n_features)
    if k == n_features:
        return list(range(n_features)), state
    pool = list(range(n_features))
    for i in range(k):
        r, state = _splitmix_next(state)
        j = i + r % (n_features - i)
        pool[i], pool[j] = pool[j], pool[i]
    return sorted(pool[:k]), state


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    subset_size: int,
    min_leaf: int,
    max_depth: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Grow one Gini-impurity decision tree on the given bootstrap rows.

    max_depth < 0 means unbounded. Returns flat preorder node arrays
    (feature, threshold, left, right, value) where feature -1 marks a leaf
    holding the positive-class fraction, plus the per-feature total
    impurity decrease.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.uint8)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    n_features = X.shape[1]
    state = int(seed) & _MASK

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    importance = np.zeros(n_features, dtype=np.float64)

    # (rows, depth, parent slot, is_left); right pushed first so the left
    # child pops next, giving preorder node ids.
    stack: list[tuple[np.ndarray, int, int, bool]] = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node_id
            else:
                right[parent] = node_id
        m = len(node_rows)
        y_node = y[node_rows]
        c1 = int(y_node.sum(dtype=np.int64))
        node_value = c1 / m
        can_split = (
            0 < c1 < m
            and m >= 2 * min_leaf
            and (max_depth < 0 or depth < max_depth)
        )
        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        best_left_rows = None
        best_right_rows = None
        if can_split:
            feats, state = _draw_features(n_features, subset_size, state)
            sy_total = float(c1)
            for f in feats:
                vals = X[node_rows, f]
                order = np.argsort(vals)
                sv = vals[order]
                sy = y_node[order]
                c1l = np.cumsum(sy, dtype=np.int64)[:-1].astype(np.float64)
                nl = np.arange(1, m, dtype=np.float64)
                c0l = nl - c1l
                c1r = sy_total - c1l
                nr = float(m) - nl
                c0r = nr - c1r
                score = 2.0 * c1l * c0l / nl + 2.0 * c1r * c0r / nr
                valid = (sv[:-1] != sv[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
                score = np.where(valid, score, np.inf)
                i = int(np.argmin(score))
                s = float(score[i])
                if s < best_score:
                    best_score = s
                    best_feature = f
                    best_threshold = 0.5 * (sv[i] + sv[i + 1])
                    best_left_rows = node_rows[order[: i + 1]]
                    best_right_rows = node_rows[order[i + 1:]]
        if best_feature < 0:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(node_value)
            continue
        parent_term = 2.0 * float(c1) * float(m - c1) / float(m)
        importance[best_feature] += parent_term - best_score
        feature.append(best_feature)
        threshold.append(best_threshold)
        left.append(-1)
        right.append(-1)
        value.append(node_value)
        stack.append((best_right_rows, depth + 1, node_id, False))
        stack.append((best_left_rows, depth + 1, node_id, True))

    return (
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=np.float64),
        importance,
    )


def predict_tree(
    feature: np.ndarray,
    threshold: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    value: np.ndarray,
    X: np.ndarray,
) -> np.ndarray:
    """Leaf value reached by every row of X; descends left when x <= threshold."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    k = X.shape[0]
    idx = np.zeros(k, dtype=np.int32)
    active = feature[idx] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        node = idx[rows]
        f = feature[node]
        go_left = X[rows, f] <= threshold[node]
        idx[rows] = np.where(go_left, left[node], right[node])
        active[rows] = feature[idx[rows]] >= 0
    return value[idx]
