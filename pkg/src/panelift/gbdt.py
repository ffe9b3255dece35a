"""Gradient-boosted regression trees with logistic loss.

Trees are grown level-wise with exact greedy splits: candidate thresholds
are midpoints between consecutive distinct sorted feature values, scored
by variance reduction of the current residuals, subject to a minimum leaf
size. Leaf values are mean residuals, so every boosting round is a
damped gradient step and training loss cannot increase for learning
rates up to one.

The split scan is the hot kernel; it runs through `panelift.kernels`
(compiled backend when available, numpy fallback otherwise, identical
results either way).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import ValidationError

#: splits must strictly beat this gain to be taken
GAIN_TOL = 0.0


@dataclass(frozen=True)
class Tree:
    """One regression tree in flat-array form.

    ``feature[k] == -1`` marks node k as a leaf; internal nodes route
    samples left when ``x[feature] <= threshold``. ``leaf_ordinal``
    numbers the leaves 0..n_leaves-1 in creation order (used as one-hot
    feature indices by the linear head).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_ordinal: np.ndarray
    n_leaves: int

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "leaf_ordinal": self.leaf_ordinal.tolist(),
            "n_leaves": self.n_leaves,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            leaf_ordinal=np.asarray(d["leaf_ordinal"], dtype=np.int32),
            n_leaves=int(d["n_leaves"]),
        )


class _TreeBuilder:
    """Grows one tree level-wise against the current residuals."""

    def __init__(self, X, sort_idx, max_depth, min_leaf, threads=1):
        self.X = X
        self.sort_idx = sort_idx
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.threads = threads

    def _scan_level(self, node_of, grad, n_nodes):
        p = self.X.shape[1]

        def scan(f):
            return kernels.scan_feature_splits(
                self.sort_idx[f], self.X[:, f], node_of, grad, n_nodes, self.min_leaf
            )

        if self.threads > 1 and p > 1:
            with ThreadPoolExecutor(max_workers=min(self.threads, p)) as pool:
                per_feature = list(pool.map(scan, range(p)))
        else:
            per_feature = [scan(f) for f in range(p)]

        best_gain = np.full(n_nodes, -np.inf)
        best_feat = np.full(n_nodes, -1, dtype=np.int32)
        best_thr = np.zeros(n_nodes)
        for f, (gain, thr, _lc, _ls) in enumerate(per_feature):
            better = gain > best_gain  # strict: lowest feature index wins ties
            best_gain[better] = gain[better]
            best_feat[better] = f
            best_thr[better] = thr[better]
        return best_gain, best_feat, best_thr

    def build(self, grad):
        n = len(grad)
        feature, threshold, left, right, value, leaf_ord = [], [], [], [], [], []
        sample_value = np.zeros(n)
        sample_leaf = np.full(n, -1, dtype=np.int32)
        n_leaves = 0

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            leaf_ord.append(-1)
            return len(feature) - 1

        root = new_node()
        node_of = np.zeros(n, dtype=np.int32)  # level-local ids
        level_nodes = [root]  # level-local id -> global node index

        for depth in range(self.max_depth + 1):
            n_nodes = len(level_nodes)
            active = node_of >= 0
            if not active.any():
                break
            if depth < self.max_depth:
                gain, feat, thr = self._scan_level(node_of, grad, n_nodes)
                split = gain > GAIN_TOL
            else:
                split = np.zeros(n_nodes, dtype=bool)

            counts = np.bincount(node_of[active], minlength=n_nodes).astype(np.float64)
            sums = np.bincount(node_of[active], weights=grad[active], minlength=n_nodes)

            # finalize leaves
            for k in range(n_nodes):
                if split[k] or counts[k] == 0:
                    continue
                g = level_nodes[k]
                value[g] = sums[k] / counts[k]
                leaf_ord[g] = n_leaves
                n_leaves += 1
            leaf_mask = active & ~split[node_of]
            if leaf_mask.any():
                gidx = np.asarray([level_nodes[k] for k in range(n_nodes)])
                sample_value[leaf_mask] = np.asarray(value)[gidx[node_of[leaf_mask]]]
                sample_leaf[leaf_mask] = np.asarray(leaf_ord)[gidx[node_of[leaf_mask]]]
                node_of = node_of.copy()
                node_of[leaf_mask] = -1

            if not split.any():
                break

            # create children and reroute samples of split nodes
            next_nodes = []
            child_base = np.full(n_nodes, -1, dtype=np.int32)
            for k in range(n_nodes):
                if not split[k]:
                    continue
                g = level_nodes[k]
                feature[g] = int(feat[k])
                threshold[g] = float(thr[k])
                lk = new_node()
                rk = new_node()
                left[g], right[g] = lk, rk
                child_base[k] = len(next_nodes)
                next_nodes.extend([lk, rk])

            moving = node_of >= 0
            idx = np.flatnonzero(moving)
            nd = node_of[idx]
            xi = self.X[idx, feat[nd]]
            go_left = xi <= thr[nd]
            node_of = node_of.copy()
            node_of[idx] = child_base[nd] + np.where(go_left, 0, 1)
            level_nodes = next_nodes

        tree = Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=np.float64),
            leaf_ordinal=np.asarray(leaf_ord, dtype=np.int32),
            n_leaves=n_leaves,
        )
        return tree, sample_value, sample_leaf


def tree_apply(tree: Tree, X: np.ndarray):
    """Leaf node index and leaf ordinal for each row of X."""
    n = len(X)
    idx = np.zeros(n, dtype=np.int32)
    while True:
        f = tree.feature[idx]
        active = np.flatnonzero(f >= 0)
        if len(active) == 0:
            break
        ai = idx[active]
        xi = X[active, tree.feature[ai]]
        go_left = xi <= tree.threshold[ai]
        idx[active] = np.where(go_left, tree.left[ai], tree.right[ai])
    return idx, tree.leaf_ordinal[idx]


def logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss of raw margins against 0/1 labels."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def boost(X, y, n_trees, max_depth, min_leaf, learning_rate, threads=1):
    """Fit the boosted ensemble.

    Returns (trees, base_score, losses, leaf_ordinals) where ``losses``
    has the training loss before any tree and after each round, and
    ``leaf_ordinals`` is the (n, n_trees) matrix of per-round leaf
    assignments of the training rows.
    """
    n, p = X.shape
    base_rate = float(np.mean(y))
    if not 0.0 < base_rate < 1.0:
        raise ValidationError("training labels must contain both classes")
    base_score = float(np.log(base_rate / (1.0 - base_rate)))
    margin = np.full(n, base_score)
    losses = [logistic_loss(margin, y)]
    sort_idx = np.stack([np.argsort(X[:, f], kind="stable") for f in range(p)])
    builder = _TreeBuilder(X, sort_idx, max_depth, min_leaf, threads)

    trees = []
    leaf_cols = np.empty((n, n_trees), dtype=np.int32) if n_trees else np.empty((n, 0), np.int32)
    for m in range(n_trees):
        resid = y - expit(margin)
        tree, sample_value, sample_leaf = builder.build(resid)
        margin = margin + learning_rate * sample_value
        trees.append(tree)
        leaf_cols[:, m] = sample_leaf
        losses.append(logistic_loss(margin, y))
    return trees, base_score, losses, leaf_cols


def ensemble_margin(trees, base_score, learning_rate, X):
    """Raw boosted margin: base_score + learning_rate * sum of leaf values."""
    z = np.full(len(X), base_score)
    for tree in trees:
        idx, _ = tree_apply(tree, X)
        z += learning_rate * tree.value[idx]
    return z


def leaf_ordinal_matrix(trees, X):
    """(n, n_trees) leaf ordinals, the linear head's input features."""
    out = np.empty((len(X), len(trees)), dtype=np.int32)
    for t, tree in enumerate(trees):
        _, out[:, t] = tree_apply(tree, X)
    return out
