"""Covariate-to-score learner.

Noisy per-unit effect estimates become a binary top-quantile target; a
gradient-boosted tree ensemble (optionally re-weighted by a logistic
linear layer over its leaf indicators) maps covariates to the probability
of landing in that top quantile. Scores are evaluated by tie-aware AUC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import kernels
from .errors import (
    DegenerateLabelsError,
    IdMismatchError,
    UndefinedMetricError,
    ValidationError,
)
from .gbdt import Tree, boost, ensemble_margin, leaf_ordinal_matrix
from .rankcheck import average_ranks
from .streams import substream

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LabeledExample:
    """One training row: features plus the top-quantile label."""

    unit_id: object
    features: np.ndarray
    label: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", f)
        if f.ndim != 1:
            raise ValidationError("features must be a 1-d vector")
        if not np.all(np.isfinite(f)):
            raise ValidationError(f"unit {self.unit_id}: non-finite feature value")
        if self.label not in (0, 1):
            raise ValidationError("label must be 0 or 1")


@dataclass(frozen=True)
class TrainConfig:
    """Learner hyperparameters (defaults frozen by the acceptance suite)."""

    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 20
    quantile: float = 0.2
    holdout_fraction: float = 0.2
    use_linear_head: bool = True
    head_l2: float = 1e-4
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValidationError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.min_leaf < 1:
            raise ValidationError("min_leaf must be >= 1")
        if not 0.0 < self.quantile < 1.0:
            raise ValidationError("quantile must be in (0, 1)")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValidationError("holdout_fraction must be in (0, 1)")
        if self.head_l2 < 0:
            raise ValidationError("head_l2 must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_leaf": self.min_leaf,
            "quantile": self.quantile,
            "holdout_fraction": self.holdout_fraction,
            "use_linear_head": self.use_linear_head,
            "head_l2": self.head_l2,
            "seed": self.seed,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass(frozen=True)
class LinearHead:
    """Logistic layer over one-hot leaf indicators of every tree."""

    bias: float
    weights: np.ndarray
    tree_offsets: np.ndarray  # weights[tree_offsets[t] + leaf_ordinal] per tree
    l2: float

    def to_dict(self) -> dict:
        return {
            "bias": self.bias,
            "weights": self.weights.tolist(),
            "tree_offsets": self.tree_offsets.tolist(),
            "l2": self.l2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearHead":
        return cls(
            bias=float(d["bias"]),
            weights=np.asarray(d["weights"], dtype=np.float64),
            tree_offsets=np.asarray(d["tree_offsets"], dtype=np.int64),
            l2=float(d["l2"]),
        )


@dataclass(frozen=True)
class GbdtModel:
    """Trained covariate-to-score model."""

    trees: tuple[Tree, ...]
    learning_rate: float
    base_score: float
    n_features: int
    linear_head: LinearHead | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        for t, tree in enumerate(self.trees):
            splits = tree.feature[tree.feature >= 0]
            if splits.size and splits.max() >= self.n_features:
                raise ValidationError(f"tree {t} references feature outside 0..{self.n_features - 1}")

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "gbdt_logistic",
            "n_features": self.n_features,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "trees": [t.to_dict() for t in self.trees],
            "linear_head": self.linear_head.to_dict() if self.linear_head else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        version = d.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValidationError(f"unsupported model format_version: {version!r}")
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            learning_rate=float(d["learning_rate"]),
            base_score=float(d["base_score"]),
            n_features=int(d["n_features"]),
            linear_head=LinearHead.from_dict(d["linear_head"]) if d.get("linear_head") else None,
            feature_names=tuple(d["feature_names"]) if d.get("feature_names") else None,
        )


@dataclass(frozen=True)
class TrainLog:
    """Per-round training losses and summary metrics."""

    losses: tuple[float, ...]
    train_auc: float
    holdout_auc: float | None
    n_train: int
    n_holdout: int
    head_iterations: int | None
    backend: str

    def to_dict(self) -> dict:
        return {
            "losses": list(self.losses),
            "train_auc": self.train_auc,
            "holdout_auc": self.holdout_auc,
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "head_iterations": self.head_iterations,
            "backend": self.backend,
        }


def make_labels(estimates, q: float) -> np.ndarray:
    """Binary top-quantile labels for effect estimates.

    Exactly ceil(q * n) units get label 1: those with the largest
    estimated effects, ties at the threshold resolved by ascending unit
    id. Output is aligned with the input order and depends only on the
    rank order of the estimates.
    """
    if not 0.0 < q < 1.0:
        raise ValidationError("q must be in (0, 1)")
    n = len(estimates)
    if n == 0:
        raise ValidationError("estimates must be nonempty")
    beta_hat = np.asarray([e.beta_hat for e in estimates], dtype=np.float64)
    ids = np.asarray([e.unit_id for e in estimates])
    k = int(math.ceil(q * n - 1e-12))
    k = min(max(k, 1), n)
    top = np.lexsort((ids, -beta_hat))[:k]
    labels = np.zeros(n, dtype=np.int64)
    labels[top] = 1
    return labels


def make_examples(estimates, cov_unit_ids, cov_matrix, q: float) -> list[LabeledExample]:
    """Join estimates with a covariate table into labeled training rows."""
    cov_matrix = np.asarray(cov_matrix, dtype=np.float64)
    index = {uid: i for i, uid in enumerate(np.asarray(cov_unit_ids).tolist())}
    missing = [e.unit_id for e in estimates if e.unit_id not in index]
    if missing:
        raise IdMismatchError(
            f"{len(missing)} estimated units missing covariates (first: {missing[:5]})",
            missing_ids=missing,
        )
    labels = make_labels(estimates, q)
    return [
        LabeledExample(e.unit_id, cov_matrix[index[e.unit_id]], int(labels[i]))
        for i, e in enumerate(estimates)
    ]


def _fit_linear_head(leaf_cols, n_leaves_per_tree, y, base_score, l2):
    offsets = np.concatenate([[0], np.cumsum(n_leaves_per_tree)]).astype(np.int64)
    n_weights = int(offsets[-1])
    cols = offsets[:-1][None, :] + leaf_cols
    n, n_trees = leaf_cols.shape
    yf = y.astype(np.float64)

    def objective(params):
        bias, w = params[0], params[1:]
        z = bias + w[cols].sum(axis=1)
        loss = float(np.mean(np.logaddexp(0.0, z) - yf * z)) + 0.5 * l2 * float(w @ w)
        g = (expit(z) - yf) / n
        grad = np.empty_like(params)
        grad[0] = g.sum()
        grad[1:] = np.bincount(
            cols.ravel(), weights=np.repeat(g, n_trees), minlength=n_weights
        ) + l2 * w
        return loss, grad

    x0 = np.zeros(1 + n_weights)
    x0[0] = base_score
    result = minimize(objective, x0, jac=True, method="L-BFGS-B", options={"maxiter": 300})
    head = LinearHead(
        bias=float(result.x[0]),
        weights=result.x[1:].copy(),
        tree_offsets=offsets,
        l2=l2,
    )
    return head, int(result.nit)


def _head_margin(model: GbdtModel, leaf_cols: np.ndarray) -> np.ndarray:
    head = model.linear_head
    cols = head.tree_offsets[:-1][None, :] + leaf_cols
    return head.bias + head.weights[cols].sum(axis=1)


def predict_margin(model: GbdtModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ValidationError(
            f"feature dimension {X.shape[1]} does not match model ({model.n_features})"
        )
    if model.linear_head is not None and model.trees:
        return _head_margin(model, leaf_ordinal_matrix(model.trees, X))
    return ensemble_margin(model.trees, model.base_score, model.learning_rate, X)


def predict_score(model: GbdtModel, features) -> float | np.ndarray:
    """Probability of the top quantile for one feature vector or a matrix.

    Sigmoid of the boosted margin, or of the linear head over leaf
    indicators when the model carries one. Pure and deterministic.
    """
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    scores = expit(predict_margin(model, features))
    return float(scores[0]) if single else scores


def train(examples: list[LabeledExample], cfg: TrainConfig):
    """Train on labeled examples; returns (model, train_log)."""
    if not examples:
        raise ValidationError("examples must be nonempty")
    dims = {e.features.shape[0] for e in examples}
    if len(dims) != 1:
        raise ValidationError(f"feature dimension mismatch: {sorted(dims)}")
    X = np.stack([e.features for e in examples])
    y = np.asarray([e.label for e in examples], dtype=np.int64)
    return train_arrays(X, y, cfg)


def train_arrays(X, y, cfg: TrainConfig, feature_names=None):
    """Array-based variant of `train` (same contract)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValidationError("X must be (n, p) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    n = len(y)
    if n < 2 * cfg.min_leaf:
        raise ValidationError(f"need at least {2 * cfg.min_leaf} examples, got {n}")

    perm = substream(cfg.seed, "learner.split").permutation(n)
    n_hold = int(round(cfg.holdout_fraction * n))
    n_hold = min(n_hold, n - 1)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    y_train = y[train_idx]
    if len(np.unique(y_train)) < 2:
        raise DegenerateLabelsError("training split contains a single class")

    X_train = X[train_idx]
    trees, base_score, losses, leaf_cols = boost(
        X_train,
        y_train.astype(np.float64),
        n_trees=cfg.n_trees,
        max_depth=cfg.max_depth,
        min_leaf=cfg.min_leaf,
        learning_rate=cfg.learning_rate,
        threads=cfg.threads,
    )

    head, head_iters = None, None
    if cfg.use_linear_head and trees:
        head, head_iters = _fit_linear_head(
            leaf_cols,
            [t.n_leaves for t in trees],
            y_train,
            base_score,
            cfg.head_l2,
        )

    model = GbdtModel(
        trees=tuple(trees),
        learning_rate=cfg.learning_rate,
        base_score=base_score,
        n_features=X.shape[1],
        linear_head=head,
        feature_names=tuple(feature_names) if feature_names else None,
    )

    train_auc = auc(predict_score(model, X_train), y_train)
    holdout_auc = None
    if n_hold >= 2 and len(np.unique(y[hold_idx])) == 2:
        holdout_auc = auc(predict_score(model, X[hold_idx]), y[hold_idx])

    log = TrainLog(
        losses=tuple(losses),
        train_auc=train_auc,
        holdout_auc=holdout_auc,
        n_train=len(train_idx),
        n_holdout=n_hold,
        head_iterations=head_iters,
        backend=kernels.get_backend(),
    )
    return model, log


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties 0.5).

    Rank-based O(n log n) computation.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be 1-d arrays of equal length")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: only one class present")
    ranks = average_ranks(scores)
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
