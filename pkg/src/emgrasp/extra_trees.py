"""Extremely randomized trees for 14-class gesture probabilities.

Classic extra-trees: every tree sees the full training set (no bootstrap).
At each node, k distinct feature indices are drawn uniformly; each gets one
threshold drawn uniformly strictly inside that feature's observed (min, max)
at the node; the candidate with the largest Gini-impurity decrease wins,
ties going to the lowest feature index, then the lowest threshold. A node
becomes a leaf (class-count histogram) when it is pure, falls below
min_samples_split, or all drawn candidates are constant.

Randomness is one numpy Generator per tree, spawned from a single
SeedSequence(seed); node draws happen in depth-first preorder (parent,
left subtree, right subtree), so training is bit-reproducible and trees
could be built in parallel without changing the result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError

NUM_CLASSES = 14
MODEL_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    n_trees: int = 50
    k_features: int = 6
    min_samples_split: int = 2
    max_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.k_features < 1:
            raise ConfigError(f"k_features must be >= 1, got {self.k_features}")
        if self.min_samples_split < 2:
            raise ConfigError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1 or None, got {self.max_depth}")


@dataclass
class Tree:
    """Flat binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray  # int32, -1 at leaves
    threshold: np.ndarray  # float64, nan at leaves
    left: np.ndarray  # int32, -1 at leaves
    right: np.ndarray  # int32, -1 at leaves
    counts: np.ndarray  # (n_nodes, NUM_CLASSES) class histograms, zero at internal nodes
    dist: np.ndarray = field(default=None, repr=False)  # normalized leaf rows

    def __post_init__(self):
        if self.dist is None:
            totals = self.counts.sum(axis=1, keepdims=True)
            safe = np.where(totals > 0, totals, 1.0)
            self.dist = self.counts / safe

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        pos = np.zeros(X.shape[0], dtype=np.int32)
        active = self.feature[pos] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            node = pos[idx]
            go_left = X[idx, self.feature[node]] <= self.threshold[node]
            pos[idx] = np.where(go_left, self.left[node], self.right[node])
            active[idx] = self.feature[pos[idx]] >= 0
        return pos


@dataclass
class ExtraTreesModel:
    trees: list
    n_features: int
    feature_order: list
    config: TrainConfig
    classes: list = field(default_factory=lambda: list(range(NUM_CLASSES)))


def _check_features(X: np.ndarray, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DataError(f"{name}: expected rows x features, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name}: non-finite feature values")
    return X


def _build_tree(
    X: np.ndarray, y: np.ndarray, cfg: TrainConfig, rng: np.random.Generator
) -> Tree:
    n_features = X.shape[1]
    k = cfg.k_features
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        counts.append(None)
        return len(feature) - 1

    root = new_node()
    # LIFO with right pushed first => left subtree is processed first (preorder).
    stack = [(root, np.arange(y.size, dtype=np.int64), 0)]
    while stack:
        slot, rows, depth = stack.pop()
        y_node = y[rows]
        node_counts = np.bincount(y_node, minlength=NUM_CLASSES).astype(np.float64)
        n = rows.size
        if (
            node_counts.max() == n
            or n < cfg.min_samples_split
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
        ):
            counts[slot] = node_counts
            continue

        feats = rng.choice(n_features, size=k, replace=False)
        draws = rng.random(k)
        sub = X[rows[:, None], feats[None, :]]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        usable = hi > lo
        if not usable.any():
            counts[slot] = node_counts
            continue
        thr = lo + draws * (hi - lo)
        thr = np.where(thr <= lo, np.nextafter(lo, hi), thr)
        thr = np.where(thr >= hi, np.nextafter(hi, lo), thr)

        # class counts of each candidate's left side in one matmul
        mask = sub <= thr  # n x k
        onehot = np.zeros((n, NUM_CLASSES))
        onehot[np.arange(n), y_node] = 1.0
        left_counts = mask.T.astype(np.float64) @ onehot
        n_left = left_counts.sum(axis=1)
        n_right = n - n_left
        right_counts = node_counts - left_counts
        gini_parent = 1.0 - np.sum((node_counts / n) ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
            gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        decrease = gini_parent - (n_left * gini_left + n_right * gini_right) / n

        best = None
        best_key = None
        for j in range(k):
            if not usable[j]:
                continue
            key = (-decrease[j], feats[j], thr[j])
            if best_key is None or key < best_key:
                best_key = key
                best = j

        go_left = mask[:, best]
        feature[slot] = int(feats[best])
        threshold[slot] = float(thr[best])
        lslot = new_node()
        rslot = new_node()
        left[slot] = lslot
        right[slot] = rslot
        stack.append((rslot, rows[~go_left], depth + 1))
        stack.append((lslot, rows[go_left], depth + 1))

    counts_arr = np.zeros((len(feature), NUM_CLASSES))
    for i, c in enumerate(counts):
        if c is not None:
            counts_arr[i] = c
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        counts=counts_arr,
    )


def train(X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> ExtraTreesModel:
    """Train the ensemble on the full dataset (no bootstrap).

    Raises:
        DataError: empty X, non-finite features, or labels outside 0..13.
        ConfigError: k_features exceeds the feature count.
    """
    X = _check_features(X, "train")
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise DataError("train: empty training set")
    if y.shape != (X.shape[0],):
        raise DataError(f"train: y shape {y.shape} does not match {X.shape[0]} rows")
    if not np.issubdtype(y.dtype, np.integer):
        raise DataError("train: labels must be integers")
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= NUM_CLASSES:
        raise DataError(f"train: labels must be in 0..{NUM_CLASSES - 1}")
    if cfg.k_features > X.shape[1]:
        raise ConfigError(
            f"k_features={cfg.k_features} exceeds feature count {X.shape[1]}"
        )

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)  # one child stream per tree
    trees = [_build_tree(X, y, cfg, np.random.default_rng(s)) for s in seeds]

    if X.shape[1] == 36:
        from .features import feature_names

        order = feature_names()
    else:
        order = [f"f{i:02d}" for i in range(X.shape[1])]
    return ExtraTreesModel(trees=trees, n_features=X.shape[1], feature_order=order, config=cfg)


def _require_trained(model: ExtraTreesModel):
    if not model.trees:
        raise DataError("model has no trees; train it first")


def predict_proba_batch(model: ExtraTreesModel, X: np.ndarray) -> np.ndarray:
    """(n, 14) class probabilities: unweighted mean of per-tree leaf distributions."""
    _require_trained(model)
    X = _check_features(X, "predict_proba")
    if X.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {X.shape[1]}")
    acc = np.zeros((X.shape[0], NUM_CLASSES))
    for tree in model.trees:
        acc += tree.dist[tree.apply(X)]
    return acc / len(model.trees)


def predict_proba(model: ExtraTreesModel, x: np.ndarray) -> np.ndarray:
    """14-class probability vector for a single feature vector."""
    return predict_proba_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]


def predict_batch(model: ExtraTreesModel, X: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties resolve to the lowest label.
    return np.argmax(predict_proba_batch(model, X), axis=1)


def predict(model: ExtraTreesModel, x: np.ndarray) -> int:
    return int(np.argmax(predict_proba(model, x)))


def model_to_dict(model: ExtraTreesModel) -> dict:
    """JSON-ready dump; thresholds round-trip bit-faithfully via float repr."""
    trees = []
    for tree in model.trees:
        leaf_idx = np.flatnonzero(tree.feature < 0)
        trees.append(
            {
                "feature": tree.feature.tolist(),
                "threshold": [None if f < 0 else t for f, t in zip(tree.feature, tree.threshold)],
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "leaf_nodes": leaf_idx.tolist(),
                "leaf_counts": tree.counts[leaf_idx].tolist(),
            }
        )
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "n_features": model.n_features,
        "classes": model.classes,
        "feature_order": model.feature_order,
        "config": {
            "n_trees": model.config.n_trees,
            "k_features": model.config.k_features,
            "min_samples_split": model.config.min_samples_split,
            "max_depth": model.config.max_depth,
            "seed": model.config.seed,
        },
        "trees": trees,
    }


def model_from_dict(payload: dict) -> ExtraTreesModel:
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version!r}")
    trees = []
    for t in payload["trees"]:
        feature = np.asarray(t["feature"], dtype=np.int32)
        threshold = np.asarray(
            [np.nan if v is None else v for v in t["threshold"]], dtype=np.float64
        )
        counts = np.zeros((feature.size, NUM_CLASSES))
        for idx, row in zip(t["leaf_nodes"], t["leaf_counts"]):
            counts[idx] = row
        trees.append(
            Tree(
                feature=feature,
                threshold=threshold,
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                counts=counts,
            )
        )
    return ExtraTreesModel(
        trees=trees,
        n_features=payload["n_features"],
        feature_order=list(payload["feature_order"]),
        config=TrainConfig(**payload["config"]),
        classes=list(payload["classes"]),
    )


def save_model(model: ExtraTreesModel, path: Path | str):
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)


def load_model(path: Path | str) -> ExtraTreesModel:
    with open(path) as f:
        return model_from_dict(json.load(f))
