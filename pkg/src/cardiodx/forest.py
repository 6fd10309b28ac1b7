"""Random forest over HRV feature rows, built from scratch.

Bagged binary decision trees with Gini-impurity splits on axis-aligned
thresholds. Trees are plain nested dicts so a trained model serializes to a
JSON tree list and predictions can be re-tallied from the serialized form.
Labels are 0 (healthy) and 1 (arrhythmia); the prediction score is the
fraction of trees voting 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidInputError, derive_seed


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 6
    bootstrap_frac: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1:
            raise InvalidInputError("n_trees and max_depth must be >= 1")
        if not 0.0 < self.bootstrap_frac <= 1.0:
            raise InvalidInputError("bootstrap_frac must be in (0, 1]")


@dataclass
class ForestModel:
    trees: list[dict]
    config: ForestConfig = field(default_factory=ForestConfig)

    def to_json(self) -> str:
        return json.dumps({
            "version": 1,
            "n_trees": self.config.n_trees,
            "max_depth": self.config.max_depth,
            "bootstrap_frac": self.config.bootstrap_frac,
            "seed": self.config.seed,
            "trees": self.trees,
        })

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        cfg = ForestConfig(n_trees=doc["n_trees"], max_depth=doc["max_depth"],
                           bootstrap_frac=doc["bootstrap_frac"], seed=doc["seed"])
        return cls(trees=doc["trees"], config=cfg)


def _gini(labels: np.ndarray) -> float:
    if labels.size == 0:
        return 0.0
    p = labels.mean()
    return 2.0 * p * (1.0 - p)


def _leaf(labels: np.ndarray) -> dict:
    ones = int(labels.sum())
    zeros = labels.size - ones
    # Vote ties break toward the negative (healthy) class.
    return {"leaf": 1 if ones > zeros else 0, "n": int(labels.size)}


def _best_split(x: np.ndarray, y: np.ndarray,
                features: np.ndarray) -> tuple[int, float] | None:
    best = None
    best_score = np.inf
    n = y.size
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        distinct = np.nonzero(np.diff(xs))[0]
        if distinct.size == 0:
            continue
        left_ones = np.cumsum(ys)[distinct]
        left_n = distinct + 1.0
        right_n = n - left_n
        total_ones = ys.sum()
        pl = left_ones / left_n
        pr = (total_ones - left_ones) / right_n
        score = (left_n * 2 * pl * (1 - pl) + right_n * 2 * pr * (1 - pr)) / n
        k = int(np.argmin(score))
        if score[k] < best_score - 1e-12:
            best_score = score[k]
            thr = (xs[distinct[k]] + xs[distinct[k] + 1]) / 2.0
            best = (int(f), float(thr))
    return best


def _grow(x: np.ndarray, y: np.ndarray, depth: int, cfg: ForestConfig,
          rng: np.random.Generator, mtry: int) -> dict:
    if depth >= cfg.max_depth or y.size < 2 or _gini(y) == 0.0:
        return _leaf(y)
    features = rng.permutation(x.shape[1])[:mtry]
    split = _best_split(x, y, np.sort(features))
    if split is None:
        return _leaf(y)
    f, thr = split
    mask = x[:, f] <= thr
    if not mask.any() or mask.all():
        return _leaf(y)
    return {
        "feature": f,
        "threshold": thr,
        "left": _grow(x[mask], y[mask], depth + 1, cfg, rng, mtry),
        "right": _grow(x[~mask], y[~mask], depth + 1, cfg, rng, mtry),
    }


def rf_train(features, labels, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    """Fit bagged Gini trees; deterministic given cfg.seed."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InvalidInputError("features must be (n, d) with matching labels")
    if x.shape[0] < 2 or len(np.unique(y)) < 2:
        raise InvalidInputError("training set must contain both classes")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features must be finite")
    mtry = max(1, math.isqrt(x.shape[1]))
    n_boot = max(1, int(round(cfg.bootstrap_frac * x.shape[0])))
    trees = []
    for k in range(cfg.n_trees):
        rng = np.random.default_rng(derive_seed(cfg.seed, "tree", k))
        idx = rng.integers(0, x.shape[0], size=n_boot)
        trees.append(_grow(x[idx], y[idx], 0, cfg, rng, mtry))
    return ForestModel(trees=trees, config=cfg)


def _tree_vote(tree: dict, row: np.ndarray) -> int:
    node = tree
    while "leaf" not in node:
        node = node["left"] if row[node["feature"]] <= node["threshold"] \
            else node["right"]
    return node["leaf"]


def rf_predict(model: ForestModel, row) -> tuple[int, float]:
    """Majority-vote label and positive-vote fraction for one feature row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise InvalidInputError("row must be 1-D")
    votes = sum(_tree_vote(t, row) for t in model.trees)
    score = votes / len(model.trees)
    return (1 if score > 0.5 else 0), score
