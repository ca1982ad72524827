"""Per-attack-class verification committees: random forest, kNN and linear SVM under majority vote."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

CONFIRMED = "confirmed_attack"
DEMOTED = "demoted_to_normal"


class CommitteeTrainingError(ValueError):
    pass


@dataclass(frozen=True)
class CommitteeConfig:
    rf_trees: int = 10
    rf_max_depth: int = 8
    knn_k: int = 5
    svm_epochs: int = 3
    svm_lambda: float = 1e-4
    train_buffer_size: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.rf_trees < 1 or self.rf_max_depth < 1:
            raise ValueError("rf_trees and rf_max_depth must be >= 1")
        if self.knn_k < 1 or self.knn_k % 2 == 0:
            raise ValueError("knn_k must be odd and >= 1")
        if self.svm_lambda <= 0 or self.svm_epochs < 1:
            raise ValueError("svm_lambda must be positive, svm_epochs >= 1")
        if self.train_buffer_size < 2:
            raise ValueError("train_buffer_size must be >= 2")


def majority_vote(votes: Sequence[int], positive: Optional[int] = None) -> int:
    """Plurality winner; ties go to ``positive`` if it is tied, else to the smallest class id."""
    if len(votes) == 0:
        raise ValueError("no votes cast")
    counts = Counter(int(v) for v in votes)
    top = max(counts.values())
    winners = [c for c, n in counts.items() if n == top]
    if positive is not None and positive in winners:
        return positive
    return min(winners)


class DecisionTree:
    """CART classifier with Gini impurity and optional per-node feature subsampling."""

    def __init__(self, max_depth: int = 8, max_features: Optional[int] = None,
                 min_samples_split: int = 2, rng: Optional[np.random.Generator] = None):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.root = None
        self.n_classes = 0

    def fit(self, x: np.ndarray, y: np.ndarray) -> "DecisionTree":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.intp)
        self.n_classes = int(y.max()) + 1
        self.root = self._grow(x, y, 0)
        return self

    def _leaf(self, y):
        return ("leaf", int(np.argmax(np.bincount(y, minlength=self.n_classes))))

    def _grow(self, x, y, depth):
        if depth >= self.max_depth or len(y) < self.min_samples_split or np.all(y == y[0]):
            return self._leaf(y)
        best = self._best_split(x, y)
        if best is None:
            return self._leaf(y)
        feat, thr = best
        go_left = x[:, feat] <= thr
        return ("split", feat, thr,
                self._grow(x[go_left], y[go_left], depth + 1),
                self._grow(x[~go_left], y[~go_left], depth + 1))

    def _best_split(self, x, y):
        n, f = x.shape
        if self.max_features is None or self.max_features >= f:
            candidates = np.arange(f)
        else:
            candidates = np.sort(self.rng.choice(f, size=self.max_features, replace=False))
        onehot = np.eye(self.n_classes)[y]
        parent = 1.0 - ((onehot.sum(axis=0) / n) ** 2).sum()
        best_score, best = parent - 1e-12, None
        for feat in candidates:
            order = np.argsort(x[:, feat], kind="stable")
            vals = x[order, feat]
            left = np.cumsum(onehot[order], axis=0)[:-1]
            n_left = np.arange(1, n)[:, None]
            right = left[-1] + onehot[order[-1]] - left
            n_right = n - n_left
            gini_l = 1.0 - ((left / n_left) ** 2).sum(axis=1)
            gini_r = 1.0 - ((right / n_right) ** 2).sum(axis=1)
            score = (n_left[:, 0] * gini_l + n_right[:, 0] * gini_r) / n
            distinct = vals[1:] > vals[:-1]
            if not distinct.any():
                continue
            score = np.where(distinct, score, np.inf)
            pos = int(np.argmin(score))
            if score[pos] < best_score:
                best_score = score[pos]
                best = (int(feat), float((vals[pos] + vals[pos + 1]) / 2.0))
        return best

    def predict_one(self, x: np.ndarray) -> int:
        node = self.root
        while node[0] == "split":
            node = node[3] if x[node[1]] <= node[2] else node[4]
        return node[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(x)])


class RandomForest:
    def __init__(self, n_trees: int = 10, max_depth: int = 8, max_features: Optional[int] = -1,
                 bootstrap: bool = True, seed: int = 0):
        # max_features=-1 means ceil(sqrt(F)); None means all features
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[DecisionTree] = []

    def fit(self, x: np.ndarray, y: np.ndarray) -> "RandomForest":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.intp)
        rng = np.random.default_rng(self.seed)
        m = self.max_features
        if m == -1:
            m = math.ceil(math.sqrt(x.shape[1]))
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, len(y), len(y)) if self.bootstrap else np.arange(len(y))
            tree = DecisionTree(self.max_depth, m, rng=rng)
            self.trees.append(tree.fit(x[idx], y[idx]))
        return self

    def predict_one(self, x: np.ndarray) -> int:
        return majority_vote([t.predict_one(x) for t in self.trees], positive=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(x)])


class KNearest:
    """Euclidean kNN; distance ties resolved by the smaller ordering key (older first)."""

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, x: np.ndarray, y: np.ndarray, keys: Optional[np.ndarray] = None) -> "KNearest":
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.intp)
        self.keys = np.arange(len(self.y)) if keys is None else np.asarray(keys)
        return self

    def predict_one(self, q: np.ndarray) -> int:
        diff = self.x - q
        d2 = np.einsum("ij,ij->i", diff, diff)
        k = min(self.k, len(d2))
        if k < len(d2):
            kth = np.partition(d2, k - 1)[k - 1]
            pool = np.flatnonzero(d2 <= kth)
        else:
            pool = np.arange(len(d2))
        nearest = pool[np.lexsort((self.keys[pool], d2[pool]))[:k]]
        return majority_vote(self.y[nearest], positive=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(x)])


class LinearSVM:
    """Hinge-loss SGD with step 1/(lambda*t); the bias shares the weight decay."""

    def __init__(self, lam: float = 1e-4, epochs: int = 3, seed: int = 0):
        self.lam = lam
        self.epochs = epochs
        self.seed = seed
        self.w = None
        self.b = 0.0

    def fit(self, x: np.ndarray, y: np.ndarray) -> "LinearSVM":
        x = np.asarray(x, dtype=np.float64)
        signs = np.where(np.asarray(y) > 0, 1.0, -1.0)
        rng = np.random.default_rng(self.seed)
        w = np.zeros(x.shape[1])
        b = 0.0
        t = 0
        for _ in range(self.epochs):
            for i in rng.permutation(len(signs)):
                t += 1
                eta = 1.0 / (self.lam * t)
                margin = signs[i] * (x[i] @ w + b)
                decay = 1.0 - eta * self.lam
                w *= decay
                b *= decay
                if margin < 1.0:
                    w += eta * signs[i] * x[i]
                    b += eta * signs[i]
        self.w, self.b = w, b
        return self

    def decision(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.w + self.b

    def predict_one(self, x: np.ndarray) -> int:
        return int(x @ self.w + self.b > 0)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision(np.atleast_2d(x)) > 0).astype(int)


@dataclass
class ClassCommittee:
    target: int
    forest: RandomForest
    knn: KNearest
    svm: LinearSVM
    columns: Optional[np.ndarray] = None
    train_accuracy: dict = field(default_factory=dict)
    buffer_size: int = 0

    def votes(self, features: np.ndarray) -> list[int]:
        x = np.asarray(features, dtype=np.float64)
        if self.columns is not None:
            x = x[self.columns]
        return [self.forest.predict_one(x), self.knn.predict_one(x), self.svm.predict_one(x)]


def train_committee(x: np.ndarray, is_target: np.ndarray, cfg: CommitteeConfig = CommitteeConfig(),
                    target: int = 1, keys: Optional[np.ndarray] = None,
                    columns: Optional[np.ndarray] = None) -> ClassCommittee:
    """Fit all three members on the same labelled buffer (``is_target`` in {0, 1})."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(is_target, dtype=np.intp)
    if columns is not None:
        x = x[:, columns]
    if len(y) == 0 or y.min() == y.max():
        raise CommitteeTrainingError("committee buffer needs both positive and negative examples")
    forest = RandomForest(cfg.rf_trees, cfg.rf_max_depth, seed=cfg.seed).fit(x, y)
    knn = KNearest(cfg.knn_k).fit(x, y, keys)
    svm = LinearSVM(cfg.svm_lambda, cfg.svm_epochs, seed=cfg.seed).fit(x, y)
    acc = {
        "rf": float(np.mean(forest.predict(x) == y)),
        "knn": float(np.mean(knn.predict(x) == y)),
        "svm": float(np.mean(svm.predict(x) == y)),
    }
    return ClassCommittee(target, forest, knn, svm, columns, acc, len(y))


def verify(committee: ClassCommittee, features: np.ndarray) -> str:
    vote = majority_vote(committee.votes(features), positive=1)
    return CONFIRMED if vote == 1 else DEMOTED
