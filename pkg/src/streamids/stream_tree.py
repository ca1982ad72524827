"""Incremental Hoeffding Adaptive Tree with per-node drift windows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .drift_window import DRIFT, STABLE, WARNING, DriftWindow
from .feature_select import FeatureMask


@dataclass(frozen=True)
class HatConfig:
    delta: float = 1e-7
    grace_period: int = 200
    tie_threshold: float = 0.05
    drift_delta: float = 0.002
    n_bins: int = 10

    def __post_init__(self):
        if not 0 < self.delta < 1 or not 0 < self.drift_delta < 1:
            raise ValueError("delta and drift_delta must be in (0, 1)")
        if self.grace_period <= 0 or self.tie_threshold <= 0 or self.n_bins < 2:
            raise ValueError("grace_period, tie_threshold must be positive and n_bins >= 2")


@dataclass(frozen=True)
class DriftEvent:
    arrival_index: int
    path: tuple[int, ...]
    kind: str


def hoeffding_bound(value_range: float, delta: float, n: int) -> float:
    if n < 1 or not 0 < delta < 1 or value_range <= 0:
        raise ValueError("need n >= 1, 0 < delta < 1, range > 0")
    return math.sqrt(value_range * value_range * math.log(1.0 / delta) / (2.0 * n))


def _entropy(counts: np.ndarray) -> np.ndarray:
    """Entropy in bits along the last axis; empty distributions give 0."""
    n = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, counts / np.where(n > 0, n, 1), 0.0)
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
    return -terms.sum(axis=-1)


class Leaf:
    __slots__ = ("counts", "prior", "stats", "features", "rows", "n_stats", "last_eval",
                 "window", "background")

    def __init__(self, n_classes: int, mask: FeatureMask, n_bins: int, drift_delta: float,
                 prior: Optional[np.ndarray] = None):
        self.counts = np.zeros(n_classes, dtype=np.int64)
        self.prior = np.zeros(n_classes) if prior is None else prior.astype(np.float64)
        self.features = mask.indices
        self.rows = np.arange(len(self.features))
        self.stats = np.zeros((len(self.features), n_bins, n_classes))
        self.n_stats = 0
        self.last_eval = 0
        self.window = DriftWindow(drift_delta)
        self.background = None


class Split:
    __slots__ = ("feature", "threshold", "left", "right", "window", "background")

    def __init__(self, feature: int, threshold: float, left, right, drift_delta: float):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.window = DriftWindow(drift_delta)
        self.background = None


class HoeffdingAdaptiveTree:
    """Multiclass HAT over numeric features assumed to live in [0, 1].

    Leaves keep equal-width histograms per masked feature; candidate split
    thresholds are the bin boundaries. A node whose error window warns grows a
    background subtree; on drift the background (or a fresh leaf) takes its
    place. Only rises in error trigger either response.

    ``mask_provider`` is called on every drift replacement; a returned mask
    applies to every leaf created from then on, so masks are versioned per
    subtree.
    """

    def __init__(self, n_features: int, n_classes: int, config: HatConfig = HatConfig(),
                 mask: Optional[FeatureMask] = None,
                 mask_provider: Optional[Callable[[], Optional[FeatureMask]]] = None):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.n_features = n_features
        self.n_classes = n_classes
        self.config = config
        self.mask = mask or FeatureMask.full(n_features)
        if not self.mask.fits(n_features):
            raise ValueError("mask does not fit the feature arity")
        self.mask_provider = mask_provider
        self.class_totals = np.zeros(n_classes, dtype=np.int64)
        self.n_learned = 0
        self.n_splits = 0
        self.root = self._new_leaf()

    def set_mask(self, mask: FeatureMask) -> None:
        if not mask.fits(self.n_features):
            raise ValueError("mask does not fit the feature arity")
        self.mask = mask

    def _new_leaf(self, prior=None) -> Leaf:
        return Leaf(self.n_classes, self.mask, self.config.n_bins, self.config.drift_delta, prior)

    def _check(self, x: np.ndarray) -> None:
        if x.shape != (self.n_features,):
            raise ValueError(f"expected {self.n_features} features, got shape {x.shape}")

    @staticmethod
    def _sort(node, x):
        while type(node) is Split:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def _leaf_class(self, leaf: Leaf) -> int:
        dist = leaf.counts + leaf.prior
        if dist.sum() == 0:
            return int(np.argmax(self.class_totals))
        return int(np.argmax(dist))

    def predict(self, x: np.ndarray) -> tuple[int, np.ndarray]:
        """Majority class at the reached leaf plus Laplace-smoothed class confidences."""
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        leaf = self._sort(self.root, x)
        dist = leaf.counts + leaf.prior
        conf = (dist + 1.0) / (dist.sum() + self.n_classes)
        return self._leaf_class(leaf), conf

    def learn_one(self, x: np.ndarray, y: int, index: Optional[int] = None) -> list[DriftEvent]:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        if not 0 <= y < self.n_classes:
            raise ValueError(f"class {y} out of range")
        if index is None:
            index = self.n_learned
        events: list[DriftEvent] = []

        # walk down, feeding each node's window with the leaf's error bit
        err = int(self._leaf_class(self._sort(self.root, x)) != y)
        parent, side, node, path = None, None, self.root, ()
        while True:
            status = node.window.update(err)
            rising = node.window.increased
            if status == DRIFT and rising:
                events.append(DriftEvent(index, path, "drift"))
                node = self._replace(parent, side, node)
            elif status == WARNING and rising and node.background is None:
                events.append(DriftEvent(index, path, "warning"))
                node.background = self._new_leaf()
            elif status == STABLE and node.background is not None:
                node.background = None
            if node.background is not None:
                node.background = self._learn_plain(node.background, x, y)
            if type(node) is not Split:
                break
            go_right = x[node.feature] > node.threshold
            parent, side = node, go_right
            node = node.right if go_right else node.left
            path = path + (int(go_right),)

        self._update_leaf(parent, side, node, x, y)
        self.class_totals[y] += 1
        self.n_learned += 1
        return events

    def _replace(self, parent, side, node):
        if self.mask_provider is not None:
            mask = self.mask_provider()
            if mask is not None:
                self.set_mask(mask)
        new = node.background if node.background is not None else self._new_leaf()
        self._link(parent, side, new)
        return new

    def _link(self, parent, side, new) -> None:
        if parent is None:
            self.root = new
        elif side:
            parent.right = new
        else:
            parent.left = new

    def _learn_plain(self, root, x, y):
        """Grow a background subtree; returns its (possibly new) root."""
        parent, side, node = None, None, root
        while type(node) is Split:
            go_right = x[node.feature] > node.threshold
            parent, side = node, go_right
            node = node.right if go_right else node.left
        new = self._grow(node, x, y)
        if new is node:
            return root
        if parent is None:
            return new
        if side:
            parent.right = new
        else:
            parent.left = new
        return root

    def _update_leaf(self, parent, side, leaf: Leaf, x, y) -> None:
        new = self._grow(leaf, x, y)
        if new is not leaf:
            self._link(parent, side, new)
            self.n_splits += 1

    def _grow(self, leaf: Leaf, x, y):
        leaf.counts[y] += 1
        bins = np.ceil(x[leaf.features] * self.config.n_bins).astype(np.intp) - 1
        np.clip(bins, 0, self.config.n_bins - 1, out=bins)
        leaf.stats[leaf.rows, bins, y] += 1.0
        leaf.n_stats += 1
        if leaf.n_stats - leaf.last_eval < self.config.grace_period:
            return leaf
        leaf.last_eval = leaf.n_stats
        return self._attempt_split(leaf)

    def _attempt_split(self, leaf: Leaf):
        cfg = self.config
        stats = leaf.stats
        total = stats[0].sum(axis=0)
        if np.count_nonzero(total) < 2 or len(leaf.features) == 0:
            return leaf
        n = total.sum()
        left = np.cumsum(stats, axis=1)[:, :-1, :]
        right = total - left
        n_left = left.sum(axis=-1)
        n_right = right.sum(axis=-1)
        gain = _entropy(total) - (n_left * _entropy(left) + n_right * _entropy(right)) / n
        gain = np.where((n_left > 0) & (n_right > 0), gain, 0.0)
        best_bin = np.argmax(gain, axis=1)
        per_feature = gain[np.arange(len(gain)), best_bin]
        best = int(np.argmax(per_feature))
        best_gain = per_feature[best]
        others = np.delete(per_feature, best)
        second = max(float(others.max()) if len(others) else 0.0, 0.0)
        if best_gain <= 0:
            return leaf
        eps = hoeffding_bound(math.log2(self.n_classes), cfg.delta, int(n))
        if best_gain - second <= eps and eps >= cfg.tie_threshold:
            return leaf
        b = int(best_bin[best])
        threshold = (b + 1) / cfg.n_bins
        feature = int(leaf.features[best])
        prior_left = left[best, b].copy()
        prior_right = right[best, b].copy()
        node = Split(feature, threshold, self._new_leaf(prior_left), self._new_leaf(prior_right),
                     cfg.drift_delta)
        node.window = leaf.window
        node.background = leaf.background
        return node

    # -- inspection helpers

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if type(node) is Split:
                stack.extend((node.right, node.left))
            else:
                yield node

    def n_nodes(self) -> int:
        return sum(1 for _ in self._nodes())

    def _nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if type(node) is Split:
                stack.extend((node.right, node.left))

    def depth(self) -> int:
        def d(node):
            return 1 + max(d(node.left), d(node.right)) if type(node) is Split else 1
        return d(self.root)

    def structure(self):
        """Nested tuples describing splits and leaf counts, for equality checks."""
        def walk(node):
            if type(node) is Split:
                return ("split", node.feature, node.threshold, walk(node.left), walk(node.right))
            return ("leaf", tuple(int(c) for c in node.counts))
        return walk(self.root)


class BinaryHAT(HoeffdingAdaptiveTree):
    """Normal-vs-attack tree: any class other than ``normal_id`` is learned as 1."""

    def __init__(self, n_features: int, normal_id: int = 0, config: HatConfig = HatConfig(), **kw):
        super().__init__(n_features, 2, config, **kw)
        self.normal_id = normal_id

    def collapse(self, y: int) -> int:
        return int(y != self.normal_id)

    def learn_one(self, x, y, index=None):
        return super().learn_one(x, self.collapse(y), index)
