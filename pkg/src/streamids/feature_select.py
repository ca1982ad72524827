"""Label-free feature selection by clustering correlated features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

# |rho| of exact duplicates can land a few ulps under 1.0
_RHO_SLACK = 1e-12


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionConfig:
    buffer_size: int = 1000
    correlation_threshold: float = 0.9

    def __post_init__(self):
        if self.buffer_size < 2:
            raise ValueError("buffer_size must be at least 2")
        if not 0 < self.correlation_threshold <= 1:
            raise ValueError("correlation_threshold must be in (0, 1]")


@dataclass(frozen=True)
class FeatureMask:
    selected: tuple[int, ...]

    def __post_init__(self):
        sel = tuple(int(i) for i in self.selected)
        if not sel:
            raise ValueError("feature mask cannot be empty")
        if list(sel) != sorted(set(sel)) or sel[0] < 0:
            raise ValueError(f"mask indices must be sorted, unique, non-negative: {sel}")
        object.__setattr__(self, "selected", sel)

    @classmethod
    def full(cls, n_features: int) -> "FeatureMask":
        return cls(tuple(range(n_features)))

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.selected, dtype=np.intp)

    def __len__(self) -> int:
        return len(self.selected)

    def fits(self, n_features: int) -> bool:
        return self.selected[-1] < n_features


def abs_correlation(x: np.ndarray) -> np.ndarray:
    """Pairwise |Pearson rho|; zero-variance columns correlate 0 with everything (1 with themselves)."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    live = norms > 0
    rho = np.zeros((x.shape[1], x.shape[1]))
    if live.any():
        z = centered[:, live] / norms[live]
        rho[np.ix_(live, live)] = np.abs(z.T @ z)
    np.fill_diagonal(rho, 1.0)
    return np.minimum(rho, 1.0)


def select_features(x: np.ndarray, cfg: SelectionConfig = SelectionConfig()) -> FeatureMask:
    """Pick one representative per single-linkage cluster of correlated features.

    ``x`` is the (records, features) buffer; labels are never passed in.
    Clusters join features whose distance ``1 - |rho|`` is within
    ``1 - correlation_threshold``. Each cluster contributes its highest-variance
    member (lowest index on ties); zero-variance representatives are dropped
    unless nothing else would remain.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise SelectionError("selection buffer needs at least 2 records")
    f = x.shape[1]
    if f == 0:
        raise SelectionError("selection buffer has no features")
    rho = abs_correlation(x)
    linked = rho >= cfg.correlation_threshold - _RHO_SLACK
    n_comp, labels = connected_components(csr_matrix(linked), directed=False)
    var = x.var(axis=0)
    reps = []
    for comp in range(n_comp):
        members = np.flatnonzero(labels == comp)
        # argmax returns the first (lowest index) maximum
        reps.append(int(members[np.argmax(var[members])]))
    reps.sort()
    informative = [r for r in reps if var[r] > 0]
    return FeatureMask(tuple(informative or reps[:1]))


def apply_mask(features: np.ndarray, mask: FeatureMask) -> np.ndarray:
    if not mask.fits(len(features)):
        raise IndexError(f"mask index {mask.selected[-1]} out of range for {len(features)} features")
    return np.asarray(features)[mask.indices]
