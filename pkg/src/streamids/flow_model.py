"""Domain types shared by every stage: flows, label spaces, verdicts, tallies, metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ADMISSIBLE_PATHS = ((1, 3), (1, 2, 3), (1, 2, 4), (1, 2, 4, 3))

METRIC_NAMES = ("acc", "prec", "tpr", "far", "f1")


@dataclass(frozen=True)
class FlowRecord:
    features: np.ndarray
    true_class: int
    arrival_index: int

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("features must be a 1-D vector")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        object.__setattr__(self, "features", arr)

    @property
    def n_features(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class LabelSpace:
    class_names: tuple[str, ...]
    normal_id: int = 0

    def __post_init__(self):
        names = tuple(self.class_names)
        object.__setattr__(self, "class_names", names)
        if not names:
            raise ValueError("label space needs at least one class")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class names in {names}")
        if not 0 <= self.normal_id < len(names):
            raise ValueError(f"normal_id {self.normal_id} out of range")
        if len(names) < 2:
            raise ValueError("label space needs at least one attack class")

    @classmethod
    def from_names(cls, names: Sequence[str], normal: str) -> "LabelSpace":
        names = tuple(names)
        if normal not in names:
            raise ValueError(f"normal class {normal!r} not among {names}")
        return cls(names, names.index(normal))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def attack_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.class_names)) if i != self.normal_id)

    @property
    def normal_name(self) -> str:
        return self.class_names[self.normal_id]

    def is_attack(self, class_id: int) -> bool:
        return class_id != self.normal_id

    def id_of(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None


@dataclass(frozen=True)
class Verdict:
    record_ref: int
    predicted_class: int
    path: tuple[int, ...]

    def __post_init__(self):
        path = tuple(self.path)
        object.__setattr__(self, "path", path)
        if path not in ADMISSIBLE_PATHS:
            raise ValueError(f"inadmissible stage path {path}")

    @property
    def terminal_stage(self) -> int:
        return self.path[-1]


@dataclass
class StageTallies:
    """Stage-3 (primed) and Stage-4 (double-primed) confusion counters.

    ``per_stage_confusion`` maps stage id to a count matrix indexed
    ``[true, predicted]``. Stage 1 uses the binary space (0 normal, 1 attack),
    stages 2 and 3 the full class space, and stage 4 holds one 2x2 matrix per
    attack class ``[is_target, confirmed]``.
    """

    tp_prime: int = 0
    fp_prime: int = 0
    tn_prime: int = 0
    fn_prime: int = 0
    tp_dprime: int = 0
    fp_dprime: int = 0
    fn_dprime: int = 0
    per_stage_confusion: dict = field(default_factory=dict)

    COUNTERS = ("tp_prime", "fp_prime", "tn_prime", "fn_prime", "tp_dprime", "fp_dprime", "fn_dprime")

    @classmethod
    def empty(cls, space: LabelSpace) -> "StageTallies":
        k = space.n_classes
        conf = {
            1: np.zeros((2, 2), dtype=np.int64),
            2: np.zeros((k, k), dtype=np.int64),
            3: np.zeros((k, k), dtype=np.int64),
            4: {c: np.zeros((2, 2), dtype=np.int64) for c in space.attack_ids},
        }
        return cls(per_stage_confusion=conf)

    def add(self, deltas: dict) -> None:
        for name, v in deltas.items():
            setattr(self, name, getattr(self, name) + v)

    def counters(self) -> dict:
        return {name: getattr(self, name) for name in self.COUNTERS}


@dataclass(frozen=True)
class TotalTallies:
    tp_t: int
    fp_t: int
    tn_t: int
    fn_t: int

    @property
    def total(self) -> int:
        return self.tp_t + self.fp_t + self.tn_t + self.fn_t


@dataclass(frozen=True)
class MetricReport:
    """Percentages in [0, 100]; ``None`` marks an undefined ratio."""

    acc: Optional[float]
    prec: Optional[float]
    tpr: Optional[float]
    far: Optional[float]
    f1: Optional[float]
    absent: tuple[tuple[str, str], ...] = ()

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def reason(self, name: str) -> Optional[str]:
        return dict(self.absent).get(name)


@dataclass(frozen=True)
class ClassRow:
    name: str
    tpr: Optional[float]
    far: Optional[float]
    instances: int


def aggregate_totals(tallies: StageTallies) -> TotalTallies:
    return TotalTallies(
        tp_t=tallies.tp_prime + tallies.tp_dprime,
        fp_t=tallies.fp_prime + tallies.fp_dprime,
        tn_t=tallies.tn_prime,
        fn_t=tallies.fn_prime + tallies.fn_dprime,
    )


def _ratio(num: int, den: int) -> Optional[float]:
    if den == 0:
        return None
    return 100.0 * num / den


def compute_metrics(totals: TotalTallies) -> MetricReport:
    """ACC, Prec, TPR, FAR and F1 from a confusion tally.

    FAR is the false-discovery rate FP/(TP+FP), the complement of precision.
    """
    tp, fp, tn, fn = totals.tp_t, totals.fp_t, totals.tn_t, totals.fn_t
    absent = []
    acc = _ratio(tp + tn, tp + fp + tn + fn)
    if acc is None:
        absent.append(("acc", "no instances"))
    prec = _ratio(tp, tp + fp)
    far = _ratio(fp, tp + fp)
    if prec is None:
        absent.append(("prec", "no positive predictions"))
        absent.append(("far", "no positive predictions"))
    tpr = _ratio(tp, tp + fn)
    if tpr is None:
        absent.append(("tpr", "no positive instances"))
    f1 = None
    if prec is not None and tpr is not None and prec + tpr > 0:
        f1 = 2.0 * prec * tpr / (prec + tpr)
    else:
        absent.append(("f1", "precision or recall undefined or both zero"))
    return MetricReport(acc, prec, tpr, far, f1, tuple(absent))


def per_class_report(confusion: np.ndarray, space: LabelSpace) -> list[ClassRow]:
    """Per-class TPR and FAR from a ``[true, predicted]`` count matrix."""
    m = np.asarray(confusion, dtype=np.int64)
    k = space.n_classes
    if m.shape != (k, k):
        raise ValueError(f"confusion shape {m.shape} does not cover {k} classes")
    rows = []
    for c, name in enumerate(space.class_names):
        tp = int(m[c, c])
        fn = int(m[c, :].sum()) - tp
        fp = int(m[:, c].sum()) - tp
        rows.append(ClassRow(name, _ratio(tp, tp + fn), _ratio(fp, tp + fp), tp + fn))
    return rows


def binary_counts(confusion: np.ndarray, normal_id: int) -> TotalTallies:
    """Collapse a ``[true, predicted]`` matrix to attack-positive counts.

    A correct attack class is a TP, any other attack prediction a FP, a normal
    prediction of an attack a FN.
    """
    m = np.asarray(confusion, dtype=np.int64)
    k = m.shape[0]
    attacks = [c for c in range(k) if c != normal_id]
    tp = int(sum(m[c, c] for c in attacks))
    fp = int(sum(m[:, c].sum() for c in attacks)) - tp
    tn = int(m[normal_id, normal_id])
    fn = int(sum(m[c, normal_id] for c in attacks))
    return TotalTallies(tp, fp, tn, fn)


def format_pct(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def metrics_to_kv(report: MetricReport, prefix: str = "") -> list[str]:
    """``name=value`` lines, absent metrics omitted."""
    lines = []
    for name in METRIC_NAMES:
        v = getattr(report, name)
        if v is not None and math.isfinite(v):
            lines.append(f"{prefix}{name}={v!r}")
    return lines


def metrics_from_kv(values: dict, prefix: str = "") -> MetricReport:
    got = {name: values.get(prefix + name) for name in METRIC_NAMES}
    absent = tuple((n, "not recorded") for n, v in got.items() if v is None)
    return MetricReport(*(None if v is None else float(v) for v in got.values()), absent=absent)
