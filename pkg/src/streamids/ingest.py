"""Flow ingestion: CSV reader, online min-max scaling and a synthetic stream generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .flow_model import FlowRecord, LabelSpace

# numpy's default bit generator; recorded in run metadata
RNG_ALGORITHM = "numpy.random.PCG64"


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


class SpecError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass
class SchemaConfig:
    label_column: str = "Label"
    feature_columns: Optional[list[str]] = None
    class_map: dict[str, str] = field(default_factory=dict)
    normal_name: str = "Normal"
    classes: Optional[list[str]] = None

    def __post_init__(self):
        if self.feature_columns is not None and self.label_column in self.feature_columns:
            raise SchemaError(f"label column {self.label_column!r} listed as a feature")

    def map_label(self, raw: str) -> str:
        if not self.class_map:
            return raw
        try:
            return self.class_map[raw]
        except KeyError:
            raise DataError(f"label {raw!r} not in class map") from None

    @classmethod
    def from_file(cls, path) -> "SchemaConfig":
        """Parse ``key = value`` lines; ``map.<raw label> = <class>`` entries build the class map."""
        kw: dict = {"class_map": {}}
        for lineno, key, value in _kv_lines(Path(path).read_text(encoding="utf-8")):
            if key.startswith("map."):
                kw["class_map"][key[4:]] = value
            elif key == "label_column":
                kw["label_column"] = value
            elif key == "normal_name":
                kw["normal_name"] = value
            elif key == "feature_columns":
                kw["feature_columns"] = _csv_list(value)
            elif key == "classes":
                kw["classes"] = _csv_list(value)
            else:
                raise SpecError(f"unknown schema key {key!r}", lineno)
        return cls(**kw)


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _kv_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = line.split("=", 1)
        yield lineno, key.strip(), value.strip()


def _parse_cell(text: str) -> float:
    v = float(text)
    return v if math.isfinite(v) else 0.0


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _resolve_columns(header: list[str], first_row: Optional[list[str]], schema: SchemaConfig) -> list[str]:
    if schema.label_column not in header:
        raise SchemaError(f"missing column {schema.label_column!r}")
    if schema.feature_columns is not None:
        for col in schema.feature_columns:
            if col not in header:
                raise SchemaError(f"missing column {col!r}")
        return list(schema.feature_columns)
    if first_row is None:
        return []
    return [
        col for col, cell in zip(header, first_row)
        if col != schema.label_column and _is_number(cell)
    ]


def infer_label_space(path, schema: SchemaConfig) -> LabelSpace:
    """Class catalogue for a CSV: the schema's list, or the mapped labels seen (normal first)."""
    if schema.classes:
        return LabelSpace.from_names(schema.classes, schema.normal_name)
    seen = {schema.normal_name}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if schema.label_column not in header:
            raise SchemaError(f"missing column {schema.label_column!r}")
        col = header.index(schema.label_column)
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            seen.add(schema.map_label(row[col].strip()))
    attacks = sorted(seen - {schema.normal_name})
    return LabelSpace.from_names([schema.normal_name, *attacks], schema.normal_name)


def read_csv_stream(path, schema: SchemaConfig, space: Optional[LabelSpace] = None) -> Iterator[FlowRecord]:
    """Yield FlowRecords in file order.

    Non-finite feature cells become 0.0. Errors carry the 1-based file row
    number (the header is row 1).
    """
    if space is None:
        space = infer_label_space(path, schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: no header row")
        header = [h.strip() for h in header]
        rows = (r for r in reader if r)
        first = next(rows, None)
        columns = _resolve_columns(header, first, schema)
        if first is None:
            return
        label_idx = header.index(schema.label_column)
        feat_idx = [header.index(c) for c in columns]
        index = 0
        rowno = 2
        row = first
        while row is not None:
            name = schema.map_label(row[label_idx].strip())
            try:
                cls_id = space.id_of(name)
            except KeyError:
                raise DataError(f"row {rowno}: label {name!r} not in label space") from None
            feats = np.empty(len(feat_idx))
            for j, ci in enumerate(feat_idx):
                try:
                    feats[j] = _parse_cell(row[ci])
                except (ValueError, IndexError):
                    cell = row[ci] if ci < len(row) else ""
                    raise DataError(
                        f"row {rowno}, column {header[ci]!r}: non-numeric value {cell!r}"
                    ) from None
            yield FlowRecord(feats, cls_id, index)
            index += 1
            rowno += 1
            row = next(rows, None)


class OnlineNormalizer:
    """Running per-feature min-max scaler; state absorbs each record before scaling it."""

    def __init__(self):
        self.minimum: Optional[np.ndarray] = None
        self.maximum: Optional[np.ndarray] = None

    def update(self, x: np.ndarray) -> None:
        if self.minimum is None:
            self.minimum = x.copy()
            self.maximum = x.copy()
        else:
            np.minimum(self.minimum, x, out=self.minimum)
            np.maximum(self.maximum, x, out=self.maximum)

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.maximum - self.minimum
        out = np.zeros_like(x)
        ok = span > 0
        out[ok] = (x[ok] - self.minimum[ok]) / span[ok]
        # guards against rounding just outside the range
        return np.clip(out, 0.0, 1.0)

    def normalize(self, record: FlowRecord) -> FlowRecord:
        self.update(record.features)
        return FlowRecord(self.transform(record.features), record.true_class, record.arrival_index)


def normalize(record: FlowRecord, state: OnlineNormalizer) -> FlowRecord:
    return state.normalize(record)


@dataclass
class SyntheticSpec:
    n_instances: int
    class_names: list[str]
    normal_name: str
    means: np.ndarray  # (K, F)
    stds: np.ndarray  # (K, F)
    class_priors: np.ndarray  # (K,)
    drift_points: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.stds = np.atleast_2d(np.asarray(self.stds, dtype=np.float64))
        self.class_priors = np.asarray(self.class_priors, dtype=np.float64)
        k = len(self.class_names)
        if self.n_instances <= 0:
            raise SpecError("n_instances must be positive")
        if self.means.shape[0] != k or self.stds.shape != self.means.shape:
            raise SpecError("class profiles must give one mean and std vector per class")
        if self.class_priors.shape != (k,):
            raise SpecError("one prior per class required")
        if abs(self.class_priors.sum() - 1.0) > 1e-12 or (self.class_priors < 0).any():
            raise SpecError("class priors must be non-negative and sum to 1")
        if (self.stds < 0).any():
            raise SpecError("standard deviations must be non-negative")
        idx = [d[0] for d in self.drift_points]
        if idx != sorted(idx):
            raise SpecError("drift points must be sorted by arrival index")
        self.drift_points = [
            (int(i), int(c), np.broadcast_to(np.asarray(s, dtype=np.float64), (self.n_features,)).copy())
            for i, c, s in self.drift_points
        ]

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    @property
    def space(self) -> LabelSpace:
        return LabelSpace.from_names(self.class_names, self.normal_name)

    @classmethod
    def from_text(cls, text: str) -> "SyntheticSpec":
        """Parse the ``key = value`` spec format.

        Keys: ``n_instances``, ``seed``, ``n_features``, ``classes`` (comma list),
        ``normal``, ``priors``, ``mean.<class>``, ``std.<class>``, and repeated
        ``drift = index,class,shift...``. A single value in a mean, std or shift
        vector is broadcast to every feature.
        """
        kv: dict = {}
        means: dict = {}
        stds: dict = {}
        drifts = []
        for lineno, key, value in _kv_lines(text):
            try:
                if key.startswith("mean."):
                    means[key[5:]] = (lineno, _floats(value))
                elif key.startswith("std."):
                    stds[key[4:]] = (lineno, _floats(value))
                elif key == "drift":
                    parts = _csv_list(value)
                    if len(parts) < 3:
                        raise SpecError("drift needs index,class,shift...", lineno)
                    drifts.append((lineno, int(parts[0]), parts[1], [float(p) for p in parts[2:]]))
                elif key in ("n_instances", "seed", "n_features"):
                    kv[key] = int(value)
                elif key in ("classes", "priors"):
                    kv[key] = (lineno, _csv_list(value))
                elif key == "normal":
                    kv[key] = value
                else:
                    raise SpecError(f"unknown key {key!r}", lineno)
            except ValueError as exc:
                if isinstance(exc, SpecError):
                    raise
                raise SpecError(str(exc), lineno) from None
        for req in ("n_instances", "classes", "priors"):
            if req not in kv:
                raise SpecError(f"missing required key {req!r}")
        names = kv["classes"][1]
        normal = kv.get("normal", names[0])
        f = kv.get("n_features")
        if f is None:
            f = max([len(v) for _, v in means.values()] + [1])

        def vec(table, name, default):
            if name not in table:
                if default is None:
                    raise SpecError(f"missing mean for class {name!r}")
                return np.full(f, default)
            lineno, v = table[name]
            if len(v) not in (1, f):
                raise SpecError(f"vector for {name!r} has {len(v)} entries, expected {f}", lineno)
            return np.broadcast_to(np.asarray(v), (f,)).astype(np.float64)

        for table in (means, stds):
            for name, (lineno, _) in table.items():
                if name not in names:
                    raise SpecError(f"unknown class {name!r}", lineno)
        drift_points = []
        for lineno, idx, cname, shift in drifts:
            if cname not in names:
                raise SpecError(f"unknown class {cname!r}", lineno)
            if len(shift) not in (1, f):
                raise SpecError(f"shift has {len(shift)} entries, expected {f}", lineno)
            drift_points.append((idx, names.index(cname), shift))
        lineno, priors = kv["priors"]
        try:
            return cls(
                n_instances=kv["n_instances"],
                class_names=names,
                normal_name=normal,
                means=np.stack([vec(means, n, None) for n in names]),
                stds=np.stack([vec(stds, n, 1.0) for n in names]),
                class_priors=np.array([float(p) for p in priors]),
                drift_points=drift_points,
                seed=kv.get("seed", 0),
            )
        except SpecError as exc:
            if exc.line is None:
                raise SpecError(str(exc), lineno) from None
            raise

    @classmethod
    def from_file(cls, path) -> "SyntheticSpec":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _floats(value: str) -> list[float]:
    return [float(v) for v in _csv_list(value)]


def generate_synthetic(spec: SyntheticSpec) -> Iterator[FlowRecord]:
    """Diagonal-Gaussian class profiles with additive mean shifts from each drift point on."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n, f = spec.n_instances, spec.n_features
    classes = rng.choice(len(spec.class_names), size=n, p=spec.class_priors)
    noise = rng.standard_normal((n, f))
    x = spec.means[classes] + noise * spec.stds[classes]
    for start, cls_id, shift in spec.drift_points:
        rows = np.flatnonzero(classes[start:] == cls_id) + start
        x[rows] += shift
    for i in range(n):
        yield FlowRecord(x[i], int(classes[i]), i)


def write_csv(path, records: Sequence[FlowRecord] | Iterator[FlowRecord], space: LabelSpace,
              feature_names: Optional[Sequence[str]] = None, label_column: str = "Label",
              digits: int = 9) -> int:
    """Write records in the ingest schema; returns the row count."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header_written = False
        for rec in records:
            if not header_written:
                names = list(feature_names) if feature_names else [f"f{j}" for j in range(rec.n_features)]
                writer.writerow([*names, label_column])
                header_written = True
            writer.writerow([*(f"{v:.{digits}g}" for v in rec.features), space.class_names[rec.true_class]])
            n += 1
        if not header_written:
            names = list(feature_names) if feature_names else []
            writer.writerow([*names, label_column])
    return n
