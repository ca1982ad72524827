"""Fixed-width text tables and the key-value files they are re-rendered from."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .flow_model import METRIC_NAMES, ClassRow, MetricReport, StageTallies, format_pct, metrics_to_kv
from .pipeline import LAYERS

HEADERS = ("ACC%", "Prec%", "TPR%", "FAR%", "F1%")
NUM_WIDTH = 8

METRICS_FILE = "metrics.kv"
TIMING_FILE = "timing.kv"
REPORT_FILES = {
    "final": "report_final.txt",
    "stages": "report_stages.txt",
    "classes": "report_classes.txt",
    "timing": "report_timing.txt",
}


class ReportError(ValueError):
    pass


@dataclass
class ReportData:
    """Everything the four tables show, independent of how the run was computed."""

    name: str
    n_records: int
    final: MetricReport
    stages: dict[int, MetricReport]
    classes: list[ClassRow]
    normal_name: str
    tallies: dict[str, int] = field(default_factory=dict)
    trend: Optional[bool] = None
    timing: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_result(cls, result, name: str = "synthetic") -> "ReportData":
        return cls(
            name=name,
            n_records=result.n_records,
            final=result.final_metrics,
            stages=dict(result.per_stage_metrics),
            classes=list(result.per_class),
            normal_name=result.space.normal_name,
            tallies=result.stage_tallies.counters(),
            trend=result.trend_flag(),
            timing=dict(result.timing),
        )

    # -- serialization

    def metrics_lines(self) -> list[str]:
        """Deterministic ``key=value`` lines; timing is kept out on purpose."""
        lines = [f"name={self.name}", f"records={self.n_records}", f"normal={self.normal_name}"]
        lines += _report_kv(self.final, "final.")
        for s in sorted(self.stages):
            lines += _report_kv(self.stages[s], f"stage.{s}.")
        for key in StageTallies.COUNTERS:
            if key in self.tallies:
                lines.append(f"tally.{key}={self.tallies[key]}")
        lines.append(f"class.count={len(self.classes)}")
        for i, row in enumerate(self.classes):
            lines.append(f"class.{i}.name={row.name}")
            for metric in ("tpr", "far"):
                v = getattr(row, metric)
                if v is not None:
                    lines.append(f"class.{i}.{metric}={v!r}")
            lines.append(f"class.{i}.instances={row.instances}")
        lines.append("trend=" + {None: "-", True: "yes", False: "no"}[self.trend])
        return lines

    def timing_lines(self) -> list[str]:
        return [f"{k}={v!r}" for k, v in sorted(self.timing.items())]

    @classmethod
    def from_kv(cls, metrics: dict[str, str], timing: Optional[dict[str, str]] = None) -> "ReportData":
        try:
            n_classes = int(metrics["class.count"])
            classes = []
            for i in range(n_classes):
                p = f"class.{i}."
                classes.append(ClassRow(
                    metrics[p + "name"],
                    _opt_float(metrics.get(p + "tpr")),
                    _opt_float(metrics.get(p + "far")),
                    int(metrics[p + "instances"]),
                ))
            stages = {}
            for s in (1, 2, 3, 4):
                if any(k.startswith(f"stage.{s}.") for k in metrics):
                    stages[s] = _report_from_kv(metrics, f"stage.{s}.")
            trend = {"yes": True, "no": False, "-": None}[metrics.get("trend", "-")]
            return cls(
                name=metrics["name"],
                n_records=int(metrics["records"]),
                final=_report_from_kv(metrics, "final."),
                stages=stages,
                classes=classes,
                normal_name=metrics["normal"],
                tallies={k[6:]: int(v) for k, v in metrics.items() if k.startswith("tally.")},
                trend=trend,
                timing={k: float(v) for k, v in (timing or {}).items()},
            )
        except (KeyError, ValueError) as exc:
            raise ReportError(f"corrupt metrics data: {exc}") from None


def _opt_float(text: Optional[str]) -> Optional[float]:
    return None if text is None else float(text)


def _report_kv(report: MetricReport, prefix: str) -> list[str]:
    lines = metrics_to_kv(report, prefix)
    lines += [f"{prefix}{name}.absent={report.reason(name)}" for name in METRIC_NAMES
              if report.reason(name) is not None]
    return lines


def _report_from_kv(values: dict, prefix: str) -> MetricReport:
    got = {}
    absent = []
    for name in METRIC_NAMES:
        raw = values.get(prefix + name)
        got[name] = None if raw is None else float(raw)
        if raw is None:
            absent.append((name, values.get(f"{prefix}{name}.absent", "not recorded")))
    return MetricReport(**got, absent=tuple(absent))


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ReportError(f"line {lineno}: expected key=value")
        out[key] = value
    return out


# -- rendering

def _table(title: str, header: list[str], rows: list[list[str]], left: int = 1) -> str:
    """First ``left`` columns left-aligned, the rest right-aligned in at least NUM_WIDTH."""
    widths = [max(len(r[i]) for r in [header] + rows) + 2 for i in range(len(header))]
    widths[left:] = [max(NUM_WIDTH, w) for w in widths[left:]]

    def fmt(cells):
        head = "".join(c.ljust(w) for c, w in zip(cells[:left], widths))
        tail = "".join(c.rjust(w) for c, w in zip(cells[left:], widths[left:]))
        return (head + tail).rstrip()

    rule = "-" * len(fmt(header))
    return "\n".join([title, rule, fmt(header), rule] + [fmt(r) for r in rows] + [rule]) + "\n"


def _metric_cells(m: MetricReport) -> list[str]:
    return [format_pct(getattr(m, name)) for name in METRIC_NAMES]


def _absent_notes(items: list[tuple[str, MetricReport]]) -> str:
    notes = [f"  {label} {name}: {m.reason(name)}" for label, m in items
             for name in METRIC_NAMES if m.reason(name) is not None]
    return "" if not notes else "absent metrics:\n" + "\n".join(notes) + "\n"


def render_final(data: ReportData) -> str:
    out = _table("Final results", ["Dataset", *HEADERS], [[data.name, *_metric_cells(data.final)]])
    if data.tallies:
        t = data.tallies
        out += (f"tallies: TP'={t.get('tp_prime', 0)} FP'={t.get('fp_prime', 0)} "
                f"TN'={t.get('tn_prime', 0)} FN'={t.get('fn_prime', 0)} "
                f"TP''={t.get('tp_dprime', 0)} FP''={t.get('fp_dprime', 0)} "
                f"FN''={t.get('fn_dprime', 0)}\n")
    out += f"records: {data.n_records}\n"
    return out + _absent_notes([("final", data.final)])


def render_stages(data: ReportData) -> str:
    rows = [[str(s), LAYERS[s], *_metric_cells(data.stages[s])] for s in sorted(data.stages)]
    out = _table(f"Results by stage: {data.name}", ["Stage", "Layer", *HEADERS], rows, left=2)
    flag = {None: "-", True: "yes", False: "no"}[data.trend]
    out += f"stage 1 below stages 2 and 3 on ACC, Prec and TPR: {flag}\n"
    return out + _absent_notes([(f"stage {s}", data.stages[s]) for s in sorted(data.stages)])


def render_classes(data: ReportData) -> str:
    # attack classes first, the normal class last
    ordered = ([r for r in data.classes if r.name != data.normal_name]
               + [r for r in data.classes if r.name == data.normal_name])
    rows = [[r.name, format_pct(r.tpr), format_pct(r.far), f"{r.instances:,}"] for r in ordered]
    return _table(f"Results by class: {data.name}", ["Class", "TPR%", "FAR%", "Instances"], rows)


def render_timing(data: ReportData) -> str:
    if not data.timing:
        raise ReportError("no timing data")
    labels = [("total", "Total Time")] + [(f"stage{s}", f"Stage {s} ({LAYERS[s]})") for s in (1, 2, 3, 4)]
    rows = [[label, f"{data.timing[key]:,.2f} (s)"] for key, label in labels if key in data.timing]
    header = ["Stages", data.name]
    widths = [max(len(r[0]) for r in [header] + rows) + 2, max(len(r[1]) for r in [header] + rows)]

    def fmt(cells):
        return (cells[0].ljust(widths[0]) + cells[1].rjust(widths[1])).rstrip()

    rule = "-" * (widths[0] + widths[1])
    lines = [f"Time taken to process data: {data.name}", rule, fmt(header), rule]
    return "\n".join(lines + [fmt(r) for r in rows] + [rule]) + "\n"


def render_all(data: ReportData) -> dict[str, str]:
    out = {
        "final": render_final(data),
        "stages": render_stages(data),
        "classes": render_classes(data),
    }
    if data.timing:
        out["timing"] = render_timing(data)
    return out


# -- run directories

def write_run_dir(out_dir, data: ReportData, journal: list[str], extra: Optional[dict[str, str]] = None) -> dict:
    """Store the kv files, then render the tables from what was stored."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / METRICS_FILE).write_text("\n".join(data.metrics_lines()) + "\n", encoding="utf-8")
    (out / TIMING_FILE).write_text("\n".join(data.timing_lines()) + "\n", encoding="utf-8")
    (out / "journal.log").write_text("".join(line + "\n" for line in journal), encoding="utf-8")
    for fname, text in (extra or {}).items():
        (out / fname).write_text(text, encoding="utf-8")
    stored = read_run_dir(out)
    tables = render_all(stored)
    for key, text in tables.items():
        (out / REPORT_FILES[key]).write_text(text, encoding="utf-8")
    return tables


def read_run_dir(run_dir) -> ReportData:
    d = Path(run_dir)
    metrics_path = d / METRICS_FILE
    if not metrics_path.is_file():
        raise ReportError(f"{d} has no {METRICS_FILE}")
    metrics = parse_kv(metrics_path.read_text(encoding="utf-8"))
    timing_path = d / TIMING_FILE
    timing = parse_kv(timing_path.read_text(encoding="utf-8")) if timing_path.is_file() else {}
    try:
        return ReportData.from_kv(metrics, timing)
    except ValueError as exc:
        raise ReportError(str(exc)) from None
