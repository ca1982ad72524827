from pathlib import Path

import pytest

from streamids.flow_model import ClassRow, MetricReport, TotalTallies, compute_metrics
from streamids.report import (
    REPORT_FILES,
    ReportData,
    ReportError,
    parse_kv,
    read_run_dir,
    render_all,
    render_timing,
    write_run_dir,
)

GOLDEN = Path(__file__).parent / "golden"


def hand_built() -> ReportData:
    no_positives = compute_metrics(TotalTallies(0, 0, 97, 0))
    stage3 = MetricReport(97.25, None, None, None, None, no_positives.absent)
    return ReportData(
        name="desk",
        n_records=1234,
        final=MetricReport(100.0, 100.0, 100.0, 0.0, 100.0),
        stages={
            1: MetricReport(92.5, 90.0, 94.7368421, 10.0, 92.3076923),
            2: MetricReport(100.0, 100.0, 100.0, 0.0, 100.0),
            3: stage3,
            4: MetricReport(95.0, 96.0, 97.0, 4.0, 96.5),
        },
        classes=[
            ClassRow("normal", 100.0, 0.0, 634),
            ClassRow("dos", 99.5, 1.25, 12345),
            ClassRow("recon", None, None, 0),
        ],
        normal_name="normal",
        tallies={"tp_prime": 600, "fp_prime": 0, "tn_prime": 634, "fn_prime": 0,
                 "tp_dprime": 0, "fp_dprime": 0, "fn_dprime": 0},
        trend=True,
        timing={"total": 1500.0, "stage1": 1.5, "stage2": 0.25, "stage3": 8.0, "stage4": 1234.5},
    )


@pytest.mark.parametrize("key", ["final", "stages", "classes", "timing"])
def test_render_matches_golden(key):
    got = render_all(hand_built())[key]
    assert got == (GOLDEN / REPORT_FILES[key]).read_text(encoding="utf-8")


def test_kv_round_trip_preserves_rendering():
    data = hand_built()
    metrics = parse_kv("\n".join(data.metrics_lines()))
    timing = parse_kv("\n".join(data.timing_lines()))
    back = ReportData.from_kv(metrics, timing)
    assert render_all(back) == render_all(data)
    assert back.stages[3].reason("tpr") == "no positive instances"
    assert back.metrics_lines() == data.metrics_lines()


def test_metrics_lines_carry_no_timing():
    assert not any(line.startswith(("total", "stage1=")) for line in hand_built().metrics_lines())


def test_run_dir_write_and_read(tmp_path):
    data = hand_built()
    tables = write_run_dir(tmp_path, data, ["0|1|mask|0,1"], {"extra.txt": "x\n"})
    for key, fname in REPORT_FILES.items():
        assert (tmp_path / fname).read_text(encoding="utf-8") == tables[key]
    assert (tmp_path / "journal.log").read_text() == "0|1|mask|0,1\n"
    assert render_all(read_run_dir(tmp_path)) == tables


def test_missing_or_corrupt_run_dir(tmp_path):
    with pytest.raises(ReportError):
        read_run_dir(tmp_path)
    (tmp_path / "metrics.kv").write_text("name=x\nrecords=3\n")
    with pytest.raises(ReportError):
        read_run_dir(tmp_path)
    with pytest.raises(ReportError, match="line 2"):
        parse_kv("a=1\nnonsense\n")


def test_timing_required_for_timing_table():
    data = hand_built()
    data.timing = {}
    with pytest.raises(ReportError):
        render_timing(data)
    assert "timing" not in render_all(data)


def test_timing_rows_bounded_by_total():
    t = hand_built().timing
    assert all(0 <= t[f"stage{s}"] <= t["total"] for s in (1, 2, 3, 4))


def test_perfect_run_row():
    text = render_all(hand_built())["final"]
    row = text.splitlines()[4].split()
    assert row[1] == "100.00" and row[4] == "0.00"
