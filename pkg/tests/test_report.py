import csv
import hashlib

import pytest

from sms_verify.errors import FormatError, InputError, IntegrityError
from sms_verify.report import REPORT_COLUMNS, cmd_report, cmd_trace_plot, read_trace_csv, trend_slope, verify_manifest
from sms_verify.schemas import MetricRow, RunManifest

TRACE_HEADER = "method,step,test_acc,erased_acc,verifiability,unambiguity,backdoor_asr"


def write_trace(tmp_path, *rows: str, header: str = TRACE_HEADER):
    """Write a trace CSV with the given data lines."""
    path = tmp_path / "sisa.csv"
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


def make_run(tmp_path, name: str, run_id: str, runtime: dict[str, float]):
    """Run directory holding one artifact and a manifest that lists it."""
    run_dir = tmp_path / name
    run_dir.mkdir()
    artifact = run_dir / "metrics.csv"
    artifact.write_text("phase,method\n")
    metrics = [
        MetricRow(phase=phase, method=method, accuracy=0.9, verifiability=0.5 if method != "nonverif" else None)
        for phase in ("post_unlearn", "pre_unlearn")
        for method in ("nonverif", "sms", "mib")
    ]
    manifest = RunManifest(
        run_id=run_id,
        config_hash=run_id * 4,
        unlearn_method="sisa",
        artifacts={"metrics.csv": hashlib.sha256(artifact.read_bytes()).hexdigest()},
        metrics=metrics,
        runtime=runtime,
    )
    (run_dir / "manifest.json").write_text(manifest.model_dump_json())
    return run_dir


# --- Traces ---


def test_read_trace(tmp_path):
    path = write_trace(tmp_path, "sisa,0,0.9,1.0,1.0,1.0,", "sisa,1,0.88,0.5,0.0,1.0,")
    steps, series = read_trace_csv(path)
    assert steps == [0, 1]
    assert series["verifiability"] == [1.0, 0.0]
    assert series["backdoor_asr"] == [None, None]


def test_trace_missing_column(tmp_path):
    path = write_trace(tmp_path, "sisa,0,0.9,1.0,1.0,1.0", header=TRACE_HEADER.rsplit(",", 1)[0])
    with pytest.raises(FormatError, match="missing column 'backdoor_asr'") as exc:
        read_trace_csv(path)
    assert exc.value.line == 1


def test_trace_bad_field_count(tmp_path):
    path = write_trace(tmp_path, "sisa,0,0.9,1.0,1.0,1.0,", "sisa,1,0.9")
    with pytest.raises(FormatError) as exc:
        read_trace_csv(path)
    assert exc.value.line == 3


def test_trace_non_numeric_cell(tmp_path):
    path = write_trace(tmp_path, "sisa,0,high,1.0,1.0,1.0,")
    with pytest.raises(FormatError, match="test_acc") as exc:
        read_trace_csv(path)
    assert exc.value.line == 2


def test_trace_without_rows(tmp_path):
    with pytest.raises(InputError, match="no trace rows"):
        read_trace_csv(write_trace(tmp_path))


def test_trace_missing_file(tmp_path):
    with pytest.raises(InputError, match="cannot read"):
        read_trace_csv(tmp_path / "absent.csv")


def test_trace_plot_written_next_to_csv(tmp_path):
    path = write_trace(tmp_path, "sisa,0,0.9,1.0,1.0,1.0,", "sisa,1,0.88,0.5,0.0,1.0,")
    svg = cmd_trace_plot(path)
    assert svg == tmp_path / "sisa.svg"
    text = svg.read_text()
    assert 'data-name="verifiability"' in text
    assert 'data-name="backdoor_asr"' not in text


def test_trend_slope():
    assert trend_slope([0.2, 0.4, 0.6], [0.5, 0.7, 0.9]) == pytest.approx(1.0)
    assert trend_slope([1, 2, 3], [1.0, None, 3.0]) == pytest.approx(1.0)
    with pytest.raises(InputError):
        trend_slope([1, 2], [1.0, None])


# --- Reports ---


def test_report_orders_rows_and_computes_overhead(tmp_path):
    late = make_run(tmp_path, "one", "bbbbbbbbbbbb", {"sms": 3.0, "mib": 2.0, "nonverif": 1.5})
    early = make_run(tmp_path, "two", "aaaaaaaaaaaa", {"sms": 2.0, "nonverif": 1.0})
    out = cmd_report([late, early / "manifest.json"], tmp_path / "report.csv")
    with out.open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == REPORT_COLUMNS
    keys = [(r[0], r[2], r[3]) for r in rows[1:]]
    assert keys[:6] == [
        ("aaaaaaaaaaaa", "sms", "pre_unlearn"),
        ("aaaaaaaaaaaa", "sms", "post_unlearn"),
        ("aaaaaaaaaaaa", "mib", "pre_unlearn"),
        ("aaaaaaaaaaaa", "mib", "post_unlearn"),
        ("aaaaaaaaaaaa", "nonverif", "pre_unlearn"),
        ("aaaaaaaaaaaa", "nonverif", "post_unlearn"),
    ]
    by_key = {(r[0], r[2], r[3]): dict(zip(REPORT_COLUMNS, r)) for r in rows[1:]}
    assert float(by_key[("bbbbbbbbbbbb", "sms", "pre_unlearn")]["runtime_overhead"]) == pytest.approx(2.0)
    assert by_key[("aaaaaaaaaaaa", "mib", "pre_unlearn")]["runtime"] == ""
    assert by_key[("aaaaaaaaaaaa", "nonverif", "pre_unlearn")]["verifiability"] == ""
    assert by_key[("aaaaaaaaaaaa", "sms", "pre_unlearn")]["unlearn_method"] == "sisa"


def test_report_detects_tampered_artifact(tmp_path):
    run_dir = make_run(tmp_path, "one", "cccccccccccc", {"sms": 1.0})
    (run_dir / "metrics.csv").write_text("changed\n")
    with pytest.raises(IntegrityError, match="hash mismatch for metrics.csv"):
        cmd_report([run_dir], tmp_path / "report.csv")


def test_report_detects_missing_artifact(tmp_path):
    run_dir = make_run(tmp_path, "one", "cccccccccccc", {"sms": 1.0})
    (run_dir / "metrics.csv").unlink()
    with pytest.raises(IntegrityError, match="missing"):
        verify_manifest(run_dir / "manifest.json")


def test_report_unreadable_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(IntegrityError, match="unreadable"):
        verify_manifest(tmp_path / "manifest.json")


def test_report_needs_a_manifest(tmp_path):
    with pytest.raises(InputError):
        cmd_report([], tmp_path / "report.csv")
