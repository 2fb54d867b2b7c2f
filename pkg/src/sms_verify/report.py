# src/sms_verify/report.py
import csv
import hashlib
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import ValidationError

from .errors import FormatError, InputError, IntegrityError
from .plotting import line_chart, write_svg
from .schemas import METHOD_ORDER, RunManifest, parse_record_json
from .unlearning import TRACE_COLUMNS

logger = logging.getLogger(__name__)

TRACE_SERIES = ["test_acc", "erased_acc", "verifiability", "unambiguity", "backdoor_asr"]
REPORT_COLUMNS = [
    "run_id",
    "unlearn_method",
    "method",
    "phase",
    "accuracy",
    "verifiability",
    "unambiguity",
    "mia",
    "runtime",
    "runtime_overhead",
]
BASELINE_METHOD = "nonverif"
_METHOD_RANK = {m: i for i, m in enumerate(METHOD_ORDER)}
_PHASE_RANK = {"pre_unlearn": 0, "post_unlearn": 1}


def trend_slope(xs: Sequence[float], ys: Sequence[float | None]) -> float:
    """Least-squares slope of ys against xs, ignoring missing points."""
    pairs = [(x, y) for x, y in zip(xs, ys) if y is not None]
    if len(pairs) < 2:
        raise InputError("a trend needs at least 2 points")
    x, y = np.array(pairs, dtype=np.float64).T
    return float(np.polyfit(x, y, 1)[0])


def _cell(value: str, column: str, lineno: int) -> float | None:
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise FormatError(f"column '{column}' holds non-numeric value {value!r}", line=lineno) from None


def read_trace_csv(path: str | Path) -> tuple[list[int], dict[str, list[float | None]]]:
    """
    Parse an unlearning trace CSV.

    Returns:
        steps and one value list per metric column (None where empty).

    Raises:
        FormatError: missing column, wrong field count or non-numeric cell,
            with the 1-based line number.
    """
    path = Path(path)
    try:
        with path.open(newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise InputError(f"cannot read trace {path}: {e}") from e
    if not rows:
        raise FormatError(f"{path.name} is empty", line=1)
    header = rows[0]
    for column in TRACE_COLUMNS:
        if column not in header:
            raise FormatError(f"{path.name}: missing column '{column}'", line=1)
    where = {c: header.index(c) for c in header}

    steps: list[int] = []
    series: dict[str, list[float | None]] = {c: [] for c in TRACE_SERIES}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"{path.name}: expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            steps.append(int(row[where["step"]]))
        except ValueError:
            raise FormatError(f"{path.name}: step {row[where['step']]!r} is not an integer", line=lineno) from None
        for column in TRACE_SERIES:
            series[column].append(_cell(row[where[column]], column, lineno))
    if not steps:
        raise InputError(f"{path.name} holds no trace rows")
    return steps, series


def cmd_trace_plot(trace_csv: str | Path, out: str | Path | None = None) -> Path:
    """Line chart of every non-empty metric of a trace against its step."""
    trace_csv = Path(trace_csv)
    steps, series = read_trace_csv(trace_csv)
    present = {name: values for name, values in series.items() if any(v is not None for v in values)}
    svg = line_chart(steps, present, title=trace_csv.stem, x_label="step", y_label="rate")
    return write_svg(svg, Path(out) if out is not None else trace_csv.with_suffix(".svg"))


def verify_manifest(manifest_path: Path) -> RunManifest:
    """Load a manifest and check every listed artifact against its sha256."""
    try:
        manifest = parse_record_json(manifest_path.read_text(), "manifest")
    except (OSError, ValidationError) as e:
        raise IntegrityError(f"unreadable manifest {manifest_path}: {e}") from e
    root = manifest_path.parent
    for relative, expected in sorted(manifest.artifacts.items()):
        artifact = root / relative
        if not artifact.is_file():
            raise IntegrityError(f"{manifest_path}: artifact {relative} is missing")
        actual = hashlib.sha256(artifact.read_bytes()).hexdigest()
        if actual != expected:
            raise IntegrityError(f"{manifest_path}: hash mismatch for {relative}")
    return manifest


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def cmd_report(manifests: Sequence[str | Path], out: str | Path) -> Path:
    """
    Comparison table over runs: one row per (run, method, phase).

    Args:
        manifests: manifest.json files or run directories holding one.
        out: CSV to write.

    Note:
        runtime_overhead is a method's running time relative to the
        non-verification baseline of the same run.
    """
    if not manifests:
        raise InputError("cmd_report needs at least one manifest")
    paths = [Path(m) / "manifest.json" if Path(m).is_dir() else Path(m) for m in manifests]
    loaded = sorted(((verify_manifest(p), p) for p in paths), key=lambda mp: (mp[0].run_id, str(mp[1])))

    out = Path(out)
    with out.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for manifest, _ in loaded:
            baseline = manifest.runtime.get(BASELINE_METHOD)
            for row in sorted(
                manifest.metrics, key=lambda r: (_METHOD_RANK.get(r.method, 99), r.method, _PHASE_RANK[r.phase])
            ):
                runtime = manifest.runtime.get(row.method)
                overhead = runtime / baseline if runtime is not None and baseline else None
                writer.writerow(
                    [manifest.run_id, manifest.unlearn_method, row.method, row.phase]
                    + [_fmt(v) for v in (row.accuracy, row.verifiability, row.unambiguity, row.mia, runtime, overhead)]
                )
    logger.info(f"report over {len(loaded)} runs written to {out}")
    return out
