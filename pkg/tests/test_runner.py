import csv
import json
import shutil
from operator import attrgetter

import pytest

from sms_verify.config import ExperimentConfig
from sms_verify.errors import ConfigError, ParameterError, StageError
from sms_verify.events import BaseEventPublisher, NullEventPublisher
from sms_verify.joint_training import loss_smoothness
from sms_verify.report import trend_slope, verify_manifest
from sms_verify.runner import (
    MANIFEST_FILE,
    METRICS_FILE,
    PROGRESS_FILE,
    STAGES,
    ExperimentRun,
    RunProgress,
    cmd_run,
    cmd_sweep,
    read_metrics_csv,
)
from sms_verify.schemas import RunEvent, StageStatus
from sms_verify.unlearning import load_sharded


def tiny_config(**updates) -> ExperimentConfig:
    """
    A run small enough for unit tests: 18 synthetic 8x8 digits, 2 users.

    Attributes:
        updates: fields to override.
    """
    base = dict(
        synth_per_class=6,
        synth_side=8,
        class_count=3,
        n_users=2,
        ssr=0.3,
        seed_n=8,
        epochs=2,
        batch_size=4,
        encoder_widths=(16, 8),
        classifier_hidden=(8,),
        decoder_hidden=(16,),
        verifier_epochs=2,
        verifier_accuracy_floor=0.0,
        unlearn_method="sisa",
        sisa_k=2,
        mib=True,
    )
    return ExperimentConfig(**{**base, **updates})


class RecordingPublisher(BaseEventPublisher):
    """Publisher that keeps every event in memory."""

    def __init__(self):
        super().__init__()
        self.events: list[RunEvent] = []

    def _open(self):
        pass

    def publish(self, event: RunEvent):
        super().publish(event)
        self.events.append(event)

    def publish_raw(self, data: str):
        pass

    def close(self):
        pass


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    """One complete run shared by the read-only tests below."""
    out = tmp_path_factory.mktemp("run")
    publisher = RecordingPublisher()
    manifest = cmd_run(tiny_config(), out, publisher=publisher)
    return out, manifest, publisher


# --- Full run ---


def test_run_writes_every_artifact(finished_run):
    out, manifest, _ = finished_run
    assert manifest.run_id == tiny_config().run_id()
    assert manifest.unlearn_method == "sisa"
    assert [s.name for s in manifest.stages] == list(STAGES)
    for relative in (
        "config.txt",
        "data/train.smsd",
        "data/partitions.json",
        "seeds/user_0.json",
        "seeds/user_1.json",
        "models/sms/pre/shards.json",
        "losses/mib.csv",
        "verifier/verifier.smsm",
        "metrics_pre_unlearn.json",
        "traces/sms.csv",
        "traces/sms.svg",
        "traces/sms_retrained.json",
        METRICS_FILE,
    ):
        assert relative in manifest.artifacts, relative
        assert (out / relative).is_file()
    assert MANIFEST_FILE not in manifest.artifacts
    assert verify_manifest(out / MANIFEST_FILE).config_hash == manifest.config_hash


def test_run_measures_each_method_before_and_after(finished_run):
    out, manifest, _ = finished_run
    with (out / METRICS_FILE).open() as f:
        rows = list(csv.DictReader(f))
    assert [(r["method"], r["phase"]) for r in rows] == [
        ("sms", "pre_unlearn"),
        ("sms", "post_unlearn"),
        ("mib", "pre_unlearn"),
        ("mib", "post_unlearn"),
        ("nonverif", "pre_unlearn"),
        ("nonverif", "post_unlearn"),
    ]
    by_key = {(r["method"], r["phase"]): r for r in rows}
    assert by_key[("sms", "pre_unlearn")]["unambiguity"] != ""
    assert by_key[("nonverif", "pre_unlearn")]["verifiability"] == ""
    assert all(0.0 <= float(r["accuracy"]) <= 1.0 for r in rows)
    assert set(manifest.runtime) == {"sms", "mib", "nonverif"}


def test_run_publishes_stage_events(finished_run):
    _, _, publisher = finished_run
    expected = [(stage, status) for stage in STAGES for status in (StageStatus.STARTED, StageStatus.FINISHED)]
    assert [(e.stage, e.status) for e in publisher.events] == expected
    assert [e.sequence_no for e in publisher.events] == list(range(len(expected)))
    train_finished = publisher.events[STAGES.index("train") * 2 + 1]
    assert "runtime_sms" in train_finished.metrics


def test_same_config_gives_identical_metrics(finished_run, tmp_path):
    out, _, _ = finished_run
    cmd_run(tiny_config(), tmp_path / "again")
    assert (tmp_path / "again" / METRICS_FILE).read_bytes() == (out / METRICS_FILE).read_bytes()


# --- Output directory handling ---


def test_non_empty_directory_needs_resume(finished_run):
    out, _, _ = finished_run
    with pytest.raises(ConfigError, match="pass --resume"):
        cmd_run(tiny_config(), out)


def test_resume_refuses_other_config(finished_run):
    out, _, _ = finished_run
    with pytest.raises(ConfigError, match="belongs to config"):
        cmd_run(tiny_config(ser=0.5), out, resume=True)


def test_resume_refuses_foreign_directory(tmp_path):
    (tmp_path / "notes.txt").write_text("hello")
    with pytest.raises(ConfigError, match=PROGRESS_FILE):
        cmd_run(tiny_config(), tmp_path, resume=True)


def test_resume_after_interruption_reproduces_metrics(finished_run, tmp_path):
    out, _, _ = finished_run
    partial = tmp_path / "partial"
    cmd_run(tiny_config(), partial)
    progress = RunProgress.model_validate_json((partial / PROGRESS_FILE).read_text())
    progress.completed = progress.completed[: STAGES.index("unlearn")]
    (partial / PROGRESS_FILE).write_text(progress.model_dump_json())
    (partial / METRICS_FILE).unlink()
    (partial / MANIFEST_FILE).unlink()

    publisher = RecordingPublisher()
    manifest = cmd_run(tiny_config(), partial, resume=True, publisher=publisher)
    assert {e.stage for e in publisher.events} == {"unlearn", "verify_post", "report"}
    assert [s.name for s in manifest.stages] == list(STAGES)
    assert (partial / METRICS_FILE).read_bytes() == (out / METRICS_FILE).read_bytes()


def test_resume_of_a_finished_run_reloads_the_report(finished_run, tmp_path):
    out, manifest, _ = finished_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    publisher = RecordingPublisher()
    again = cmd_run(tiny_config(), copy, resume=True, publisher=publisher)
    assert publisher.events == []
    assert again.metrics == manifest.metrics
    by_key = attrgetter("method", "phase")
    assert sorted(read_metrics_csv(copy / METRICS_FILE), key=by_key) == sorted(manifest.metrics, key=by_key)


# --- Stage seeds and erase requests ---


def test_stage_seeds_depend_on_the_config_hash(tmp_path):
    base = ExperimentRun(tiny_config(), tmp_path, NullEventPublisher())
    moved = ExperimentRun(tiny_config(output_dir=tmp_path / "elsewhere"), tmp_path, NullEventPublisher())
    other = ExperimentRun(tiny_config(ssr=0.4), tmp_path, NullEventPublisher())
    assert base.seed("data") == moved.seed("data")
    assert base.seed("data") != other.seed("data")
    assert base.seed("decoy", "erased", 1) != base.seed("decoy", "retained", 1)


def seeded_run(tmp_path, **updates) -> ExperimentRun:
    """A run that has completed its data and seed stages."""
    run = ExperimentRun(tiny_config(**updates), tmp_path, NullEventPublisher())
    run._run_data()
    run._run_seed()
    return run


def test_erase_request_for_seeded_samples(tmp_path):
    run = seeded_run(tmp_path)
    request = run.erase_request("sms")
    assert request.indices == run.seeded_indices[0]
    assert request.owned == run.partitions[0].indices
    mib = run.erase_request("mib")
    assert mib.indices == list(run.mib_view.source_indices)
    assert set(run.mib_view.backdoor_indices) <= set(mib.owned)


def test_erase_request_for_whole_user(tmp_path):
    run = seeded_run(tmp_path, erase_granularity="whole_user")
    assert run.erase_request("sms").indices == run.partitions[0].indices
    mib = run.erase_request("mib")
    assert mib.indices == mib.owned
    assert set(run.mib_view.backdoor_indices) <= set(mib.indices)


def test_split_seeds_groups_are_disjoint(tmp_path):
    run = seeded_run(tmp_path, erase_granularity="split_seeds")
    erased, retained = set(run.seeded_indices[0]), set(run.retained_indices)
    assert erased and retained
    assert not erased & retained
    assert retained <= set(run.partitions[0].indices)
    assert run.retained_seed.record.digit == run.retained_digit == 2
    assert run.erase_request("sms").indices == run.seeded_indices[0]


def test_split_seeds_run_reports_both_seeds(tmp_path):
    cfg = tiny_config(erase_granularity="split_seeds", unlearn_method="retrain", mib=False)
    manifest = cmd_run(cfg, tmp_path)
    for relative in ("seeds/user_0_retained.json", "data/retained.json", "verifier/verifier_retained.smsm"):
        assert relative in manifest.artifacts, relative
    assert [(r.method, r.phase) for r in read_metrics_csv(tmp_path / METRICS_FILE)] == [
        ("sms", "pre_unlearn"),
        ("sms", "post_unlearn"),
        ("sms_retained", "pre_unlearn"),
        ("sms_retained", "post_unlearn"),
        ("nonverif", "pre_unlearn"),
        ("nonverif", "post_unlearn"),
    ]


def test_failed_stage_is_reported(tmp_path):
    images, labels = tmp_path / "images.idx", tmp_path / "labels.idx"
    images.write_bytes(b"\x00\x01garbage")
    labels.write_bytes(b"\x00\x01garbage")
    cfg = tiny_config(dataset="idx", idx_images=images, idx_labels=labels)
    publisher = RecordingPublisher()
    with pytest.raises(StageError, match="stage 'data' failed") as exc:
        cmd_run(cfg, tmp_path / "out", publisher=publisher)
    assert exc.value.stage == "data"
    assert [(e.stage, e.status) for e in publisher.events] == [
        ("data", StageStatus.STARTED),
        ("data", StageStatus.FAILED),
    ]
    assert publisher.events[-1].detail
    assert not (tmp_path / "out" / PROGRESS_FILE).exists()


# --- Sweeps ---


def test_sweep_needs_two_values(tmp_path):
    with pytest.raises(ParameterError, match="2 distinct values"):
        cmd_sweep(tiny_config(), "ssr", [0.3, 0.3], tmp_path)


def test_sweep_rejects_unknown_axis(tmp_path):
    with pytest.raises(ParameterError, match="axis"):
        cmd_sweep(tiny_config(), "epochs", [1, 2], tmp_path)


def test_sweep_runs_each_value(tmp_path):
    csv_path = cmd_sweep(tiny_config(mib=False, nonverif=False), "ser", [0.6, 0.9], tmp_path)
    assert csv_path == tmp_path / "sweep.csv"
    assert (tmp_path / "sweep.svg").is_file()
    for name in ("ser_00_0.6", "ser_01_0.9"):
        assert (tmp_path / name / MANIFEST_FILE).is_file()
    with csv_path.open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["ser", "accuracy", "verifiability", "unambiguity", "post_verifiability", "runtime"]
    assert [float(r[0]) for r in rows[1:]] == [0.6, 0.9]
    config_text = (tmp_path / "ser_01_0.9" / "config.txt").read_text()
    assert "ser = 0.9" in config_text
    assert json.loads((tmp_path / "ser_00_0.6" / "training.json").read_text())["runtime"].keys() == {"sms"}


# --- Acceptance on the default corpus (slow) ---


def metric(manifest, method: str, phase: str):
    return next(r for r in manifest.metrics if r.method == method and r.phase == phase)


def primary_losses(out, method: str) -> list[float]:
    with (out / f"losses/{method}.csv").open() as f:
        return [float(row["primary_loss"]) for row in csv.DictReader(f)]


@pytest.mark.slow
def test_retraining_removes_the_seed(tmp_path):
    manifest = cmd_run(ExperimentConfig(mia=False), tmp_path)
    pre, post = metric(manifest, "sms", "pre_unlearn"), metric(manifest, "sms", "post_unlearn")
    assert pre.verifiability >= 0.9
    assert pre.unambiguity >= 0.9
    assert post.verifiability <= 0.1
    assert post.unambiguity >= 0.9
    assert abs(post.accuracy - pre.accuracy) <= 0.02
    assert manifest.wall_clock <= 600


@pytest.mark.slow
def test_split_seeds_tell_erased_from_retained(tmp_path):
    manifest = cmd_run(ExperimentConfig(erase_granularity="split_seeds", mia=False, nonverif=False), tmp_path)
    assert metric(manifest, "sms", "pre_unlearn").verifiability >= 0.9
    assert metric(manifest, "sms_retained", "pre_unlearn").verifiability >= 0.9
    assert metric(manifest, "sms", "post_unlearn").verifiability <= 0.1
    assert metric(manifest, "sms_retained", "post_unlearn").verifiability >= 0.9


@pytest.mark.slow
def test_sisa_unlearning_keeps_untouched_shards(tmp_path):
    manifest = cmd_run(ExperimentConfig(unlearn_method="sisa", mia=False, nonverif=False), tmp_path)
    pre, post = metric(manifest, "sms", "pre_unlearn"), metric(manifest, "sms", "post_unlearn")
    assert post.verifiability <= 0.1
    assert pre.accuracy - post.accuracy <= 0.03
    retrained = json.loads((tmp_path / "traces/sms_retrained.json").read_text())
    before = load_sharded(tmp_path / "models/sms/pre").digests()
    after = retrained["checkpoints"]
    untouched = [k for k in range(len(before)) if k not in retrained["retrained"]]
    assert untouched
    assert all(after[str(k)] == before[k] for k in untouched)


@pytest.mark.slow
def test_approximate_unlearning_fools_the_backdoor_but_not_the_seed(tmp_path):
    manifest = cmd_run(ExperimentConfig(unlearn_method="approx", mib=True, mia=False, nonverif=False), tmp_path)
    assert metric(manifest, "mib", "post_unlearn").verifiability >= 0.8
    assert metric(manifest, "sms", "post_unlearn").verifiability <= 0.2


@pytest.mark.slow
def test_verifiability_grows_with_ser(tmp_path):
    values = [0.2, 0.4, 0.6, 0.8, 1.0]
    cfg = ExperimentConfig(mia=False, nonverif=False)
    with cmd_sweep(cfg, "ser", values, tmp_path).open() as f:
        ver = [float(row["verifiability"]) for row in csv.DictReader(f)]
    assert ver[-1] - ver[0] >= 0.15
    assert trend_slope(values, ver) > 0.0


@pytest.mark.slow
def test_training_time_does_not_follow_ssr(tmp_path):
    cfg = ExperimentConfig(mia=False, nonverif=False)
    with cmd_sweep(cfg, "ssr", [0.002, 0.006, 0.01], tmp_path).open() as f:
        runtimes = [float(row["runtime"]) for row in csv.DictReader(f)]
    assert (max(runtimes) - min(runtimes)) / min(runtimes) <= 0.1


@pytest.mark.slow
def test_seeded_training_is_smoother_than_backdoored(tmp_path):
    cmd_run(ExperimentConfig(mib=True, mia=False, nonverif=False), tmp_path)
    assert loss_smoothness(primary_losses(tmp_path, "sms")) <= loss_smoothness(primary_losses(tmp_path, "mib"))


@pytest.mark.slow
def test_membership_signal_drops_less_than_verifiability(tmp_path):
    manifest = cmd_run(ExperimentConfig(erase_granularity="whole_user", nonverif=False), tmp_path)
    pre, post = metric(manifest, "sms", "pre_unlearn"), metric(manifest, "sms", "post_unlearn")
    assert pre.mia - post.mia >= 0.02
    assert pre.verifiability - post.verifiability > pre.mia - post.mia
