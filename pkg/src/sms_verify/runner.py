# src/sms_verify/runner.py
"""
End-to-end experiment pipeline.

A run executes the stages data -> seed -> train -> verifier -> verify_pre ->
unlearn -> verify_post -> report inside one output directory. Every stage
persists what later stages need, so an interrupted run can be resumed; a
progress record pins the config hash so two configs never share a directory.
"""
import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter

from .backdoor import BackdoorSpec, BackdoorView, backdoor_asr, mib_prepare, triggered_inputs
from .config import ExperimentConfig, dump_config, load_config
from .datasets import Dataset, UserPartition, load_dataset, load_idx, partition_users, save_dataset, split, synth_digits
from .determinism import derive_seed
from .errors import ConfigError, ParameterError, SmsError, StageError
from .events import BaseEventPublisher, NullEventOptions, ZmqEventOptions, get_event_publisher
from .joint_training import accuracy, load_model, save_model, write_report_csv
from .nn_core import load_mlp, save_mlp
from .plotting import line_chart, write_svg
from .report import cmd_trace_plot, trend_slope
from .schemas import (
    METHOD_ORDER,
    EraseGranularity,
    EraseRequest,
    MetricRow,
    Phase,
    RunEvent,
    RunManifest,
    SeedRecord,
    StageRecord,
    StageStatus,
)
from .seeding import Seed, embed_pixels, generate_seed, save_seed_record, seed_dataset, seed_from_record
from .unlearning import BaseUnlearner, TraceReading, ShardedModel, get_unlearner, load_sharded, save_sharded
from .verifier import VerifierModel, build_verification_set, evaluate, mia_score, train_verifier, unambiguity, verifiability

logger = logging.getLogger(__name__)

STAGES = ("data", "seed", "train", "verifier", "verify_pre", "unlearn", "verify_post", "report")
PROGRESS_FILE = "progress.json"
MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.csv"
METRIC_COLUMNS = ["phase", "method", "accuracy", "verifiability", "unambiguity", "mia"]
TRAINED_METHODS = ("sms", "mib", "nonverif")
PHASE_ORDER = ("pre_unlearn", "post_unlearn")
SWEEP_AXES = ("ssr", "ser")
SWEEP_COLUMNS = ["value", "accuracy", "verifiability", "unambiguity", "post_verifiability", "runtime"]

_metric_rows = TypeAdapter(list[MetricRow])


class RunProgress(BaseModel):
    """Completed stages of a run directory, pinned to one config hash."""

    config_hash: str
    completed: list[StageRecord] = Field(default_factory=list)

    def done(self, stage: str) -> bool:
        return any(r.name == stage for r in self.completed)


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_metrics_csv(rows: Sequence[MetricRow], path: Path) -> Path:
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            values = row.model_dump()
            writer.writerow([values["phase"], values["method"]] + [_fmt(values[c]) for c in METRIC_COLUMNS[2:]])
    return path


def _prepare_output_dir(out: Path, config_hash: str, resume: bool) -> RunProgress:
    progress_path = out / PROGRESS_FILE
    if not out.exists() or not any(out.iterdir()):
        out.mkdir(parents=True, exist_ok=True)
        if resume:
            logger.warning(f"--resume given but {out} is empty; starting a fresh run")
        return RunProgress(config_hash=config_hash)
    if not resume:
        raise ConfigError(f"output directory {out} is not empty; pass --resume to continue it or choose another")
    if not progress_path.is_file():
        raise ConfigError(f"{out} has no {PROGRESS_FILE}; refusing to resume into a foreign directory")
    progress = RunProgress.model_validate_json(progress_path.read_text())
    if progress.config_hash != config_hash:
        raise ConfigError(
            f"{out} belongs to config {progress.config_hash[:12]}, not {config_hash[:12]}; refusing to mix runs"
        )
    logger.info(f"resuming {out} after stages {[r.name for r in progress.completed]}")
    return progress


def _save_any(model, directory: Path) -> None:
    if isinstance(model, ShardedModel):
        save_sharded(model, directory)
    else:
        save_model(model, directory)


def _load_any(directory: Path):
    if (directory / "shards.json").is_file():
        return load_sharded(directory)
    return load_model(directory)


def _embed_cycled(images: np.ndarray, seeds: Sequence[Seed], strength: float | np.ndarray) -> np.ndarray:
    """Row i carries seeds[i % len(seeds)], blended at strength[i] (or one strength for every row)."""
    strength = np.broadcast_to(np.asarray(strength, dtype=np.float64), (len(images),))
    out = np.empty_like(images)
    for i, seed in enumerate(seeds):
        rows = slice(i, None, len(seeds))
        out[rows] = embed_pixels(images[rows], seed.pattern, strength[rows, None] * seed.support)
    return out


def _free_digit(used: set[int], fallback: int) -> int:
    """Lowest glyph digit nobody uses yet."""
    return next((d for d in range(10) if d not in used), fallback % 10)


def read_metrics_csv(path: Path) -> list[MetricRow]:
    """Inverse of write_metrics_csv."""
    with path.open(newline="") as f:
        return [
            MetricRow(**{k: (v if k in ("phase", "method") else (float(v) if v else None)) for k, v in row.items()})
            for row in csv.DictReader(f)
        ]


class ExperimentRun:
    """State of one run directory; each stage has a `_run_*` and a `_load_*` method."""

    def __init__(self, cfg: ExperimentConfig, out: Path, publisher: BaseEventPublisher):
        self.cfg = cfg
        self.out = out
        self.publisher = publisher
        self.config_hash = cfg.config_hash()
        self.run_id = self.config_hash[:12]
        self.train: Dataset | None = None
        self.test: Dataset | None = None
        self.partitions: list[UserPartition] = []
        self.seeded_train: Dataset | None = None
        self.user_seeds: dict[int, list[Seed]] = {}
        self.seeded_indices: dict[int, list[int]] = {}
        self.verifier: VerifierModel | None = None
        # split_seeds only: the user's retained control group and its own seed and verifier
        self.retained_indices: list[int] = []
        self.retained_seed: Seed | None = None
        self.retained_verifier: VerifierModel | None = None
        self.models: dict[Phase, dict[str, object]] = {"pre_unlearn": {}, "post_unlearn": {}}
        self.metrics: dict[Phase, list[MetricRow]] = {"pre_unlearn": [], "post_unlearn": []}
        self.runtime: dict[str, float] = {}
        self._mib_view: BackdoorView | None = None
        self._mib_spec: BackdoorSpec | None = None

    # --- helpers ---

    def seed(self, stage: str, *index: int | str) -> int:
        return derive_seed(self.cfg.master_seed, stage, *index, context=self.config_hash)

    def path(self, relative: str) -> Path:
        p = self.out / relative
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def directory(self, relative: str) -> Path:
        p = self.out / relative
        p.mkdir(parents=True, exist_ok=True)
        return p

    def methods(self) -> list[str]:
        return [m for m in TRAINED_METHODS if m == "sms" or getattr(self.cfg, m)]

    @property
    def target(self) -> int:
        return self.cfg.target_user

    @property
    def split_seeds(self) -> bool:
        return self.cfg.erase_granularity is EraseGranularity.SPLIT_SEEDS

    @property
    def retained_digit(self) -> int:
        return _free_digit({u % 10 for u in range(self.cfg.n_users)}, self.target + 5)

    @property
    def mib_spec(self) -> BackdoorSpec:
        if self._mib_spec is None:
            cfg = self.cfg
            trigger = generate_seed(self.target, cfg.seed_n, self.train.side, self.seed("trigger"), cfg.placement)
            self._mib_spec = BackdoorSpec(
                trigger=trigger, ser=cfg.ser, target_label=cfg.mib_target, rate=cfg.mib_rate or cfg.ssr
            )
        return self._mib_spec

    @property
    def mib_view(self) -> BackdoorView:
        if self._mib_view is None:
            self._mib_view = mib_prepare(self.train, self.partitions[self.target], self.mib_spec, self.seed("mib"))
        return self._mib_view

    def training_set(self, method: str) -> Dataset:
        if method == "mib":
            return self.mib_view.dataset
        if method == "nonverif" and self.cfg.nonverif_on_clean:
            return self.train
        return self.seeded_train

    def erase_request(self, method: str) -> EraseRequest:
        """
        D_e of the target user for one method.

        Note:
            The backdoored copies of an MIB run belong to the user, so a
            whole-user request erases them too; split_seeds erases only the
            first seed group, exactly like `samples`.
        """
        owned = list(self.partitions[self.target].indices)
        if method == "mib":
            owned += list(self.mib_view.backdoor_indices)
        if self.cfg.erase_granularity is EraseGranularity.WHOLE_USER:
            indices = owned
        elif method == "mib":
            indices = list(self.mib_view.source_indices)
        else:
            indices = list(self.seeded_indices[self.target])
        return EraseRequest(
            user_id=self.target, indices=indices, granularity=self.cfg.erase_granularity, owned=owned
        )

    @property
    def seeded_queries(self) -> np.ndarray:
        return self.seeded_train.images[self.seeded_indices[self.target]]

    @property
    def alt_queries(self) -> np.ndarray:
        rows = [i for u, idx in sorted(self.seeded_indices.items()) if u != self.target for i in idx]
        return self.seeded_train.images[rows]

    def trace_hook(self, method: str) -> Callable[[object], TraceReading] | None:
        if method == "sms":
            return lambda model: TraceReading(
                verifiability=verifiability(self.verifier, model, self.seeded_queries),
                unambiguity=unambiguity(self.verifier, model, self.alt_queries),
            )
        if method == "mib":
            triggered = triggered_inputs(self.test, self.mib_spec)
            return lambda model: TraceReading(backdoor_asr=backdoor_asr(model, triggered, self.mib_spec.target_label))
        return None

    def unlearner(self, method: str) -> BaseUnlearner:
        cfg = self.cfg
        return get_unlearner(
            cfg.unlearner_options(),
            cfg.sgd(self.seed("train")),
            cfg.weights(),
            seeded=method == "sms",
            arch=cfg.architecture(),
            test_ds=self.test,
            trace_hook=self.trace_hook(method),
        )

    def emit(self, stage: str, status: StageStatus, metrics: dict[str, float] | None = None, detail: str | None = None):
        event = RunEvent(run_id=self.run_id, stage=stage, status=status, metrics=metrics or {}, detail=detail)
        try:
            self.publisher.publish(event)
        except Exception as e:
            logger.warning(f"could not publish {stage} {status} event: {e}")

    # --- stages ---

    def _run_data(self) -> list[str]:
        cfg = self.cfg
        if cfg.dataset == "idx":
            full = load_idx(cfg.idx_images, cfg.idx_labels)
            if cfg.idx_limit is not None and len(full) > cfg.idx_limit:
                full = full.subset(np.arange(cfg.idx_limit))
        else:
            full = synth_digits(cfg.synth_per_class, cfg.synth_side, cfg.class_count, self.seed("data"))
        self.train, self.test = split(full, cfg.train_frac, self.seed("split"))
        self.partitions = partition_users(self.train, cfg.n_users, self.seed("partition"))
        save_dataset(self.train, self.path("data/train.smsd"))
        save_dataset(self.test, self.path("data/test.smsd"))
        self.path("data/partitions.json").write_text(json.dumps({p.user_id: p.indices for p in self.partitions}))
        logger.info(f"data: {len(self.train)} train, {len(self.test)} test, {cfg.n_users} users")
        return ["data/train.smsd", "data/test.smsd", "data/partitions.json"]

    def _load_data(self):
        self.train = load_dataset(self.out / "data/train.smsd")
        self.test = load_dataset(self.out / "data/test.smsd")
        parts = json.loads((self.out / "data/partitions.json").read_text())
        self.partitions = [UserPartition(user_id=int(u), indices=idx) for u, idx in sorted(parts.items(), key=lambda kv: int(kv[0]))]

    def _run_seed(self) -> list[str]:
        cfg = self.cfg
        ds = self.train
        layout = {}
        artifacts = ["data/seeded_train.smsd", "data/seeding.json"]
        for part in self.partitions:
            u = part.user_id
            base = generate_seed(u, cfg.seed_n, ds.side, self.seed("seed", u), cfg.placement)
            view = seed_dataset(part, ds, base, cfg.ser, cfg.ssr, self.seed("embed", u), per_sample=cfg.per_sample_seeds)
            ds = view.dataset
            self.user_seeds[u] = list(view.seeds) or [base]
            self.seeded_indices[u] = list(view.seeded_indices)
            save_seed_record(base, self.path(f"seeds/user_{u}.json"))
            artifacts.append(f"seeds/user_{u}.json")
            layout[u] = {
                "indices": self.seeded_indices[u],
                "seeds": [s.record.model_dump() for s in self.user_seeds[u]],
            }
        self.seeded_train = ds
        if self.split_seeds:
            artifacts += self._seed_retained_group()
        save_dataset(self.seeded_train, self.path("data/seeded_train.smsd"))
        self.path("data/seeding.json").write_text(json.dumps(layout))
        logger.info(f"seed: seeded {sum(map(len, self.seeded_indices.values()))} samples across {len(self.partitions)} users")
        return artifacts

    def _seed_retained_group(self) -> list[str]:
        """Seed a second, disjoint group of the target's samples with a seed of another glyph."""
        cfg = self.cfg
        erased = set(self.seeded_indices[self.target])
        rest = UserPartition(
            user_id=self.target, indices=[i for i in self.partitions[self.target].indices if i not in erased]
        )
        if not len(rest):
            raise ParameterError("split_seeds needs user samples left over after the erased group")
        self.retained_seed = generate_seed(
            self.target, cfg.seed_n, self.train.side, self.seed("seed_retained"), cfg.placement, digit=self.retained_digit
        )
        view = seed_dataset(rest, self.seeded_train, self.retained_seed, cfg.ser, cfg.ssr, self.seed("embed_retained"))
        self.seeded_train = view.dataset
        self.retained_indices = list(view.seeded_indices)
        save_seed_record(self.retained_seed, self.path(f"seeds/user_{self.target}_retained.json"))
        self.path("data/retained.json").write_text(json.dumps({"indices": self.retained_indices}))
        logger.info(f"seed: {len(self.retained_indices)} retained samples of user {self.target} carry a control seed")
        return [f"seeds/user_{self.target}_retained.json", "data/retained.json"]

    def _load_seed(self):
        self.seeded_train = load_dataset(self.out / "data/seeded_train.smsd")
        layout = json.loads((self.out / "data/seeding.json").read_text())
        for u, entry in layout.items():
            self.seeded_indices[int(u)] = entry["indices"]
            self.user_seeds[int(u)] = [seed_from_record(SeedRecord.model_validate(r)) for r in entry["seeds"]]
        if self.split_seeds:
            record = SeedRecord.model_validate_json((self.out / f"seeds/user_{self.target}_retained.json").read_text())
            self.retained_seed = seed_from_record(record)
            self.retained_indices = json.loads((self.out / "data/retained.json").read_text())["indices"]

    def _run_train(self) -> list[str]:
        artifacts = []
        for method in self.methods():
            unlearner = self.unlearner(method)
            model = unlearner.fit(self.training_set(method))
            self.models["pre_unlearn"][method] = model
            self.runtime[method] = unlearner.report.running_time
            _save_any(model, self.directory(f"models/{method}/pre"))
            write_report_csv(unlearner.report, self.path(f"losses/{method}.csv"))
            artifacts += [f"models/{method}/pre", f"losses/{method}.csv"]
        self.path("training.json").write_text(json.dumps({"runtime": self.runtime}, sort_keys=True))
        return artifacts + ["training.json"]

    def _load_train(self):
        for method in self.methods():
            self.models["pre_unlearn"][method] = _load_any(self.out / f"models/{method}/pre")
        self.runtime = json.loads((self.out / "training.json").read_text())["runtime"]

    def _fit_verifier(self, seeds: Sequence[Seed], digit: int, tag: str) -> VerifierModel:
        """Train V on clean target rows against copies blended with `seeds` at jittered strengths."""
        cfg = self.cfg
        clean = self.train.images[self.partitions[self.target].indices]
        rng = np.random.default_rng(self.seed("blend", tag))

        def strengths() -> np.ndarray:
            return cfg.ser * rng.uniform(cfg.verifier_min_blend, 1.0, size=len(clean))

        seeded = _embed_cycled(clean, seeds, strengths())
        decoys = None
        if cfg.decoy_seeds:
            pool = [
                generate_seed(self.target, cfg.seed_n, self.train.side, self.seed("decoy", tag, d), cfg.placement, digit=d)
                for d in range(10)
                if d != digit
            ]
            decoys = _embed_cycled(clean, pool, strengths())
        dv = build_verification_set(clean, seeded, decoys)
        return train_verifier(dv, cfg.verifier(self.seed("verifier", tag)), owner=self.target)

    def _save_verifier(self, verifier: VerifierModel, name: str) -> list[str]:
        save_mlp(verifier.net, self.path(f"verifier/{name}.smsm"))
        self.path(f"verifier/{name}.json").write_text(
            json.dumps(
                {
                    "owner": verifier.owner,
                    "threshold": verifier.threshold,
                    "holdout_accuracy": verifier.holdout_accuracy,
                }
            )
        )
        return [f"verifier/{name}.smsm", f"verifier/{name}.json"]

    def _read_verifier(self, name: str) -> VerifierModel:
        meta = json.loads((self.out / f"verifier/{name}.json").read_text())
        return VerifierModel(
            load_mlp(self.out / f"verifier/{name}.smsm", name="verifier"),
            owner=meta["owner"],
            threshold=meta["threshold"],
            holdout_accuracy=meta["holdout_accuracy"],
        )

    def _run_verifier(self) -> list[str]:
        self.verifier = self._fit_verifier(self.user_seeds[self.target], self.target % 10, "erased")
        artifacts = self._save_verifier(self.verifier, "verifier")
        if self.split_seeds:
            self.retained_verifier = self._fit_verifier([self.retained_seed], self.retained_digit, "retained")
            artifacts += self._save_verifier(self.retained_verifier, "verifier_retained")
        return artifacts

    def _load_verifier(self):
        self.verifier = self._read_verifier("verifier")
        if self.split_seeds:
            self.retained_verifier = self._read_verifier("verifier_retained")

    def measure_retained(self, phase: Phase, model) -> MetricRow:
        """Verifiability of the seed carried by samples the user keeps (split_seeds only)."""
        queries = self.seeded_train.images[self.retained_indices]
        outcome = evaluate(self.retained_verifier, model, queries, self.alt_queries)
        row = MetricRow(
            phase=phase,
            method="sms_retained",
            accuracy=accuracy(model, self.test),
            verifiability=outcome.verifiability,
            unambiguity=outcome.unambiguity,
        )
        logger.info(f"{phase} sms_retained: verifiability {row.verifiability:.4f}")
        return row
    def measure(self, phase: Phase, method: str, model) -> MetricRow:
        row = MetricRow(phase=phase, method=method, accuracy=accuracy(model, self.test))
        if method == "sms":
            outcome = evaluate(self.verifier, model, self.seeded_queries, self.alt_queries)
            row.verifiability, row.unambiguity = outcome.verifiability, outcome.unambiguity
        elif method == "mib":
            triggered = triggered_inputs(self.test, self.mib_spec)
            row.verifiability = backdoor_asr(model, triggered, self.mib_spec.target_label)
        if self.cfg.mia:
            members = self.training_set(method).images[self.erase_request(method).indices]
            if len(members) >= 2 and len(self.test) >= len(members):
                rng = np.random.default_rng(self.seed("mia_sample"))
                non_members = self.test.images[np.sort(rng.choice(len(self.test), size=len(members), replace=False))]
                row.mia = mia_score(model, members, non_members, rng_seed=self.seed("mia_split"))
            else:
                logger.warning(f"{method}: too few erased samples ({len(members)}) for a membership score")
        logger.info(
            f"{phase} {method}: accuracy {row.accuracy:.4f}"
            + (f", verifiability {row.verifiability:.4f}" if row.verifiability is not None else "")
            + (f", unambiguity {row.unambiguity:.4f}" if row.unambiguity is not None else "")
            + (f", mia {row.mia:.4f}" if row.mia is not None else "")
        )
        return row

    def _run_verify(self, phase: Phase) -> list[str]:
        self.metrics[phase] = [self.measure(phase, m, self.models[phase][m]) for m in self.methods()]
        if self.split_seeds:
            self.metrics[phase].insert(1, self.measure_retained(phase, self.models[phase]["sms"]))
        name = f"metrics_{phase}.json"
        self.path(name).write_bytes(_metric_rows.dump_json(self.metrics[phase]))
        return [name]

    def _load_verify(self, phase: Phase):
        self.metrics[phase] = _metric_rows.validate_json((self.out / f"metrics_{phase}.json").read_bytes())

    def _run_unlearn(self) -> list[str]:
        artifacts = []
        for method in self.methods():
            unlearner = self.unlearner(method)
            unlearner.attach(self.training_set(method), self.models["pre_unlearn"][method])
            trace_path = self.path(f"traces/{method}.csv")
            try:
                result = unlearner.unlearn(self.erase_request(method))
            except SmsError as e:
                if getattr(e, "trace", None) is not None:
                    e.trace.write_csv(trace_path)
                    logger.error(f"{method}: unlearning aborted, partial trace kept in {trace_path}")
                raise
            self.models["post_unlearn"][method] = result.model
            _save_any(result.model, self.directory(f"models/{method}/post"))
            result.trace.write_csv(trace_path)
            artifacts += [f"models/{method}/post", f"traces/{method}.csv"]
            if result.trace.rows:
                cmd_trace_plot(trace_path)
                artifacts.append(f"traces/{method}.svg")
            if isinstance(result.model, ShardedModel):
                self.path(f"traces/{method}_retrained.json").write_text(
                    json.dumps(
                        {
                            "retrained": result.retrained_shards,
                            "checkpoints": dict(enumerate(result.model.digests())),
                        },
                        indent=2,
                    )
                )
                artifacts.append(f"traces/{method}_retrained.json")
        return artifacts

    def _load_unlearn(self):
        for method in self.methods():
            self.models["post_unlearn"][method] = _load_any(self.out / f"models/{method}/post")

    def _run_report(self) -> list[str]:
        rows = sorted(
            self.metrics["pre_unlearn"] + self.metrics["post_unlearn"],
            key=lambda r: (METHOD_ORDER.index(r.method), PHASE_ORDER.index(r.phase)),
        )
        write_metrics_csv(rows, self.path(METRICS_FILE))
        return [METRICS_FILE]

    def _load_report(self):
        rows = read_metrics_csv(self.out / METRICS_FILE)
        for phase in PHASE_ORDER:
            self.metrics[phase] = [r for r in rows if r.phase == phase]

    # --- driver ---

    def execute(self, progress: RunProgress) -> RunManifest:
        self.path("config.txt").write_text(dump_config(self.cfg))
        for stage in STAGES:
            if progress.done(stage):
                logger.info(f"stage {stage}: already completed, loading its outputs")
                getattr(self, f"_load_{stage.split('_')[0]}")(*self._phase_arg(stage))
                continue
            self.emit(stage, StageStatus.STARTED)
            started = time.perf_counter()
            try:
                artifacts = getattr(self, f"_run_{stage.split('_')[0]}")(*self._phase_arg(stage))
            except Exception as e:
                logger.error(f"stage {stage} failed: {e}")
                self.emit(stage, StageStatus.FAILED, detail=str(e))
                raise StageError(stage, str(e)) from e
            record = StageRecord(name=stage, seconds=time.perf_counter() - started, artifacts=artifacts)
            progress.completed.append(record)
            (self.out / PROGRESS_FILE).write_text(progress.model_dump_json(indent=2))
            self.emit(stage, StageStatus.FINISHED, metrics=self._stage_metrics(stage))
        return self._write_manifest(progress)

    @staticmethod
    def _phase_arg(stage: str) -> tuple:
        if stage == "verify_pre":
            return ("pre_unlearn",)
        if stage == "verify_post":
            return ("post_unlearn",)
        return ()

    def _stage_metrics(self, stage: str) -> dict[str, float]:
        if stage == "train":
            return {f"runtime_{m}": t for m, t in self.runtime.items()}
        phase = self._phase_arg(stage)
        if not phase:
            return {}
        return {
            f"{r.method}_{name}": value
            for r in self.metrics[phase[0]]
            for name, value in (("accuracy", r.accuracy), ("verifiability", r.verifiability))
            if value is not None
        }

    def _write_manifest(self, progress: RunProgress) -> RunManifest:
        artifacts = {
            p.relative_to(self.out).as_posix(): file_sha256(p)
            for p in sorted(self.out.rglob("*"))
            if p.is_file() and p.name not in (MANIFEST_FILE, PROGRESS_FILE)
        }
        manifest = RunManifest(
            run_id=self.run_id,
            config_hash=self.cfg.config_hash(),
            unlearn_method=self.cfg.unlearn_method,
            artifacts=artifacts,
            metrics=self.metrics["pre_unlearn"] + self.metrics["post_unlearn"],
            runtime=self.runtime,
            stages=progress.completed,
            wall_clock=sum(r.seconds for r in progress.completed),
        )
        (self.out / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2))
        logger.info(f"run {self.run_id} complete: {len(artifacts)} artifacts in {self.out}")
        return manifest


def _event_publisher(cfg: ExperimentConfig) -> BaseEventPublisher:
    if not cfg.event_endpoint:
        return get_event_publisher(NullEventOptions())
    return get_event_publisher(ZmqEventOptions(endpoint=cfg.event_endpoint, topic=cfg.run_id()))


def cmd_run(
    config: ExperimentConfig | str | Path,
    out_dir: str | Path | None = None,
    resume: bool = False,
    publisher: BaseEventPublisher | None = None,
) -> RunManifest:
    """
    Run the whole pipeline for one config.

    Args:
        config: a loaded config or the path of a config file.
        out_dir: overrides config.output_dir.
        resume: continue a directory holding a partial run of the same config.
        publisher: event publisher to use; by default one is opened from
            config.event_endpoint (or a null publisher).

    Raises:
        ConfigError: bad config, or an output directory that cannot be used.
        StageError: a stage failed; artifacts written so far are kept.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    progress = _prepare_output_dir(out, cfg.config_hash(), resume)
    with ExitStack() as stack:
        if publisher is None:
            try:
                publisher = stack.enter_context(_event_publisher(cfg))
            except ConnectionError as e:
                raise ConfigError(f"cannot open event endpoint {cfg.event_endpoint}: {e}") from e
        return ExperimentRun(cfg, out, publisher).execute(progress)


def _sweep_point(args: tuple[ExperimentConfig, Path, bool]) -> RunManifest:
    cfg, out, resume = args
    return cmd_run(cfg, out, resume=resume)


def _row(manifest: RunManifest, method: str, phase: str) -> MetricRow | None:
    return next((r for r in manifest.metrics if r.method == method and r.phase == phase), None)


def cmd_sweep(
    config: ExperimentConfig | str | Path,
    axis: str,
    values: Sequence[float],
    out_dir: str | Path | None = None,
    jobs: int = 1,
    resume: bool = False,
) -> Path:
    """
    One run per value of `axis` (ssr or ser), each in its own subdirectory.

    Returns:
        path of sweep.csv; sweep.svg is written next to it.
    """
    if axis not in SWEEP_AXES:
        raise ParameterError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if len(set(values)) < 2:
        raise ParameterError(f"a sweep needs at least 2 distinct values, got {list(values)}")
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    points = [
        (cfg.with_updates(**{axis: v}), out / f"{axis}_{i:02d}_{v:g}", resume) for i, v in enumerate(values)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            manifests = list(pool.map(_sweep_point, points))
    else:
        manifests = [_sweep_point(p) for p in points]

    rows = []
    for v, manifest in zip(values, manifests):
        pre, post = _row(manifest, "sms", "pre_unlearn"), _row(manifest, "sms", "post_unlearn")
        rows.append([v, pre.accuracy, pre.verifiability, pre.unambiguity, post.verifiability, manifest.runtime.get("sms")])

    csv_path = out / "sweep.csv"
    with csv_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([axis] + SWEEP_COLUMNS[1:])
        for row in rows:
            writer.writerow([repr(float(row[0]))] + [_fmt(x) for x in row[1:]])

    xs = [float(r[0]) for r in rows]
    series = {name: [r[i] for r in rows] for i, name in enumerate(SWEEP_COLUMNS[1:5], start=1)}
    write_svg(line_chart(xs, series, title=f"{axis} sweep", x_label=axis, y_label="rate"), out / "sweep.svg")
    slope = trend_slope(xs, series["verifiability"])
    logger.info(f"sweep over {axis}: verifiability slope {slope:+.4f}")
    return csv_path
