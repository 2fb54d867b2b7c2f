# src/sms_verify/unlearning/backends/sisa.py
"""
SISA exact unlearning: k disjoint shards, one sub-model each.

Unlearning retrains only the shards that held erased samples; every other
shard object is carried over untouched, so its checkpoint hash is unchanged.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ...datasets import Dataset
from ...determinism import derive_seed
from ...errors import ParameterError, UnlearningError
from ...joint_training import Architecture, PrimaryModel, SeededModel, load_model, save_model
from ...nn_core import softmax
from ...schemas import EpochRecord, EraseRequest, JointWeights, SgdConfig, TrainReport
from ..unlearn_base import BaseUnlearner, TraceHook, UnlearnResult, UnlearnTrace, check_erase, fit_model

logger = logging.getLogger(__name__)

REMOVED = -1


class ShardedModel:
    """
    Ensemble of k shard models.

    Attributes:
        shards: sub-models, shard i trained only on shard_indices(i).
        assignment: training index -> shard id; REMOVED for erased samples.
        generations: how many times each shard has been (re)trained.
    """

    def __init__(self, shards: list[PrimaryModel], assignment: np.ndarray, generations: list[int] | None = None):
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.size and (assignment.max() >= len(shards) or assignment.min() < REMOVED):
            raise ParameterError(f"assignment refers to shards outside [0, {len(shards)})")
        self.shards = shards
        self.assignment = assignment
        self.generations = list(generations) if generations is not None else [0] * len(shards)

    @property
    def k(self) -> int:
        return len(self.shards)

    @property
    def input_dim(self) -> int:
        return self.shards[0].input_dim

    @property
    def class_count(self) -> int:
        return self.shards[0].class_count

    def shard_indices(self, shard_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == shard_id)

    def predict_logits(self, batch: np.ndarray) -> np.ndarray:
        """Log of the mean shard softmax."""
        mean = np.mean([softmax(s.predict_logits(batch)) for s in self.shards], axis=0)
        return np.log(np.maximum(mean, 1e-12))

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return sisa_predict(self, batch)

    def reconstructions(self, batch: np.ndarray) -> list[np.ndarray]:
        return [s.reconstruct(batch) for s in self.shards if isinstance(s, SeededModel)]

    def digests(self) -> list[str]:
        return [s.digest() for s in self.shards]


def sisa_predict(sm: ShardedModel, batch: np.ndarray) -> np.ndarray:
    """Majority vote over shard argmaxes; ties go to the largest summed softmax."""
    probs = np.stack([softmax(s.predict_logits(batch)) for s in sm.shards])
    votes = probs.argmax(axis=2)
    counts = np.zeros(probs.shape[1:], dtype=np.int64)
    for shard_votes in votes:
        counts[np.arange(len(shard_votes)), shard_votes] += 1
    summed = probs.sum(axis=0)
    tied = counts == counts.max(axis=1, keepdims=True)
    return np.where(tied, summed, -np.inf).argmax(axis=1)


def _shard_cfg(cfg: SgdConfig, shard_id: int, generation: int) -> SgdConfig:
    return cfg.model_copy(update={"rng_seed": derive_seed(cfg.rng_seed, "shard", shard_id, generation)})


def _train_shards(
    train_ds: Dataset,
    jobs_list: list[tuple[int, np.ndarray, SgdConfig]],
    w: JointWeights,
    seeded: bool,
    arch: Architecture | None,
    jobs: int,
) -> dict[int, tuple[PrimaryModel, TrainReport]]:
    def run(job):
        shard_id, indices, shard_cfg = job
        logger.debug(f"training shard {shard_id} on {len(indices)} samples")
        return shard_id, fit_model(train_ds.subset(indices), shard_cfg, w, seeded, arch=arch)

    if jobs > 1 and len(jobs_list) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return dict(pool.map(run, jobs_list))
    return dict(run(job) for job in jobs_list)


def merge_reports(reports: list[TrainReport]) -> TrainReport:
    """Per-epoch mean losses across shards; running time is the shard total."""
    epochs = []
    for records in zip(*(r.epochs for r in reports)):
        self_losses = [e.self_loss for e in records if e.self_loss is not None]
        epochs.append(
            EpochRecord(
                epoch=records[0].epoch,
                primary_loss=float(np.mean([e.primary_loss for e in records])),
                self_loss=float(np.mean(self_losses)) if self_losses else None,
                seconds=sum(e.seconds for e in records),
            )
        )
    return TrainReport(epochs=epochs, running_time=sum(r.running_time for r in reports))


def sisa_train(
    train_ds: Dataset,
    k: int,
    cfg: SgdConfig,
    w: JointWeights,
    seeded: bool = True,
    arch: Architecture | None = None,
    jobs: int = 1,
) -> tuple[ShardedModel, TrainReport]:
    """
    Split train_ds into k random disjoint shards of near-equal size and train one model per shard.

    Args:
        jobs: shards trained concurrently; results do not depend on it.
    """
    if k < 2:
        raise ParameterError(f"SISA needs k >= 2 shards, got {k}")
    if k > len(train_ds):
        raise ParameterError(f"k={k} exceeds the {len(train_ds)} training samples")

    rng = np.random.default_rng(derive_seed(cfg.rng_seed, "shard_assignment"))
    assignment = np.empty(len(train_ds), dtype=np.int64)
    for shard_id, chunk in enumerate(np.array_split(rng.permutation(len(train_ds)), k)):
        assignment[chunk] = shard_id

    work = [(i, np.flatnonzero(assignment == i), _shard_cfg(cfg, i, 0)) for i in range(k)]
    trained = _train_shards(train_ds, work, w, seeded, arch, jobs)
    sm = ShardedModel([trained[i][0] for i in range(k)], assignment)
    logger.info(f"trained {k} shards of sizes {[len(sm.shard_indices(i)) for i in range(k)]}")
    return sm, merge_reports([trained[i][1] for i in range(k)])


def sisa_unlearn(
    sm: ShardedModel,
    train_ds: Dataset,
    erase: EraseRequest,
    cfg: SgdConfig,
    w: JointWeights,
    seeded: bool = True,
    test_ds: Dataset | None = None,
    arch: Architecture | None = None,
    trace_hook: TraceHook | None = None,
    jobs: int = 1,
) -> tuple[ShardedModel, UnlearnTrace, list[int]]:
    """
    Retrain from scratch every shard holding an erased index, without those indices.

    Returns:
        the new ensemble, a trace (step 0 before, one step per retrained shard),
        and the sorted ids of the retrained shards.
    """
    erased_idx = check_erase(train_ds, erase)
    if len(sm.assignment) != len(train_ds):
        raise ParameterError(f"assignment covers {len(sm.assignment)} samples, dataset has {len(train_ds)}")

    erased = train_ds.subset(erased_idx)
    trace = UnlearnTrace()
    if len(erased):
        trace.record("sisa", 0, sm, test_ds, erased, trace_hook)

    affected = sorted(int(s) for s in np.unique(sm.assignment[erased_idx]) if s != REMOVED)
    if not affected:
        return sm, trace, []

    assignment = sm.assignment.copy()
    assignment[erased_idx] = REMOVED
    generations = list(sm.generations)
    work = []
    for shard_id in affected:
        indices = np.flatnonzero(assignment == shard_id)
        if indices.size == 0:
            raise UnlearningError(f"erasing empties shard {shard_id}", trace=trace)
        generations[shard_id] += 1
        work.append((shard_id, indices, _shard_cfg(cfg, shard_id, generations[shard_id])))

    logger.info(f"retraining shards {affected} after erasing {len(erased_idx)} samples")
    retrained = _train_shards(train_ds, work, w, seeded, arch, jobs)

    shards = list(sm.shards)
    for step, shard_id in enumerate(affected, start=1):
        shards[shard_id] = retrained[shard_id][0]
        partial = ShardedModel(shards, assignment, generations)
        trace.record("sisa", step, partial, test_ds, erased, trace_hook)
    return ShardedModel(shards, assignment, generations), trace, affected


def save_sharded(sm: ShardedModel, directory: str | Path) -> dict[str, str]:
    """One checkpoint directory per shard plus shards.json; returns relative path -> sha256."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for i, shard in enumerate(sm.shards):
        for name, digest in save_model(shard, directory / f"shard_{i}").items():
            hashes[f"shard_{i}/{name}"] = digest
    layout = {"k": sm.k, "assignment": sm.assignment.tolist(), "generations": sm.generations}
    (directory / "shards.json").write_text(json.dumps(layout))
    return hashes


def load_sharded(directory: str | Path) -> ShardedModel:
    directory = Path(directory)
    layout = json.loads((directory / "shards.json").read_text())
    shards = [load_model(directory / f"shard_{i}") for i in range(layout["k"])]
    return ShardedModel(shards, np.asarray(layout["assignment"]), layout["generations"])


class SisaUnlearner(BaseUnlearner):
    method = "sisa"

    def __init__(self, *args, k: int = 5, jobs: int = 1, **kwargs):
        super().__init__(*args, **kwargs)
        self.k = k
        self.jobs = jobs

    def _fit_impl(self, train_ds: Dataset):
        return sisa_train(train_ds, self.k, self.cfg, self.weights, self.seeded, arch=self.arch, jobs=self.jobs)

    def _unlearn_impl(self, erase: EraseRequest) -> UnlearnResult:
        model, trace, retrained = sisa_unlearn(
            self.model,
            self.train_ds,
            erase,
            self.cfg,
            self.weights,
            seeded=self.seeded,
            test_ds=self.test_ds,
            arch=self.arch,
            trace_hook=self.trace_hook,
            jobs=self.jobs,
        )
        return UnlearnResult(model=model, trace=trace, retrained_shards=retrained)
