# src/sms_verify/unlearning/unlearn_base.py
import csv
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..datasets import Dataset
from ..errors import InputError, StateError
from ..joint_training import Architecture, EpochCallback, PrimaryModel, accuracy, train_joint, train_primary_only
from ..schemas import EraseRequest, JointWeights, SgdConfig, TraceRow, TrainReport

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["method", "step", "test_acc", "erased_acc", "verifiability", "unambiguity", "backdoor_asr"]


class TraceReading(BaseModel):
    """Verification metrics of one model snapshot; None where not measured."""

    verifiability: float | None = None
    unambiguity: float | None = None
    backdoor_asr: float | None = None


TraceHook = Callable[[Any], TraceReading]


class UnlearnTrace(BaseModel):
    rows: list[TraceRow] = Field(default_factory=list)

    def record(
        self,
        method: str,
        step: int,
        model,
        test_ds: Dataset | None,
        erased_ds: Dataset,
        trace_hook: TraceHook | None,
    ) -> TraceRow:
        reading = trace_hook(model) if trace_hook is not None else TraceReading()
        row = TraceRow(
            method=method,
            step=step,
            test_acc=accuracy(model, test_ds) if test_ds is not None else None,
            erased_acc=accuracy(model, erased_ds),
            **reading.model_dump(),
        )
        self.rows.append(row)
        logger.debug(f"{method} step {step}: test {row.test_acc}, erased {row.erased_acc:.4f}")
        return row

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            for row in self.rows:
                values = row.model_dump()
                writer.writerow(["" if values[c] is None else values[c] for c in TRACE_COLUMNS])
        return path


class UnlearnResult(BaseModel):
    """
    Attributes:
        model: the unlearned model (single or sharded).
        trace: step-indexed metrics recorded while unlearning.
        retrained_shards: shard ids retrained (SISA only).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: Any
    trace: UnlearnTrace
    retrained_shards: list[int] = Field(default_factory=list)


def check_erase(train_ds: Dataset, erase: EraseRequest) -> np.ndarray:
    """Validated, sorted, de-duplicated erased indices."""
    idx = np.unique(np.asarray(erase.indices, dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= len(train_ds)):
        raise InputError(f"erased indices must lie in [0, {len(train_ds)})")
    if erase.owned is not None:
        foreign = np.setdiff1d(idx, np.asarray(erase.owned, dtype=np.int64))
        if foreign.size:
            raise InputError(
                f"user {erase.user_id} cannot erase rows outside their partition: {foreign[:5].tolist()}"
            )
    if idx.size == len(train_ds):
        raise InputError("cannot erase the entire training set")
    return idx


def fit_model(
    train_ds: Dataset,
    cfg: SgdConfig,
    weights: JointWeights,
    seeded: bool,
    test_ds: Dataset | None = None,
    arch: Architecture | None = None,
    on_epoch: EpochCallback | None = None,
) -> tuple[PrimaryModel, TrainReport]:
    """Joint training for SMS models, primary-only training for baselines."""
    if seeded:
        return train_joint(train_ds, cfg, weights, test_ds=test_ds, arch=arch, on_epoch=on_epoch)
    return train_primary_only(train_ds, cfg, test_ds=test_ds, arch=arch, on_epoch=on_epoch)


class BaseUnlearner(ABC):
    """
    Interface of an unlearning algorithm U.

    Note:
        `fit` trains the initial model on D; `unlearn` removes D_e from it.
    """

    method: str = "base"

    def __init__(
        self,
        cfg: SgdConfig,
        weights: JointWeights,
        seeded: bool = True,
        arch: Architecture | None = None,
        test_ds: Dataset | None = None,
        trace_hook: TraceHook | None = None,
    ):
        self.cfg = cfg
        self.weights = weights
        self.seeded = seeded
        self.arch = arch
        self.test_ds = test_ds
        self.trace_hook = trace_hook
        self.train_ds: Dataset | None = None
        self.model = None
        self.report: TrainReport | None = None

    def fit(self, train_ds: Dataset):
        """Train the initial model on train_ds and keep it for `unlearn`."""
        self.train_ds = train_ds
        self.model, self.report = self._fit_impl(train_ds)
        return self.model

    def attach(self, train_ds: Dataset, model, report: TrainReport | None = None):
        """Adopt an already trained model (e.g. reloaded from checkpoints) instead of fitting."""
        self.train_ds, self.model, self.report = train_ds, model, report
        return self.model

    @abstractmethod
    def _fit_impl(self, train_ds: Dataset) -> tuple[Any, TrainReport]:
        """Actual training logic to be implemented by subclasses."""
        pass

    def unlearn(self, erase: EraseRequest) -> UnlearnResult:
        if self.model is None or self.train_ds is None:
            raise StateError(f"{self.method}: fit() must run before unlearn()")
        logger.info(f"{self.method}: unlearning {len(erase.indices)} samples of user {erase.user_id}")
        return self._unlearn_impl(erase)

    @abstractmethod
    def _unlearn_impl(self, erase: EraseRequest) -> UnlearnResult:
        """Actual unlearning logic to be implemented by subclasses."""
        pass
