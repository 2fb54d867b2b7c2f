# src/sms_verify/unlearning/backends/retrain.py
import logging

from ...datasets import Dataset
from ...determinism import derive_seed
from ...joint_training import Architecture, PrimaryModel
from ...schemas import EraseRequest, JointWeights, SgdConfig
from ..unlearn_base import BaseUnlearner, TraceHook, UnlearnResult, UnlearnTrace, check_erase, fit_model

logger = logging.getLogger(__name__)


def retrain_unlearn(
    train_ds: Dataset,
    erase: EraseRequest,
    cfg: SgdConfig,
    w: JointWeights,
    seeded: bool = True,
    test_ds: Dataset | None = None,
    arch: Architecture | None = None,
    trace_hook: TraceHook | None = None,
) -> tuple[PrimaryModel, UnlearnTrace]:
    """
    Naive retraining: train a fresh model on D minus D_e.

    Note:
        The reduced set is built before training starts, so erased pixels are
        never read by the optimizer. The init/shuffle seed is derived from
        cfg.rng_seed, so the result depends only on D minus D_e and that seed.
    """
    erased_idx = check_erase(train_ds, erase)
    reduced = train_ds.without(erased_idx)
    erased = train_ds.subset(erased_idx)
    retrain_cfg = cfg.model_copy(update={"rng_seed": derive_seed(cfg.rng_seed, "retrain")})

    trace = UnlearnTrace()

    def on_epoch(epoch: int, model: PrimaryModel):
        if len(erased):
            trace.record("retrain", epoch, model, test_ds, erased, trace_hook)

    logger.info(f"retraining from scratch on {len(reduced)} of {len(train_ds)} samples")
    model, _ = fit_model(reduced, retrain_cfg, w, seeded, test_ds=test_ds, arch=arch, on_epoch=on_epoch)
    return model, trace


class RetrainUnlearner(BaseUnlearner):
    """Gold-standard exact unlearning by full retraining."""

    method = "retrain"

    def _fit_impl(self, train_ds: Dataset):
        return fit_model(train_ds, self.cfg, self.weights, self.seeded, test_ds=self.test_ds, arch=self.arch)

    def _unlearn_impl(self, erase: EraseRequest) -> UnlearnResult:
        model, trace = retrain_unlearn(
            self.train_ds,
            erase,
            self.cfg,
            self.weights,
            seeded=self.seeded,
            test_ds=self.test_ds,
            arch=self.arch,
            trace_hook=self.trace_hook,
        )
        return UnlearnResult(model=model, trace=trace)
