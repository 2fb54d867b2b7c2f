# src/sms_verify/unlearning/backends/approx.py
"""
Approximate unlearning by gradient ascent.

This is a stand-in for variational Bayesian unlearning, not an
implementation of it: each step ascends the joint loss on the erased set,
then takes one corrective descent step on a fresh random subsample of the
retained data. It reproduces the collapse of erased-set accuracy that the
verification layer has to detect.
"""
import logging

import numpy as np

from ...datasets import Dataset
from ...errors import InputError, NumericalError, ParameterError, UnlearningError
from ...joint_training import PrimaryModel, accuracy, train_step
from ...schemas import EraseRequest, JointWeights, SgdConfig
from ..unlearn_base import BaseUnlearner, TraceHook, UnlearnResult, UnlearnTrace, check_erase, fit_model

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 200
DEFAULT_RETAIN_FRACTION = 0.1
DIVERGENCE_RATIO = 0.5


def approx_unlearn(
    model: PrimaryModel,
    erased_ds: Dataset,
    retained_ds: Dataset,
    cfg: SgdConfig,
    w: JointWeights,
    steps: int = DEFAULT_STEPS,
    ascent_rate: float | None = None,
    test_ds: Dataset | None = None,
    trace_hook: TraceHook | None = None,
    retain_fraction: float = DEFAULT_RETAIN_FRACTION,
    rng_seed: int = 0,
) -> tuple[PrimaryModel, UnlearnTrace]:
    """
    Unlearn erased_ds from a copy of model.

    Args:
        steps: maximum number of ascent steps T.
        ascent_rate: eta_u, defaults to cfg.learning_rate / 2.
        retain_fraction: size of the corrective subsample relative to retained_ds.

    Note:
        Stops as soon as erased-set accuracy is at or below chance (1/C).
        Raises UnlearningError, carrying the trace so far, when test accuracy
        falls below half of its pre-unlearning value.
    """
    if steps < 1:
        raise ParameterError(f"approx_unlearn needs at least one step, got {steps}")
    if len(erased_ds) == 0:
        raise InputError("erased set is empty")
    if not 0.0 < retain_fraction <= 1.0:
        raise ParameterError("retain_fraction must be in (0, 1]")
    rate = cfg.learning_rate / 2 if ascent_rate is None else ascent_rate
    if rate <= 0.0:
        raise ParameterError("ascent_rate must be > 0")

    m = model.clone()
    rng = np.random.default_rng(rng_seed)
    chance = 1.0 / m.class_count
    n_retain = max(1, round(retain_fraction * len(retained_ds))) if len(retained_ds) else 0

    trace = UnlearnTrace()
    start = trace.record("approx", 0, m, test_ds, erased_ds, trace_hook)
    floor = DIVERGENCE_RATIO * start.test_acc if start.test_acc is not None else None

    for step in range(1, steps + 1):
        try:
            train_step(m, erased_ds.images, erased_ds.labels, w, -rate)
            if n_retain:
                idx = rng.choice(len(retained_ds), size=n_retain, replace=False)
                train_step(m, retained_ds.images[idx], retained_ds.labels[idx], w, cfg.learning_rate)
        except NumericalError as e:
            logger.error(f"approximate unlearning diverged at step {step}: {e}")
            raise UnlearningError(f"step {step}: {e}", trace=trace) from e

        row = trace.record("approx", step, m, test_ds, erased_ds, trace_hook)
        if floor is not None and row.test_acc < floor:
            logger.error(f"test accuracy {row.test_acc:.4f} fell below {floor:.4f} at step {step}")
            raise UnlearningError(
                f"test accuracy dropped below {DIVERGENCE_RATIO} of its initial value at step {step}",
                trace=trace,
            )
        if row.erased_acc <= chance:
            logger.info(f"erased-set accuracy reached chance after {step} steps")
            break
    return m, trace


class ApproxUnlearner(BaseUnlearner):
    """Gradient-ascent approximate unlearning on a single model."""

    method = "approx"

    def __init__(
        self,
        *args,
        steps: int = DEFAULT_STEPS,
        ascent_rate: float | None = None,
        retain_fraction: float = DEFAULT_RETAIN_FRACTION,
        **kwargs,
    ):
        super().__init__(*args, **kwargs)
        self.steps = steps
        self.ascent_rate = ascent_rate
        self.retain_fraction = retain_fraction

    def _fit_impl(self, train_ds: Dataset):
        return fit_model(train_ds, self.cfg, self.weights, self.seeded, test_ds=self.test_ds, arch=self.arch)

    def _unlearn_impl(self, erase: EraseRequest) -> UnlearnResult:
        erased_idx = check_erase(self.train_ds, erase)
        model, trace = approx_unlearn(
            self.model,
            self.train_ds.subset(erased_idx),
            self.train_ds.without(erased_idx),
            self.cfg,
            self.weights,
            steps=self.steps,
            ascent_rate=self.ascent_rate,
            test_ds=self.test_ds,
            trace_hook=self.trace_hook,
            retain_fraction=self.retain_fraction,
            rng_seed=self.cfg.rng_seed,
        )
        return UnlearnResult(model=model, trace=trace)
