# src/sms_verify/unlearning/unlearn_factory.py
from typing import Literal, Union

from pydantic import BaseModel, Field

from ..datasets import Dataset
from ..joint_training import Architecture
from ..schemas import JointWeights, SgdConfig
from .backends.approx import DEFAULT_RETAIN_FRACTION, DEFAULT_STEPS, ApproxUnlearner
from .backends.retrain import RetrainUnlearner
from .backends.sisa import SisaUnlearner
from .unlearn_base import BaseUnlearner, TraceHook


class RetrainOptions(BaseModel):
    """Naive retraining on D minus D_e."""

    method: Literal["retrain"] = "retrain"


class SisaOptions(BaseModel):
    """
    Attributes:
        method: Fixed literal for SISA.
        k: number of disjoint shards.
        jobs: shards trained concurrently.
    """

    method: Literal["sisa"] = "sisa"
    k: int = Field(default=5, ge=2)
    jobs: int = Field(default=1, ge=1)


class ApproxOptions(BaseModel):
    """
    Attributes:
        method: Fixed literal for gradient-ascent unlearning.
        steps: maximum ascent steps T.
        ascent_rate: eta_u; None means half the training learning rate.
        retain_fraction: corrective subsample size relative to the retained data.
    """

    method: Literal["approx"] = "approx"
    steps: int = Field(default=DEFAULT_STEPS, ge=1)
    ascent_rate: float | None = Field(default=None, gt=0.0)
    retain_fraction: float = Field(default=DEFAULT_RETAIN_FRACTION, gt=0.0, le=1.0)


UnlearnerOptions = Union[RetrainOptions, SisaOptions, ApproxOptions]


def get_unlearner(
    options: UnlearnerOptions,
    cfg: SgdConfig,
    weights: JointWeights,
    seeded: bool = True,
    arch: Architecture | None = None,
    test_ds: Dataset | None = None,
    trace_hook: TraceHook | None = None,
) -> BaseUnlearner:
    """
    Factory method to create an unlearner instance.

    Args:
        options: Configuration object for the chosen method.
        seeded: train seeded models (joint loss) rather than primary-only baselines.
    """
    common = dict(seeded=seeded, arch=arch, test_ds=test_ds, trace_hook=trace_hook)
    if options.method == "retrain":
        return RetrainUnlearner(cfg, weights, **common)
    elif options.method == "sisa":
        return SisaUnlearner(cfg, weights, k=options.k, jobs=options.jobs, **common)
    elif options.method == "approx":
        return ApproxUnlearner(
            cfg,
            weights,
            steps=options.steps,
            ascent_rate=options.ascent_rate,
            retain_fraction=options.retain_fraction,
            **common,
        )
    else:
        raise ValueError(f"Unknown unlearning method: {options.method}")
