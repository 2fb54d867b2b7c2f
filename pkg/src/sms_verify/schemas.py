# src/sms_verify/schemas.py
from datetime import datetime
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import Literal, TypeAlias

from pydantic import BaseModel, Field, TypeAdapter, field_serializer, model_validator

"""
Record definitions shared across modules.
Everything persisted to disk (seed records, reports, manifests) or sent over
the event bus is one of these models.
"""


class SgdConfig(BaseModel):
    """
    Plain minibatch SGD settings.

    Attributes:
        learning_rate: step size eta.
        batch_size: minibatch size m.
        epochs: number of passes E.
        rng_seed: seed for init and shuffling.
    """

    learning_rate: float = Field(default=0.05, gt=0.0)
    batch_size: int = Field(default=16, ge=1)
    epochs: int = Field(default=50, ge=1)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)


# applied to the per-pixel mean self loss, this matches the scale of a
# per-sample squared error
DEFAULT_SELF_WEIGHT = 100.0


class JointWeights(BaseModel):
    """Weights of the primary and self-supervised losses in the joint objective."""

    alpha_p: float = Field(default=1.0, ge=0.0)
    alpha_s: float = Field(default=DEFAULT_SELF_WEIGHT, ge=0.0)

    @model_validator(mode="after")
    def _check_not_both_zero(self):
        if self.alpha_p + self.alpha_s <= 0.0:
            raise ValueError("alpha_p + alpha_s must be > 0")
        return self


Placement: TypeAlias = Literal["bottom_right", "bottom_left", "top_right", "top_left"]


class SeedRecord(BaseModel):
    """
    Everything needed to re-derive a seed pattern on the user's side.

    Note:
        The pattern itself is never stored; it is regenerated from these fields.
    """

    user_id: int = Field(ge=0)
    seed_id: str
    n_active: int = Field(ge=1)
    side: int = Field(ge=2)
    rng_seed: int = Field(ge=0)
    placement: Placement = "bottom_right"
    digit: int | None = Field(default=None, ge=0, le=9)


class EraseGranularity(StrEnum):
    """
    What an unlearning request covers.

    SPLIT_SEEDS seeds two disjoint groups of the user's samples with two
    different seeds and erases only the first group; the second group stays
    in the model as a control.
    """

    SAMPLES = "samples"
    WHOLE_USER = "whole_user"
    SPLIT_SEEDS = "split_seeds"


class EraseRequest(BaseModel):
    """
    Unlearning request of one user.

    Attributes:
        user_id: requesting user.
        indices: erased indices into the training dataset (D_e).
        granularity: whether D_e is a few samples or the whole partition.
        owned: rows of the training dataset that belong to the user; when
            given, every erased index must be one of them.
    """

    user_id: int = Field(ge=0)
    indices: list[int] = Field(default_factory=list)
    granularity: EraseGranularity = EraseGranularity.SAMPLES
    owned: list[int] | None = None


class EpochRecord(BaseModel):
    epoch: int = Field(ge=1)
    primary_loss: float
    self_loss: float | None = None
    seconds: float = Field(ge=0.0)


class TrainReport(BaseModel):
    """
    Per-epoch losses of one training run.

    Attributes:
        epochs: one record per epoch, in order.
        test_accuracy: accuracy on the held-out split, when one was given.
        running_time: mean warm batch seconds times total batch count.
    """

    epochs: list[EpochRecord] = Field(default_factory=list)
    test_accuracy: float | None = None
    running_time: float = 0.0

    @property
    def primary_losses(self) -> list[float]:
        return [e.primary_loss for e in self.epochs]

    @property
    def self_losses(self) -> list[float]:
        return [e.self_loss for e in self.epochs if e.self_loss is not None]


class TraceRow(BaseModel):
    """One step of an unlearning trace. Metrics that do not apply are None."""

    method: str
    step: int = Field(ge=0)
    test_acc: float | None = None
    erased_acc: float
    verifiability: float | None = None
    unambiguity: float | None = None
    backdoor_asr: float | None = None


Phase: TypeAlias = Literal["pre_unlearn", "post_unlearn"]


# row order of metric tables; "sms_retained" is the control seed of a split_seeds run
METHOD_ORDER = ("sms", "sms_retained", "mib", "nonverif")


class MetricRow(BaseModel):
    phase: Phase
    method: str
    verifiability: float | None = None
    unambiguity: float | None = None
    mia: float | None = None
    accuracy: float | None = None


class GradCheckReport(BaseModel):
    """Result of comparing analytic gradients with central differences."""

    max_rel_error: float
    worst_param: str
    n_checked: int
    tolerance: float
    passed: bool


class StageStatus(StrEnum):
    STARTED = "started"
    FINISHED = "finished"
    FAILED = "failed"


class StageRecord(BaseModel):
    name: str
    seconds: float = Field(ge=0.0)
    artifacts: list[str] = Field(default_factory=list)


class RunManifest(BaseModel):
    """
    Summary of one `run`.

    Attributes:
        run_id: short id derived from the config hash.
        config_hash: sha256 of the effective config.
        unlearn_method: retrain, sisa or approx.
        artifacts: path (relative to the run dir) -> sha256 hex.
        metrics: pre/post unlearning metric rows.
        runtime: method -> running time seconds (batch-time metric).
        stages: completed stages in order.
        wall_clock: total seconds.
    """

    run_id: str
    config_hash: str
    unlearn_method: str = ""
    artifacts: dict[str, str] = Field(default_factory=dict)
    metrics: list[MetricRow] = Field(default_factory=list)
    runtime: dict[str, float] = Field(default_factory=dict)
    stages: list[StageRecord] = Field(default_factory=list)
    wall_clock: float = 0.0


class RunEvent(BaseModel):
    """
    Progress event published by a running experiment.

    Note:
        When serialized to JSON, `timestamp` is formatted as 'YYYY-MM-DD HH:MM:SS'.
    """

    run_id: str
    stage: str
    status: StageStatus
    timestamp: datetime = Field(default_factory=datetime.now)
    sequence_no: int = 0
    metrics: dict[str, float] = Field(default_factory=dict)
    detail: str | None = None

    @field_serializer("timestamp")
    def serialize_timestamp(self, dt: datetime, _info):
        return dt.strftime("%Y-%m-%d %H:%M:%S")


SupportedRecord: TypeAlias = RunManifest | RunEvent | SeedRecord | TrainReport
ExpectedRecordType: TypeAlias = Literal["manifest", "event", "seed", "report"]

_adapters: dict[str, TypeAdapter] = {
    "manifest": TypeAdapter(RunManifest),
    "event": TypeAdapter(RunEvent),
    "seed": TypeAdapter(SeedRecord),
    "report": TypeAdapter(TrainReport),
}


def parse_record_json(json_str: str, expected_type: ExpectedRecordType) -> SupportedRecord:
    """Parse a JSON string into the record type named by expected_type."""
    adapter = _adapters.get(expected_type)
    if adapter is None:
        raise ValueError(f"Unexpected expected_type: {expected_type}")
    return adapter.validate_json(json_str)
