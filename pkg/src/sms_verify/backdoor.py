# src/sms_verify/backdoor.py
"""
MIB baseline: verification through backdoored copies of a user's samples.

Unlike seeding, the copies carry a flipped label and are appended, so the
training set grows.
"""
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .datasets import Dataset, UserPartition
from .errors import InputError, ParameterError
from .seeding import Seed, SeedMask, embed_pixels, n_seeded
from .verifier import Classifying

logger = logging.getLogger(__name__)


class BackdoorSpec(BaseModel):
    """
    Attributes:
        trigger: trigger pattern (same generator as seeds).
        ser: trigger blend strength on its support.
        target_label: label t given to every backdoored copy.
        rate: backdoored copies per user sample (shares the SSR knob).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    trigger: Seed
    ser: float = Field(default=0.6, ge=0.0, le=1.0)
    target_label: int = Field(default=0, ge=0)
    rate: float = Field(default=0.006, ge=0.0, le=1.0)

    @property
    def mask(self) -> SeedMask:
        return SeedMask.on_support(self.trigger, self.ser)

    def apply(self, images: np.ndarray) -> np.ndarray:
        return embed_pixels(images, self.trigger.pattern, self.mask.v)


class BackdoorView(BaseModel):
    """
    Attributes:
        dataset: original rows followed by the backdoored copies.
        backdoor_indices: rows of the copies (D_b).
        source_indices: the user rows each copy was made from.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dataset: Dataset
    backdoor_indices: list[int]
    source_indices: list[int]


def mib_prepare(train_ds: Dataset, part: UserPartition, spec: BackdoorSpec, rng_seed: int) -> BackdoorView:
    """Append triggered, relabelled copies of ceil(rate * |part|) of the user's samples."""
    if spec.rate <= 0.0:
        raise ParameterError("backdoor rate must be > 0")
    if spec.target_label >= train_ds.class_count:
        raise ParameterError(
            f"target label {spec.target_label} outside [0, {train_ds.class_count})"
        )
    count = n_seeded(spec.rate, len(part))
    rng = np.random.default_rng(rng_seed)
    sources = sorted(int(i) for i in rng.choice(part.indices, size=count, replace=False))
    copies = Dataset.from_arrays(
        spec.apply(train_ds.images[sources]),
        np.full(count, spec.target_label),
        train_ds.class_count,
        train_ds.side,
    )
    n = len(train_ds)
    logger.debug(f"user {part.user_id}: appended {count} backdoored copies with label {spec.target_label}")
    return BackdoorView(
        dataset=train_ds.concat(copies),
        backdoor_indices=list(range(n, n + count)),
        source_indices=sources,
    )


def triggered_inputs(ds: Dataset, spec: BackdoorSpec) -> np.ndarray:
    """Trigger applied to every row whose true label is not already the target."""
    return spec.apply(ds.images[ds.labels != spec.target_label])


def backdoor_asr(model: Classifying, inputs: np.ndarray, target_label: int) -> float:
    """Fraction of triggered inputs classified as target_label."""
    if len(inputs) == 0:
        raise InputError("backdoor_asr needs at least one triggered input")
    return float(np.mean(model.predict(inputs) == target_label))
