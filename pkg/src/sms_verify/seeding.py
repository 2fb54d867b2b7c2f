# src/sms_verify/seeding.py
"""
User-side data seeding.

A seed is a sparse pattern in pixel space. It is blended into genuine samples
with x_s = (1 - v) * x + v * s (element-wise) and labels are left untouched.
"""
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .datasets import Dataset, UserPartition, render_glyph
from .errors import DimensionError, ParameterError
from .schemas import Placement, SeedRecord

logger = logging.getLogger(__name__)

GLYPH_INTENSITY = 0.75
TILE_INTENSITY = 0.3
NOISE_LOW, NOISE_HIGH = 1e-3, 0.25


class Seed(BaseModel):
    """
    User-secret pattern.

    Attributes:
        record: generation parameters (what gets persisted).
        pattern: float64 [d] in [0, 1], exactly record.n_active nonzero entries.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    record: SeedRecord
    pattern: np.ndarray

    @model_validator(mode="after")
    def _check_pattern(self):
        p = self.pattern
        if p.shape != (self.record.side * self.record.side,):
            raise ValueError(f"pattern shape {p.shape} does not match side {self.record.side}")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("pattern values must lie in [0, 1]")
        if np.count_nonzero(p) != self.record.n_active:
            raise ValueError(f"pattern must have exactly {self.record.n_active} nonzero entries")
        p.setflags(write=False)
        return self

    @property
    def seed_id(self) -> str:
        return self.record.seed_id

    @property
    def user_id(self) -> int:
        return self.record.user_id

    @property
    def n_active(self) -> int:
        return self.record.n_active

    @property
    def support(self) -> np.ndarray:
        return self.pattern > 0.0


class SeedMask(BaseModel):
    """Blend weights v, one per pixel, each in [0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    v: np.ndarray

    @model_validator(mode="after")
    def _check_range(self):
        if self.v.ndim != 1 or self.v.min() < 0.0 or self.v.max() > 1.0:
            raise ValueError("mask must be a 1-d array with values in [0, 1]")
        self.v.setflags(write=False)
        return self

    @classmethod
    def on_support(cls, seed: Seed, ser: float) -> "SeedMask":
        """Scalar SER on the seed's support, 0 elsewhere."""
        return cls(v=np.where(seed.support, float(ser), 0.0))

    @classmethod
    def uniform(cls, dim: int, ser: float) -> "SeedMask":
        """Scalar SER on every pixel."""
        return cls(v=np.full(dim, float(ser)))


class SeededSample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    original_index: int
    pixels: np.ndarray
    seed_id: str


class SeededView(BaseModel):
    """
    A dataset in which some rows of one user's partition carry a seed.

    Attributes:
        dataset: full dataset with the seeded rows replaced.
        user_id: owner of the seeds.
        seeded_indices: rows that were replaced, ascending.
        seeds: the seed used for each seeded row (same order).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dataset: Dataset
    user_id: int
    seeded_indices: list[int] = Field(default_factory=list)
    seeds: list[Seed] = Field(default_factory=list)


def generate_seed(
    user_id: int,
    n_active: int,
    side: int,
    rng_seed: int,
    placement: Placement = "bottom_right",
    digit: int | None = None,
) -> Seed:
    """
    Draw the seed of one user.

    A digit glyph (user_id mod 10 unless `digit` is given) is drawn on a dim
    tile in the chosen corner, noise is added everywhere, and only the
    n_active largest entries are kept. Tile entries always outrank the noise,
    so the support stays in the corner whenever n_active fits the tile.
    """
    dim = side * side
    if not 1 <= n_active <= dim:
        raise ParameterError(f"security parameter N must lie in [1, {dim}], got {n_active}")

    rng = np.random.default_rng([rng_seed, user_id])
    box = max(side // 3, 2)
    canvas = np.zeros((side, side))
    rows = slice(side - box, side) if placement.startswith("bottom") else slice(0, box)
    cols = slice(side - box, side) if placement.endswith("right") else slice(0, box)
    glyph = render_glyph(user_id % 10 if digit is None else digit, box)
    canvas[rows, cols] = TILE_INTENSITY + (GLYPH_INTENSITY - TILE_INTENSITY) * glyph
    flat = (canvas + rng.uniform(NOISE_LOW, NOISE_HIGH, size=canvas.shape)).reshape(-1)

    keep = np.argsort(-flat, kind="stable")[:n_active]
    pattern = np.zeros(dim)
    pattern[keep] = np.minimum(flat[keep], 1.0)

    record = SeedRecord(
        user_id=user_id,
        seed_id=f"u{user_id}-r{rng_seed}" + ("" if digit is None else f"-d{digit}"),
        n_active=n_active,
        side=side,
        rng_seed=rng_seed,
        placement=placement,
        digit=digit,
    )
    return Seed(record=record, pattern=pattern)


def seed_from_record(record: SeedRecord) -> Seed:
    """Re-derive a seed from its persisted record."""
    return generate_seed(
        record.user_id, record.n_active, record.side, record.rng_seed, record.placement, record.digit
    )


def save_seed_record(seed: Seed, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(seed.record.model_dump_json(indent=2))
    return path


def embed_pixels(x: np.ndarray, pattern: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(1 - v) * x + v * pattern, broadcast over leading batch dims, clamped to [0, 1]."""
    if x.shape[-1] != pattern.shape[-1] or v.shape[-1] != pattern.shape[-1]:
        raise DimensionError(
            f"embed: sample width {x.shape[-1]}, seed width {pattern.shape[-1]}, mask width {v.shape[-1]}"
        )
    return np.clip((1.0 - v) * x + v * pattern, 0.0, 1.0)


def embed_seed(x: np.ndarray, s: Seed, v: SeedMask, original_index: int = -1) -> SeededSample:
    """Blend seed s into sample x with mask v."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"embed_seed expects a single flattened sample, got shape {x.shape}")
    return SeededSample(
        original_index=original_index,
        pixels=embed_pixels(x, s.pattern, v.v),
        seed_id=s.seed_id,
    )


def n_seeded(ssr: float, size: int) -> int:
    """ceil(ssr * size), tolerant to float noise (0.006 * 500 is 3, not 4)."""
    return min(size, math.ceil(round(ssr * size, 9)))


def seed_dataset(
    part: UserPartition,
    ds: Dataset,
    s: Seed,
    ser: float,
    ssr: float,
    rng_seed: int,
    per_sample: bool = False,
) -> SeededView:
    """
    Replace ceil(ssr * |part|) random samples of a user's partition with seeded versions.

    Args:
        part: the user's partition of ds.
        s: the user's seed.
        ser: blend strength v, applied on the seed support.
        ssr: fraction of the partition to seed.
        per_sample: draw a fresh seed (same user, derived rng seed) for every sample.
    """
    if not 0.0 <= ssr <= 1.0:
        raise ParameterError(f"ssr must lie in [0, 1], got {ssr}")
    if not 0.0 <= ser <= 1.0:
        raise ParameterError(f"ser must lie in [0, 1], got {ser}")

    count = n_seeded(ssr, len(part))
    rng = np.random.default_rng(rng_seed)
    chosen = sorted(int(i) for i in rng.choice(part.indices, size=count, replace=False)) if count else []

    images = np.array(ds.images)
    seeds: list[Seed] = []
    for k, idx in enumerate(chosen):
        seed = (
            seed_from_record(s.record.model_copy(update={"rng_seed": s.record.rng_seed + 1 + k}))
            if per_sample
            else s
        )
        images[idx] = embed_pixels(images[idx], seed.pattern, SeedMask.on_support(seed, ser).v)
        seeds.append(seed)

    logger.debug(f"user {part.user_id}: seeded {count} of {len(part)} samples (ser={ser})")
    return SeededView(
        dataset=ds.with_images(images),
        user_id=part.user_id,
        seeded_indices=chosen,
        seeds=seeds,
    )
