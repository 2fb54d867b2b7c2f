# src/sms_verify/datasets.py
"""
Desk-scale grayscale image datasets.

Images are flattened to rows of d = side * side pixels in [0, 1].
"""
import logging
import struct
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import FormatError, InputError, ParameterError

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
IDX_MAX_CLASSES = 10

CACHE_MAGIC = b"SMSD"
CACHE_VERSION = 1

SYNTH_NOISE_AMPLITUDE = 0.15
SYNTH_STROKE_DROPOUT = 0.25

# 5x7 digit glyphs, '#' = ink
DIGIT_GLYPHS: tuple[tuple[str, ...], ...] = (
    (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
)


class Dataset(BaseModel):
    """
    Immutable labelled image set.

    Attributes:
        images: float64 array [N, side*side], values in [0, 1].
        labels: int64 array [N], values in [0, class_count).
        class_count: number of classes C.
        side: image side length.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    images: np.ndarray
    labels: np.ndarray
    class_count: int = Field(ge=1)
    side: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_invariants(self):
        images, labels = self.images, self.labels
        if images.ndim != 2 or images.shape[1] != self.side * self.side:
            raise ValueError(f"images must be [N, {self.side * self.side}], got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise ValueError(f"{images.shape[0]} images but labels have shape {labels.shape}")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise ValueError("pixels must lie in [0, 1]")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        images.setflags(write=False)
        labels.setflags(write=False)
        return self

    @classmethod
    def from_arrays(cls, images, labels, class_count: int, side: int) -> "Dataset":
        return cls(
            images=np.array(images, dtype=np.float64),
            labels=np.array(labels, dtype=np.int64),
            class_count=class_count,
            side=side,
        )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def dim(self) -> int:
        return self.side * self.side

    def subset(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset.from_arrays(self.images[idx], self.labels[idx], self.class_count, self.side)

    def without(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        """Copy with the given rows removed."""
        keep = np.ones(len(self), dtype=bool)
        keep[np.asarray(indices, dtype=np.int64)] = False
        return self.subset(np.flatnonzero(keep))

    def with_images(self, images: np.ndarray) -> "Dataset":
        """Same labels, replaced pixels."""
        return Dataset.from_arrays(images, self.labels, self.class_count, self.side)

    def concat(self, other: "Dataset") -> "Dataset":
        if (other.class_count, other.side) != (self.class_count, self.side):
            raise InputError("cannot concatenate datasets of different geometry")
        return Dataset.from_arrays(
            np.vstack([self.images, other.images]),
            np.concatenate([self.labels, other.labels]),
            self.class_count,
            self.side,
        )


class UserPartition(BaseModel):
    """Indices of one user's samples in a parent Dataset."""

    user_id: int = Field(ge=0)
    indices: list[int]

    @model_validator(mode="after")
    def _check_unique(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"user {self.user_id}: duplicate indices in partition")
        return self

    def __len__(self) -> int:
        return len(self.indices)


# --- IDX ---


def _read_idx_header(data: bytes, expected_magic: int, n_dims: int, what: str) -> tuple[int, ...]:
    header_size = 4 + 4 * n_dims
    if len(data) < header_size:
        raise FormatError(f"{what}: truncated header", offset=len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expected_magic:
        raise FormatError(
            f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0
        )
    return struct.unpack_from(f">{n_dims}I", data, 4)


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """
    Load an MNIST-style IDX image/label file pair.

    Note:
        Pixels are scaled from u8 to [0, 1]; images must be square.
    """
    img_bytes = Path(images_path).read_bytes()
    lbl_bytes = Path(labels_path).read_bytes()

    count, rows, cols = _read_idx_header(img_bytes, IDX_IMAGE_MAGIC, 3, "image file")
    (n_labels,) = _read_idx_header(lbl_bytes, IDX_LABEL_MAGIC, 1, "label file")
    if count != n_labels:
        raise FormatError(f"image count {count} != label count {n_labels}", offset=4)
    if rows != cols:
        raise FormatError(f"only square images are supported, got {rows}x{cols}", offset=8)

    img_offset, n_pixels = 16, count * rows * cols
    if len(img_bytes) < img_offset + n_pixels:
        raise FormatError("image file: truncated pixel data", offset=len(img_bytes))
    if len(lbl_bytes) < 8 + count:
        raise FormatError("label file: truncated label data", offset=len(lbl_bytes))

    pixels = np.frombuffer(img_bytes, dtype=np.uint8, count=n_pixels, offset=img_offset)
    labels = np.frombuffer(lbl_bytes, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    bad = np.flatnonzero(labels >= IDX_MAX_CLASSES)
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} out of range", offset=8 + int(bad[0]))

    logger.info(f"loaded {count} IDX images of {rows}x{cols} from {images_path}")
    return Dataset.from_arrays(
        pixels.reshape(count, rows * cols) / 255.0, labels, IDX_MAX_CLASSES, rows
    )


def write_idx(images: np.ndarray, labels: np.ndarray, side: int, images_path, labels_path):
    """Write u8 images [N, side*side] and labels [N] as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n = images.shape[0]
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGE_MAGIC, n, side, side) + images.tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABEL_MAGIC, n) + labels.tobytes())


# --- synthetic digits ---


def render_glyph(digit: int, box: int) -> np.ndarray:
    """Nearest-neighbour render of a 5x7 digit glyph into a box x box array of {0, 1}."""
    glyph = np.array(
        [[ch == "#" for ch in row] for row in DIGIT_GLYPHS[digit % 10]], dtype=np.float64
    )
    rows = np.arange(box) * glyph.shape[0] // box
    cols = np.arange(box) * glyph.shape[1] // box
    return glyph[np.ix_(rows, cols)]


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    h, w = img.shape
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def glyph_template(digit: int, side: int) -> np.ndarray:
    """
    Centred side x side template of one digit.

    The 5x7 glyph is scaled by the largest integer factor that keeps a border
    of side // 6 pixels free; like scanned digits, the corners stay blank
    after the +-1 pixel translation.
    """
    glyph = np.array([[ch == "#" for ch in row] for row in DIGIT_GLYPHS[digit % 10]], dtype=np.float64)
    scale = max(1, (side - 2 * (side // 6) - 2) // glyph.shape[0])
    glyph = np.kron(glyph, np.ones((scale, scale)))
    h, w = glyph.shape
    top, left = (side - h) // 2, (side - w) // 2
    template = np.zeros((side, side))
    template[top : top + h, left : left + w] = glyph
    return template


def synth_digits(n_per_class: int, side: int, class_count: int, rng_seed: int) -> Dataset:
    """
    Render C digit templates with +-1 pixel translation, stroke dropout and uniform noise.

    Each ink pixel is dropped with probability SYNTH_STROKE_DROPOUT, so classes
    overlap a little and a trained model is more confident on its members than
    on unseen samples. Samples are ordered by class; the result is
    bit-identical for a given seed.
    """
    if side < 8:
        raise ParameterError(f"side must be >= 8, got {side}")
    if not 1 <= class_count <= 10:
        raise ParameterError(f"class_count must lie in [1, 10], got {class_count}")
    if n_per_class < 1:
        raise ParameterError(f"n_per_class must be >= 1, got {n_per_class}")

    rng = np.random.default_rng(rng_seed)
    images = np.empty((n_per_class * class_count, side * side))
    labels = np.repeat(np.arange(class_count), n_per_class)
    for c in range(class_count):
        template = glyph_template(c, side)
        for i in range(n_per_class):
            dy, dx = rng.integers(-1, 2, size=2)
            strokes = template * (rng.random(template.shape) >= SYNTH_STROKE_DROPOUT)
            img = _shift(strokes, int(dy), int(dx))
            img += rng.uniform(-SYNTH_NOISE_AMPLITUDE, SYNTH_NOISE_AMPLITUDE, size=img.shape)
            images[c * n_per_class + i] = np.clip(img, 0.0, 1.0).reshape(-1)
    return Dataset.from_arrays(images, labels, class_count, side)


# --- partitioning ---


def partition_users(ds: Dataset, n_users: int, rng_seed: int) -> list[UserPartition]:
    """Split a random permutation of the indices into n_users near-equal disjoint parts."""
    if not 1 <= n_users <= len(ds):
        raise ParameterError(f"n_users must lie in [1, {len(ds)}], got {n_users}")
    perm = np.random.default_rng(rng_seed).permutation(len(ds))
    return [
        UserPartition(user_id=u, indices=sorted(int(i) for i in part))
        for u, part in enumerate(np.array_split(perm, n_users))
    ]


def split(ds: Dataset, train_frac: float, rng_seed: int) -> tuple[Dataset, Dataset]:
    """Reproducible disjoint train/test split."""
    if not 0.0 < train_frac < 1.0:
        raise ParameterError(f"train_frac must lie in (0, 1), got {train_frac}")
    perm = np.random.default_rng(rng_seed).permutation(len(ds))
    n_train = int(round(train_frac * len(ds)))
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


# --- binary cache ---

_CACHE_HEADER = struct.Struct("<4sIIII")


def dataset_to_bytes(ds: Dataset) -> bytes:
    return b"".join(
        [
            _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, len(ds), ds.side, ds.class_count),
            ds.labels.astype("<u2").tobytes(),
            ds.images.astype("<f8").tobytes(order="C"),
        ]
    )


def dataset_from_bytes(data: bytes) -> Dataset:
    if len(data) < _CACHE_HEADER.size:
        raise FormatError("dataset cache shorter than its header", offset=len(data))
    magic, version, n, side, classes = _CACHE_HEADER.unpack_from(data, 0)
    if magic != CACHE_MAGIC:
        raise FormatError(f"bad dataset cache magic {magic!r}", offset=0)
    if version != CACHE_VERSION:
        raise FormatError(f"unsupported dataset cache version {version}", offset=4)
    offset = _CACHE_HEADER.size
    expected = offset + 2 * n + 8 * n * side * side
    if len(data) != expected:
        raise FormatError(f"dataset cache should be {expected} bytes, got {len(data)}", offset=offset)
    labels = np.frombuffer(data, dtype="<u2", count=n, offset=offset).astype(np.int64)
    images = np.frombuffer(data, dtype="<f8", count=n * side * side, offset=offset + 2 * n)
    return Dataset.from_arrays(images.reshape(n, side * side), labels, classes, side)


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(dataset_to_bytes(ds))
    return path


def load_dataset(path: str | Path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())
