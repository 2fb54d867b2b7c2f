# src/sms_verify/verifier.py
"""
User-side seed verification.

The user trains a small binary classifier V on (clean, 0) / (seeded, 1) pairs
of their own data. V never sees the server model while training; at query time
it is applied to the model's reconstructions of the seeded samples.
"""
import logging
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.metrics import balanced_accuracy_score

from .errors import CalibrationError, DimensionError, InputError
from .nn_core import Activation, Mlp, cross_entropy_loss, sgd_step, softmax

logger = logging.getLogger(__name__)


class Reconstructing(Protocol):
    def reconstructions(self, batch: np.ndarray) -> list[np.ndarray]: ...


class Classifying(Protocol):
    def predict_logits(self, batch: np.ndarray) -> np.ndarray: ...

    def predict(self, batch: np.ndarray) -> np.ndarray: ...


class VerifierConfig(BaseModel):
    """
    Training settings of V.

    Attributes:
        hidden: hidden widths; with the 2-logit output this makes a 5-layer MLP.
        threshold: tau on P(seed).
        accuracy_floor: required accuracy on the held-out quarter.
        blur_positives: also train on Gaussian-blurred positives.
    """

    hidden: tuple[int, ...] = (256, 128, 64, 32)
    epochs: int = Field(default=50, ge=1)
    learning_rate: float = Field(default=0.01, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    accuracy_floor: float = Field(default=0.95, ge=0.0, le=1.0)
    holdout_fraction: float = Field(default=0.25, gt=0.0, lt=1.0)
    blur_positives: bool = False
    blur_sigma: float = Field(default=0.5, gt=0.0)
    rng_seed: int = Field(default=0, ge=0)


class VerificationDataset(BaseModel):
    """Balanced D_veri: label 0 = clean (or decoy-seeded), 1 = seeded with the user's seed."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray
    labels: np.ndarray

    @model_validator(mode="after")
    def _check_balanced(self):
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("inputs must be [2k, d] with one label per row")
        positives = int(self.labels.sum())
        if positives * 2 != self.labels.size:
            raise ValueError(f"unbalanced: {positives} positives of {self.labels.size} rows")
        return self

    def __len__(self) -> int:
        return self.labels.size


class VerifierModel:
    """
    V owned by one user.

    Attributes:
        net: d -> 2 logits.
        owner: user id.
        threshold: decide "seed present" iff P(seed) > threshold.
        holdout_accuracy: accuracy reached on the held-out quarter of D_veri.
    """

    def __init__(self, net: Mlp, owner: int, threshold: float = 0.5, holdout_accuracy: float | None = None):
        if not 0.0 < threshold < 1.0:
            raise InputError(f"threshold must lie in (0, 1), got {threshold}")
        if net.out_dim != 2:
            raise DimensionError(f"verifier net must output 2 logits, got {net.out_dim}")
        self.net = net
        self.owner = owner
        self.threshold = threshold
        self.holdout_accuracy = holdout_accuracy

    def prob_seed(self, batch: np.ndarray) -> np.ndarray:
        return softmax(self.net.forward(batch))[:, 1]

    def decide(self, batch: np.ndarray) -> np.ndarray:
        return (self.prob_seed(batch) > self.threshold).astype(np.int64)


class VerificationOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    verifiability: float = Field(ge=0.0, le=1.0)
    unambiguity: float = Field(ge=0.0, le=1.0)
    seeded_decisions: np.ndarray
    alt_decisions: np.ndarray


def build_verification_set(
    clean: np.ndarray,
    seeded: np.ndarray,
    decoys: np.ndarray | None = None,
) -> VerificationDataset:
    """
    Interleave (clean_i, 0), (seeded_i, 1) pairs.

    Args:
        clean: k original samples.
        seeded: the same k samples with the user's seed, aligned by row.
        decoys: optional k samples carrying other seeds; added as negatives and
            balanced by repeating each positive.
    """
    clean = np.asarray(clean, dtype=np.float64)
    seeded = np.asarray(seeded, dtype=np.float64)
    if clean.ndim != 2 or clean.shape[0] == 0:
        raise InputError("verification set needs at least one clean/seeded pair")
    if clean.shape != seeded.shape or (decoys is not None and decoys.shape != clean.shape):
        raise InputError(
            f"clean {clean.shape}, seeded {seeded.shape}"
            + (f", decoys {decoys.shape}" if decoys is not None else "")
            + " must align row by row"
        )
    if decoys is None:
        blocks, labels = [clean, seeded], [0, 1]
    else:
        blocks, labels = [clean, seeded, decoys, seeded], [0, 1, 0, 1]
    inputs = np.stack(blocks, axis=1).reshape(-1, clean.shape[1])
    return VerificationDataset(inputs=inputs, labels=np.tile(np.array(labels), clean.shape[0]))


def gaussian_blur(images: np.ndarray, side: int, sigma: float) -> np.ndarray:
    """Separable 3-tap Gaussian blur of flattened square images (edge padding)."""
    taps = np.exp(-np.array([1.0, 0.0, 1.0]) / (2.0 * sigma**2))
    taps /= taps.sum()
    imgs = images.reshape(-1, side, side)
    for axis in (1, 2):
        padded = np.pad(imgs, [(0, 0)] + [(1, 1) if a == axis else (0, 0) for a in (1, 2)], mode="edge")
        lo = [slice(None)] * 3
        mid = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis], mid[axis], hi[axis] = slice(0, side), slice(1, side + 1), slice(2, side + 2)
        imgs = taps[0] * padded[tuple(lo)] + taps[1] * padded[tuple(mid)] + taps[2] * padded[tuple(hi)]
    return imgs.reshape(images.shape)


def train_verifier(dv: VerificationDataset, cfg: VerifierConfig, owner: int = 0) -> VerifierModel:
    """
    Train V on D_veri and check it on a held-out quarter.

    Raises:
        CalibrationError: held-out accuracy below cfg.accuracy_floor.
    """
    n = len(dv)
    if n < 2:
        raise InputError(f"verification set needs at least 2 rows, got {n}")
    dim = dv.inputs.shape[1]
    rng = np.random.default_rng(cfg.rng_seed)
    perm = rng.permutation(n)
    n_hold = min(n - 1, max(1, int(round(cfg.holdout_fraction * n))))
    hold, train = perm[:n_hold], perm[n_hold:]
    x_train, y_train = dv.inputs[train], dv.labels[train]

    if cfg.blur_positives:
        side = int(round(np.sqrt(dim)))
        pos = x_train[y_train == 1]
        x_train = np.vstack([x_train, gaussian_blur(pos, side, cfg.blur_sigma)])
        y_train = np.concatenate([y_train, np.ones(len(pos), dtype=y_train.dtype)])

    net = Mlp.build(
        [dim, *cfg.hidden, 2],
        [Activation.RELU] * len(cfg.hidden) + [Activation.IDENTITY],
        rng,
        name="verifier",
    )
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y_train))
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            _, grad = cross_entropy_loss(net.forward(x_train[idx]), y_train[idx])
            net.backward(grad)
            sgd_step(net.parameters(), cfg.learning_rate)

    verifier = VerifierModel(net, owner=owner, threshold=cfg.threshold)
    acc = float(np.mean(verifier.decide(dv.inputs[hold]) == dv.labels[hold]))
    verifier.holdout_accuracy = acc
    logger.info(f"verifier of user {owner}: held-out accuracy {acc:.4f} on {n_hold} rows")
    if acc < cfg.accuracy_floor:
        raise CalibrationError(
            f"verifier of user {owner} reached {acc:.3f} < {cfg.accuracy_floor} held-out accuracy; "
            "seeded and clean samples are hard to tell apart, try a larger SER or N"
        )
    return verifier


def verify_batch(V: VerifierModel, model: Reconstructing, queries: np.ndarray) -> np.ndarray:
    """
    One verdict bit per query row.

    Note:
        With an ensemble, the seed counts as present if any member's
        reconstruction carries it.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    probs = np.max([V.prob_seed(recon) for recon in model.reconstructions(queries)], axis=0)
    return (probs > V.threshold).astype(np.int64)


def verify_one(V: VerifierModel, model: Reconstructing, x_s: np.ndarray) -> int:
    """1 iff V asserts the seed in the model's reconstruction of x_s."""
    return int(verify_batch(V, model, np.asarray(x_s).reshape(1, -1))[0])


def _require_queries(queries: np.ndarray, what: str):
    if len(queries) < 1:
        raise InputError(f"{what} needs at least one query")


def verifiability(V: VerifierModel, model: Reconstructing, seeded_queries: np.ndarray) -> float:
    """Fraction of seed-embedded queries on which V asserts the seed."""
    _require_queries(seeded_queries, "verifiability")
    return float(np.mean(verify_batch(V, model, seeded_queries)))


def unambiguity(V: VerifierModel, model: Reconstructing, alt_queries: np.ndarray) -> float:
    """Fraction of queries carrying other seeds on which V denies the seed."""
    _require_queries(alt_queries, "unambiguity")
    return float(np.mean(1 - verify_batch(V, model, alt_queries)))


def evaluate(
    V: VerifierModel, model: Reconstructing, seeded_queries: np.ndarray, alt_queries: np.ndarray
) -> VerificationOutcome:
    _require_queries(seeded_queries, "verifiability")
    _require_queries(alt_queries, "unambiguity")
    seeded_bits = verify_batch(V, model, seeded_queries)
    alt_bits = verify_batch(V, model, alt_queries)
    return VerificationOutcome(
        verifiability=float(np.mean(seeded_bits)),
        unambiguity=float(np.mean(1 - alt_bits)),
        seeded_decisions=seeded_bits,
        alt_decisions=alt_bits,
    )


def _best_threshold(conf_in: np.ndarray, conf_out: np.ndarray) -> float:
    candidates = np.unique(np.concatenate([conf_in, conf_out]))
    y_true = np.concatenate([np.ones(len(conf_in)), np.zeros(len(conf_out))])
    scores = np.concatenate([conf_in, conf_out])
    best_t, best_acc = float(candidates[0]), -1.0
    for t in candidates:
        acc = balanced_accuracy_score(y_true, (scores >= t).astype(int))
        if acc > best_acc:
            best_t, best_acc = float(t), acc
    return best_t


def mia_score(
    model: Classifying,
    members: np.ndarray,
    non_members: np.ndarray,
    rng_seed: int = 0,
    calibration_fraction: float = 0.5,
) -> float:
    """
    Confidence-threshold membership inference.

    Predict "member" iff the max softmax probability is >= t*, with t* tuned
    on a calibration part of both sets; returns balanced accuracy on the rest.
    """
    if len(members) < 2 or len(non_members) < 2:
        raise InputError("mia_score needs at least 2 members and 2 non-members")
    conf_in = softmax(model.predict_logits(members)).max(axis=1)
    conf_out = softmax(model.predict_logits(non_members)).max(axis=1)

    rng = np.random.default_rng(rng_seed)

    def halves(conf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        perm = rng.permutation(len(conf))
        cut = min(len(conf) - 1, max(1, int(round(calibration_fraction * len(conf)))))
        return conf[perm[:cut]], conf[perm[cut:]]

    cal_in, eval_in = halves(conf_in)
    cal_out, eval_out = halves(conf_out)
    t_star = _best_threshold(cal_in, cal_out)
    y_true = np.concatenate([np.ones(len(eval_in)), np.zeros(len(eval_out))])
    y_pred = (np.concatenate([eval_in, eval_out]) >= t_star).astype(int)
    score = float(balanced_accuracy_score(y_true, y_pred))
    logger.debug(f"MIA threshold {t_star:.4f}, balanced accuracy {score:.4f}")
    return score


