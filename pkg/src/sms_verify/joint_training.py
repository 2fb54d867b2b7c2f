# src/sms_verify/joint_training.py
"""
Server-side model seeding joint training.

A shared encoder feeds a classifier head (primary task, cross-entropy) and a
decoder head (self-supervised reconstruction of the seeded input, MSE). Both
are optimized with plain SGD on alpha_p * L_primary + alpha_s * L_self.
"""
import csv
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .datasets import Dataset
from .errors import DimensionError, InputError, NumericalError, TrainingError
from .nn_core import Activation, Mlp, Param, cross_entropy_loss, load_mlp, mlp_to_bytes, mse_loss, sgd_step, softmax
from .schemas import EpochRecord, JointWeights, SgdConfig, TrainReport

logger = logging.getLogger(__name__)

WARM_BATCHES = 20

EpochCallback = Callable[[int, "PrimaryModel"], None]


class Architecture(BaseModel):
    """
    Hidden widths of the three sub-networks.

    Note:
        Defaults give encoder d->128->64, classifier 64->32->C, decoder 64->128->d.
    """

    encoder_widths: tuple[int, ...] = (128, 64)
    classifier_hidden: tuple[int, ...] = (32,)
    decoder_hidden: tuple[int, ...] = (128,)
    latent: int = Field(default=64, ge=1)

    @model_validator(mode="after")
    def _check_latent(self):
        if not self.encoder_widths or self.encoder_widths[-1] != self.latent:
            raise ValueError("last encoder width must equal the latent size")
        return self


class PrimaryModel:
    """Encoder + classifier head (the Non-Verification pipeline)."""

    def __init__(self, encoder: Mlp, classifier_head: Mlp):
        if encoder.out_dim != classifier_head.in_dim:
            raise DimensionError(
                f"encoder outputs {encoder.out_dim} but classifier expects {classifier_head.in_dim}"
            )
        self.encoder = encoder
        self.classifier_head = classifier_head

    @classmethod
    def initialize(cls, dim: int, classes: int, arch: Architecture, rng: np.random.Generator):
        encoder, classifier = _build_trunk(dim, classes, arch, rng)
        return cls(encoder, classifier)

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def class_count(self) -> int:
        return self.classifier_head.out_dim

    def heads(self) -> list[Mlp]:
        return [self.classifier_head]

    def networks(self) -> dict[str, Mlp]:
        return {"encoder": self.encoder, "classifier": self.classifier_head}

    def parameters(self) -> list[Param]:
        return [p for net in self.networks().values() for p in net.parameters()]

    def predict_logits(self, batch: np.ndarray) -> np.ndarray:
        return self.classifier_head.forward(self.encoder.forward(batch))

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return self.predict_logits(batch).argmax(axis=1)

    def clone(self):
        return type(self)(*(net.clone() for net in self.networks().values()))

    def checkpoint_bytes(self) -> dict[str, bytes]:
        return {name: mlp_to_bytes(net) for name, net in self.networks().items()}

    def digest(self) -> str:
        """sha256 over all checkpoints; equal digests mean bit-identical parameters."""
        h = hashlib.sha256()
        for name, blob in self.checkpoint_bytes().items():
            h.update(name.encode())
            h.update(blob)
        return h.hexdigest()


class SeededModel(PrimaryModel):
    """Encoder + classifier head + sigmoid decoder head (M_S)."""

    def __init__(self, encoder: Mlp, classifier_head: Mlp, decoder_head: Mlp):
        super().__init__(encoder, classifier_head)
        if decoder_head.in_dim != encoder.out_dim:
            raise DimensionError(
                f"encoder outputs {encoder.out_dim} but decoder expects {decoder_head.in_dim}"
            )
        if decoder_head.out_dim != encoder.in_dim:
            raise DimensionError(
                f"decoder outputs {decoder_head.out_dim}, input width is {encoder.in_dim}"
            )
        if decoder_head.layers[-1].activation is not Activation.SIGMOID:
            raise DimensionError("decoder head must end in a sigmoid layer")
        self.decoder_head = decoder_head

    @classmethod
    def initialize(cls, dim: int, classes: int, arch: Architecture, rng: np.random.Generator):
        encoder, classifier = _build_trunk(dim, classes, arch, rng)
        decoder = Mlp.build(
            [arch.latent, *arch.decoder_hidden, dim],
            [Activation.RELU] * len(arch.decoder_hidden) + [Activation.SIGMOID],
            rng,
            name="decoder",
        )
        return cls(encoder, classifier, decoder)

    def heads(self) -> list[Mlp]:
        return [self.classifier_head, self.decoder_head]

    def networks(self) -> dict[str, Mlp]:
        return {**super().networks(), "decoder": self.decoder_head}

    def reconstruct(self, batch: np.ndarray) -> np.ndarray:
        return self.decoder_head.forward(self.encoder.forward(batch))

    def reconstructions(self, batch: np.ndarray) -> list[np.ndarray]:
        """Reconstructions from every member model (one here)."""
        return [self.reconstruct(batch)]


def _build_trunk(dim: int, classes: int, arch: Architecture, rng: np.random.Generator):
    encoder = Mlp.build(
        [dim, *arch.encoder_widths],
        [Activation.RELU] * len(arch.encoder_widths),
        rng,
        name="encoder",
    )
    classifier = Mlp.build(
        [arch.latent, *arch.classifier_hidden, classes],
        [Activation.RELU] * len(arch.classifier_hidden) + [Activation.IDENTITY],
        rng,
        name="classifier",
    )
    return encoder, classifier


def model_forward(m: SeededModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One shared encoder pass, both heads evaluated."""
    if batch.ndim != 2 or batch.shape[1] != m.input_dim:
        raise DimensionError(f"model_forward: expected width {m.input_dim}, got shape {batch.shape}")
    latent = m.encoder.forward(batch)
    return m.classifier_head.forward(latent), m.decoder_head.forward(latent)


def joint_loss_with_grads(
    logits: np.ndarray,
    labels: np.ndarray,
    recon: np.ndarray | None,
    inputs: np.ndarray | None,
    w: JointWeights,
) -> tuple[float, float, float | None, np.ndarray, np.ndarray | None]:
    """total, L_primary, L_self, d total/d logits, d total/d recon."""
    lp, g_logits = cross_entropy_loss(logits, labels)
    if recon is None:
        return w.alpha_p * lp, lp, None, w.alpha_p * g_logits, None
    ls, g_recon = mse_loss(recon, inputs)
    return w.alpha_p * lp + w.alpha_s * ls, lp, ls, w.alpha_p * g_logits, w.alpha_s * g_recon


def joint_loss(logits, labels, recon, inputs, w: JointWeights) -> tuple[float, float, float]:
    """alpha_p * cross_entropy + alpha_s * mse, with both components."""
    total, lp, ls, _, _ = joint_loss_with_grads(logits, labels, recon, inputs, w)
    return total, lp, ls


def backward_pass(model: PrimaryModel, batch: np.ndarray, labels: np.ndarray, w: JointWeights):
    """Forward, loss and backward on one batch; grads are left on the params."""
    latent = model.encoder.forward(batch)
    logits = model.classifier_head.forward(latent)
    if isinstance(model, SeededModel):
        recon = model.decoder_head.forward(latent)
        total, lp, ls, g_logits, g_recon = joint_loss_with_grads(logits, labels, recon, batch, w)
        latent_grad = model.classifier_head.backward(g_logits) + model.decoder_head.backward(g_recon)
    else:
        total, lp, ls, g_logits, _ = joint_loss_with_grads(logits, labels, None, None, w)
        latent_grad = model.classifier_head.backward(g_logits)
    model.encoder.backward(latent_grad)
    return total, lp, ls


def train_step(model: PrimaryModel, batch, labels, w: JointWeights, learning_rate: float):
    """One SGD step; negative learning_rate ascends."""
    total, lp, ls = backward_pass(model, batch, labels, w)
    sgd_step(model.parameters(), learning_rate)
    return total, lp, ls


def accuracy(model: PrimaryModel, ds: Dataset) -> float:
    if len(ds) == 0:
        return 0.0
    return float(np.mean(model.predict(ds.images) == ds.labels))


def _fit(
    model: PrimaryModel,
    train_ds: Dataset,
    cfg: SgdConfig,
    w: JointWeights,
    rng: np.random.Generator,
    test_ds: Dataset | None,
    on_epoch: EpochCallback | None,
) -> TrainReport:
    n = len(train_ds)
    report = TrainReport()
    durations: list[float] = []
    has_decoder = isinstance(model, SeededModel)

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        perm = rng.permutation(n)
        sum_p = sum_s = 0.0
        try:
            for lo in range(0, n, cfg.batch_size):
                idx = perm[lo : lo + cfg.batch_size]
                t0 = time.perf_counter()
                _, lp, ls = train_step(
                    model, train_ds.images[idx], train_ds.labels[idx], w, cfg.learning_rate
                )
                durations.append(time.perf_counter() - t0)
                sum_p += lp * len(idx)
                if ls is not None:
                    sum_s += ls * len(idx)
        except NumericalError as e:
            logger.error(f"training diverged in epoch {epoch}: {e}")
            raise TrainingError(str(e), epoch=epoch) from e

        record = EpochRecord(
            epoch=epoch,
            primary_loss=sum_p / n,
            self_loss=sum_s / n if has_decoder else None,
            seconds=time.perf_counter() - started,
        )
        if not np.isfinite(record.primary_loss) or (has_decoder and not np.isfinite(record.self_loss)):
            raise TrainingError("loss is not finite", epoch=epoch)
        report.epochs.append(record)
        logger.debug(
            f"epoch {epoch}/{cfg.epochs}: primary {record.primary_loss:.4f}"
            + (f", self {record.self_loss:.5f}" if has_decoder else "")
        )
        if on_epoch is not None:
            on_epoch(epoch, model)

    warm = durations[1 : 1 + WARM_BATCHES] or durations
    report.running_time = float(np.mean(warm)) * len(durations)
    if test_ds is not None:
        report.test_accuracy = accuracy(model, test_ds)
    logger.info(
        f"trained {type(model).__name__} on {n} samples for {cfg.epochs} epochs"
        + (f", test accuracy {report.test_accuracy:.4f}" if report.test_accuracy is not None else "")
    )
    return report


def _check_trainable(train_ds: Dataset):
    if len(train_ds) == 0:
        raise InputError("training set is empty")


def train_joint(
    train_ds: Dataset,
    cfg: SgdConfig,
    w: JointWeights,
    test_ds: Dataset | None = None,
    arch: Architecture | None = None,
    on_epoch: EpochCallback | None = None,
) -> tuple[SeededModel, TrainReport]:
    """
    Train M_S on a (seeded) dataset for cfg.epochs epochs of shuffled minibatch SGD.

    Args:
        train_ds: training data; the reconstruction target is each input itself.
        cfg: SGD settings; cfg.rng_seed drives both init and shuffling.
        w: loss weights.
        test_ds: optional held-out split for the report's test accuracy.
        on_epoch: called with (epoch, model) after every epoch.
    """
    _check_trainable(train_ds)
    rng = np.random.default_rng(cfg.rng_seed)
    model = SeededModel.initialize(train_ds.dim, train_ds.class_count, arch or Architecture(), rng)
    report = _fit(model, train_ds, cfg, w, rng, test_ds, on_epoch)
    return model, report


def train_primary_only(
    train_ds: Dataset,
    cfg: SgdConfig,
    test_ds: Dataset | None = None,
    arch: Architecture | None = None,
    on_epoch: EpochCallback | None = None,
) -> tuple[PrimaryModel, TrainReport]:
    """Non-Verification baseline: encoder + classifier, cross-entropy only."""
    _check_trainable(train_ds)
    rng = np.random.default_rng(cfg.rng_seed)
    model = PrimaryModel.initialize(train_ds.dim, train_ds.class_count, arch or Architecture(), rng)
    report = _fit(model, train_ds, cfg, JointWeights(alpha_p=1.0, alpha_s=0.0), rng, test_ds, on_epoch)
    return model, report


def max_softmax(model: PrimaryModel, batch: np.ndarray) -> np.ndarray:
    return softmax(model.predict_logits(batch)).max(axis=1)


def loss_smoothness(series: Sequence[float], first_epoch: int = 10, last_epoch: int = 50) -> float:
    """Sample std of epoch-to-epoch deltas over the 1-based epoch window."""
    window = np.asarray(series[first_epoch - 1 : last_epoch], dtype=np.float64)
    if window.size < 3:
        raise InputError(f"need at least 3 epochs in [{first_epoch}, {last_epoch}], got {window.size}")
    return float(np.std(np.diff(window), ddof=1))


# --- persistence ---


def save_model(model: PrimaryModel, directory: str | Path) -> dict[str, str]:
    """
    Write one checkpoint per sub-network plus a manifest.json.

    Returns:
        file name -> sha256 of every file written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, blob in model.checkpoint_bytes().items():
        (directory / f"{name}.smsm").write_bytes(blob)
        hashes[f"{name}.smsm"] = hashlib.sha256(blob).hexdigest()
    manifest = json.dumps({"kind": type(model).__name__, "files": hashes}, indent=2, sort_keys=True)
    (directory / "manifest.json").write_text(manifest)
    hashes["manifest.json"] = hashlib.sha256(manifest.encode()).hexdigest()
    return hashes


def load_model(directory: str | Path) -> PrimaryModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    nets = {name: load_mlp(directory / f"{name}.smsm", name=name) for name in ("encoder", "classifier")}
    if manifest["kind"] == SeededModel.__name__:
        return SeededModel(nets["encoder"], nets["classifier"], load_mlp(directory / "decoder.smsm", name="decoder"))
    return PrimaryModel(nets["encoder"], nets["classifier"])


def write_report_csv(report: TrainReport, path: str | Path) -> Path:
    """epoch, primary_loss, self_loss, seconds."""
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "primary_loss", "self_loss", "seconds"])
        for e in report.epochs:
            writer.writerow(
                [e.epoch, repr(e.primary_loss), "" if e.self_loss is None else repr(e.self_loss), f"{e.seconds:.6f}"]
            )
    return path
