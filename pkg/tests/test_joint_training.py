import math

import numpy as np
import pytest

from sms_verify.datasets import split, synth_digits
from sms_verify.errors import DimensionError, InputError
from sms_verify.joint_training import (
    Architecture,
    PrimaryModel,
    SeededModel,
    accuracy,
    joint_loss,
    load_model,
    loss_smoothness,
    model_forward,
    save_model,
    train_joint,
    train_primary_only,
    train_step,
    write_report_csv,
)
from sms_verify.schemas import DEFAULT_SELF_WEIGHT, JointWeights, SgdConfig

SMALL = Architecture(encoder_widths=(16, 8), classifier_hidden=(8,), decoder_hidden=(16,), latent=8)


def small_model(dim: int = 64, classes: int = 3, seed: int = 0) -> SeededModel:
    """Freshly initialized seeded model with small widths."""
    return SeededModel.initialize(dim, classes, SMALL, np.random.default_rng(seed))


def zeroed(model: SeededModel) -> SeededModel:
    """Set every parameter of the model to zero in place."""
    for p in model.parameters():
        p.value[...] = 0.0
    return model


def quick_cfg(epochs: int = 2, seed: int = 3) -> SgdConfig:
    return SgdConfig(learning_rate=0.05, batch_size=8, epochs=epochs, rng_seed=seed)


# --- Model ---


def test_zero_model_reconstructs_half():
    model = zeroed(small_model())
    _, recon = model_forward(model, np.random.default_rng(1).uniform(size=(5, 64)))
    assert np.array_equal(recon, np.full((5, 64), 0.5))


def test_forward_shapes():
    logits, recon = model_forward(small_model(), np.zeros((7, 64)))
    assert logits.shape == (7, 3)
    assert recon.shape == (7, 64)


def test_forward_width_mismatch():
    with pytest.raises(DimensionError, match="width 64"):
        model_forward(small_model(), np.zeros((2, 63)))


def test_encoder_weight_feeds_both_heads():
    model = small_model(seed=4)
    batch = np.random.default_rng(5).uniform(size=(3, 64))
    logits, recon = model_forward(model, batch)
    model.encoder.layers[-1].bias.value += 0.5
    logits2, recon2 = model_forward(model, batch)
    assert not np.allclose(logits, logits2)
    assert not np.allclose(recon, recon2)


def test_architecture_latent_must_match_encoder():
    with pytest.raises(ValueError, match="latent"):
        Architecture(encoder_widths=(16, 8), latent=4)


def test_clone_and_digest():
    model = small_model()
    twin = model.clone()
    assert twin.digest() == model.digest()
    twin.decoder_head.layers[0].bias.value += 1.0
    assert twin.digest() != model.digest()


# --- Joint loss ---


def joint_inputs(seed: int = 0):
    """Random logits/labels/recon/inputs for the loss tests."""
    rng = np.random.default_rng(seed)
    return rng.normal(size=(4, 3)), rng.integers(0, 3, size=4), rng.uniform(size=(4, 6)), rng.uniform(size=(4, 6))


def test_joint_loss_without_self_term():
    total, lp, _ = joint_loss(*joint_inputs(), JointWeights(alpha_p=1.0, alpha_s=0.0))
    assert total == lp


def test_joint_loss_without_primary_term():
    total, _, ls = joint_loss(*joint_inputs(), JointWeights(alpha_p=0.0, alpha_s=1.0))
    assert total == ls


def test_joint_loss_is_weighted_sum():
    total, lp, ls = joint_loss(*joint_inputs(), JointWeights(alpha_p=2.0, alpha_s=0.5))
    assert total == pytest.approx(2.0 * lp + 0.5 * ls)


def test_joint_loss_additive_components():
    logits = np.array([[0.0, 0.0]])
    recon, inputs = np.array([[1.0, 1.0]]), np.array([[0.0, 0.0]])
    total, lp, ls = joint_loss(logits, np.array([0]), recon, inputs, JointWeights(alpha_p=1.0, alpha_s=1.0))
    assert lp == pytest.approx(math.log(2.0))
    assert ls == 1.0
    assert total == pytest.approx(lp + ls)


def test_joint_weights_cannot_both_be_zero():
    with pytest.raises(ValueError):
        JointWeights(alpha_p=0.0, alpha_s=0.0)


# --- Training ---


def test_train_step_lowers_loss_on_fixed_batch():
    model = small_model(seed=2)
    rng = np.random.default_rng(6)
    batch, labels = rng.uniform(size=(8, 64)), rng.integers(0, 3, size=8)
    first, _, _ = train_step(model, batch, labels, JointWeights(), 0.1)
    for _ in range(20):
        last, _, _ = train_step(model, batch, labels, JointWeights(), 0.1)
    assert last < first


def test_train_joint_report_and_determinism():
    ds = synth_digits(4, 8, 3, rng_seed=1)
    a, report_a = train_joint(ds, quick_cfg(), JointWeights(), arch=SMALL)
    b, report_b = train_joint(ds, quick_cfg(), JointWeights(), arch=SMALL)
    assert a.digest() == b.digest()
    assert [e.epoch for e in report_a.epochs] == [1, 2]
    assert len(report_a.self_losses) == 2
    assert report_a.primary_losses == report_b.primary_losses
    assert report_a.running_time > 0.0


def test_default_self_weight_fits_reconstructions_closer():
    ds = synth_digits(10, 8, 3, rng_seed=2)
    _, weighted = train_joint(ds, quick_cfg(8), JointWeights(), arch=SMALL)
    _, unit = train_joint(ds, quick_cfg(8), JointWeights(alpha_p=1.0, alpha_s=1.0), arch=SMALL)
    assert JointWeights().alpha_s == DEFAULT_SELF_WEIGHT
    assert weighted.self_losses[-1] < unit.self_losses[-1]
    assert weighted.self_losses[-1] < weighted.self_losses[0]


def test_train_joint_calls_epoch_callback():
    seen = []
    ds = synth_digits(2, 8, 2, rng_seed=1)
    train_joint(ds, quick_cfg(3), JointWeights(), arch=SMALL, on_epoch=lambda e, m: seen.append(e))
    assert seen == [1, 2, 3]


def test_train_joint_rejects_empty_set():
    ds = synth_digits(2, 8, 2, rng_seed=1).subset([])
    with pytest.raises(InputError, match="empty"):
        train_joint(ds, quick_cfg(), JointWeights(), arch=SMALL)


def test_epochs_must_be_positive():
    with pytest.raises(ValueError):
        SgdConfig(epochs=0)


def test_primary_only_has_no_self_series():
    ds = synth_digits(4, 8, 3, rng_seed=1)
    model, report = train_primary_only(ds, quick_cfg(), test_ds=ds, arch=SMALL)
    assert type(model) is PrimaryModel
    assert report.self_losses == []
    assert all(e.self_loss is None for e in report.epochs)
    assert report.test_accuracy == accuracy(model, ds)


def test_primary_only_deterministic():
    ds = synth_digits(4, 8, 3, rng_seed=1)
    a, _ = train_primary_only(ds, quick_cfg(), arch=SMALL)
    b, _ = train_primary_only(ds, quick_cfg(), arch=SMALL)
    assert a.digest() == b.digest()


# --- Persistence and reporting ---


def test_save_and_load_model(tmp_path):
    model = small_model()
    hashes = save_model(model, tmp_path / "m")
    assert set(hashes) == {"encoder.smsm", "classifier.smsm", "decoder.smsm", "manifest.json"}
    restored = load_model(tmp_path / "m")
    assert isinstance(restored, SeededModel)
    assert restored.digest() == model.digest()


def test_report_csv_leaves_self_loss_blank_for_primary(tmp_path):
    _, report = train_primary_only(synth_digits(2, 8, 2, rng_seed=1), quick_cfg(1), arch=SMALL)
    lines = write_report_csv(report, tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "epoch,primary_loss,self_loss,seconds"
    assert lines[1].split(",")[2] == ""


def test_loss_smoothness():
    assert loss_smoothness([5.0 - 0.1 * i for i in range(60)]) == pytest.approx(0.0, abs=1e-12)
    assert loss_smoothness([float(i % 2) for i in range(60)]) > 0.9
    with pytest.raises(InputError):
        loss_smoothness([1.0, 2.0])


# --- Calibration (slow) ---


@pytest.fixture(scope="module")
def default_corpus():
    return split(synth_digits(250, 12, 10, rng_seed=0), 0.8, rng_seed=1)


@pytest.mark.slow
def test_default_corpus_joint_accuracy(default_corpus):
    train, test = default_corpus
    cfg = SgdConfig(learning_rate=0.05, batch_size=16, epochs=50, rng_seed=0)
    _, report = train_joint(train, cfg, JointWeights(), test_ds=test)
    assert report.test_accuracy >= 0.90
    assert report.self_losses[-1] <= 0.02


@pytest.mark.slow
def test_default_corpus_primary_matches_joint(default_corpus):
    train, test = default_corpus
    cfg = SgdConfig(learning_rate=0.05, batch_size=16, epochs=50, rng_seed=0)
    _, joint = train_joint(train, cfg, JointWeights(), test_ds=test)
    _, primary = train_primary_only(train, cfg, test_ds=test)
    assert abs(joint.test_accuracy - primary.test_accuracy) <= 0.02
