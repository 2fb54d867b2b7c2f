# src/sms_verify/selftest.py
"""
Fast numerical soundness checks: gradients, metric identities, blend
closure, partition laws and run-to-run determinism.
"""
import logging
from functools import partial
from typing import Callable

import numpy as np
from pydantic import BaseModel

from .datasets import partition_users, split, synth_digits
from .joint_training import Architecture, SeededModel, backward_pass, train_joint
from .nn_core import Activation, Mlp, cross_entropy_loss, finite_diff_check, gradient_check, mse_loss
from .schemas import JointWeights, SgdConfig
from .seeding import embed_pixels
from .unlearning import sisa_train
from .verifier import VerifierModel, evaluate, unambiguity, verifiability, verify_batch

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


def _grad_mlp_cross_entropy(rng: np.random.Generator) -> CheckResult:
    mlp = Mlp.build([6, 5, 4, 3], [Activation.RELU, Activation.SIGMOID, Activation.IDENTITY], rng, name="ce")
    batch = rng.uniform(0.0, 1.0, size=(4, 6))
    labels = rng.integers(0, 3, size=4)
    report = finite_diff_check(mlp, batch, partial(cross_entropy_loss, labels=labels), tol=GRAD_TOLERANCE)
    return CheckResult(name="gradient mlp/cross_entropy", passed=report.passed, detail=f"{report.max_rel_error:.2e}")


def _grad_mlp_mse(rng: np.random.Generator) -> CheckResult:
    mlp = Mlp.build([6, 5, 6], [Activation.RELU, Activation.SIGMOID], rng, name="mse")
    batch = rng.uniform(0.0, 1.0, size=(4, 6))
    target = rng.uniform(0.0, 1.0, size=(4, 6))
    report = finite_diff_check(mlp, batch, partial(mse_loss, target=target), tol=GRAD_TOLERANCE)
    return CheckResult(name="gradient mlp/mse", passed=report.passed, detail=f"{report.max_rel_error:.2e}")


def _grad_joint(rng: np.random.Generator) -> CheckResult:
    arch = Architecture(encoder_widths=(7, 5), classifier_hidden=(4,), decoder_hidden=(6,), latent=5)
    model = SeededModel.initialize(9, 3, arch, rng)
    batch = rng.uniform(0.0, 1.0, size=(5, 9))
    labels = rng.integers(0, 3, size=5)
    w = JointWeights(alpha_p=1.0, alpha_s=0.7)
    report = gradient_check(
        model.parameters(), lambda: backward_pass(model, batch, labels, w)[0], tol=GRAD_TOLERANCE
    )
    return CheckResult(name="gradient joint model", passed=report.passed, detail=f"{report.max_rel_error:.2e}")


def _metric_identities(rng: np.random.Generator) -> CheckResult:
    arch = Architecture(encoder_widths=(8, 6), classifier_hidden=(4,), decoder_hidden=(8,), latent=6)
    model = SeededModel.initialize(16, 3, arch, rng)
    net = Mlp.build([16, 8, 2], [Activation.RELU, Activation.IDENTITY], rng, name="verifier")
    V = VerifierModel(net, owner=0)
    seeded = rng.uniform(0.0, 1.0, size=(7, 16))
    alt = rng.uniform(0.0, 1.0, size=(5, 16))
    bits_s, bits_a = verify_batch(V, model, seeded), verify_batch(V, model, alt)
    outcome = evaluate(V, model, seeded, alt)
    passed = (
        verifiability(V, model, seeded) == float(np.mean(bits_s))
        and unambiguity(V, model, alt) == float(np.mean(1 - bits_a))
        and outcome.verifiability == float(np.mean(bits_s))
        and outcome.unambiguity == float(np.mean(1 - bits_a))
        and set(np.unique(np.concatenate([bits_s, bits_a]))) <= {0, 1}
    )
    return CheckResult(name="verifiability/unambiguity are indicator means", passed=passed)


def _blend_closure(rng: np.random.Generator) -> CheckResult:
    x = rng.uniform(0.0, 1.0, size=(20, 16))
    pattern = rng.uniform(0.0, 1.0, size=16)
    v = rng.uniform(0.0, 1.0, size=16)
    blended = embed_pixels(x, pattern, v)
    passed = (
        bool(blended.min() >= 0.0 and blended.max() <= 1.0)
        and np.array_equal(embed_pixels(x, pattern, np.zeros(16)), x)
        and np.array_equal(embed_pixels(x, pattern, np.ones(16)), np.broadcast_to(pattern, x.shape))
    )
    return CheckResult(name="blend stays in [0, 1]; v=0 keeps x, v=1 gives the seed", passed=passed)


def _partition_laws(rng: np.random.Generator) -> CheckResult:
    ds = synth_digits(6, 8, 4, rng_seed=int(rng.integers(1 << 31)))
    parts = partition_users(ds, 5, rng_seed=3)
    covered = sorted(i for p in parts for i in p.indices)
    train, test = split(ds, 0.75, rng_seed=4)
    sm, _ = sisa_train(ds, 3, SgdConfig(epochs=1, batch_size=8), JointWeights())
    shard_cover = sorted(int(i) for s in range(sm.k) for i in sm.shard_indices(s))
    passed = (
        covered == list(range(len(ds)))
        and len(train) + len(test) == len(ds)
        and shard_cover == list(range(len(ds)))
    )
    return CheckResult(name="user and shard partitions cover every index once", passed=passed)


def _determinism(rng: np.random.Generator) -> CheckResult:
    ds = synth_digits(4, 8, 3, rng_seed=int(rng.integers(1 << 31)))
    cfg = SgdConfig(epochs=2, batch_size=4, rng_seed=11)
    arch = Architecture(encoder_widths=(16, 8), classifier_hidden=(8,), decoder_hidden=(16,), latent=8)
    first, report_a = train_joint(ds, cfg, JointWeights(), arch=arch)
    second, report_b = train_joint(ds, cfg, JointWeights(), arch=arch)
    passed = first.digest() == second.digest() and report_a.primary_losses == report_b.primary_losses
    return CheckResult(name="identical seeds give bit-identical models", passed=passed)


CHECKS: list[Callable[[np.random.Generator], CheckResult]] = [
    _grad_mlp_cross_entropy,
    _grad_mlp_mse,
    _grad_joint,
    _metric_identities,
    _blend_closure,
    _partition_laws,
    _determinism,
]


def run_selftest(rng_seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(rng_seed)
    results = []
    for check in CHECKS:
        result = check(rng)
        log = logger.info if result.passed else logger.error
        log(f"{'ok  ' if result.passed else 'FAIL'} {result.name} {result.detail}".rstrip())
        results.append(result)
    return results
