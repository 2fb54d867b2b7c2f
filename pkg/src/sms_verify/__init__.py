# src/sms_verify/__init__.py

__version__ = "0.1.0"

# 1. Core engine and data
from .nn_core import Activation, DenseLayer, Mlp, Param, cross_entropy_loss, gradient_check, mse_loss, sgd_step
from .datasets import Dataset, UserPartition, load_idx, partition_users, split, synth_digits

# 2. Seeding, training, verification
from .seeding import Seed, SeedMask, embed_seed, generate_seed, seed_dataset
from .joint_training import Architecture, PrimaryModel, SeededModel, joint_loss, model_forward, train_joint, train_primary_only
from .verifier import (
    VerifierConfig,
    VerifierModel,
    build_verification_set,
    mia_score,
    train_verifier,
    unambiguity,
    verifiability,
    verify_one,
)
from .backdoor import BackdoorSpec, backdoor_asr, mib_prepare

# 3. Unlearning and experiments
from .unlearning import approx_unlearn, get_unlearner, retrain_unlearn, sisa_predict, sisa_train, sisa_unlearn
from .config import ExperimentConfig, load_config
from .runner import cmd_run, cmd_sweep
from .report import cmd_report, cmd_trace_plot

from .schemas import (
    EraseRequest,
    JointWeights,
    MetricRow,
    RunEvent,
    RunManifest,
    SeedRecord,
    SgdConfig,
    TrainReport,
    parse_record_json,
)

__all__ = [
    "Activation",
    "DenseLayer",
    "Mlp",
    "Param",
    "cross_entropy_loss",
    "gradient_check",
    "mse_loss",
    "sgd_step",
    "Dataset",
    "UserPartition",
    "load_idx",
    "partition_users",
    "split",
    "synth_digits",
    "Seed",
    "SeedMask",
    "embed_seed",
    "generate_seed",
    "seed_dataset",
    "Architecture",
    "PrimaryModel",
    "SeededModel",
    "joint_loss",
    "model_forward",
    "train_joint",
    "train_primary_only",
    "VerifierConfig",
    "VerifierModel",
    "build_verification_set",
    "mia_score",
    "train_verifier",
    "unambiguity",
    "verifiability",
    "verify_one",
    "BackdoorSpec",
    "backdoor_asr",
    "mib_prepare",
    "approx_unlearn",
    "get_unlearner",
    "retrain_unlearn",
    "sisa_predict",
    "sisa_train",
    "sisa_unlearn",
    "ExperimentConfig",
    "load_config",
    "cmd_run",
    "cmd_sweep",
    "cmd_report",
    "cmd_trace_plot",
    "EraseRequest",
    "JointWeights",
    "MetricRow",
    "RunEvent",
    "RunManifest",
    "SeedRecord",
    "SgdConfig",
    "TrainReport",
    "parse_record_json",
]
