# src/sms_verify/config.py
"""
Experiment configuration.

Configs are flat `key = value` text files, one assignment per line, `#`
starting a comment. Values are coerced by pydantic; unknown keys are
rejected. The environment variable SMS_SEED overrides `master_seed`.
"""
import hashlib
import logging
import os
from pathlib import Path
from typing import Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .joint_training import Architecture
from .schemas import DEFAULT_SELF_WEIGHT, EraseGranularity, JointWeights, Placement, SgdConfig
from .unlearning import ApproxOptions, RetrainOptions, SisaOptions, UnlearnerOptions
from .verifier import VerifierConfig

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "SMS_SEED"
NONE_VALUES = {"", "none", "null"}
# keys that never influence results; left out of the config hash
UNHASHED_KEYS = {"output_dir", "event_endpoint"}


class ExperimentConfig(BaseModel):
    """
    Every knob of one end-to-end run.

    Note:
        Defaults reproduce the desk-scale setting: synthetic 12x12 digits,
        250 per class, 5 users, SSR 0.006, SER 0.6, N = 16.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    # data
    dataset: Literal["synthetic", "idx"] = "synthetic"
    idx_images: Path | None = None
    idx_labels: Path | None = None
    idx_limit: int | None = Field(default=2500, ge=2)
    synth_per_class: int = Field(default=250, ge=1)
    synth_side: int = Field(default=12, ge=8)
    class_count: int = Field(default=10, ge=1, le=10)
    train_frac: float = Field(default=0.8, gt=0.0, lt=1.0)
    n_users: int = Field(default=5, ge=2)
    target_user: int = Field(default=0, ge=0)

    # seeding
    ssr: float = Field(default=0.006, gt=0.0, le=1.0)
    ser: float = Field(default=0.6, ge=0.0, le=1.0)
    seed_n: int = Field(default=16, ge=1)
    placement: Placement = "bottom_right"
    per_sample_seeds: bool = False

    # training
    alpha_p: float = Field(default=1.0, ge=0.0)
    alpha_s: float = Field(default=DEFAULT_SELF_WEIGHT, ge=0.0)
    learning_rate: float = Field(default=0.05, gt=0.0)
    batch_size: int = Field(default=16, ge=1)
    epochs: int = Field(default=50, ge=1)
    encoder_widths: tuple[int, ...] = (128, 64)
    classifier_hidden: tuple[int, ...] = (32,)
    decoder_hidden: tuple[int, ...] = (128,)

    # unlearning
    unlearn_method: Literal["retrain", "sisa", "approx"] = "retrain"
    erase_granularity: EraseGranularity = EraseGranularity.SAMPLES
    sisa_k: int = Field(default=5, ge=2)
    sisa_jobs: int = Field(default=1, ge=1)
    approx_steps: int = Field(default=200, ge=1)
    approx_ascent_rate: float | None = Field(default=None, gt=0.0)
    approx_retain_fraction: float = Field(default=0.1, gt=0.0, le=1.0)

    # verifier
    verifier_epochs: int = Field(default=50, ge=1)
    verifier_learning_rate: float = Field(default=0.01, gt=0.0)
    verifier_batch_size: int = Field(default=32, ge=1)
    verifier_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    verifier_accuracy_floor: float = Field(default=0.95, ge=0.0, le=1.0)
    verifier_blur: bool = False
    decoy_seeds: bool = True
    verifier_min_blend: float = Field(default=0.6, gt=0.0, le=1.0)

    # baselines
    mib: bool = False
    mib_target: int = Field(default=0, ge=0)
    mib_rate: float | None = Field(default=None, gt=0.0, le=1.0)
    mia: bool = True
    nonverif: bool = True
    nonverif_on_clean: bool = False

    # plumbing
    master_seed: int = Field(default=0, ge=0, lt=2**63)
    output_dir: Path = Path("runs/default")
    event_endpoint: str | None = None

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.dataset == "idx":
            for name in ("idx_images", "idx_labels"):
                path = getattr(self, name)
                if path is None:
                    raise ValueError(f"{name} is required when dataset = idx")
                if not path.is_file():
                    raise ValueError(f"{name} does not exist: {path}")
        if self.target_user >= self.n_users:
            raise ValueError(f"target_user {self.target_user} must be < n_users {self.n_users}")
        if self.mib_target >= self.class_count:
            raise ValueError(f"mib_target {self.mib_target} must be < class_count {self.class_count}")
        if self.synth_side * self.synth_side < self.seed_n and self.dataset == "synthetic":
            raise ValueError(f"seed_n {self.seed_n} exceeds the {self.synth_side ** 2} pixels")
        if self.erase_granularity is EraseGranularity.SPLIT_SEEDS and self.ssr > 0.5:
            raise ValueError(f"split_seeds seeds two disjoint groups of ssr {self.ssr}; it must not exceed 0.5")
        if not self.encoder_widths:
            raise ValueError("encoder_widths must not be empty")
        return self

    # --- views used by the runner ---

    def sgd(self, rng_seed: int) -> SgdConfig:
        return SgdConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs, rng_seed=rng_seed
        )

    def weights(self) -> JointWeights:
        return JointWeights(alpha_p=self.alpha_p, alpha_s=self.alpha_s)

    def architecture(self) -> Architecture:
        return Architecture(
            encoder_widths=self.encoder_widths,
            classifier_hidden=self.classifier_hidden,
            decoder_hidden=self.decoder_hidden,
            latent=self.encoder_widths[-1],
        )

    def verifier(self, rng_seed: int) -> VerifierConfig:
        return VerifierConfig(
            epochs=self.verifier_epochs,
            learning_rate=self.verifier_learning_rate,
            batch_size=self.verifier_batch_size,
            threshold=self.verifier_threshold,
            accuracy_floor=self.verifier_accuracy_floor,
            blur_positives=self.verifier_blur,
            rng_seed=rng_seed,
        )

    def unlearner_options(self) -> UnlearnerOptions:
        if self.unlearn_method == "sisa":
            return SisaOptions(k=self.sisa_k, jobs=self.sisa_jobs)
        if self.unlearn_method == "approx":
            return ApproxOptions(
                steps=self.approx_steps,
                ascent_rate=self.approx_ascent_rate,
                retain_fraction=self.approx_retain_fraction,
            )
        return RetrainOptions()

    def with_updates(self, **updates) -> "ExperimentConfig":
        """Re-validated copy with some fields replaced."""
        try:
            return ExperimentConfig.model_validate({**self.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigError(f"invalid override {updates}: {e}") from e

    def config_hash(self) -> str:
        """sha256 of the result-relevant fields; equal hashes mean equal derived seeds."""
        payload = self.model_dump_json(exclude=UNHASHED_KEYS)
        return hashlib.sha256(payload.encode()).hexdigest()

    def run_id(self) -> str:
        return self.config_hash()[:12]


def parse_config_text(text: str) -> dict[str, str | None]:
    """
    Parse `key = value` lines into a dict of raw strings.

    Note:
        Values 'none', 'null' and empty map to None; comma-separated values
        stay strings and are split by the tuple fields' validation.
    """
    raw: dict[str, str | None] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        raw[key] = None if value.lower() in NONE_VALUES else value
    return raw


def _coerce_tuples(raw: dict[str, str | None]) -> dict:
    values: dict = dict(raw)
    for name, field in ExperimentConfig.model_fields.items():
        if name in values and isinstance(values[name], str) and field.annotation == tuple[int, ...]:
            values[name] = tuple(v.strip() for v in values[name].split(",") if v.strip())
    return values


def config_from_mapping(raw: Mapping[str, str | None], env: Mapping[str, str] | None = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    values = _coerce_tuples(dict(raw))
    if env.get(SEED_ENV_VAR):
        values["master_seed"] = env[SEED_ENV_VAR]
        logger.info(f"master_seed overridden by {SEED_ENV_VAR}={env[SEED_ENV_VAR]}")
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Read and validate a config file; relative idx paths resolve against the file's directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    raw = parse_config_text(text)
    for key in ("idx_images", "idx_labels"):
        if raw.get(key) and not Path(raw[key]).is_absolute():
            raw[key] = str(path.parent / raw[key])
    config = config_from_mapping(raw, env)
    logger.info(f"loaded config {path} (hash {config.config_hash()[:12]})")
    return config


def dump_config(config: ExperimentConfig) -> str:
    """Inverse of parse_config_text for the effective config."""
    lines = []
    for key, value in config.model_dump(mode="json").items():
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
