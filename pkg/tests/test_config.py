from pathlib import Path

import pytest

from sms_verify.config import ExperimentConfig, config_from_mapping, dump_config, load_config, parse_config_text
from sms_verify.errors import ConfigError
from sms_verify.schemas import DEFAULT_SELF_WEIGHT
from sms_verify.unlearning import ApproxOptions, RetrainOptions, SisaOptions

SAMPLE = """
# small run
ssr = 0.05
ser = 0.8      # stronger seeds
encoder_widths = 32, 16
unlearn_method = sisa
sisa_k = 3
mib = true
approx_ascent_rate = none
"""


def write_config(tmp_path: Path, text: str = SAMPLE) -> Path:
    """Write a config file into tmp_path and return its path."""
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


# --- Parsing ---


def test_load_sample_config(tmp_path):
    cfg = load_config(write_config(tmp_path), env={})
    assert cfg.ssr == 0.05
    assert cfg.ser == 0.8
    assert cfg.encoder_widths == (32, 16)
    assert cfg.architecture().latent == 16
    assert cfg.mib is True
    assert cfg.approx_ascent_rate is None
    assert cfg.epochs == 50


def test_parse_skips_comments_and_blank_lines():
    assert parse_config_text("# only a comment\n\n  a = 1  # trailing\n") == {"a": "1"}


def test_parse_missing_equals_names_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("ssr = 0.1\nser 0.2\n")


def test_parse_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate key 'ssr'"):
        parse_config_text("ssr = 0.1\nssr = 0.2\n")


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="colour"):
        config_from_mapping({"colour": "red"}, env={})


def test_out_of_range_value_is_rejected():
    with pytest.raises(ConfigError, match="ssr"):
        config_from_mapping({"ssr": "1.5"}, env={})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


# --- Consistency ---


def test_target_user_must_exist():
    with pytest.raises(ConfigError, match="target_user"):
        config_from_mapping({"n_users": "2", "target_user": "2"}, env={})


def test_idx_paths_required_and_resolved(tmp_path):
    with pytest.raises(ConfigError, match="idx_images is required"):
        config_from_mapping({"dataset": "idx"}, env={})
    (tmp_path / "img.idx").write_bytes(b"")
    (tmp_path / "lbl.idx").write_bytes(b"")
    cfg = load_config(write_config(tmp_path, "dataset = idx\nidx_images = img.idx\nidx_labels = lbl.idx\n"), env={})
    assert cfg.idx_images == tmp_path / "img.idx"


def test_seed_n_bounded_by_image_size():
    with pytest.raises(ConfigError, match="seed_n"):
        config_from_mapping({"synth_side": "8", "seed_n": "65"}, env={})


# --- Environment and hashing ---


def test_seed_env_overrides_master_seed():
    cfg = config_from_mapping({"master_seed": "3"}, env={"SMS_SEED": "11"})
    assert cfg.master_seed == 11


def test_hash_ignores_plumbing_keys():
    a = config_from_mapping({"output_dir": "runs/a"}, env={})
    b = config_from_mapping({"output_dir": "runs/b", "event_endpoint": "tcp://localhost:5556"}, env={})
    c = config_from_mapping({"ser": "0.5"}, env={})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert a.run_id() == a.config_hash()[:12]


def test_dump_config_reloads_to_same_hash(tmp_path):
    cfg = load_config(write_config(tmp_path), env={})
    again = load_config(write_config(tmp_path, dump_config(cfg)), env={})
    assert again.config_hash() == cfg.config_hash()


def test_with_updates_revalidates():
    cfg = ExperimentConfig()
    assert cfg.with_updates(ssr=0.2).ssr == 0.2
    with pytest.raises(ConfigError):
        cfg.with_updates(ssr=0.0)


def test_config_is_frozen():
    with pytest.raises(ValueError):
        ExperimentConfig().ssr = 0.3


# --- Views ---


def test_unlearner_options_follow_method():
    assert isinstance(ExperimentConfig().unlearner_options(), RetrainOptions)
    sisa = ExperimentConfig(unlearn_method="sisa", sisa_k=4).unlearner_options()
    assert isinstance(sisa, SisaOptions) and sisa.k == 4
    approx = ExperimentConfig(unlearn_method="approx", approx_steps=9).unlearner_options()
    assert isinstance(approx, ApproxOptions) and approx.steps == 9


def test_training_views():
    cfg = ExperimentConfig(alpha_s=0.5, learning_rate=0.1, verifier_threshold=0.7)
    assert cfg.sgd(rng_seed=4).rng_seed == 4
    assert cfg.sgd(rng_seed=4).learning_rate == 0.1
    assert cfg.weights().alpha_s == 0.5
    assert cfg.verifier(rng_seed=1).threshold == 0.7


def test_verifier_defaults_use_decoys_and_jittered_blends():
    cfg = ExperimentConfig()
    assert cfg.decoy_seeds
    assert cfg.verifier_min_blend == 0.6
    assert cfg.alpha_s == DEFAULT_SELF_WEIGHT
    with pytest.raises(ValueError):
        ExperimentConfig(verifier_min_blend=0.0)


def test_split_seeds_caps_ssr():
    assert ExperimentConfig(erase_granularity="split_seeds", ssr=0.5).ssr == 0.5
    with pytest.raises(ValueError, match="split_seeds"):
        ExperimentConfig(erase_granularity="split_seeds", ssr=0.6)
