import json

import pytest

from alphavmc.errors import ConfigError
from alphavmc.schema import RunConfig, dump_config, load_config, parse_config

MINIMAL = {"task": "gs", "system": {"type": "tfim", "L": 3}}


def test_defaults_fill_missing_blocks():
    config = parse_config(json.dumps(MINIMAL))
    assert config.ansatz.kind == "complex-RBM"
    assert config.sampler.mode == "mcmc"
    assert config.controller.alpha0 == 2.0
    assert config.controller.eta == 0.1
    assert config.controller.max_step == 0.01
    assert (config.controller.alpha_min, config.controller.alpha_max) == (0.05, 2.5)
    assert config.system.h == 1.0


def test_dump_and_parse_roundtrip():
    config = parse_config(json.dumps(MINIMAL))
    assert parse_config(dump_config(config)) == config


def test_unknown_key_is_named():
    raw = {**MINIMAL, "sampler": {"mode": "exact", "n_sampels": 10}}
    with pytest.raises(ConfigError, match="n_sampels"):
        parse_config(json.dumps(raw))


def test_missing_system():
    with pytest.raises(ConfigError, match="system"):
        parse_config(json.dumps({"task": "gs"}))


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config('{"task": "gs",\n  "system": }')


def test_discriminated_system_type():
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"task": "gs", "system": {"type": "hubbard", "L": 2}}))


def test_compression_task_needs_its_block():
    with pytest.raises(ConfigError, match="compression"):
        parse_config(json.dumps({**MINIMAL, "task": "infid"}))


def test_compression_needs_exactly_one_target():
    raw = {
        **MINIMAL,
        "task": "infid",
        "compression": {"target_checkpoint": "a.json", "quench": {"dt": 0.1}},
    }
    with pytest.raises(ConfigError):
        parse_config(json.dumps(raw))


def test_initial_alpha_within_bounds():
    with pytest.raises(ConfigError, match="alpha0"):
        parse_config(json.dumps({**MINIMAL, "controller": {"alpha0": 3.0}}))


def test_adaptive_bounds_are_ordered():
    raw = {**MINIMAL, "sr": {"adaptive_samples": {"enabled": True, "n_min": 512, "n_max": 64}}}
    with pytest.raises(ConfigError):
        parse_config(json.dumps(raw))


def test_seed_must_fit_in_64_bits():
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**MINIMAL, "seed": 2**64}))


def test_load_config_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(MINIMAL))
    assert isinstance(load_config(path), RunConfig)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
