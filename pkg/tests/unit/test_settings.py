"""Tests for the configuration schema, presets and file round-trip."""

import tomllib

import pytest

from slicebench.core.domain.enums import RunMode
from slicebench.core.domain.exceptions import ConfigError
from slicebench.core.domain.settings import (
    PRESET_NAMES,
    ExperimentConfig,
    dumps_config,
    load_config,
    load_preset,
    parse_config,
    save_config,
)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_load(name):
    config = load_preset(name)
    assert config.name == name
    assert config.env.n_slices == 3


def test_full_scale_preset_defaults():
    """Test the full-scale scenario constants."""
    config = load_preset("paper")
    assert config.channel.n_aps == 150
    assert config.env.subscriber_cap == 50
    assert (config.weights.w1, config.weights.w2, config.weights.w3, config.weights.w4) == (
        1.0, 2.0, 1.0, 100.0,
    )
    assert config.energy.iota * config.energy.p_z**3 == pytest.approx(10.0)
    assert config.dtd3.clip_boundary == 18.0
    assert config.dtd3.policy_freq == 2
    assert config.runtime.eval_episodes == 5 and config.runtime.eval_top_k == 3


def test_latency_preset_weights():
    config = load_preset("latency")
    assert config.channel.n_aps == 250
    assert (config.weights.w1, config.weights.w2, config.weights.w3) == (1.0, 1.0, 3.0)


def test_desk_preset_scale():
    config = load_preset("desk")
    assert config.channel.n_aps == 16
    assert config.env.n_subscribers == 8
    assert config.runtime.total_timesteps == 100_000


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_round_trip_is_identity(name, tmp_path):
    """Test parse -> serialize -> parse yields an identical config."""
    config = load_preset(name)
    path = save_config(config, tmp_path / f"{name}.toml")
    again = load_config(path)
    assert again == config
    assert again.config_hash() == config.config_hash()
    assert dumps_config(again) == dumps_config(config)


def test_missing_key_is_named(tmp_path):
    data = tomllib.loads(dumps_config(load_preset("desk")))
    del data["compute"]["delta"]
    path = tmp_path / "broken.toml"
    path.write_text(dumps_config(load_preset("desk")).replace("delta = 0.5\n", ""))
    with pytest.raises(ConfigError, match="compute.delta"):
        load_config(path)
    with pytest.raises(ConfigError, match="compute.delta"):
        parse_config(data, require_all=True)


def test_unknown_key_rejected():
    data = load_preset("desk").model_dump(mode="json")
    data["channel"]["antennas"] = 4
    with pytest.raises(ConfigError, match="antennas"):
        parse_config(data)


def test_malformed_and_missing_files(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[channel\nn_aps = ")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(bad)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")
    with pytest.raises(ConfigError):
        load_preset("huge")


def test_invariants_enforced():
    """Test validators for penalty order, eval sizes, caps and lockstep."""
    base = load_preset("desk")
    with pytest.raises(ConfigError):
        base.with_overrides({"penalties.rho_delay": 0.9})
    with pytest.raises(ConfigError):
        base.with_overrides({"runtime.eval_top_k": 9})
    with pytest.raises(ConfigError):
        base.with_overrides({"env.subscriber_cap": 4})
    with pytest.raises(ConfigError):
        base.with_overrides({"runtime.lockstep": True})
    with pytest.raises(ConfigError):
        base.with_overrides({"runtime.total_timesteps": 10})
    with pytest.raises(ConfigError):
        base.with_overrides({"dtd3.log_std_min": 10.0})


def test_with_overrides_revalidates_and_copies():
    base = load_preset("desk")
    changed = base.with_overrides({"runtime.seed": 7, "runtime.mode": RunMode.ASYNC})
    assert changed.runtime.seed == 7
    assert changed.runtime.mode is RunMode.ASYNC
    assert base.runtime.seed == 0
    assert changed.config_hash() != base.config_hash()
    with pytest.raises(ConfigError, match="unknown config key"):
        base.with_overrides({"runtime.speed": 2})


def test_usable_cpu_excludes_reserve():
    config = ExperimentConfig()
    assert config.compute.usable_cpu == pytest.approx(0.9 * config.compute.total_cpu)
