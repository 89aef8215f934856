"""Test environment defaults and configuration files."""

import math
import os

import pytest

from fundsol.config import RunConfig, get_log_level, get_output_dir, get_seed, get_threads, load_config
from fundsol.errors import ConfigError


def test_threads_priority(monkeypatch):
    """Command line beats FUNDSOL_THREADS, which beats the core count."""
    monkeypatch.setenv("FUNDSOL_THREADS", "3")
    assert get_threads(7) == 7
    assert get_threads() == 3

    monkeypatch.delenv("FUNDSOL_THREADS")
    assert get_threads() == (os.cpu_count() or 1)


def test_output_dir_and_log_level(monkeypatch):
    monkeypatch.delenv("FUNDSOL_OUTPUT_DIR", raising=False)
    monkeypatch.delenv("FUNDSOL_LOG_LEVEL", raising=False)
    assert get_output_dir().name == "fundsol-out"
    assert get_log_level() == "INFO"

    monkeypatch.setenv("FUNDSOL_OUTPUT_DIR", "/tmp/elsewhere")
    monkeypatch.setenv("FUNDSOL_LOG_LEVEL", "debug")
    assert get_output_dir().as_posix() == "/tmp/elsewhere"
    assert get_output_dir("here").as_posix() == "here"
    assert get_log_level() == "DEBUG"


def test_seed_priority(monkeypatch):
    monkeypatch.setenv("FUNDSOL_SEED", "11")
    assert get_seed() == 11
    assert get_seed(0) == 0

    monkeypatch.delenv("FUNDSOL_SEED")
    assert get_seed() == 0


def test_load_config_file(tmp_path, symbols_dir):
    """Dashed section names map onto the command sections; overrides win."""
    path = tmp_path / "run.toml"
    path.write_text(
        f'command = "lpq"\nsymbol = "{(symbols_dir / "mixed.toml").as_posix()}"\nseed = 5\n\n'
        '[rho-audit]\nk_max = 2\n\n[lpq]\npair = "1,inf"\ntolerance = 0.1\n'
    )
    config = load_config(path, lpq={"tolerance": 0.2, "regime": None})
    assert config.command == "lpq"
    assert config.seed == 5
    assert config.rho_audit.k_max == 2
    assert config.lpq.pair == (1.0, math.inf)
    assert config.lpq.tolerance == 0.2
    assert config.lpq.regime == "small_t"

    # Check infinite exponents survive serialization
    assert config.model_dump(mode="json")["lpq"]["pair"] == [1.0, "inf"]


def test_load_config_defaults():
    config = load_config()
    assert isinstance(config, RunConfig)
    assert config.command is None
    assert config.highfreq.family.type == "shifted_gaussian"
    assert config.decay.scales[-1] == 8.0


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")

    bad = tmp_path / "bad.toml"
    bad.write_text("[decay]\nregime = 'forever'\n")
    with pytest.raises(ConfigError):
        load_config(bad)

    unknown = tmp_path / "unknown.toml"
    unknown.write_text("[kernel]\nstrategy = 'fft'\nunexpected = 1\n")
    with pytest.raises(ConfigError):
        load_config(unknown)

    # Check command and symbol validation
    with pytest.raises(ConfigError):
        load_config(command="dance")
    with pytest.raises(ConfigError):
        load_config(symbol=tmp_path / "nowhere.toml")


def test_family_and_pair_validation():
    with pytest.raises(ConfigError):
        load_config(lpq={"pair": "0.5,2"})
    with pytest.raises(ConfigError):
        load_config(lpq={"family": {"widths": [1.0, 1.5]}})
    with pytest.raises(ConfigError):
        load_config(lpq={"family": {"type": "random_bandlimited"}})
    with pytest.raises(ConfigError):
        load_config(decay={"alpha": [-1, 0]})

    # Check unset grids are left to the sizing rule
    config = load_config(lpq={"pair": "1,inf"})
    assert config.lpq.family.points_per_axis is None
    assert config.lpq.family.widths is None
