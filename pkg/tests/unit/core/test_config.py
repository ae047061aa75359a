import numpy as np
import pytest

from speckit.core.config import (
    DEFAULT_CONFIG_PATH,
    REQUIRED_SECTIONS,
    RunConfig,
    SpeckitSettings,
    load_config,
)
from speckit.core.exceptions import ConfigError


def _write(path, text):
    path.write_text(text)
    return path


def _without_section(section):
    """Bundled config text with one [section] block removed."""
    lines = DEFAULT_CONFIG_PATH.read_text().splitlines()
    kept = []
    skipping = False
    for line in lines:
        if line.startswith("["):
            skipping = line.strip() == f"[{section}]"
        if not skipping:
            kept.append(line)
    return "\n".join(kept) + "\n"


def test_bundled_config_matches_defaults():
    """Test that the bundled TOML reproduces the built-in defaults."""
    config = load_config(DEFAULT_CONFIG_PATH)
    assert config.to_dict() == RunConfig().to_dict()
    assert load_config(None).to_dict() == RunConfig().to_dict()


def test_default_training_spec():
    """Test the ensemble derived from the default config."""
    spec = RunConfig().training_spec()
    assert spec.n_members == 72
    assert spec.line_set_names == ("nine", "eight", "ten")
    np.testing.assert_allclose(spec.log10_alphas, np.linspace(-6.0, 0.0, 41))
    assert spec.target_grid.count == 201
    assert spec.source_grid.count == 181
    assert max(line.amplitude for line in RunConfig().example_lines()) == pytest.approx(10.0)


@pytest.mark.parametrize("section", REQUIRED_SECTIONS)
def test_missing_section_is_named(temp_dir, section):
    """Test that a missing required section is reported by name."""
    path = _write(temp_dir / "run.toml", _without_section(section))
    with pytest.raises(ConfigError, match=rf"\[{section}\]"):
        load_config(path)


def test_invalid_field_is_named(temp_dir):
    """Test that a bad field value names the field."""
    text = DEFAULT_CONFIG_PATH.read_text().replace("target_step = 1.0", "target_step = -1.0")
    with pytest.raises(ConfigError, match="grids"):
        load_config(_write(temp_dir / "run.toml", text))

    text = DEFAULT_CONFIG_PATH.read_text().replace("sds = [0.01", "sds = [0.0")
    with pytest.raises(ConfigError, match="noise.sds"):
        load_config(_write(temp_dir / "run.toml", text))


def test_unknown_field_rejected(temp_dir):
    """Test that misspelled keys are not silently ignored."""
    text = DEFAULT_CONFIG_PATH.read_text().replace("max_iter = 100", "max_iter = 100\nmax_iters = 5")
    with pytest.raises(ConfigError, match="max_iters"):
        load_config(_write(temp_dir / "run.toml", text))


def test_unknown_section_rejected(temp_dir):
    """Test that unknown top-level sections are errors."""
    text = DEFAULT_CONFIG_PATH.read_text() + "\n[plots]\ndpi = 300\n"
    with pytest.raises(ConfigError, match="plots"):
        load_config(_write(temp_dir / "run.toml", text))


def test_unreadable_config(temp_dir):
    """Test missing and malformed files."""
    with pytest.raises(ConfigError):
        load_config(temp_dir / "missing.toml")
    with pytest.raises(ConfigError, match="TOML"):
        load_config(_write(temp_dir / "bad.toml", "[grids\n"))


def test_fit_options():
    """Test the keyword options passed to the selection."""
    options = RunConfig().fit.options()
    assert options["g_grid"].size == 25
    assert options["contact_tol"] == pytest.approx(1e-3)
    assert set(options) == {"g_grid", "contact_tol", "tol", "max_iter", "g_init"}


def test_overrides():
    """Test command-line overrides on a frozen config."""
    config = RunConfig()
    changed = config.with_overrides(out="elsewhere", seed=99, mode="analytic")
    assert changed.io.out == "elsewhere"
    assert changed.seeds.example == 99
    assert changed.seeds.training == config.seeds.training
    assert changed.fit.mode == "analytic"
    assert config.with_overrides().to_dict() == config.to_dict()
    with pytest.raises(ConfigError, match="fit.mode"):
        config.with_overrides(mode="graphical")


def test_dict_roundtrip():
    """Test that a dumped config validates back to the same config."""
    config = RunConfig().with_overrides(seed=3)
    assert RunConfig.from_dict(config.to_dict()) == config


def test_settings_from_environment(monkeypatch):
    """Test SPECKIT_ environment variables."""
    monkeypatch.setenv("SPECKIT_THREADS", "3")
    monkeypatch.setenv("SPECKIT_LOG_LEVEL", "DEBUG")
    settings = SpeckitSettings()
    assert settings.threads == 3
    assert settings.resolved_threads() == 3
    assert settings.log_level == "DEBUG"


def test_settings_default_threads(monkeypatch):
    """Test that zero threads resolves to the core count."""
    monkeypatch.delenv("SPECKIT_THREADS", raising=False)
    assert SpeckitSettings().resolved_threads() >= 1
    monkeypatch.setenv("SPECKIT_THREADS", "-2")
    with pytest.raises(ValueError):
        SpeckitSettings()
