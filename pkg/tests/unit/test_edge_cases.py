import math

import numpy as np
import pytest

from speckit import __version__
from speckit.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from speckit.core.config import DEFAULT_CONFIG_PATH
from speckit.core.spectral_model import SpectrumKind
from speckit.core.training_lab import SelectionReport
from speckit.pipeline.artifacts import read_curves, read_spectrum, read_yaml, write_yaml


def _small_config(temp_dir, **replacements):
    """Bundled config shrunk to three training members over 13 alphas."""
    text = DEFAULT_CONFIG_PATH.read_text()
    edits = {
        "sds = [0.01, 0.02, 0.03, 0.04]": "sds = [0.02]",
        "zetas = [-0.02, 0.01, 0.04]": "zetas = [0.01]",
        "training = [1, 2]": "training = [1]",
        "count = 41": "count = 13",
    }
    edits.update(replacements)
    for old, new in edits.items():
        assert old in text
        text = text.replace(old, new)
    path = temp_dir / "small.toml"
    path.write_text(text)
    return path


def _run(*args):
    return main([str(a) for a in args])


def test_version(capsys):
    """Test the version flag."""
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_command():
    """Test argparse rejection of unknown commands."""
    with pytest.raises(SystemExit) as exc_info:
        main(["deconvolve"])
    assert exc_info.value.code == 2


def test_report_without_stages(temp_dir, capsys):
    """Test that report lists the missing stages."""
    code = _run("report", "--out", temp_dir / "run")
    assert code == EXIT_IO
    err = capsys.readouterr().err
    assert "simulate, train, fit, restore" in err
    assert "speckit simulate" in err


def test_restore_without_selection(temp_dir, capsys):
    """Test the restore precondition."""
    assert _run("restore", "--out", temp_dir / "run") == EXIT_IO
    assert "speckit fit" in capsys.readouterr().err


def test_missing_config_section(temp_dir, capsys):
    """Test a config file without [noise]."""
    text = DEFAULT_CONFIG_PATH.read_text().replace("[noise]", "[noise_levels]")
    path = temp_dir / "run.toml"
    path.write_text(text)
    assert _run("train", "--config", path, "--out", temp_dir / "run") == EXIT_CONFIG
    assert "[noise]" in capsys.readouterr().err
    assert not (temp_dir / "run").exists()


def test_invalid_environment(temp_dir, monkeypatch):
    """Test a negative thread count from the environment."""
    monkeypatch.setenv("SPECKIT_THREADS", "-1")
    assert _run("simulate", "--out", temp_dir / "run") == EXIT_CONFIG


def test_simulate_outputs(temp_dir):
    """Test the simulate files and the scaled kernel sections."""
    out = temp_dir / "run"
    assert _run("simulate", "--out", out) == EXIT_OK
    names = sorted(p.name for p in (out / "simulate").iterdir())
    assert names == sorted([
        "exact.csv", "broadened.csv", "measured.csv", "kernel_485.csv", "kernel_620.csv", "stage.yaml"
    ])
    kernel = read_spectrum(out / "simulate" / "kernel_485.csv")
    assert kernel.values.max() == pytest.approx(10.0 * 2.0 / (math.pi * 7.275), rel=1e-10)
    exact = read_spectrum(out / "simulate" / "exact.csv", SpectrumKind.EXACT)
    measured = read_spectrum(out / "simulate" / "measured.csv")
    assert exact.grid.count == 181
    assert measured.grid.count == 201
    assert not list(out.glob(".*.partial"))


def test_zero_amplitude_spectra(temp_dir, capsys):
    """Test that zero line amplitudes give all-zero spectra and a named training error."""
    config = _small_config(temp_dir, **{"amplitude_scale = 10.0": "amplitude_scale = 0.0"})
    out = temp_dir / "run"
    assert _run("simulate", "--config", config, "--out", out) == EXIT_OK
    assert np.all(read_spectrum(out / "simulate" / "exact.csv").values == 0.0)
    assert np.all(read_spectrum(out / "simulate" / "broadened.csv").values == 0.0)

    assert _run("train", "--config", config, "--out", out) == EXIT_CONFIG
    assert "zero norm" in capsys.readouterr().err
    assert not (out / "train").exists()


def test_small_pipeline_scan(temp_dir):
    """Test train, fit and restore on a three-member ensemble."""
    config = _small_config(temp_dir)
    out = temp_dir / "run"
    assert _run("simulate", "--config", config, "--out", out) == EXIT_OK
    assert _run("train", "--config", config, "--out", out) == EXIT_OK

    curves = read_curves(out / "train" / "curves.csv")
    assert len(curves) == 5
    assert [c.meta["curve_id"] for c in curves[-2:]] == ["upper", "lower"]

    assert _run("fit", "--config", config, "--out", out) == EXIT_OK
    selection = read_yaml(out / "fit" / "selection.yaml")
    assert selection["mode"] == "scan"
    assert selection["log10_alpha_g"] == pytest.approx(math.log10(selection["alpha_g"]))

    assert _run("restore", "--config", config, "--out", out) == EXIT_OK
    summary = read_yaml(out / "restore" / "summary.yaml")
    assert summary["alpha_g"] == pytest.approx(selection["alpha_g"])
    assert summary["predicted_error"] == pytest.approx(selection["predicted_error"])
    assert "sigma_rel" in summary
    assert (out / "restore" / "validation.csv").is_file()

    assert _run("report", "--config", config, "--out", out) == EXIT_OK
    assert (out / "report" / "manifest.yaml").is_file()


def test_fit_regenerates_training(temp_dir):
    """Test that fit runs the training stage when its outputs are missing."""
    config = _small_config(temp_dir)
    out = temp_dir / "run"
    assert _run("fit", "--config", config, "--out", out) == EXIT_OK
    assert (out / "train" / "curves.csv").is_file()
    assert (out / "fit" / "selection.yaml").is_file()


def _selection(out):
    (out / "fit").mkdir(parents=True)
    report = SelectionReport(alpha_g=10 ** -2.2, g=0.045, eta_used=0.02, norm_A=0.9, predicted_error=0.25)
    write_yaml(out / "fit" / "selection.yaml", report.to_dict())


def test_restore_without_exact(temp_dir):
    """Test that the summary omits the true error when no exact spectrum is given."""
    out = temp_dir / "run"
    _selection(out)
    assert _run("simulate", "--out", temp_dir / "sim") == EXIT_OK
    config = temp_dir / "io.toml"
    config.write_text(
        DEFAULT_CONFIG_PATH.read_text().replace(
            'out = "speckit-run"', f'out = "{out}"\nmeasured = "{temp_dir / "sim" / "simulate" / "measured.csv"}"'
        )
    )
    assert _run("restore", "--config", config) == EXIT_OK
    summary = read_yaml(out / "restore" / "summary.yaml")
    assert "sigma_rel" not in summary
    assert summary["predicted_error"] == pytest.approx(0.25)
    assert not (out / "restore" / "validation.csv").exists()


def test_restore_decreasing_wavelengths(temp_dir, capsys):
    """Test that a measured file with decreasing wavelengths is a parse error."""
    out = temp_dir / "run"
    _selection(out)
    measured = temp_dir / "measured.csv"
    measured.write_text("".join(f"{650 - i}, 1.0\n" for i in range(201)))
    config = temp_dir / "io.toml"
    config.write_text(
        DEFAULT_CONFIG_PATH.read_text().replace('out = "speckit-run"', f'out = "{out}"\nmeasured = "{measured}"')
    )
    assert _run("restore", "--config", config) == EXIT_IO
    assert "increasing" in capsys.readouterr().err
    assert not (out / "restore").exists()


def test_restore_grid_mismatch(temp_dir, capsys):
    """Test that a measured spectrum on another grid names both grids."""
    out = temp_dir / "run"
    _selection(out)
    measured = temp_dir / "measured.csv"
    measured.write_text("".join(f"{400 + i}, 1.0\n" for i in range(101)))
    config = temp_dir / "io.toml"
    config.write_text(
        DEFAULT_CONFIG_PATH.read_text().replace('out = "speckit-run"', f'out = "{out}"\nmeasured = "{measured}"')
    )
    assert _run("restore", "--config", config) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "400" in err
    assert "450" in err
