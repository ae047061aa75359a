"""
Pipeline stages for speckit.
simulate -> train -> fit -> restore -> report, handing results over through files
under the output directory (one subdirectory per stage).
"""

import math
import shutil
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import pandas as pd
import structlog

from ..core.config import RunConfig
from ..core.envelope_fit import aggregate_lower, aggregate_upper, envelope_table
from ..core.exceptions import ArtifactError, DimensionError
from ..core.spectral_model import SpectrumKind, cached_operator, kernel_cross_section
from ..core.tikhonov_solver import ErrorBudget, classical_bound_curve
from ..core.training_lab import (
    SelectionReport,
    count_resolved_lines,
    make_original_example,
    restore_original,
    run_ensemble,
    select_from_curves,
    validation_curve,
)
from ..monitoring.logger import RunLogger
from .artifacts import (
    file_sha256,
    read_curves,
    read_spectrum,
    read_yaml,
    write_curves,
    write_spectrum,
    write_table,
    write_yaml,
)
from .manifest import STAGE_FILE, RunManifest, StageRecord, config_run_id, package_versions

logger = structlog.get_logger(__name__)

STAGES = ("simulate", "train", "fit", "restore")
KERNEL_SECTIONS = (485.0, 620.0)
KERNEL_SCALE = 10.0
BOUNDARY_IDS = ("upper", "lower")


def _out_dir(config: RunConfig) -> Path:
    return Path(config.io.out)


def _stage_dir(config: RunConfig, stage: str) -> Path:
    return _out_dir(config) / stage


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise ArtifactError(f"{path} not found; run `speckit {stage}` first")
    return path


@contextmanager
def stage_directory(config: RunConfig, stage: str) -> Iterator[Path]:
    """
    Working directory of a stage.

    Outputs are written to a hidden sibling and moved into place only when the stage
    succeeds, so a failed stage leaves no partial files behind.
    """
    out = _out_dir(config)
    final = out / stage
    partial = out / f".{stage}.partial"
    try:
        out.mkdir(parents=True, exist_ok=True)
        if partial.exists():
            shutil.rmtree(partial)
        partial.mkdir()
    except OSError as e:
        raise ArtifactError(f"cannot create output directory {out}: {str(e)}")
    try:
        yield partial
    except BaseException:
        shutil.rmtree(partial, ignore_errors=True)
        raise
    try:
        if final.exists():
            shutil.rmtree(final)
        partial.rename(final)
    except OSError as e:
        shutil.rmtree(partial, ignore_errors=True)
        raise ArtifactError(f"cannot finalize stage directory {final}: {str(e)}")


def _finish_stage(
    work: Path,
    stage: str,
    parameters: Dict,
    files: List[str],
    started: float,
    run_logger: Optional[RunLogger],
) -> None:
    write_yaml(work / STAGE_FILE, {"stage": stage, "parameters": parameters, "outputs": files})
    if run_logger is not None:
        run_logger.log_stage(stage, parameters, {"files": files}, time.perf_counter() - started)


def _final_paths(config: RunConfig, stage: str, files: List[str]) -> Dict[str, Path]:
    return {name: _stage_dir(config, stage) / name for name in files}


def cmd_simulate(config: RunConfig, run_logger: Optional[RunLogger] = None) -> Dict[str, Path]:
    """Exact, broadened and measured spectra of the original example plus two kernel sections."""
    started = time.perf_counter()
    target = config.grids.target_grid()
    source = config.grids.source_grid()
    model = config.kernel.model()
    original = make_original_example(
        config.example_lines(),
        config.example.noise_sd,
        config.seeds.example,
        target,
        source,
        model,
    )
    files = ["exact.csv", "broadened.csv", "measured.csv"]
    with stage_directory(config, "simulate") as work:
        write_spectrum(work / "exact.csv", original.exact)
        write_spectrum(work / "broadened.csv", original.broadened)
        write_spectrum(work / "measured.csv", original.measured)
        for wavelength in KERNEL_SECTIONS:
            name = f"kernel_{wavelength:g}.csv"
            write_spectrum(work / name, kernel_cross_section(wavelength, target, model, KERNEL_SCALE))
            files.append(name)

        parameters = {
            "lines": len(config.example.lines),
            "noise_sd": config.example.noise_sd,
            "seed": config.seeds.example,
            "q": config.kernel.q,
            "resolved_lines_exact": count_resolved_lines(original.exact),
            "resolved_lines_measured": count_resolved_lines(original.measured),
        }
        if original.broadened.norm() > 0:
            parameters["delta_rel"] = ErrorBudget.from_realized(
                original.broadened, original.measured
            ).delta_rel
        _finish_stage(work, "simulate", parameters, files, started, run_logger)
    return _final_paths(config, "simulate", files)


def cmd_train(
    config: RunConfig,
    n_jobs: int = 1,
    run_logger: Optional[RunLogger] = None,
) -> Dict[str, Path]:
    """Training curves with their boundaries and the envelope family."""
    started = time.perf_counter()
    spec = config.training_spec()
    ensemble = run_ensemble(spec, n_jobs=n_jobs)
    upper = aggregate_upper(ensemble.curves)
    lower = aggregate_lower(ensemble.curves)
    eta = ensemble.eta

    table = envelope_table(upper, config.fit.g_grid(), ensemble.norm_A, eta)
    table["classical_bound"] = classical_bound_curve(upper.alphas, ensemble.norm_A, ErrorBudget(eta, 0.0))

    files = ["curves.csv", "envelopes.csv", "ensemble.yaml"]
    with stage_directory(config, "train") as work:
        write_curves(work / "curves.csv", ensemble.curves + [upper, lower])
        write_table(work / "envelopes.csv", table)
        write_yaml(
            work / "ensemble.yaml",
            {
                "norm_A": ensemble.norm_A,
                "eta": eta,
                "eta_bound": ensemble.eta_bound,
                "members": len(ensemble.curves),
                "budgets": [
                    {
                        "curve_id": curve.meta["curve_id"],
                        "delta_rel": budget.delta_rel,
                        "xi_rel": budget.xi_rel,
                    }
                    for curve, budget in zip(ensemble.curves, ensemble.budgets)
                ],
            },
        )
        parameters = {
            "members": spec.n_members,
            "alphas": len(spec.alpha_grid),
            "norm_A": ensemble.norm_A,
            "eta": eta,
        }
        _finish_stage(work, "train", parameters, files, started, run_logger)
    return _final_paths(config, "train", files)


def cmd_fit(
    config: RunConfig,
    n_jobs: int = 1,
    run_logger: Optional[RunLogger] = None,
) -> Dict[str, Path]:
    """Fit g to the training curves and write selection.yaml."""
    started = time.perf_counter()
    train_dir = _stage_dir(config, "train")
    if not (train_dir / "curves.csv").is_file() or not (train_dir / "ensemble.yaml").is_file():
        logger.info("train_outputs_missing", action="regenerate", directory=str(train_dir))
        cmd_train(config, n_jobs=n_jobs, run_logger=run_logger)

    curves = [c for c in read_curves(train_dir / "curves.csv") if c.meta["curve_id"] not in BOUNDARY_IDS]
    ensemble = read_yaml(train_dir / "ensemble.yaml")
    report = select_from_curves(
        curves,
        float(ensemble["norm_A"]),
        float(ensemble["eta"]),
        config.fit.mode,
        **config.fit.options(),
    )
    if run_logger is not None:
        run_logger.log_selection(report)

    files = ["selection.yaml"]
    with stage_directory(config, "fit") as work:
        write_yaml(work / "selection.yaml", report.to_dict())
        parameters = {"mode": config.fit.mode, "g_count": config.fit.g_count, "tol": config.fit.tol}
        _finish_stage(work, "fit", parameters, files, started, run_logger)
    return _final_paths(config, "fit", files)


def cmd_restore(config: RunConfig, run_logger: Optional[RunLogger] = None) -> Dict[str, Path]:
    """Restore the measured spectrum at alpha_g and summarize the result."""
    started = time.perf_counter()
    out = _out_dir(config)
    report = SelectionReport.from_dict(read_yaml(_require(out / "fit" / "selection.yaml", "fit")))

    if config.io.measured is not None:
        measured_path = Path(config.io.measured)
        exact_path = Path(config.io.exact) if config.io.exact is not None else None
    else:
        measured_path = _require(out / "simulate" / "measured.csv", "simulate")
        exact_path = out / "simulate" / "exact.csv"

    measured = read_spectrum(measured_path, SpectrumKind.MEASURED)
    target = config.grids.target_grid()
    if not measured.grid.matches(target):
        raise DimensionError(
            f"measured spectrum grid {measured.grid.describe()} does not match the configured "
            f"target grid {target.describe()}"
        )
    op = cached_operator(target, config.grids.source_grid(), config.kernel.assumed_model())
    solution = restore_original(op, measured, report)

    summary = {
        "alpha_g": solution.alpha,
        "log10_alpha_g": math.log10(solution.alpha),
        "predicted_error": solution.error_estimate,
        "residual_norm": solution.residual_norm,
        "mode": report.mode,
        "g": report.g,
        "resolved_lines_measured": count_resolved_lines(measured),
        "resolved_lines_restored": count_resolved_lines(solution.spectrum),
    }
    files = ["restored.csv", "summary.yaml"]
    with stage_directory(config, "restore") as work:
        write_spectrum(work / "restored.csv", solution.spectrum)
        if exact_path is not None:
            exact = read_spectrum(exact_path, SpectrumKind.EXACT)
            summary["sigma_rel"] = solution.error_against(exact)
            summary["resolved_lines_exact"] = count_resolved_lines(exact)
            curve = validation_curve(op, measured, exact, config.alphas.values())
            write_table(
                work / "validation.csv",
                pd.DataFrame({"log10_alpha": curve.log10_alphas, "sigma_rel": curve.sigmas}),
            )
            files.append("validation.csv")
        write_yaml(work / "summary.yaml", summary)
        parameters = {"measured": str(measured_path), "exact": str(exact_path) if exact_path else None}
        _finish_stage(work, "restore", parameters, files, started, run_logger)

    logger.info("spectrum_restored", **{k: v for k, v in summary.items() if k != "mode"})
    return _final_paths(config, "restore", files)


def cmd_report(config: RunConfig, run_logger: Optional[RunLogger] = None) -> Dict[str, Path]:
    """Collate the stage outputs with a manifest of hashes, config, seeds and versions."""
    started = time.perf_counter()
    out = _out_dir(config)
    missing = [s for s in STAGES if not (out / s / STAGE_FILE).is_file()]
    if missing:
        raise ArtifactError(
            f"missing output of stage(s) {', '.join(missing)}; "
            f"run `speckit {missing[0]}` first"
        )

    records = [StageRecord.from_directory(out / stage) for stage in STAGES]
    inputs = {
        name: file_sha256(path)
        for name, path in (("measured", config.io.measured), ("exact", config.io.exact))
        if path is not None
    }
    config_dict = config.to_dict()
    manifest = RunManifest(
        run_id=config_run_id(config_dict),
        config=config_dict,
        stages=records,
        versions=package_versions(),
        inputs=inputs,
    )
    files = ["manifest.yaml"]
    with stage_directory(config, "report") as work:
        for stage in STAGES:
            shutil.copytree(out / stage, work / stage)
        manifest.save(work / "manifest.yaml")
        if run_logger is not None:
            run_logger.log_stage("report", {"run_id": manifest.run_id}, {"files": files},
                                 time.perf_counter() - started)
    return _final_paths(config, "report", files)


def run_pipeline(
    config: RunConfig,
    n_jobs: int = 1,
    run_logger: Optional[RunLogger] = None,
) -> Dict[str, Dict[str, Path]]:
    """All stages in order; output paths keyed by stage."""
    return {
        "simulate": cmd_simulate(config, run_logger),
        "train": cmd_train(config, n_jobs, run_logger),
        "fit": cmd_fit(config, n_jobs, run_logger),
        "restore": cmd_restore(config, run_logger),
        "report": cmd_report(config, run_logger),
    }
