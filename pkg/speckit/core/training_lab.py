"""
Training examples for speckit.
Generates "close" model examples (Gaussian line spectra, broadening, noise and
kernel-width perturbation), sweeps the regularization parameter, aggregates the
error curves and selects alpha_g for the original example.
"""

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.signal
import structlog
from joblib import Parallel, delayed

from .envelope_fit import (
    DEFAULT_CONTACT_TOL,
    ContactResult,
    EnvelopeParams,
    ErrorCurve,
    aggregate_lower,
    aggregate_upper,
    default_g_grid,
    envelope_value,
    fit_g_analytic,
    fit_g_scan,
    optimal_alpha,
)
from .exceptions import InvalidArgumentError
from .spectral_model import (
    DiscreteOperator,
    Spectrum,
    SpectrumKind,
    SpreadFunctionModel,
    WavelengthGrid,
    cached_operator,
    forward_apply,
)
from .tikhonov_solver import (
    ErrorBudget,
    RegularizedSolution,
    classical_bound,
    operator_norm,
    relative_error,
    solve_tikhonov,
)

logger = structlog.get_logger(__name__)

__all__ = [
    "GaussianLine",
    "TrainingSpec",
    "TrainingExample",
    "EnsembleResult",
    "SelectionReport",
    "OriginalExample",
    "StudyPoint",
    "synth_spectrum",
    "add_noise",
    "member_seed",
    "make_training_example",
    "sweep_alpha",
    "aggregate_upper",
    "aggregate_lower",
    "run_ensemble",
    "select_from_curves",
    "select_alpha",
    "restore_original",
    "make_original_example",
    "validation_curve",
    "count_resolved_lines",
    "regularization_study",
    "default_training_spec",
    "scale_lines",
]


@dataclass(frozen=True)
class GaussianLine:
    """Gaussian spectral line: amplitude * exp(-(x - center)^2 / (2 sigma^2))."""
    center: float
    amplitude: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidArgumentError(f"line width must be positive, got {self.sigma}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise InvalidArgumentError(f"line amplitude must be nonnegative, got {self.amplitude}")
        if not math.isfinite(self.center):
            raise InvalidArgumentError(f"line center must be finite, got {self.center}")


# (center nm, relative amplitude, sigma nm). Close pairs near 525 and 620 nm and weak
# lines near 507 and 543 nm; the 8- and 10-line variants merge / split those pairs.
# Training lines are narrower than the lines of the bundled example; their upper
# error curve lies above the example's.
NINE_LINES: Tuple[Tuple[float, float, float], ...] = (
    (507.0, 0.35, 2.0),
    (520.0, 0.90, 2.0),
    (530.0, 0.80, 2.0),
    (543.0, 0.30, 2.0),
    (560.0, 1.00, 2.0),
    (580.0, 0.70, 2.0),
    (600.0, 0.60, 2.0),
    (615.0, 0.85, 2.0),
    (625.0, 0.75, 2.0),
)
EIGHT_LINES = tuple(line for line in NINE_LINES if line[0] not in (520.0, 530.0)) + (
    (525.0, 1.00, 3.0),
)
TEN_LINES = tuple(line for line in NINE_LINES if line[0] not in (615.0, 625.0)) + (
    (612.0, 0.75, 2.0),
    (620.0, 0.55, 2.0),
    (628.0, 0.70, 2.0),
)
DEFAULT_LINE_SETS: Dict[str, Tuple[Tuple[float, float, float], ...]] = {
    "nine": NINE_LINES,
    "eight": tuple(sorted(EIGHT_LINES)),
    "ten": tuple(sorted(TEN_LINES)),
}

# Lines of the bundled example spectrum to restore.
EXAMPLE_LINES: Tuple[Tuple[float, float, float], ...] = (
    (506.0, 0.33, 3.2),
    (521.0, 0.88, 3.1),
    (531.0, 0.78, 3.0),
    (544.0, 0.32, 3.2),
    (561.0, 1.00, 4.2),
    (582.0, 0.68, 4.4),
    (601.0, 0.58, 3.6),
    (616.0, 0.83, 3.1),
    (626.0, 0.72, 3.0),
)

# Maps SD 0.01..0.04 onto a mean delta_rel of 0.5..2 % over the training line sets.
DEFAULT_AMPLITUDE_SCALE = 10.0

DEFAULT_Q = 0.015
DEFAULT_NOISE_SDS = (0.01, 0.02, 0.03, 0.04)
DEFAULT_ZETAS = (-0.02, 0.01, 0.04)
DEFAULT_SEEDS = (1, 2)
DEFAULT_LOG10_ALPHAS = np.linspace(-6.0, 0.0, 41)
TARGET_GRID = WavelengthGrid(450.0, 1.0, 201)
SOURCE_GRID = WavelengthGrid(460.0, 1.0, 181)


def scale_lines(
    table: Sequence[Sequence[float]],
    amplitude_scale: float = DEFAULT_AMPLITUDE_SCALE,
) -> Tuple[GaussianLine, ...]:
    """Lines from (center, relative amplitude, sigma) rows."""
    return tuple(GaussianLine(c, amplitude_scale * a, s) for c, a, s in table)


@dataclass(frozen=True, eq=False)
class TrainingSpec:
    """Ensemble definition: line sets x noise SDs x zeta values x seeds."""
    line_sets: Tuple[Tuple[GaussianLine, ...], ...]
    noise_sds: Tuple[float, ...]
    zeta_values: Tuple[float, ...]
    alpha_grid: np.ndarray
    seeds: Tuple[int, ...]
    target_grid: WavelengthGrid = TARGET_GRID
    source_grid: WavelengthGrid = SOURCE_GRID
    q: float = DEFAULT_Q
    line_set_names: Tuple[str, ...] = ()

    def __post_init__(self):
        line_sets = tuple(tuple(lines) for lines in self.line_sets)
        if not line_sets:
            raise InvalidArgumentError("training spec needs at least one line set")
        alphas = np.array(self.alpha_grid, dtype=float)
        if alphas.ndim != 1 or alphas.size < 2 or np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
            raise InvalidArgumentError("alpha grid must be positive and strictly increasing")
        alphas.setflags(write=False)
        if not self.noise_sds or any(not (sd > 0) for sd in self.noise_sds):
            raise InvalidArgumentError("noise SDs must be positive")
        if not self.zeta_values:
            raise InvalidArgumentError("at least one zeta value is required")
        if not self.seeds or any(int(s) < 0 for s in self.seeds):
            raise InvalidArgumentError("seeds must be nonnegative integers")
        names = tuple(self.line_set_names) or tuple(f"set{i}" for i in range(len(line_sets)))
        if len(names) != len(line_sets):
            raise InvalidArgumentError("one name per line set is required")
        for zeta in self.zeta_values:
            SpreadFunctionModel(self.q, zeta)
        object.__setattr__(self, "line_sets", line_sets)
        object.__setattr__(self, "alpha_grid", alphas)
        object.__setattr__(self, "noise_sds", tuple(float(sd) for sd in self.noise_sds))
        object.__setattr__(self, "zeta_values", tuple(float(z) for z in self.zeta_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "line_set_names", names)

    @property
    def n_members(self) -> int:
        return len(self.line_sets) * len(self.noise_sds) * len(self.zeta_values) * len(self.seeds)

    @property
    def log10_alphas(self) -> np.ndarray:
        return np.log10(self.alpha_grid)

    def base_model(self) -> SpreadFunctionModel:
        return SpreadFunctionModel(self.q, 0.0)

    def base_operator(self) -> DiscreteOperator:
        return cached_operator(self.target_grid, self.source_grid, self.base_model())

    def members(self) -> List[Tuple[int, int, int, int]]:
        return list(
            itertools.product(
                range(len(self.line_sets)),
                range(len(self.noise_sds)),
                range(len(self.zeta_values)),
                self.seeds,
            )
        )

    def scaled_errors(self, factor: float) -> "TrainingSpec":
        """Same ensemble with noise SDs and zeta values multiplied by ``factor``."""
        return replace(
            self,
            noise_sds=tuple(factor * sd for sd in self.noise_sds),
            zeta_values=tuple(factor * z for z in self.zeta_values),
        )


def default_training_spec(amplitude_scale: float = DEFAULT_AMPLITUDE_SCALE) -> TrainingSpec:
    """Default ensemble: 3 line sets x 4 SDs x 3 zetas x 2 seeds over 41 alphas."""
    return TrainingSpec(
        line_sets=tuple(scale_lines(t, amplitude_scale) for t in DEFAULT_LINE_SETS.values()),
        line_set_names=tuple(DEFAULT_LINE_SETS),
        noise_sds=DEFAULT_NOISE_SDS,
        zeta_values=DEFAULT_ZETAS,
        alpha_grid=10.0 ** DEFAULT_LOG10_ALPHAS,
        seeds=DEFAULT_SEEDS,
    )


class TrainingExample(NamedTuple):
    exact: Spectrum
    measured: Spectrum
    operator: DiscreteOperator
    budget: ErrorBudget
    seed: int


@dataclass
class EnsembleResult:
    """Error curves of every ensemble member with the realized error budgets."""
    curves: List[ErrorCurve]
    budgets: List[ErrorBudget]
    norm_A: float

    @property
    def eta(self) -> float:
        """Mean of delta_rel + xi_rel over the members; the error level the envelope is fitted at."""
        return float(np.mean([b.eta() for b in self.budgets]))

    @property
    def eta_bound(self) -> float:
        """max delta_rel + max xi_rel over the ensemble"""
        return max(b.delta_rel for b in self.budgets) + max(b.xi_rel for b in self.budgets)


@dataclass
class SelectionReport:
    """Selected regularization parameter with its predicted (envelope) error."""
    alpha_g: float
    g: float
    eta_used: float
    norm_A: float
    predicted_error: float
    mode: str = "scan"
    curve_bundle: List[ErrorCurve] = field(default_factory=list)
    upper_curve: Optional[ErrorCurve] = None
    lower_curve: Optional[ErrorCurve] = None
    alpha_opt: Optional[float] = None
    classical_bound: Optional[float] = None
    contact: Optional[ContactResult] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "mode": self.mode,
            "g": self.g,
            "alpha_g": self.alpha_g,
            "log10_alpha_g": math.log10(self.alpha_g),
            "predicted_error": self.predicted_error,
            "classical_bound": self.classical_bound,
            "alpha_opt": self.alpha_opt,
            "eta": self.eta_used,
            "norm_A": self.norm_A,
            "curves": len(self.curve_bundle),
        }
        if self.contact is not None:
            data["contact"] = self.contact.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SelectionReport":
        return cls(
            alpha_g=float(data["alpha_g"]),
            g=float(data["g"]),
            eta_used=float(data["eta"]),
            norm_A=float(data["norm_A"]),
            predicted_error=float(data["predicted_error"]),
            mode=data.get("mode", "scan"),
            alpha_opt=data.get("alpha_opt"),
            classical_bound=data.get("classical_bound"),
        )


def synth_spectrum(
    lines: Sequence[GaussianLine],
    grid: WavelengthGrid,
    kind: SpectrumKind = SpectrumKind.EXACT,
) -> Spectrum:
    """Sum of Gaussian lines sampled on ``grid``."""
    x = grid.nodes
    values = np.zeros(grid.count)
    for line in lines:
        values += line.amplitude * np.exp(-((x - line.center) ** 2) / (2.0 * line.sigma ** 2))
    return Spectrum(grid, values, kind, {"lines": len(lines)})


def add_noise(f: Spectrum, sd: float, seed: int) -> Spectrum:
    """Additive zero-mean Gaussian noise of standard deviation ``sd``; deterministic in ``seed``."""
    if not (math.isfinite(sd) and sd > 0):
        raise InvalidArgumentError(f"noise SD must be positive, got {sd}")
    rng = np.random.default_rng(seed)
    noisy = f.values + rng.normal(0.0, sd, size=f.grid.count)
    return Spectrum(f.grid, noisy, SpectrumKind.MEASURED, {**f.metadata, "noise_sd": sd, "seed": seed})


def member_seed(seed: int, line_set_index: int, noise_index: int, zeta_index: int) -> int:
    """Independent per-member stream derived from the member seed and its indices."""
    sequence = np.random.SeedSequence([int(seed), line_set_index, noise_index, zeta_index])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def make_training_example(
    spec: TrainingSpec,
    line_set_index: int,
    noise_index: int,
    zeta_index: int,
    seed: int,
) -> TrainingExample:
    """
    Build one training example.

    Data are broadened with the unperturbed operator (zeta = 0) and then noised; the
    returned operator carries the selected zeta and plays the role of A~.
    """
    for name, index, size in (
        ("line set", line_set_index, len(spec.line_sets)),
        ("noise", noise_index, len(spec.noise_sds)),
        ("zeta", zeta_index, len(spec.zeta_values)),
    ):
        if not 0 <= index < size:
            raise InvalidArgumentError(f"{name} index {index} out of range [0, {size})")

    exact = synth_spectrum(spec.line_sets[line_set_index], spec.source_grid)
    base = spec.base_operator()
    clean = forward_apply(base, exact)
    stream = member_seed(seed, line_set_index, noise_index, zeta_index)
    measured = add_noise(clean, spec.noise_sds[noise_index], stream)
    perturbed = cached_operator(
        spec.target_grid,
        spec.source_grid,
        spec.base_model().perturbed(spec.zeta_values[zeta_index]),
    )
    budget = ErrorBudget.from_realized(clean, measured, base, perturbed)
    return TrainingExample(exact, measured, perturbed, budget, stream)


def sweep_alpha(
    op: DiscreteOperator,
    f: Spectrum,
    y_exact: Spectrum,
    alpha_grid: Sequence[float],
    meta: Optional[Dict[str, Any]] = None,
) -> ErrorCurve:
    """sigma_rel(alpha) of the regularized solution over ``alpha_grid``."""
    alphas = np.asarray(alpha_grid, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0 or np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
        raise InvalidArgumentError("alpha grid must be positive and strictly increasing")
    if y_exact.norm() == 0:
        raise InvalidArgumentError("exact spectrum has zero norm")
    sigmas = [relative_error(solve_tikhonov(op, f, a).spectrum, y_exact) for a in alphas]
    return ErrorCurve(np.log10(alphas), sigmas, meta or {})


def _run_member(spec: TrainingSpec, li: int, ni: int, zi: int, seed: int):
    example = make_training_example(spec, li, ni, zi, seed)
    meta = {
        "curve_id": f"{spec.line_set_names[li]}-sd{spec.noise_sds[ni]:g}-z{spec.zeta_values[zi]:g}-s{seed}",
        "lines": len(spec.line_sets[li]),
        "noise_sd": spec.noise_sds[ni],
        "zeta": spec.zeta_values[zi],
        "seed": seed,
        "delta_rel": example.budget.delta_rel,
        "xi_rel": example.budget.xi_rel,
    }
    curve = sweep_alpha(example.operator, example.measured, example.exact, spec.alpha_grid, meta)
    return curve, example.budget


def run_ensemble(spec: TrainingSpec, n_jobs: Optional[int] = 1) -> EnsembleResult:
    """
    Sweep every ensemble member.

    Members run in parallel threads; results keep submission order so the output does
    not depend on completion order.
    """
    if spec.n_members == 0:
        raise InvalidArgumentError("training ensemble is empty")
    started = time.perf_counter()
    tasks = [delayed(_run_member)(spec, *member) for member in spec.members()]
    results = Parallel(n_jobs=n_jobs or 1, prefer="threads")(tasks)
    curves = [curve for curve, _ in results]
    budgets = [budget for _, budget in results]
    norm_A = operator_norm(spec.base_operator())
    logger.info(
        "ensemble_completed",
        members=len(curves),
        alphas=len(spec.alpha_grid),
        norm_A=norm_A,
        duration=time.perf_counter() - started,
    )
    return EnsembleResult(curves=curves, budgets=budgets, norm_A=norm_A)


def select_from_curves(
    curves: Sequence[ErrorCurve],
    norm_A: float,
    eta: float,
    mode: str = "scan",
    g_grid: Optional[Sequence[float]] = None,
    contact_tol: float = DEFAULT_CONTACT_TOL,
    tol: float = 1e-10,
    max_iter: int = 100,
    g_init: float = 0.1,
) -> SelectionReport:
    """Fit g to the upper boundary of ``curves`` and report alpha_g."""
    if not curves:
        raise InvalidArgumentError("no training curves to select from")
    upper = aggregate_upper(curves)
    lower = aggregate_lower(curves)
    if mode == "scan":
        grid = default_g_grid() if g_grid is None else g_grid
        contact = fit_g_scan(curves, grid, norm_A, eta, contact_tol)
    elif mode == "analytic":
        contact = fit_g_analytic(upper, norm_A, eta, tol=tol, max_iter=max_iter, g_init=g_init)
    else:
        raise InvalidArgumentError(f"unknown selection mode {mode!r}; use 'scan' or 'analytic'")

    params = EnvelopeParams(norm_A, eta, contact.g)
    report = SelectionReport(
        alpha_g=contact.alpha_g,
        g=contact.g,
        eta_used=eta,
        norm_A=norm_A,
        predicted_error=envelope_value(contact.alpha_g, params),
        mode=mode,
        curve_bundle=list(curves),
        upper_curve=upper,
        lower_curve=lower,
        alpha_opt=optimal_alpha(upper),
        classical_bound=classical_bound(contact.alpha_g, norm_A, ErrorBudget(eta, 0.0), 0.0),
        contact=contact,
    )
    logger.info(
        "alpha_selected",
        mode=mode,
        alpha_g=report.alpha_g,
        g=report.g,
        eta=eta,
        norm_A=norm_A,
        predicted_error=report.predicted_error,
    )
    return report


def select_alpha(
    spec: TrainingSpec,
    mode: str = "scan",
    n_jobs: Optional[int] = 1,
    **fit_options: Any,
) -> SelectionReport:
    """Run the ensemble, estimate eta and norm_A, and fit g in the requested mode."""
    ensemble = run_ensemble(spec, n_jobs=n_jobs)
    return select_from_curves(ensemble.curves, ensemble.norm_A, ensemble.eta, mode, **fit_options)


def restore_original(op: DiscreteOperator, f_P: Spectrum, report: SelectionReport) -> RegularizedSolution:
    """Regularized solution at alpha_g carrying the predicted error estimate."""
    solution = solve_tikhonov(op, f_P, report.alpha_g)
    return replace(solution, error_estimate=report.predicted_error)


class OriginalExample(NamedTuple):
    exact: Spectrum
    broadened: Spectrum
    measured: Spectrum
    operator: DiscreteOperator


def make_original_example(
    lines: Sequence[GaussianLine],
    noise_sd: float,
    seed: int,
    target_grid: WavelengthGrid = TARGET_GRID,
    source_grid: WavelengthGrid = SOURCE_GRID,
    model: SpreadFunctionModel = SpreadFunctionModel(DEFAULT_Q),
) -> OriginalExample:
    """Exact, broadened and noisy spectra of the original example."""
    op = cached_operator(target_grid, source_grid, model)
    exact = synth_spectrum(lines, source_grid)
    broadened = forward_apply(op, exact)
    measured = add_noise(broadened, noise_sd, seed)
    return OriginalExample(exact, broadened, measured, op)


def validation_curve(
    op: DiscreteOperator,
    f_P: Spectrum,
    y_P: Spectrum,
    alpha_grid: Sequence[float],
) -> ErrorCurve:
    """sigma_rel(alpha) of the original example; for illustration, never for selection."""
    return sweep_alpha(op, f_P, y_P, alpha_grid, {"curve_id": "original"})


def count_resolved_lines(
    spectrum: Spectrum,
    height_fraction: float = 0.1,
    prominence_fraction: float = 0.02,
) -> int:
    """Local maxima above ``height_fraction`` of the global maximum."""
    values = spectrum.values
    top = float(values.max())
    if top <= 0:
        return 0
    peaks, _ = scipy.signal.find_peaks(
        values,
        height=height_fraction * top,
        prominence=prominence_fraction * top,
    )
    return int(peaks.size)


@dataclass(frozen=True)
class StudyPoint:
    factor: float
    eta: float
    alpha_g: float
    g: float
    sigma_rel: float


def regularization_study(
    spec: TrainingSpec,
    factors: Sequence[float],
    example_lines: Sequence[GaussianLine],
    example_sd: float,
    example_seed: int,
    mode: str = "scan",
    n_jobs: Optional[int] = 1,
    **fit_options: Any,
) -> List[StudyPoint]:
    """
    Selected-alpha restoration error as the data errors shrink.

    Noise SDs and zeta values of the ensemble, and the noise of the original example,
    are all multiplied by each factor.
    """
    points = []
    for factor in factors:
        if not factor > 0:
            raise InvalidArgumentError(f"error scale factors must be positive, got {factor}")
        report = select_alpha(spec.scaled_errors(factor), mode=mode, n_jobs=n_jobs, **fit_options)
        original = make_original_example(
            example_lines,
            factor * example_sd,
            example_seed,
            spec.target_grid,
            spec.source_grid,
            spec.base_model(),
        )
        restored = restore_original(original.operator, original.measured, report)
        point = StudyPoint(
            factor=factor,
            eta=report.eta_used,
            alpha_g=report.alpha_g,
            g=report.g,
            sigma_rel=restored.error_against(original.exact),
        )
        logger.info("study_point", **point.__dict__)
        points.append(point)
    return points
