"""
Spectral model for speckit.
Wavelength grids, spectra, the variable-width dispersion spread function and the
quadrature discretization of the forward integral operator.
"""

import math
import numbers
import threading
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from typing import Any, Mapping, NamedTuple, Optional

import numpy as np
import scipy.linalg
import structlog

from .base import ArrayLike, SpreadFunction
from .exceptions import DimensionError, InvalidArgumentError

logger = structlog.get_logger(__name__)

# Relative tolerance used when comparing grids read back from text files.
GRID_RTOL = 1e-9


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniform sampling start, start + step, ..., start + (count - 1) * step (nm)."""
    start: float
    step: float
    count: int

    def __post_init__(self):
        count = self.count
        if (
            isinstance(count, bool)
            or not isinstance(count, numbers.Real)
            or not math.isfinite(count)
            or int(count) != count
        ):
            raise InvalidArgumentError(f"grid count must be an integer, got {self.count!r}")
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "count", int(self.count))
        if not math.isfinite(self.start):
            raise InvalidArgumentError(f"grid start must be finite, got {self.start}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise InvalidArgumentError(f"grid step must be positive, got {self.step}")
        if self.count < 2:
            raise InvalidArgumentError(f"grid needs at least 2 nodes, got {self.count}")

    @classmethod
    def from_interval(cls, start: float, stop: float, step: float) -> "WavelengthGrid":
        """Closed interval [start, stop] with endpoint nodes."""
        if step <= 0:
            raise InvalidArgumentError(f"grid step must be positive, got {step}")
        steps = (stop - start) / step
        count = int(round(steps)) + 1
        if not math.isclose(steps, count - 1, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(steps))):
            raise InvalidArgumentError(
                f"interval [{start}, {stop}] is not a whole number of steps of {step}"
            )
        return cls(start=start, step=step, count=count)

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.step

    @cached_property
    def nodes(self) -> np.ndarray:
        return _readonly(self.start + self.step * np.arange(self.count, dtype=float))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal weights: h/2 at the end nodes, h inside."""
        weights = np.full(self.count, self.step)
        weights[0] = weights[-1] = 0.5 * self.step
        return _readonly(weights)

    def index_of(self, wavelength: float) -> int:
        """Index of the node equal to ``wavelength``."""
        position = (wavelength - self.start) / self.step
        index = int(round(position))
        if not (0 <= index < self.count) or abs(position - index) > 1e-9:
            raise InvalidArgumentError(f"{wavelength} nm is not a node of {self}")
        return index

    def matches(self, other: "WavelengthGrid") -> bool:
        """Equality up to text round-off."""
        return (
            self.count == other.count
            and math.isclose(self.start, other.start, rel_tol=GRID_RTOL, abs_tol=1e-12)
            and math.isclose(self.step, other.step, rel_tol=GRID_RTOL)
        )

    def describe(self) -> str:
        return f"[{self.start:g}, {self.stop:g}] nm step {self.step:g} ({self.count} nodes)"


class SpectrumKind(Enum):
    """Provenance tag of a spectrum"""
    EXACT = "exact"
    MEASURED = "measured"
    RESTORED = "restored"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Intensities attached to a wavelength grid."""
    grid: WavelengthGrid
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.EXACT
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.grid.count:
            raise DimensionError(
                f"spectrum has {values.size} values but grid {self.grid.describe()} "
                f"has {self.grid.count} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("spectrum values must be finite")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "kind", SpectrumKind(self.kind))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def wavelengths(self) -> np.ndarray:
        return self.grid.nodes

    def norm(self) -> float:
        """Quadrature-weighted L2 norm."""
        return weighted_norm(self.values, self.grid.weights)

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.grid, factor * self.values, self.kind, self.metadata)

    def plus(self, other: "Spectrum") -> "Spectrum":
        _require_same_grid(self.grid, other.grid, "spectrum addition")
        return Spectrum(self.grid, self.values + other.values, self.kind, self.metadata)

    def with_kind(self, kind: SpectrumKind, **metadata: Any) -> "Spectrum":
        return Spectrum(self.grid, self.values, kind, {**self.metadata, **metadata})


@dataclass(frozen=True)
class SpreadFunctionModel(SpreadFunction):
    """
    Dispersion (Lorentzian) spread function with width q * (1 + zeta) * lambda.

    The width is taken at the measured wavelength (first kernel argument), so the
    kernel is not a difference kernel.
    """
    q: float
    zeta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "zeta", float(self.zeta))
        if not (math.isfinite(self.q) and self.q > 0):
            raise InvalidArgumentError(f"width ratio q must be positive, got {self.q}")
        if not (math.isfinite(self.zeta) and self.width_factor > 0):
            raise InvalidArgumentError(
                f"effective width factor q*(1+zeta) must be positive, got {self.width_factor}"
            )

    @property
    def width_factor(self) -> float:
        return self.q * (1.0 + self.zeta)

    def perturbed(self, zeta: float) -> "SpreadFunctionModel":
        return SpreadFunctionModel(q=self.q, zeta=zeta)

    def width(self, wavelength: ArrayLike) -> ArrayLike:
        return self.width_factor * wavelength

    def kernel(self, wavelength: ArrayLike, wavelength_prime: ArrayLike) -> ArrayLike:
        omega = self.width(wavelength)
        return (omega / (2.0 * np.pi)) / ((wavelength - wavelength_prime) ** 2 + (omega / 2.0) ** 2)


def weighted_norm(values: np.ndarray, weights: np.ndarray) -> float:
    """sqrt(sum_i w_i v_i^2)"""
    return float(np.sqrt(np.sum(weights * np.square(values))))


def _require_same_grid(expected: WavelengthGrid, actual: WavelengthGrid, what: str) -> None:
    if not expected.matches(actual):
        raise DimensionError(
            f"{what}: grid mismatch, expected {expected.describe()}, got {actual.describe()}"
        )


def _require_positive_wavelength(wavelength: ArrayLike) -> None:
    if np.any(np.asarray(wavelength) <= 0):
        raise InvalidArgumentError(f"wavelength must be positive, got {wavelength}")


def sf_width(wavelength: float, model: SpreadFunctionModel) -> float:
    """Spread function width omega(lambda) = q * (1 + zeta) * lambda (nm)."""
    _require_positive_wavelength(wavelength)
    return model.width(wavelength)


def dispersion_kernel(
    wavelength: ArrayLike,
    wavelength_prime: ArrayLike,
    model: SpreadFunctionModel,
) -> ArrayLike:
    """Dispersion spread function K(lambda, lambda') in 1/nm."""
    _require_positive_wavelength(wavelength)
    return model.kernel(wavelength, wavelength_prime)


def peak_height(wavelength: float, model: SpreadFunctionModel) -> float:
    """K(lambda, lambda) = 2 / (pi * omega(lambda))."""
    return 2.0 / (np.pi * sf_width(wavelength, model))


def integral_width(omega: float) -> float:
    """Integral width W = area / height of a dispersion spread function of width omega."""
    if not omega > 0:
        raise InvalidArgumentError(f"width must be positive, got {omega}")
    return 0.5 * np.pi * omega


def kernel_cross_section(
    wavelength: float,
    grid: WavelengthGrid,
    model: SpreadFunctionModel,
    scale: float = 1.0,
) -> Spectrum:
    """scale * K(wavelength, lambda') sampled over ``grid``."""
    values = scale * dispersion_kernel(wavelength, grid.nodes, model)
    return Spectrum(
        grid,
        values,
        SpectrumKind.EXACT,
        {"provenance": "kernel_cross_section", "wavelength": wavelength, "scale": scale},
    )


class SingularTriples(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


class DiscreteOperator:
    """
    Quadrature-discretized integral operator.

    ``matrix[i, j] = quad_weights[j] * K(lambda_i, lambda'_j)``. Function norms are
    quadrature-weighted, so the operator acting between the weighted spaces is
    ``D_t^{1/2} M D_s^{-1/2}``; its singular triples are cached on first use.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        target_grid: WavelengthGrid,
        source_grid: WavelengthGrid,
        quad_weights: Optional[np.ndarray] = None,
        target_weights: Optional[np.ndarray] = None,
        model: Optional[SpreadFunctionModel] = None,
    ):
        matrix = np.array(matrix, dtype=float)
        if matrix.shape != (target_grid.count, source_grid.count):
            raise DimensionError(
                f"matrix shape {matrix.shape} does not match grids "
                f"({target_grid.count}, {source_grid.count})"
            )
        if not np.all(np.isfinite(matrix)):
            raise InvalidArgumentError("operator matrix must be finite")
        quad = source_grid.weights if quad_weights is None else np.array(quad_weights, float)
        target = target_grid.weights if target_weights is None else np.array(target_weights, float)
        if quad.shape != (source_grid.count,) or target.shape != (target_grid.count,):
            raise DimensionError("quadrature weights must have one entry per grid node")
        if np.any(quad <= 0) or np.any(target <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")

        self._matrix = _readonly(matrix)
        self._target_grid = target_grid
        self._source_grid = source_grid
        self._quad_weights = _readonly(quad)
        self._target_weights = _readonly(target)
        self._model = model
        self._lock = threading.Lock()
        self._svd: Optional[SingularTriples] = None
        self._normal: Optional[np.ndarray] = None

    @classmethod
    def from_matrix(
        cls,
        matrix: np.ndarray,
        quad_weights: Optional[np.ndarray] = None,
        target_weights: Optional[np.ndarray] = None,
    ) -> "DiscreteOperator":
        """Operator over index grids with unit weights unless given."""
        matrix = np.atleast_2d(np.array(matrix, dtype=float))
        rows, cols = matrix.shape
        if rows < 2 or cols < 2:
            raise InvalidArgumentError(f"operator grids need at least 2 nodes, got {matrix.shape}")
        return cls(
            matrix,
            WavelengthGrid(0.0, 1.0, rows),
            WavelengthGrid(0.0, 1.0, cols),
            quad_weights=np.ones(cols) if quad_weights is None else quad_weights,
            target_weights=np.ones(rows) if target_weights is None else target_weights,
        )

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def target_grid(self) -> WavelengthGrid:
        return self._target_grid

    @property
    def source_grid(self) -> WavelengthGrid:
        return self._source_grid

    @property
    def quad_weights(self) -> np.ndarray:
        return self._quad_weights

    @property
    def target_weights(self) -> np.ndarray:
        return self._target_weights

    @property
    def model(self) -> Optional[SpreadFunctionModel]:
        return self._model

    @property
    def shape(self):
        return self._matrix.shape

    @cached_property
    def weighted_matrix(self) -> np.ndarray:
        """D_t^{1/2} M D_s^{-1/2}"""
        weighted = (
            np.sqrt(self._target_weights)[:, None]
            * self._matrix
            / np.sqrt(self._quad_weights)[None, :]
        )
        return _readonly(weighted)

    def svd(self) -> SingularTriples:
        """Singular triples of the weighted matrix, computed at most once."""
        if self._svd is None:
            with self._lock:
                if self._svd is None:
                    u, s, vt = scipy.linalg.svd(self.weighted_matrix, full_matrices=False)
                    self._svd = SingularTriples(_readonly(u), _readonly(s), _readonly(vt))
                    logger.debug(
                        "operator_svd_cached",
                        shape=self.shape,
                        sigma_max=float(s[0]),
                        sigma_min=float(s[-1]),
                    )
        return self._svd

    def normal_matrix(self) -> np.ndarray:
        """B = W^T W for the weighted matrix W, computed at most once."""
        if self._normal is None:
            with self._lock:
                if self._normal is None:
                    weighted = self.weighted_matrix
                    self._normal = _readonly(weighted.T @ weighted)
        return self._normal

    def scaled(self, factor: float) -> "DiscreteOperator":
        return DiscreteOperator(
            factor * self._matrix,
            self._target_grid,
            self._source_grid,
            self._quad_weights,
            self._target_weights,
        )


def discretize_operator(
    target: WavelengthGrid,
    source: WavelengthGrid,
    model: SpreadFunctionModel,
) -> DiscreteOperator:
    """Trapezoidal discretization of the forward operator onto target x source nodes."""
    kernel = dispersion_kernel(target.nodes[:, None], source.nodes[None, :], model)
    matrix = kernel * source.weights[None, :]
    logger.debug(
        "operator_discretized",
        target=target.describe(),
        source=source.describe(),
        q=model.q,
        zeta=model.zeta,
    )
    return DiscreteOperator(matrix, target, source, model=model)


@lru_cache(maxsize=64)
def cached_operator(
    target: WavelengthGrid,
    source: WavelengthGrid,
    model: SpreadFunctionModel,
) -> DiscreteOperator:
    """Shared operator instance per (grids, model); operators are immutable."""
    return discretize_operator(target, source, model)


def forward_apply(op: DiscreteOperator, y: Spectrum) -> Spectrum:
    """Broaden ``y`` with the operator: values = matrix @ y."""
    _require_same_grid(op.source_grid, y.grid, "forward_apply")
    return Spectrum(
        op.target_grid,
        op.matrix @ y.values,
        SpectrumKind.MEASURED,
        {**y.metadata, "provenance": "forward_apply"},
    )


def operator_perturbation(base: DiscreteOperator, perturbed: DiscreteOperator) -> float:
    """Relative operator error ||A~ - A|| / ||A|| in the weighted spectral norm."""
    if base.shape != perturbed.shape:
        raise DimensionError(f"operator shapes differ: {base.shape} vs {perturbed.shape}")
    difference = perturbed.weighted_matrix - base.weighted_matrix
    norm_base = base.svd().s[0]
    if norm_base == 0:
        raise InvalidArgumentError("base operator has zero norm")
    return float(scipy.linalg.norm(difference, 2) / norm_base)
