"""
Zero-order Tikhonov regularization for speckit.
Regularized solves, operator norms, the classical error bounds and relative errors.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import structlog

from .exceptions import DimensionError, InvalidArgumentError, SolverBreakdownError
from .spectral_model import (
    DiscreteOperator,
    Spectrum,
    SpectrumKind,
    operator_perturbation,
    weighted_norm,
)

logger = structlog.get_logger(__name__)

NORM_CONVENTION = "weighted L2: largest singular value of D_t^1/2 M D_s^-1/2"


@dataclass(frozen=True)
class ErrorBudget:
    """Relative data errors: right-hand side (delta_rel) and operator (xi_rel)."""
    delta_rel: float = 0.0
    xi_rel: float = 0.0

    def __post_init__(self):
        for name in ("delta_rel", "xi_rel"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value >= 0):
                raise InvalidArgumentError(f"{name} must be a nonnegative number, got {value}")
            object.__setattr__(self, name, value)

    def eta(self) -> float:
        return self.delta_rel + self.xi_rel

    @classmethod
    def from_realized(
        cls,
        f_exact: Spectrum,
        f_noisy: Spectrum,
        op_base: Optional[DiscreteOperator] = None,
        op_perturbed: Optional[DiscreteOperator] = None,
    ) -> "ErrorBudget":
        """Budget measured from generated data and operators."""
        norm_f = f_exact.norm()
        if norm_f == 0:
            raise InvalidArgumentError("exact right-hand side has zero norm")
        delta = weighted_norm(f_noisy.values - f_exact.values, f_exact.grid.weights) / norm_f
        xi = 0.0
        if op_base is not None and op_perturbed is not None:
            xi = operator_perturbation(op_base, op_perturbed)
        return cls(delta_rel=delta, xi_rel=xi)


@dataclass(frozen=True, eq=False)
class RegularizedSolution:
    """Regularized solution y_alpha with its residual and optional error estimate."""
    alpha: float
    spectrum: Spectrum
    residual_norm: float
    error_estimate: Optional[float] = None

    def error_against(self, y_exact: Spectrum) -> float:
        return relative_error(self.spectrum, y_exact)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (math.isfinite(alpha) and alpha > 0):
        raise InvalidArgumentError(f"regularization parameter must be positive, got {alpha}")
    return alpha


def _check_rhs(op: DiscreteOperator, f: Spectrum) -> None:
    if not op.target_grid.matches(f.grid):
        raise DimensionError(
            f"right-hand side grid {f.grid.describe()} does not match operator target grid "
            f"{op.target_grid.describe()}"
        )


def _finish(op: DiscreteOperator, f: Spectrum, alpha: float, z: np.ndarray) -> RegularizedSolution:
    if not np.all(np.isfinite(z)):
        raise SolverBreakdownError(f"regularized solve produced non-finite values at alpha={alpha:g}")
    values = z / np.sqrt(op.quad_weights)
    residual = weighted_norm(op.matrix @ values - f.values, op.target_weights)
    spectrum = Spectrum(
        op.source_grid,
        values,
        SpectrumKind.RESTORED,
        {"alpha": alpha, "provenance": "tikhonov"},
    )
    return RegularizedSolution(alpha=alpha, spectrum=spectrum, residual_norm=residual)


def solve_tikhonov(op: DiscreteOperator, f: Spectrum, alpha: float) -> RegularizedSolution:
    """
    Solve (alpha E + B) y_alpha = A* f in the quadrature-weighted spaces.

    Args:
        op: Discretized operator
        f: Right-hand side on the operator's target grid
        alpha: Regularization parameter (> 0)

    Returns:
        RegularizedSolution: restored spectrum on the source grid

    Raises:
        InvalidArgumentError: If alpha is not positive
        DimensionError: If f is not on the target grid
        SolverBreakdownError: If the factorization fails or yields non-finite values
    """
    alpha = _check_alpha(alpha)
    _check_rhs(op, f)
    system = op.normal_matrix() + alpha * np.eye(op.shape[1])
    rhs = op.weighted_matrix.T @ (np.sqrt(op.target_weights) * f.values)
    try:
        factor = scipy.linalg.cho_factor(system, lower=False, check_finite=True)
        z = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolverBreakdownError(f"Cholesky solve failed at alpha={alpha:g}: {str(e)}")
    return _finish(op, f, alpha, z)


def filter_factors(op: DiscreteOperator, alpha: float) -> np.ndarray:
    """sigma_i / (sigma_i^2 + alpha) for every singular value of the operator."""
    alpha = _check_alpha(alpha)
    s = op.svd().s
    return s / (s * s + alpha)


def solve_tikhonov_svd(op: DiscreteOperator, f: Spectrum, alpha: float) -> RegularizedSolution:
    """Filter-factor form of the regularized solution (reference path)."""
    alpha = _check_alpha(alpha)
    _check_rhs(op, f)
    u, s, vt = op.svd()
    coefficients = u.T @ (np.sqrt(op.target_weights) * f.values)
    z = vt.T @ (filter_factors(op, alpha) * coefficients)
    return _finish(op, f, alpha, z)


def operator_norm(op: DiscreteOperator) -> float:
    """||A|| under the weighted L2 convention."""
    norm = float(op.svd().s[0])
    logger.debug("operator_norm", value=norm, convention=NORM_CONVENTION)
    return norm


def min_singular_of_B(op: DiscreteOperator) -> float:
    """Smallest eigenvalue of B = A*A (zero when A has fewer rows than columns)."""
    rows, cols = op.shape
    if rows < cols:
        return 0.0
    return float(op.svd().s[-1] ** 2)


def classical_bound(alpha: float, norm_A: float, budget: ErrorBudget, mu_min: float) -> float:
    """norm_A / (2 sqrt(alpha)) * eta + alpha / (alpha + mu_min)"""
    alpha = _check_alpha(alpha)
    if mu_min < 0:
        raise InvalidArgumentError(f"mu_min must be nonnegative, got {mu_min}")
    return norm_A / (2.0 * math.sqrt(alpha)) * budget.eta() + alpha / (alpha + mu_min)


def classical_bound_curve(
    alphas: np.ndarray,
    norm_A: float,
    budget: ErrorBudget,
    mu_min: float = 0.0,
) -> np.ndarray:
    """classical_bound tabulated over ``alphas``."""
    return np.array([classical_bound(a, norm_A, budget, mu_min) for a in np.asarray(alphas)])


def relative_error(y_alpha: Spectrum, y_exact: Spectrum) -> float:
    """||y_alpha - y|| / ||y|| in the quadrature-weighted norm."""
    if not y_exact.grid.matches(y_alpha.grid):
        raise DimensionError(
            f"cannot compare spectra on {y_alpha.grid.describe()} and {y_exact.grid.describe()}"
        )
    weights = y_exact.grid.weights
    norm_exact = weighted_norm(y_exact.values, weights)
    if norm_exact == 0:
        raise InvalidArgumentError("exact spectrum has zero norm")
    return weighted_norm(y_alpha.values - y_exact.values, weights) / norm_exact
