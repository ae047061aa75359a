"""
Error envelope fitting for speckit.
The truncated-spectrum envelope eps(alpha), its minimizer, and estimation of the
truncation level g from training error curves (analytic contact iteration and
graphical scan).
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.optimize
import structlog

from .exceptions import (
    ContactRangeError,
    DimensionError,
    InfeasibleContactError,
    InvalidArgumentError,
    NoContactError,
    NoMinimumError,
)

logger = structlog.get_logger(__name__)

# Right-hand side of the minimum-existence condition: 3 sqrt(3) / 4.
MINIMUM_CONDITION_LIMIT = 3.0 * math.sqrt(3.0) / 4.0

DEFAULT_CONTACT_TOL = 1e-3


@dataclass(frozen=True)
class EnvelopeParams:
    """Envelope parameters: operator norm, data error eta and truncation level g."""
    norm_A: float
    eta: float
    g: float

    def __post_init__(self):
        for name in ("norm_A", "eta", "g"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (math.isfinite(self.norm_A) and self.norm_A >= 0):
            raise InvalidArgumentError(f"norm_A must be nonnegative, got {self.norm_A}")
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise InvalidArgumentError(f"eta must be nonnegative, got {self.eta}")
        if not (math.isfinite(self.g) and self.g > 0):
            raise InvalidArgumentError(f"truncation level g must be positive, got {self.g}")

    @property
    def data_error(self) -> float:
        return self.norm_A * self.eta

    def chi(self) -> float:
        return (self.data_error / (4.0 * self.g)) ** (2.0 / 3.0)


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    """Relative error sigma_rel tabulated on a strictly increasing log10(alpha) grid."""
    log10_alphas: np.ndarray
    sigmas: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        log10_alphas = np.array(self.log10_alphas, dtype=float)
        sigmas = np.array(self.sigmas, dtype=float)
        if log10_alphas.ndim != 1 or log10_alphas.shape != sigmas.shape or log10_alphas.size == 0:
            raise DimensionError(
                f"curve needs matching non-empty tabulations, got {log10_alphas.shape} "
                f"and {sigmas.shape}"
            )
        if not (np.all(np.isfinite(log10_alphas)) and np.all(np.diff(log10_alphas) > 0)):
            raise InvalidArgumentError("log10 alphas must be finite and strictly increasing")
        if not (np.all(np.isfinite(sigmas)) and np.all(sigmas >= 0)):
            raise InvalidArgumentError("relative errors must be finite and nonnegative")
        log10_alphas.setflags(write=False)
        sigmas.setflags(write=False)
        object.__setattr__(self, "log10_alphas", log10_alphas)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def alphas(self) -> np.ndarray:
        return 10.0 ** self.log10_alphas

    @property
    def alpha_range(self) -> Tuple[float, float]:
        return 10.0 ** self.log10_alphas[0], 10.0 ** self.log10_alphas[-1]

    def same_tabulation(self, other: "ErrorCurve") -> bool:
        return np.array_equal(self.log10_alphas, other.log10_alphas)

    def at(self, alpha: float) -> float:
        """Piecewise-linear interpolation in (log10 alpha, sigma)."""
        position = math.log10(alpha)
        if position < self.log10_alphas[0] - 1e-12 or position > self.log10_alphas[-1] + 1e-12:
            raise InvalidArgumentError(f"alpha={alpha:g} outside the tabulated range")
        return float(np.interp(position, self.log10_alphas, self.sigmas))


@dataclass
class ContactResult:
    """Fitted truncation level and the regularization parameter it selects."""
    g: float
    alpha_g: float
    epsilon_at_contact: float
    iterations: int
    converged: bool
    mode: str = "scan"
    contact_alpha: Optional[float] = None
    trace: List[Tuple[float, float]] = field(default_factory=list)
    envelope_family: Optional[pd.DataFrame] = None
    candidates: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "g": self.g,
            "alpha_g": self.alpha_g,
            "epsilon_at_contact": self.epsilon_at_contact,
            "contact_alpha": self.contact_alpha,
            "iterations": self.iterations,
            "candidates": self.candidates,
            "converged": self.converged,
            "trace": [{"alpha": a, "g": g} for a, g in self.trace],
        }


def envelope_value(alpha, p: EnvelopeParams):
    """eps(alpha) = norm_A eta / (2 sqrt(alpha)) + alpha / (alpha + g)"""
    alpha_arr = np.asarray(alpha, dtype=float)
    if np.any(~(alpha_arr > 0)):
        raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
    value = p.data_error / (2.0 * np.sqrt(alpha_arr)) + alpha_arr / (alpha_arr + p.g)
    return float(value) if value.ndim == 0 else value


def envelope_curve(log10_alphas: Sequence[float], p: EnvelopeParams, meta=None) -> ErrorCurve:
    log10_alphas = np.asarray(log10_alphas, dtype=float)
    return ErrorCurve(
        log10_alphas,
        envelope_value(10.0 ** log10_alphas, p),
        meta or {"source": "envelope", "norm_A": p.norm_A, "eta": p.eta, "g": p.g},
    )


def has_unique_minimum(p: EnvelopeParams) -> bool:
    """norm_A eta / sqrt(g) < 3 sqrt(3) / 4"""
    return p.data_error / math.sqrt(p.g) < MINIMUM_CONDITION_LIMIT


def minimize_envelope(p: EnvelopeParams) -> float:
    """
    Unique minimizer of eps(alpha).

    Solves alpha = chi (alpha + g)^{4/3} on (0, 3g], where the stationary point
    is a minimum.

    Raises:
        NoMinimumError: If the minimum-existence condition fails or eta * norm_A is zero
    """
    if not has_unique_minimum(p):
        raise NoMinimumError(
            f"norm_A*eta/sqrt(g) = {p.data_error / math.sqrt(p.g):.4g} is not below "
            f"{MINIMUM_CONDITION_LIMIT:.4g}; the envelope has no minimum"
        )
    if p.data_error == 0:
        raise NoMinimumError("with zero data error the envelope decreases to alpha -> 0")

    quarter = p.data_error / 4.0

    def stationarity(alpha: float) -> float:
        return p.g * alpha ** 1.5 / (alpha + p.g) ** 2 - quarter

    upper = 3.0 * p.g
    # The fixed point satisfies alpha >= chi g^{4/3}, so half of that is below the root.
    lower = 0.5 * p.chi() * p.g ** (4.0 / 3.0)
    alpha = scipy.optimize.brentq(
        stationarity, lower, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500
    )
    logger.debug("envelope_minimized", alpha=alpha, g=p.g, data_error=p.data_error)
    return float(alpha)


def optimal_alpha(curve: ErrorCurve) -> float:
    """Tabulated alpha at which sigma_rel is smallest."""
    return float(10.0 ** curve.log10_alphas[int(np.argmin(curve.sigmas))])


def _require_common_tabulation(curves: Sequence[ErrorCurve]) -> None:
    if not curves:
        raise InvalidArgumentError("at least one error curve is required")
    first = curves[0]
    for curve in curves[1:]:
        if not first.same_tabulation(curve):
            raise DimensionError("error curves are tabulated on different alpha grids")


def aggregate_upper(curves: Sequence[ErrorCurve]) -> ErrorCurve:
    """Pointwise maximum of the curves (upper boundary of the training band)."""
    _require_common_tabulation(curves)
    sigmas = np.max(np.vstack([c.sigmas for c in curves]), axis=0)
    return ErrorCurve(curves[0].log10_alphas, sigmas, {"curve_id": "upper", "members": len(curves)})


def aggregate_lower(curves: Sequence[ErrorCurve]) -> ErrorCurve:
    """Pointwise minimum of the curves (lower boundary of the training band)."""
    _require_common_tabulation(curves)
    sigmas = np.min(np.vstack([c.sigmas for c in curves]), axis=0)
    return ErrorCurve(curves[0].log10_alphas, sigmas, {"curve_id": "lower", "members": len(curves)})


def default_g_grid(count: int = 25, g_min: float = 1e-3, g_max: float = 1.0) -> np.ndarray:
    """Log-spaced truncation levels."""
    if count < 1 or not (0 < g_min <= g_max):
        raise InvalidArgumentError(f"invalid g grid: count={count}, range=[{g_min}, {g_max}]")
    return np.logspace(math.log10(g_min), math.log10(g_max), count)


def envelope_column(g: float) -> str:
    return f"epsilon_g_{g:.6g}"


def envelope_table(
    upper: ErrorCurve,
    g_grid: Sequence[float],
    norm_A: float,
    eta: float,
) -> pd.DataFrame:
    """Upper curve plus one envelope column per g."""
    table = pd.DataFrame({"log10_alpha": upper.log10_alphas, "sigma_rel": upper.sigmas})
    for g in g_grid:
        table[envelope_column(g)] = envelope_value(upper.alphas, EnvelopeParams(norm_A, eta, g))
    return table


def fit_g_scan(
    curves: Sequence[ErrorCurve],
    g_grid: Sequence[float],
    norm_A: float,
    eta: float,
    contact_tol: float = DEFAULT_CONTACT_TOL,
) -> ContactResult:
    """
    Largest g whose envelope dominates the upper boundary of the curves.

    Args:
        curves: Training error curves on a common alpha tabulation
        g_grid: Candidate truncation levels (> 0)
        norm_A: Operator norm
        eta: Relative data error
        contact_tol: Absolute amount by which domination may fail

    Returns:
        ContactResult: g, alpha_g = argmin of eps over the tabulation, and the envelope family

    Raises:
        NoContactError: If no g in the grid dominates the curves
    """
    upper = aggregate_upper(curves)
    gs = sorted({float(g) for g in g_grid})
    if not gs or gs[0] <= 0:
        raise InvalidArgumentError("g grid must contain positive values")

    alphas = upper.alphas
    feasible = []
    for g in gs:
        gap = envelope_value(alphas, EnvelopeParams(norm_A, eta, g)) - upper.sigmas
        if gap.min() >= -contact_tol:
            feasible.append(g)
    if not feasible:
        raise NoContactError(
            f"no g in [{gs[0]:g}, {gs[-1]:g}] yields an envelope above the error curves; "
            "widen the g grid towards smaller values"
        )

    g = feasible[-1]
    params = EnvelopeParams(norm_A, eta, g)
    epsilon = envelope_value(alphas, params)
    best = int(np.argmin(epsilon))
    touch = int(np.argmin(epsilon - upper.sigmas))
    logger.info(
        "g_scan_fitted",
        g=g,
        alpha_g=float(alphas[best]),
        contact_alpha=float(alphas[touch]),
        candidates=len(gs),
        feasible=len(feasible),
    )
    return ContactResult(
        g=g,
        alpha_g=float(alphas[best]),
        epsilon_at_contact=float(epsilon[touch]),
        iterations=0,
        converged=True,
        mode="scan",
        candidates=len(gs),
        contact_alpha=float(alphas[touch]),
        envelope_family=envelope_table(upper, gs, norm_A, eta),
    )


def fit_g_analytic(
    curve: ErrorCurve,
    norm_A: float,
    eta: float,
    tol: float = 1e-10,
    max_iter: int = 100,
    g_init: float = 0.1,
) -> ContactResult:
    """
    Solve the contact system by fixed-point iteration.

    alpha_0 = chi(g_init); alpha_i = chi(g_{i-1}) (alpha_{i-1} + g_{i-1})^{4/3};
    g_i = alpha_i [(sigma(alpha_i) - norm_A eta / (2 sqrt(alpha_i)))^{-1} - 1].
    Iterates leaving the tabulated range are clamped to its endpoint; two clamps in a
    row raise ContactRangeError.

    Raises:
        InfeasibleContactError: If sigma(alpha_i) does not exceed the data-error term
        ContactRangeError: If the iteration stays pinned outside the tabulation
    """
    if not (norm_A > 0 and eta > 0):
        raise InvalidArgumentError("analytic contact needs positive norm_A and eta")
    if not g_init > 0:
        raise InvalidArgumentError(f"g_init must be positive, got {g_init}")
    if max_iter < 1:
        raise InvalidArgumentError(f"max_iter must be at least 1, got {max_iter}")

    low, high = curve.alpha_range
    data_error = norm_A * eta

    def clamp(alpha: float) -> Tuple[float, bool]:
        if alpha < low:
            return low, True
        if alpha > high:
            return high, True
        return alpha, False

    def contact_g(alpha: float) -> float:
        sigma = curve.at(alpha)
        gap = sigma - data_error / (2.0 * math.sqrt(alpha))
        if gap <= 0 or gap >= 1:
            raise InfeasibleContactError(
                f"at alpha={alpha:.4g} sigma_rel={sigma:.4g} leaves no room for a positive g "
                f"(data-error term {data_error / (2.0 * math.sqrt(alpha)):.4g}); "
                "use the scan mode or widen the training band"
            )
        return alpha * (1.0 / gap - 1.0)

    def chi(g: float) -> float:
        return (data_error / (4.0 * g)) ** (2.0 / 3.0)

    alpha, pinned = clamp(chi(g_init))
    pinned_steps = int(pinned)
    g = contact_g(alpha)
    trace = [(alpha, g)]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        candidate, pinned = clamp(chi(g) * (alpha + g) ** (4.0 / 3.0))
        pinned_steps = pinned_steps + 1 if pinned else 0
        if pinned_steps >= 2:
            raise ContactRangeError(
                f"contact iteration pinned at alpha={candidate:g}, outside "
                f"[{low:g}, {high:g}]; extend the alpha tabulation"
            )
        g = contact_g(candidate)
        change = abs(candidate - alpha) / alpha
        alpha = candidate
        trace.append((alpha, g))
        if change < tol:
            converged = True
            break

    epsilon = envelope_value(alpha, EnvelopeParams(norm_A, eta, g))
    logger.info(
        "g_contact_fitted",
        g=g,
        alpha_g=alpha,
        iterations=iterations,
        converged=converged,
    )
    return ContactResult(
        g=g,
        alpha_g=alpha,
        epsilon_at_contact=epsilon,
        iterations=iterations,
        converged=converged,
        mode="analytic",
        contact_alpha=alpha,
        trace=trace,
    )
