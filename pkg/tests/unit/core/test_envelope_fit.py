import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import optimize

from speckit.core.envelope_fit import (
    MINIMUM_CONDITION_LIMIT,
    EnvelopeParams,
    ErrorCurve,
    aggregate_lower,
    aggregate_upper,
    default_g_grid,
    envelope_column,
    envelope_curve,
    envelope_table,
    envelope_value,
    fit_g_analytic,
    fit_g_scan,
    has_unique_minimum,
    minimize_envelope,
    optimal_alpha,
)
from speckit.core.exceptions import (
    ContactRangeError,
    DimensionError,
    InfeasibleContactError,
    InvalidArgumentError,
    NoContactError,
    NoMinimumError,
)

REFERENCE = EnvelopeParams(norm_A=0.843, eta=0.02, g=0.045)
DENSE_LOG10 = np.linspace(-6.0, 0.0, 2401)


def _golden_minimum(p: EnvelopeParams) -> float:
    result = optimize.minimize_scalar(
        lambda x: envelope_value(10.0 ** x, p),
        bracket=(-6.0, -2.5, 0.0),
        method="golden",
        tol=1e-12,
    )
    return 10.0 ** result.x


def test_envelope_value_reference():
    """Test the envelope at the reference parameters."""
    assert envelope_value(10 ** -2.2, REFERENCE) == pytest.approx(0.229, abs=1e-3)


def test_envelope_vectorized():
    """Test array evaluation."""
    alphas = np.array([1e-4, 1e-2, 1.0])
    np.testing.assert_allclose(envelope_value(alphas, REFERENCE), [envelope_value(a, REFERENCE) for a in alphas])
    with pytest.raises(InvalidArgumentError):
        envelope_value(0.0, REFERENCE)


def test_envelope_without_data_error():
    """Test eps = alpha / (alpha + g) when eta = 0."""
    p = EnvelopeParams(0.843, 0.0, 0.045)
    values = envelope_value(10.0 ** DENSE_LOG10, p)
    assert np.all(np.diff(values) > 0)
    assert envelope_value(1e8, p) < 1.0
    assert envelope_value(1e8, p) == pytest.approx(1.0, abs=1e-8)


@given(
    alpha=st.floats(min_value=1e-8, max_value=10.0),
    g1=st.floats(min_value=1e-4, max_value=1.0),
    g2=st.floats(min_value=1e-4, max_value=1.0),
)
def test_envelope_decreases_in_g(alpha, g1, g2):
    """Test that eps is strictly decreasing in g at fixed alpha."""
    low, high = sorted((g1, g2))
    assume(high > 1.001 * low)
    assert envelope_value(alpha, EnvelopeParams(0.843, 0.02, low)) > envelope_value(
        alpha, EnvelopeParams(0.843, 0.02, high)
    )


def test_params_validation():
    """Test envelope parameter checks."""
    with pytest.raises(InvalidArgumentError):
        EnvelopeParams(0.843, 0.02, 0.0)
    with pytest.raises(InvalidArgumentError):
        EnvelopeParams(0.843, -0.02, 0.045)


def test_minimum_condition():
    """Test the minimum-existence condition."""
    assert REFERENCE.data_error / math.sqrt(REFERENCE.g) == pytest.approx(0.0795, abs=1e-3)
    assert MINIMUM_CONDITION_LIMIT == pytest.approx(1.299, abs=1e-3)
    assert has_unique_minimum(REFERENCE)
    assert has_unique_minimum(EnvelopeParams(0.843, 0.0, 1e-6))
    assert not has_unique_minimum(EnvelopeParams(2.0, 1.0, 1.0))


def test_minimize_envelope_reference():
    """Test the envelope minimizer against golden-section search."""
    alpha = minimize_envelope(REFERENCE)
    assert alpha == pytest.approx(3.7e-3, rel=0.03)
    assert alpha == pytest.approx(_golden_minimum(REFERENCE), rel=1e-4)


def test_minimizer_satisfies_stationarity():
    """Test alpha = chi (alpha + g)^{4/3} and a local minimum at alpha."""
    alpha = minimize_envelope(REFERENCE)
    rhs = REFERENCE.chi() * (alpha + REFERENCE.g) ** (4.0 / 3.0)
    assert abs(alpha - rhs) / alpha < 1e-8
    assert envelope_value(1.01 * alpha, REFERENCE) > envelope_value(alpha, REFERENCE)
    assert envelope_value(0.99 * alpha, REFERENCE) > envelope_value(alpha, REFERENCE)


def test_chi_scaling():
    """Test that four times eta scales chi by 4^{2/3}."""
    scaled = EnvelopeParams(REFERENCE.norm_A, 4 * REFERENCE.eta, REFERENCE.g)
    assert scaled.chi() / REFERENCE.chi() == pytest.approx(4 ** (2.0 / 3.0))


def test_minimizer_vanishes_with_eta():
    """Test alpha* -> 0 as eta -> 0."""
    values = [minimize_envelope(EnvelopeParams(0.843, eta, 0.045)) for eta in (2e-2, 2e-4, 2e-6, 2e-8)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-5


def test_minimize_envelope_errors():
    """Test the no-minimum cases."""
    with pytest.raises(NoMinimumError):
        minimize_envelope(EnvelopeParams(2.0, 1.0, 1.0))
    with pytest.raises(NoMinimumError):
        minimize_envelope(EnvelopeParams(0.843, 0.0, 0.045))


def test_error_curve_validation():
    """Test error curve invariants."""
    with pytest.raises(DimensionError):
        ErrorCurve([0.0, 1.0], [0.1])
    with pytest.raises(InvalidArgumentError):
        ErrorCurve([0.0, 0.0], [0.1, 0.2])
    with pytest.raises(InvalidArgumentError):
        ErrorCurve([0.0, 1.0], [0.1, -0.2])
    curve = ErrorCurve([-2.0, 0.0], [0.2, 0.4])
    assert curve.at(0.1) == pytest.approx(0.3)
    with pytest.raises(InvalidArgumentError):
        curve.at(10.0)


def test_analytic_fit_self_consistency():
    """Test that fitting an exact envelope returns its own parameters."""
    curve = envelope_curve(DENSE_LOG10, REFERENCE)
    result = fit_g_analytic(curve, REFERENCE.norm_A, REFERENCE.eta)
    assert result.converged
    assert result.iterations <= 100
    assert result.g == pytest.approx(REFERENCE.g, rel=0.02)
    assert result.alpha_g == pytest.approx(minimize_envelope(REFERENCE), rel=0.02)
    assert result.alpha_g == pytest.approx(_golden_minimum(REFERENCE), rel=0.01)
    assert result.mode == "analytic"
    assert len(result.trace) == result.iterations + 1


def test_analytic_fit_impossible_tolerance():
    """Test that tol = 0 runs to max_iter without convergence."""
    curve = envelope_curve(DENSE_LOG10, REFERENCE)
    result = fit_g_analytic(curve, REFERENCE.norm_A, REFERENCE.eta, tol=0.0, max_iter=15)
    assert not result.converged
    assert result.iterations == 15


def test_analytic_fit_infeasible():
    """Test a curve lying below the data-error term."""
    curve = ErrorCurve(DENSE_LOG10, np.full(DENSE_LOG10.size, 1e-4))
    with pytest.raises(InfeasibleContactError):
        fit_g_analytic(curve, REFERENCE.norm_A, REFERENCE.eta)


def test_analytic_fit_leaves_range():
    """Test iterates pinned outside a narrow tabulation."""
    curve = envelope_curve(np.linspace(-1.0, 0.0, 101), REFERENCE)
    with pytest.raises(ContactRangeError):
        fit_g_analytic(curve, REFERENCE.norm_A, REFERENCE.eta)


def test_analytic_fit_argument_checks():
    """Test argument validation."""
    curve = envelope_curve(DENSE_LOG10, REFERENCE)
    with pytest.raises(InvalidArgumentError):
        fit_g_analytic(curve, REFERENCE.norm_A, 0.0)
    with pytest.raises(InvalidArgumentError):
        fit_g_analytic(curve, REFERENCE.norm_A, REFERENCE.eta, max_iter=0)


def test_scan_fit_self_consistency():
    """Test that the scan recovers a g taken from its grid."""
    grid = default_g_grid()
    g0 = float(grid[10])
    log10_alphas = np.linspace(-6.0, 0.0, 41)
    curve = envelope_curve(log10_alphas, EnvelopeParams(0.843, 0.02, g0))
    result = fit_g_scan([curve], grid, 0.843, 0.02)
    assert result.g == pytest.approx(g0, rel=1e-12)
    epsilon = envelope_value(curve.alphas, EnvelopeParams(0.843, 0.02, result.g))
    assert result.alpha_g == pytest.approx(curve.alphas[int(np.argmin(epsilon))])
    assert result.converged
    assert result.iterations == 0
    assert result.candidates == len(grid)
    assert result.to_dict()["candidates"] == len(grid)
    assert envelope_column(g0) in result.envelope_family.columns


def test_scan_fit_dominates_curves():
    """Test that the fitted envelope lies above every curve."""
    log10_alphas = np.linspace(-6.0, 0.0, 41)
    curves = [
        envelope_curve(log10_alphas, EnvelopeParams(0.843, 0.02, g)) for g in (0.03, 0.06, 0.2)
    ]
    result = fit_g_scan(curves, default_g_grid(), 0.843, 0.02, contact_tol=0.0)
    epsilon = envelope_value(10.0 ** log10_alphas, EnvelopeParams(0.843, 0.02, result.g))
    for curve in curves:
        assert np.all(epsilon >= curve.sigmas - 1e-12)
    assert result.g <= 0.03


def test_scan_fit_no_contact():
    """Test that a huge g never dominates."""
    curve = envelope_curve(np.linspace(-6.0, 0.0, 41), REFERENCE)
    with pytest.raises(NoContactError):
        fit_g_scan([curve], [1e6], REFERENCE.norm_A, REFERENCE.eta)
    with pytest.raises(InvalidArgumentError):
        fit_g_scan([curve], [], REFERENCE.norm_A, REFERENCE.eta)


def test_aggregate_boundaries():
    """Test upper and lower boundaries of a curve family."""
    log10_alphas = np.linspace(-3.0, 0.0, 4)
    low = ErrorCurve(log10_alphas, [0.1, 0.2, 0.3, 0.4])
    high = ErrorCurve(log10_alphas, [0.2, 0.1, 0.5, 0.3])
    np.testing.assert_array_equal(aggregate_upper([low]).sigmas, low.sigmas)
    np.testing.assert_array_equal(aggregate_lower([low]).sigmas, low.sigmas)
    np.testing.assert_array_equal(aggregate_upper([low, high]).sigmas, [0.2, 0.2, 0.5, 0.4])
    np.testing.assert_array_equal(aggregate_lower([low, high]).sigmas, [0.1, 0.1, 0.3, 0.3])
    assert aggregate_upper([low, high]).meta["curve_id"] == "upper"


def test_aggregate_rejects_mismatched_tabulation():
    """Test aggregation over different alpha grids."""
    a = ErrorCurve([-1.0, 0.0], [0.1, 0.2])
    b = ErrorCurve([-2.0, 0.0], [0.1, 0.2])
    with pytest.raises(DimensionError):
        aggregate_upper([a, b])
    with pytest.raises(InvalidArgumentError):
        aggregate_upper([])


def test_envelope_table_columns():
    """Test the envelope export table."""
    upper = envelope_curve(np.linspace(-6.0, 0.0, 41), REFERENCE)
    table = envelope_table(upper, [0.01, 0.045], REFERENCE.norm_A, REFERENCE.eta)
    assert list(table.columns) == ["log10_alpha", "sigma_rel", "epsilon_g_0.01", "epsilon_g_0.045"]
    np.testing.assert_allclose(table["epsilon_g_0.045"], upper.sigmas)


def test_optimal_alpha():
    """Test the tabulated argmin."""
    curve = ErrorCurve([-3.0, -2.0, -1.0], [0.3, 0.1, 0.2])
    assert optimal_alpha(curve) == pytest.approx(1e-2)


def test_default_g_grid():
    """Test the default truncation-level grid."""
    grid = default_g_grid()
    assert grid.size == 25
    assert grid[0] == pytest.approx(1e-3)
    assert grid[-1] == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        default_g_grid(0)
