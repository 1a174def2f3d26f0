"""
Tests for the discrete Caputo derivative and Riemann-Liouville integral
"""
import logging
import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import erfcx

from src.errors import GridError, ParameterError
from src.fracops import (
    caputo_l1,
    extrapolate_initial,
    fractional_power,
    l1_solve_linear,
    l1_weights,
    rl_integral,
    rl_weights,
)
from src.schemas import FracKind, MLParams, TimeGrid
from src.specfun import mittag_leffler_array

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def test_l1_weights():
    """b_j = (j+1)^(1-alpha) - j^(1-alpha): positive, decreasing, b_0 = 1"""
    w = l1_weights(0.4, 10)
    assert w.kind == FracKind.CAPUTO_L1
    assert len(w.coefficients) == 10
    assert w.coefficients[0] == pytest.approx(1.0)
    assert np.all(np.diff(w.coefficients) < 0.0)
    assert np.sum(w.coefficients) == pytest.approx(10.0 ** 0.6)
    with pytest.raises(ParameterError):
        l1_weights(1.0, 4)
    with pytest.raises(ParameterError):
        l1_weights(0.5, 0)


def test_rl_weights_end_value():
    w = rl_weights(0.5, 6)
    assert w.kind == FracKind.RL_TRAPEZOID
    assert w.coefficients[-1] == 1.0
    assert np.all(w.coefficients > 0.0)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_power_rules_exact_for_linear_data(alpha):
    """L1 and product trapezoid are exact on v = t"""
    grid = TimeGrid(T=1.0, nt=33)
    t = grid.nodes
    np.testing.assert_allclose(caputo_l1(t, grid, alpha)[1:], fractional_power(1.0, alpha, t[1:]), rtol=1e-12)
    np.testing.assert_allclose(
        rl_integral(t, grid, alpha), fractional_power(1.0, alpha, t, kind="integral"), rtol=1e-12, atol=1e-15
    )
    np.testing.assert_allclose(
        rl_integral(np.ones_like(t), grid, alpha), t ** alpha / math.gamma(1.0 + alpha), rtol=1e-12, atol=1e-15
    )


def test_caputo_of_constant_and_first_row():
    grid = TimeGrid(T=1.0, nt=9)
    out = caputo_l1(np.full(9, 3.0), grid, 0.5)
    assert np.isnan(out[0])
    np.testing.assert_array_equal(out[1:], 0.0)
    assert np.all(fractional_power(0.0, 0.5, grid.nodes) == 0.0)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_integral_inverts_derivative(alpha):
    """J^alpha (D^alpha v) = v - v(0) for v = 1 + t^2 within 10 dt^(2-alpha)"""
    logger.info(f"Testing J(D v) identity for alpha={alpha}...")
    grid = TimeGrid(T=1.0, nt=257)
    v = 1.0 + grid.nodes ** 2
    derivative = caputo_l1(v, grid, alpha)
    derivative[0] = 0.0
    recovered = rl_integral(derivative, grid, alpha)
    error = float(np.max(np.abs(recovered - (v - v[0]))))
    assert error <= 10.0 * grid.dt ** (2.0 - alpha)
    logger.info(f"✓ max error {error:.3e}")


def test_semigroup():
    """J^a J^b v = J^(a+b) v on v = t"""
    grid = TimeGrid(T=1.0, nt=257)
    t = grid.nodes
    twice = rl_integral(rl_integral(t, grid, 0.3), grid, 0.4)
    np.testing.assert_allclose(twice, fractional_power(1.0, 0.7, t, kind="integral"), atol=1e-4)


def test_semigroup_under_refinement():
    """J^0.3 J^0.4 sin t approaches J^0.7 sin t as the grid is refined"""
    errors = []
    for nt in (65, 129, 257):
        grid = TimeGrid(T=1.0, nt=nt)
        v = np.sin(grid.nodes)
        twice = rl_integral(rl_integral(v, grid, 0.4), grid, 0.3)
        once = rl_integral(v, grid, 0.7)
        errors.append(float(np.max(np.abs(twice - once))))
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-3
    logger.info(f"✓ semigroup defects {['%.2e' % e for e in errors]}")


def test_discrete_energy_inequality():
    """w (D w) >= D(w^2) / 2 node by node, so also after integration in x"""
    grid = TimeGrid(T=1.0, nt=65)
    t = grid.nodes[:, None]
    x = np.linspace(0.0, 1.0, 33)[None, :]
    w = (1.0 + t ** 2) * np.sin(np.pi * x) + t * x * (1.0 - x) * np.cos(3.0 * t) - 0.4 * np.sqrt(t) * np.sin(2.0 * np.pi * x)
    for alpha in (0.2, 0.5, 0.8):
        pointwise = w * caputo_l1(w, grid, alpha) - 0.5 * caputo_l1(w ** 2, grid, alpha)
        assert np.min(pointwise[1:]) >= -1e-10

        lhs = 0.5 * caputo_l1(trapezoid(w ** 2, x=x[0], axis=1), grid, alpha)
        rhs = trapezoid(w * caputo_l1(w, grid, alpha), x=x[0], axis=1)
        assert np.all(lhs[1:] <= rhs[1:] + 1e-10)


def test_linear_solver_below_gronwall_bound():
    """D^a y = c1 y + c2 with c1 > 0 stays under y0 E_a(c1 t^a) + Gamma(a) E_{a,a}(c1 t^a) J^a c2"""
    alpha, c1, c2, y0 = 0.5, 1.0, 1.0, 1.0
    grid = TimeGrid(T=1.0, nt=257)
    t = grid.nodes
    y = l1_solve_linear(grid, alpha, c1=c1, c2=c2, y0=y0)

    z = c1 * t ** alpha
    integral = c2 * t ** alpha / math.gamma(alpha + 1.0)
    bound = (
        y0 * mittag_leffler_array(MLParams(alpha=alpha, mu=1.0), z)
        + math.gamma(alpha) * mittag_leffler_array(MLParams(alpha=alpha, mu=alpha), z) * integral
    )
    tolerance = 10.0 * grid.dt ** (2.0 - alpha) * max(abs(y0), abs(c2))
    assert y[0] == pytest.approx(bound[0])
    assert np.all(y <= bound + tolerance)
    logger.info(f"✓ smallest Gronwall margin {float(np.min(bound - y)):.3e}")


def test_integral_chain_for_positive_data():
    """T^(a-1) int_0^t v <= Gamma(a) J^a v(t) <= max v t^a / a for positive v"""
    grid = TimeGrid(T=2.0, nt=129)
    t = grid.nodes
    v = 1.0 + np.sin(3.0 * t) ** 2 + 0.5 * t
    for alpha in (0.3, 0.7):
        middle = math.gamma(alpha) * rl_integral(v, grid, alpha)
        lower = grid.T ** (alpha - 1.0) * cumulative_trapezoid(v, t, initial=0.0)
        upper = np.max(v) * t ** alpha / alpha
        assert np.all(lower <= middle + 1e-12)
        assert np.all(middle <= upper + 1e-12)
        assert np.all(middle[1:] <= grid.T ** alpha / alpha * np.max(v))


def test_linear_solver_tracks_mittag_leffler():
    """D^alpha y = -y, y(0) = 1 has y(t) = E_{1/2}(-t^{1/2}) = erfcx(t^{1/2})"""
    grid = TimeGrid(T=1.0, nt=257)
    y = l1_solve_linear(grid, 0.5, c1=-1.0, c2=0.0, y0=1.0)
    assert y[0] == 1.0
    assert np.all(np.diff(y) < 0.0)
    assert np.all(y > 0.0)
    assert y[-1] == pytest.approx(erfcx(1.0), abs=1e-2)


def test_linear_solver_matches_source_balance():
    """One step with unit forcing: y_1 = dt^alpha Gamma(2 - alpha)"""
    grid = TimeGrid(T=1.0, nt=5)
    y = l1_solve_linear(grid, 0.5, c1=0.0, c2=1.0, y0=0.0)
    assert y[1] == pytest.approx(grid.dt ** 0.5 * math.gamma(1.5), rel=1e-14)


def test_extrapolate_initial():
    values = np.array([[np.nan], [2.0], [3.0]])
    np.testing.assert_array_equal(extrapolate_initial(values), [[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(extrapolate_initial(np.array([np.nan, 4.0])), [4.0, 4.0])
    with pytest.raises(GridError):
        extrapolate_initial(np.array([1.0]))


def test_grid_mismatch():
    with pytest.raises(GridError):
        caputo_l1(np.zeros(5), TimeGrid(T=1.0, nt=6), 0.5)
