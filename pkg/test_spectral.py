"""
Tests for the sine basis, coefficient transforms and weighted norms
"""
import logging
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.special import zeta

from src.errors import DataError, ParameterError, TruncationError
from src.schemas import SpaceGrid, TimeGrid
from src.spectral import (
    SineBasis,
    SpectralState,
    coupling_field,
    coupling_sum,
    mode_weights,
    sine_coefficients,
    sine_synthesis,
    spectral_tail,
    trace_field,
    weighted_distance,
    weighted_norm,
    weighted_norm_series,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def _state(values, epsilon=0.5):
    K, nt, nx = values.shape
    return SpectralState(values, epsilon, TimeGrid(T=1.0, nt=nt), SpaceGrid(nx=nx))


def test_basis_layout():
    basis = SineBasis.build(8)
    assert basis.ny == 65
    assert basis.y[0] == 0.0 and basis.y[-1] == math.pi
    assert basis.weights.sum() == pytest.approx(math.pi, rel=1e-14)
    np.testing.assert_array_equal(basis.eigenvalues, np.arange(1, 9) ** 2)
    assert np.all(basis.sin_table[:, [0, -1]] == 0.0)


def test_truncation_limit():
    with pytest.raises(TruncationError):
        SineBasis.build(10, 11)
    SineBasis.build(5, 11)


def test_pure_modes_are_resolved_exactly():
    """Simpson weights integrate sin(k y) sin(m y) exactly below the grid limit"""
    basis = SineBasis.build(8)
    v = np.sin(3.0 * basis.y) - 0.25 * np.sin(7.0 * basis.y)
    coeffs = sine_coefficients(v, basis)
    expected = np.zeros(8)
    expected[2], expected[6] = 1.0, -0.25
    np.testing.assert_allclose(coeffs, expected, atol=1e-13)
    logger.info("✓ pure modes recovered")


def test_parabola_coefficients():
    """y (pi - y) has coefficients 8 / (pi k^3) for odd k"""
    basis = SineBasis.build(8, 513)
    coeffs = sine_coefficients(basis.y * (math.pi - basis.y), basis)
    k = np.arange(1, 9)
    expected = np.where(k % 2 == 1, 8.0 / (math.pi * k ** 3), 0.0)
    np.testing.assert_allclose(coeffs, expected, atol=1e-6)


def test_parseval():
    basis = SineBasis.build(4)
    v = np.sin(basis.y) + 0.5 * np.sin(3.0 * basis.y)
    coeffs = sine_coefficients(v, 4)
    assert 0.5 * math.pi * np.sum(coeffs ** 2) == pytest.approx(float(v ** 2 @ basis.weights), rel=1e-12)


def test_coefficients_batch_and_errors():
    basis = SineBasis.build(4)
    v = np.stack([np.sin(basis.y), 2.0 * np.sin(2.0 * basis.y)])
    coeffs = sine_coefficients(v, basis)
    assert coeffs.shape == (2, 4)
    np.testing.assert_allclose(coeffs[1], [0.0, 2.0, 0.0, 0.0], atol=1e-13)
    with pytest.raises(TruncationError):
        sine_coefficients(np.zeros(10), basis)
    with pytest.raises(DataError):
        sine_coefficients(np.full(basis.ny, np.nan), basis)


def test_synthesis_vanishes_at_ends():
    y = np.linspace(0.0, math.pi, 9)
    values = sine_synthesis([1.0, 0.5, -0.2], y)
    assert values[0] == 0.0 and values[-1] == 0.0
    assert values[4] == pytest.approx(1.0 + 0.2)


def test_weighted_norm():
    """lambda_k^(5/2 + eps) with eps = 1/2 is k^6"""
    values = np.zeros((3, 4, 5))
    values[1] = 1.0
    s = _state(values)
    np.testing.assert_array_equal(mode_weights(3, 0.5), [1.0, 64.0, 729.0])
    np.testing.assert_allclose(weighted_norm_series(s), 64.0)
    assert weighted_norm(s, 2) == pytest.approx(64.0)
    assert weighted_distance(s, s.scaled(0.5)) == pytest.approx(16.0)
    with pytest.raises(ParameterError):
        weighted_distance(s, _state(np.zeros((2, 4, 5))))


def test_coupling_and_trace():
    values = np.zeros((2, 3, 4))
    values[0] = 1.0
    values[1] = 2.0
    s = _state(values)
    # sin(pi) leaves only the first mode at l0 = pi/2
    np.testing.assert_allclose(coupling_field(s, math.pi / 2), 1.0, atol=1e-14)
    np.testing.assert_allclose(trace_field(s, math.pi / 2), 1.0, atol=1e-14)
    l0 = math.pi / 3
    expected = math.sin(l0) + 2.0 * 4.0 * math.sin(2.0 * l0)
    np.testing.assert_allclose(coupling_sum(s, l0, 1), expected, rtol=1e-14)
    with pytest.raises(ParameterError):
        coupling_field(s, 0.0)
    with pytest.raises(ParameterError):
        trace_field(s, math.pi)


def test_state_validation_and_modes():
    s = SpectralState.zeros(3, 0.5, TimeGrid(T=1.0, nt=4), SpaceGrid(nx=5))
    assert s.K == 3
    assert [m.k for m in s.modes] == [1, 2, 3]
    assert s.mode(2).values.shape == (4, 5)
    with pytest.raises(ParameterError):
        s.mode(4)
    with pytest.raises(ParameterError):
        SpectralState(np.zeros((3, 4, 6)), 0.5, TimeGrid(T=1.0, nt=4), SpaceGrid(nx=5))
    with pytest.raises(ParameterError):
        SpectralState(np.zeros((3, 4, 5)), 0.0, TimeGrid(T=1.0, nt=4), SpaceGrid(nx=5))


def test_spectral_tail():
    values = np.zeros((4, 3, 5))
    assert spectral_tail(_state(values)) == 0.0
    values[3] = 1.0
    assert spectral_tail(_state(values)) == pytest.approx(1.0)
    values[0] = 1.0
    tail = spectral_tail(_state(values))
    assert 0.0 < tail < 1.0


def _third_derivative_sums(profile, profile_yyy, K, nx=33, ny=65):
    """sum_k lambda_k^3 ||g_k||^2 and (2/pi) ||g_yyy||^2 for g = x(1-x) profile(y)"""
    basis = SineBasis.build(K, ny)
    x = np.linspace(0.0, 1.0, nx)
    envelope = x * (1.0 - x)
    g = envelope[:, None] * profile(basis.y)[None, :]
    g[:, [0, -1]] = 0.0
    g_yyy = envelope[:, None] * profile_yyy(basis.y)[None, :]

    coeffs = sine_coefficients(g, basis)  # (nx, K)
    lhs = float(basis.eigenvalues ** 3 @ trapezoid(coeffs ** 2, x=x, axis=0))
    rhs = 2.0 / math.pi * float(trapezoid(g_yyy ** 2 @ basis.weights, x=x))
    return lhs, rhs


def test_third_derivative_bessel_inequality():
    """sum_k lambda_k^3 ||g_k||^2 <= (2/pi) ||g_yyy||^2, with equality once every mode is kept"""
    lhs, rhs = _third_derivative_sums(np.sin, lambda y: -np.cos(y), K=4)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    assert lhs <= rhs * (1.0 + 1e-10)

    cubed = lambda y: np.sin(y) ** 3
    cubed_yyy = lambda y: (-3.0 * np.cos(y) + 27.0 * np.cos(3.0 * y)) / 4.0
    full, rhs = _third_derivative_sums(cubed, cubed_yyy, K=3)
    assert full == pytest.approx(rhs, rel=1e-10)
    truncated, _ = _third_derivative_sums(cubed, cubed_yyy, K=2)
    assert truncated < 0.1 * rhs
    assert truncated == pytest.approx(9.0 / 738.0 * rhs, rel=1e-8)


def test_coupling_bounded_by_weighted_norm():
    """|S|^2 <= zeta(1 + 2 eps) sum_k lambda_k^(5/2+eps) |u_k|^2 at every (t, x)"""
    rng = np.random.default_rng(11)
    values = rng.standard_normal((8, 5, 7))
    for epsilon in (0.25, 0.5, 1.0):
        s = _state(values, epsilon)
        for l0 in (0.3, math.pi / 2, 2.9):
            S = coupling_field(s, l0)
            weighted = np.tensordot(mode_weights(8, epsilon), values ** 2, axes=(0, 0))
            assert np.all(S ** 2 <= zeta(1.0 + 2.0 * epsilon) * weighted * (1.0 + 1e-12))
