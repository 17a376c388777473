from __future__ import annotations

import math

import numpy as np
import pytest

from thirdscatter.numerics import (
    circle_derivative,
    cumulative_from_right,
    fit_inverse_powers,
    gauss_legendre_panels,
    one_sided_derivative,
    parallel_map,
    relative_l2,
    spline_derivative,
)


def test_gauss_legendre_panels_integrate_polynomials() -> None:
    nodes, weights = gauss_legendre_panels(0.0, 2.0, 4, 8)
    assert nodes.size == 32
    assert np.sum(weights) == pytest.approx(2.0)
    assert np.sum(weights * nodes**5) == pytest.approx(64.0 / 6.0)


def test_gauss_legendre_panels_rejects_empty() -> None:
    with pytest.raises(ValueError):
        gauss_legendre_panels(0.0, 1.0, 0, 8)


def test_spline_derivative_of_sine() -> None:
    x = np.linspace(0.0, 2.0 * math.pi, 400)
    np.testing.assert_allclose(spline_derivative(x, np.sin(x)), np.cos(x), atol=1e-6)
    np.testing.assert_allclose(spline_derivative(x, np.exp(1j * x), 2), -np.exp(1j * x), atol=1e-4)


def test_cumulative_from_right_of_gaussian() -> None:
    x = np.linspace(-6.0, 6.0, 1201)
    total = cumulative_from_right(x, np.exp(-(x**2)))
    assert total[0].real == pytest.approx(math.sqrt(math.pi), rel=1e-7)
    assert total[-1] == 0


def test_circle_derivative_of_exp() -> None:
    k = 0.3 + 0.2j
    assert circle_derivative(np.exp, k, radius=1e-2) == pytest.approx(np.exp(k), rel=1e-10)


def test_fit_inverse_powers_recovers_coefficients() -> None:
    k = np.linspace(10.0, 40.0, 12) * np.exp(1j * math.pi)
    values = (2.0 - 1j) / k + 3.0 / k**2
    coeffs, residual = fit_inverse_powers(k, values, 3)
    np.testing.assert_allclose(coeffs, [2.0 - 1j, 3.0, 0.0], atol=1e-7)
    assert residual < 1e-12


def test_fit_inverse_powers_on_profiles() -> None:
    k = np.linspace(10.0, 40.0, 8) + 0j
    x = np.linspace(-1.0, 1.0, 5)
    values = np.outer(1.0 / k, x) + np.outer(1.0 / k**2, x**2)
    coeffs, _ = fit_inverse_powers(k, values, 4)
    np.testing.assert_allclose(coeffs[0], x, atol=1e-8)
    np.testing.assert_allclose(coeffs[1], x**2, atol=1e-6)


def test_one_sided_derivative() -> None:
    h = 0.01
    values = np.exp(h * np.arange(5))
    assert one_sided_derivative(values, h) == pytest.approx(1.0, abs=1e-7)


def test_relative_l2() -> None:
    a = np.array([1.0, 2.0, 2.0])
    assert relative_l2(a, a) == 0.0
    assert relative_l2(2 * a, a) == pytest.approx(1.0)
    assert relative_l2(a, np.zeros(3)) == pytest.approx(3.0)


def test_parallel_map_preserves_order() -> None:
    items = list(range(20))
    assert parallel_map(lambda v: v * v, items, threads=4) == [v * v for v in items]
    assert parallel_map(lambda v: v + 1, items) == [v + 1 for v in items]
