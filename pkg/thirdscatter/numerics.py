from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import make_interp_spline
from scipy.special import roots_legendre


log = logging.getLogger("thirdscatter.numerics")

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], *, threads: int = 1) -> list[R]:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def gauss_legendre_panels(a: float, b: float, n_panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    if n_panels < 1 or order < 1:
        raise ValueError("n_panels and order must be positive")
    t, w = roots_legendre(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def spline_derivative(x: np.ndarray, values: np.ndarray, order: int = 1, *, degree: int = 7) -> np.ndarray:
    """x-derivative of sampled values through an interpolating B-spline."""
    values = np.asarray(values)
    if order == 0:
        return values.copy()
    real = make_interp_spline(x, values.real, k=degree).derivative(order)(x)
    if not np.iscomplexobj(values):
        return real
    imag = make_interp_spline(x, values.imag, k=degree).derivative(order)(x)
    return real + 1j * imag


def cumulative_from_left(x: np.ndarray, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    re = cumulative_simpson(values.real, x=x, initial=0.0)
    im = cumulative_simpson(values.imag, x=x, initial=0.0)
    return re + 1j * im


def cumulative_from_right(x: np.ndarray, values: np.ndarray) -> np.ndarray:
    left = cumulative_from_left(x, values)
    return left[-1] - left


def circle_derivative(func: Callable[[complex], complex], k: complex, *, radius: float, n: int = 8) -> complex:
    """Derivative of an analytic function from n samples on a small circle (complex step)."""
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    samples = np.array([func(k + radius * w) for w in roots], dtype=complex)
    return complex(np.sum(samples / roots) / (n * radius))


def fit_inverse_powers(
    k: np.ndarray,
    values: np.ndarray,
    n_terms: int,
    *,
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Least squares for values ~ sum_j c_j / k**j, j = 1..n_terms.

    values may be 1-D (one sample per k) or 2-D with k along axis 0. Returns the
    coefficients (n_terms, ...) and the relative residual of the fit.
    """
    k = np.asarray(k, dtype=complex)
    values = np.asarray(values, dtype=complex)
    design = np.stack([k ** (-(j + 1)) for j in range(n_terms)], axis=1)
    if weights is not None:
        design = design * weights[:, None]
        values = values * (weights[:, None] if values.ndim > 1 else weights)
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    residual = design @ coeffs - values
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    return coeffs, float(np.max(np.abs(residual)) / scale)


def one_sided_derivative(values: Sequence[complex], step: float) -> complex:
    f0, f1, f2, f3, f4 = (complex(v) for v in values[:5])
    return (-25.0 * f0 + 48.0 * f1 - 36.0 * f2 + 16.0 * f3 - 3.0 * f4) / (12.0 * step)


def relative_l2(a: np.ndarray, b: np.ndarray, x: np.ndarray | None = None) -> float:
    diff = np.asarray(a) - np.asarray(b)
    if x is None:
        num = float(np.sqrt(np.sum(np.abs(diff) ** 2)))
        den = float(np.sqrt(np.sum(np.abs(b) ** 2)))
    else:
        num = float(np.sqrt(np.trapezoid(np.abs(diff) ** 2, x)))
        den = float(np.sqrt(np.trapezoid(np.abs(np.asarray(b)) ** 2, x)))
    if den == 0.0:
        return num
    return num / den
