from __future__ import annotations

import math

import numpy as np
import pytest

from thirdscatter.direct import (
    GridMismatchError,
    build_mn,
    calibrate_branch_constants,
    compute_dataset,
    coupling_identity_residual,
    extract_left,
    extract_right,
    fit_tail_constants,
    free_profile,
    inverse_transmission,
    large_k_profile_fit,
    large_k_remainder,
    large_k_sweep,
    ode_residual,
    relative_spread,
    solve_basic,
    tail_constants_from_potentials,
    tail_expansion,
    transmission_from_wronskian,
    wronskian2,
    wronskian3_profile,
    wronskian_triple,
)
from thirdscatter.numerics import relative_l2
from thirdscatter.potentials import gauss, gaussian_u1_closed_form
from thirdscatter.spectral import Z, Z2, DomainError, XGrid


def _polar(r: float, angle: float) -> complex:
    return r * complex(math.cos(angle), math.sin(angle))


def test_free_dataset_is_exact(free_pair, small_grid) -> None:
    data = compute_dataset(free_pair, small_grid, np.array([0.5, 1.0, 3.0]))
    for name in ("T_l", "T_r"):
        for samples in data.coefficients[name].values():
            np.testing.assert_allclose(samples.values, 1.0, atol=1e-12)
    for name in ("L", "M", "R", "N"):
        assert data.max_abs(name) < 1e-12
    assert data.secondary_delta < 1e-12


@pytest.mark.parametrize("k", [-1.0 + 0j, -2.0 + 0j, 1.5 * Z, _polar(1.3, 0.9 * math.pi), _polar(0.7, 1.2 * math.pi)])
def test_free_wronskian_gives_unit_transmission(free_pair, small_grid, k: complex) -> None:
    assert transmission_from_wronskian(k, free_pair, small_grid) == pytest.approx(1.0, abs=1e-12)


def test_branch_constants() -> None:
    constants = calibrate_branch_constants()
    assert constants.down == pytest.approx(3.0 * (Z2 - Z))
    assert constants.down == pytest.approx(constants.printed_down)
    assert constants.up == pytest.approx(3.0 * (Z - Z2))
    assert abs(constants.up_discrepancy) == pytest.approx(1.0)


def test_free_m_and_n_are_plane_waves(free_pair, small_grid) -> None:
    m = build_mn("m", _polar(1.2, 1.5 * math.pi), free_pair, small_grid)
    n = build_mn("n", _polar(1.2, 0.5 * math.pi), free_pair, small_grid)
    for prof in (m, n):
        np.testing.assert_allclose(prof.phi, 1.0, atol=1e-12)
        np.testing.assert_allclose(prof.phi_x, 0.0, atol=1e-12)


@pytest.mark.parametrize(("kind", "k"), [("f", 1.0 + 0j), ("g", -1.0 + 0j), ("f", 0j), ("m", 1.0 + 0j)])
def test_domain_errors(free_pair, small_grid, kind: str, k: complex) -> None:
    with pytest.raises(DomainError):
        if kind == "m":
            build_mn(kind, k, free_pair, small_grid)
        else:
            solve_basic(kind, k, free_pair, small_grid)


def test_grid_mismatch() -> None:
    a = free_profile("f", -1.0, XGrid(-4.0, 4.0, 32))
    b = free_profile("f", -2.0, XGrid(-4.0, 4.0, 64))
    with pytest.raises(GridMismatchError):
        wronskian2(a, b, 0)


def test_extract_left_rejects_right_profiles(free_pair, small_grid) -> None:
    with pytest.raises(ValueError):
        extract_left(solve_basic("g", 1.0, free_pair, small_grid))


def test_tail_expansion_matches_closed_form(small_grid) -> None:
    tails = tail_expansion(gauss(eps=0.7, p_ratio=0.0), small_grid)
    np.testing.assert_allclose(tails.u1, gaussian_u1_closed_form(small_grid.x, 0.7), atol=1e-8)
    np.testing.assert_allclose(tails.v1, gaussian_u1_closed_form(-small_grid.x, 0.7) * -1.0, atol=1e-8)


def test_tail_constants_from_potentials(small_grid) -> None:
    tail = tail_constants_from_potentials(gauss(eps=0.6, p_ratio=0.5), small_grid)
    t1 = -0.6 * math.sqrt(math.pi) / 3.0
    assert tail.t_l1 == pytest.approx(t1, rel=1e-8)
    assert tail.t_l2 == pytest.approx(0.5 * t1 * t1 - 0.5 * 0.6 * math.sqrt(math.pi) / 3.0, rel=1e-8)


def test_relative_spread() -> None:
    assert relative_spread(np.array([2.0, 2.0, 2.0])) == 0.0
    assert relative_spread(np.array([1.0, 1.0, 1.1])) == pytest.approx(0.1)


@pytest.mark.slow
@pytest.mark.parametrize("angle", [0.9 * math.pi, 1.1 * math.pi])
def test_wronskian_is_x_independent(gauss_pair, small_grid, angle: float) -> None:
    k = _polar(1.2, angle)
    profiles = wronskian_triple(k, gauss_pair, small_grid)
    values = wronskian3_profile(*profiles)[small_grid.interior(0.8)]
    assert relative_spread(values) < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("angle", [0.8 * math.pi, 0.95 * math.pi, 1.05 * math.pi, 1.2 * math.pi])
def test_extraction_and_wronskian_agree(gauss_pair, small_grid, angle: float) -> None:
    k = _polar(1.0, angle)
    t_ext = inverse_transmission(k, gauss_pair, small_grid, route="extraction")
    t_wr = inverse_transmission(k, gauss_pair, small_grid, route="wronskian")
    assert abs(t_ext - t_wr) / max(abs(t_ext), 1.0) < 1e-5


@pytest.mark.slow
def test_ode_residual(gauss_pair) -> None:
    grid = XGrid(-10.0, 10.0, 2048)
    for kind, k in (("f", -1.5 + 0j), ("g", 1.5 + 0j), ("fbar", 1.2 * Z), ("gbar", -1.2 * Z)):
        assert ode_residual(solve_basic(kind, k, gauss_pair, grid), gauss_pair) < 1e-6


@pytest.mark.slow
def test_coupling_identities(gauss_pair, small_grid) -> None:
    data = compute_dataset(gauss_pair, small_grid, np.array([0.5, 1.0, 2.0]))
    for s in (0.5, 1.0, 2.0):
        assert coupling_identity_residual("left", data, Z * s) < 1e-6
        assert coupling_identity_residual("right", data, -Z * s) < 1e-6
    with pytest.raises(DomainError):
        coupling_identity_residual("left", data, -Z * 1.0)


@pytest.mark.slow
def test_fitted_tail_matches_quadrature(gauss_pair, small_grid) -> None:
    k_values = large_k_sweep("plus")
    t_inv = np.array([inverse_transmission(k, gauss_pair, small_grid) for k in k_values])
    fitted = fit_tail_constants(k_values, t_inv)
    exact = tail_constants_from_potentials(gauss_pair, small_grid)
    assert abs(fitted.t_l1 - exact.t_l1) < 1e-4 * max(1.0, abs(exact.t_l1))
    assert abs(fitted.t_l2 - exact.t_l2) < 1e-4 * max(1.0, abs(exact.t_l2))


@pytest.mark.slow
def test_large_k_remainder_decays_like_k_cubed(gauss_pair, small_grid) -> None:
    rem = large_k_remainder(gauss_pair, small_grid, np.array([-10.0 + 0j, -20.0 + 0j]))
    slope = math.log(rem[0] / rem[1]) / math.log(2.0)
    assert abs(slope - 3.0) / 3.0 <= 0.2


@pytest.mark.slow
@pytest.mark.parametrize(("kind", "half"), [("f", "plus"), ("g", "minus")])
def test_large_k_fit_matches_tail_quadrature(gauss_pair, small_grid, kind: str, half: str) -> None:
    fit = large_k_profile_fit(kind, gauss_pair, small_grid, large_k_sweep(half, n=6))
    tails = tail_expansion(gauss_pair, small_grid)
    inner = small_grid.interior()
    c1, c2 = (tails.u1, tails.u2) if kind == "f" else (tails.v1, tails.v2)
    assert relative_l2(fit.c1[inner], c1[inner]) < 1e-4
    assert relative_l2(fit.c2[inner], c2[inner]) < 1e-2


def test_reflection_is_linear_in_small_potentials(small_grid) -> None:
    k = Z * 1.0
    values = []
    for eps in (1e-3, 2e-3):
        ext = extract_left(solve_basic("f", k, gauss(eps=eps, p_ratio=0.3), small_grid))
        values.append((ext.primary, ext.t_inv - 1.0))
    (l1, t1), (l2, t2) = values
    assert abs(l1) > 1e-6 and abs(t1) > 1e-6
    assert l2 / l1 == pytest.approx(2.0, rel=1e-2)
    assert t2 / t1 == pytest.approx(2.0, rel=1e-2)


@pytest.mark.slow
def test_m_matches_asymptotics_at_both_ends(gauss_pair, soliton_grid) -> None:
    k = _polar(1.2, 1.5 * math.pi)
    m = build_mn("m", k, gauss_pair, soliton_grid)
    t_r = 1.0 / extract_right(solve_basic("g", Z * k, gauss_pair, soliton_grid)).t_inv
    t_l_inv = inverse_transmission(Z2 * k, gauss_pair, soliton_grid)
    assert abs(m.phi[0] - 1.0) < 1e-5
    assert abs(m.phi[-1] - t_r * t_l_inv) < 1e-5 * abs(t_r * t_l_inv)
    assert abs(m.phi[-1] - 1.0) > 1e-3
