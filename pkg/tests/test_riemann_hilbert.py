from __future__ import annotations

import math

import numpy as np
import pytest

from thirdscatter.dataset import DependencyError
from thirdscatter.direct import compute_dataset, tail_expansion
from thirdscatter.numerics import relative_l2
from thirdscatter.potentials import dipole
from thirdscatter.riemann_hilbert import (
    GLUE_TOL,
    InconsistentDataError,
    ReflectionlessSolution,
    RHData,
    assemble_phi,
    centered_norming_constant,
    jump,
    jump_residuals,
    jump_samples,
    normalization_error,
    phi_ode_residual,
    pole_rotation,
    recover_from_minus,
    recover_from_plus,
    solve_reflectionless,
)
from thirdscatter.spectral import Z, DomainError


SOLITON_POLE = 1.1 * complex(math.cos(1.2 * math.pi), math.sin(1.2 * math.pi))


def _logistic(d: complex, x: np.ndarray) -> np.ndarray:
    e = np.exp(d * x)
    return e / (1.0 + e)


def test_pole_rotation_and_centring() -> None:
    assert pole_rotation(SOLITON_POLE) == Z
    assert centered_norming_constant(SOLITON_POLE) == pytest.approx((1.0 - Z) * SOLITON_POLE)
    with pytest.raises(DomainError):
        pole_rotation(0j)


@pytest.mark.parametrize(
    ("poles", "gammas"),
    [
        ([1.0 + 0j], [1.0]),
        ([SOLITON_POLE], [0.0]),
        ([SOLITON_POLE, SOLITON_POLE + 1e-4], [1.0, 1.0]),
    ],
    ids=["pole-in-lower-half", "zero-gamma", "coincident-poles"],
)
def test_invalid_poles(poles: list[complex], gammas: list[complex]) -> None:
    with pytest.raises(DomainError):
        ReflectionlessSolution(poles=np.array(poles), gammas=np.array(gammas))


def test_mismatched_lengths() -> None:
    with pytest.raises(ValueError):
        ReflectionlessSolution(poles=np.array([SOLITON_POLE]), gammas=np.array([1.0, 2.0]))


def test_residue_system_is_solved(soliton_grid) -> None:
    sol, phi = solve_reflectionless([(SOLITON_POLE, centered_norming_constant(SOLITON_POLE))], soliton_grid)
    assert sol.linear_residual(soliton_grid.x) < 1e-12
    assert phi.grid == soliton_grid


def test_one_pole_potentials_closed_form(soliton) -> None:
    x = np.linspace(-5.0, 5.0, 201)
    d = complex(soliton.rates[0])
    sigma = _logistic(d, x)
    q, p, dq = soliton.potentials(x)
    np.testing.assert_allclose(q, 0.75 * d * d / np.cosh(0.5 * d * x) ** 2, rtol=1e-10)
    expected_p = 3.0 * d * d * sigma * (1.0 - sigma) * (d * (1.0 - sigma) + SOLITON_POLE)
    np.testing.assert_allclose(p, expected_p, rtol=1e-9)
    np.testing.assert_allclose(dq, 3.0 * d**3 * sigma * (1.0 - sigma) * (1.0 - 2.0 * sigma), rtol=1e-9, atol=1e-12)


def test_phi_solves_the_ode(soliton, soliton_grid) -> None:
    for angle in np.linspace(0.1, 2.0 * math.pi - 0.1, 8):
        k = 1.7 * complex(math.cos(angle), math.sin(angle))
        assert phi_ode_residual(soliton, k, soliton_grid) < 1e-8


def test_transmission_of_one_pole_soliton(soliton) -> None:
    k = 2.0 + 0j
    assert soliton.transmission(k, 16.0) == pytest.approx((k - Z * SOLITON_POLE) / (k - SOLITON_POLE), rel=1e-10)
    tail = soliton.transmission_tail(16.0)
    assert tail.t_l1 == pytest.approx(-soliton.rates[0], rel=1e-10)


def test_potential_pair_scalar_and_array_agree(soliton) -> None:
    pair = soliton.potential_pair()
    x = np.array([-1.0, 0.3, 2.0])
    arr = pair.q(x)
    for i, v in enumerate(x):
        assert pair.q(np.float64(v)) == pytest.approx(arr[i])
    assert pair.params["poles"][0]["k_re"] == pytest.approx(SOLITON_POLE.real)


def test_phi_pair_domains(soliton, soliton_grid) -> None:
    phi = soliton.phi_pair(soliton_grid)
    with pytest.raises(DomainError):
        phi.plus(1.0 + 0j)
    with pytest.raises(DomainError):
        phi.minus(-1.0 + 0j)
    with pytest.raises(DomainError):
        soliton.profile(SOLITON_POLE, soliton_grid)


def test_rh_data_guards() -> None:
    data = RHData(dataset=None, secondary_zero=False, delta=0.1)
    with pytest.raises(InconsistentDataError):
        data.require_secondary_zero()
    clean = RHData.reflectionless([(SOLITON_POLE, 1.0 + 0j)])
    clean.require_secondary_zero()
    with pytest.raises(DependencyError):
        _ = clean.tail


def test_reflectionless_jump_is_zero(free_pair, small_grid) -> None:
    data = RHData.reflectionless([])
    assert not np.any(jump(data, free_pair, small_grid, 1.5 * Z))
    with pytest.raises(DomainError):
        jump(data, free_pair, small_grid, 1.0 + 0j)


@pytest.mark.slow
def test_recovery_from_both_sides(soliton, soliton_grid) -> None:
    phi = soliton.phi_pair(soliton_grid)
    q, p, _ = soliton.potentials(soliton_grid.x)
    inner = soliton_grid.interior()
    minus = recover_from_minus(phi, n_terms=8)
    plus = recover_from_plus(phi, soliton.transmission_tail(soliton_grid.x_max), n_terms=8)
    assert relative_l2(minus.q[inner], q[inner]) < 1e-5
    assert relative_l2(minus.p[inner], p[inner]) < 1e-5
    assert relative_l2(plus.q[inner], q[inner]) < 1e-5
    with pytest.raises(DomainError):
        recover_from_minus(phi, k_values=np.array([-20.0 + 0j]))


@pytest.mark.slow
def test_assembled_phi_glues_on_soliton_data(soliton, soliton_grid) -> None:
    pair = soliton.potential_pair()
    data = RHData.reflectionless(list(zip(soliton.poles, soliton.gammas)))
    phi = assemble_phi(data, pair, soliton_grid)
    assert set(phi.glue) == {"L2", "L4"}
    assert max(phi.glue.values()) < GLUE_TOL
    # T_l f from the forward solver equals the closed-form Phi+
    k = 2.0 * complex(math.cos(0.8 * math.pi), math.sin(0.8 * math.pi))
    inner = soliton_grid.interior()
    exact = soliton.phi_pair(soliton_grid).plus(k).phi[inner]
    assert relative_l2(phi.plus(k).phi[inner], exact) < 1e-5
    v1 = np.max(np.abs(tail_expansion(pair, soliton_grid).v1[inner]))
    assert normalization_error(phi, -40.0 + 0j) < 2.0 * v1 / 40.0


def test_glue_rejects_nonzero_secondary_reflections(gauss_pair, small_grid) -> None:
    with pytest.raises(InconsistentDataError) as exc:
        assemble_phi(RHData(dataset=None, secondary_zero=True), gauss_pair, small_grid, glue_s=(1.0,))
    assert exc.value.mismatch > GLUE_TOL


@pytest.mark.slow
def test_jump_relation_on_weak_dipole(small_grid) -> None:
    pair = dipole(eps=0.02)
    dataset = compute_dataset(pair, small_grid, np.array([0.5, 1.0, 2.0]))
    data = RHData.from_dataset(dataset, m_n_tol=1e-2)
    assert data.secondary_zero
    phi = assemble_phi(data, pair, small_grid)
    jumps = jump_samples(data, pair, small_grid, [1.0, -1.0])
    np.testing.assert_allclose(jumps.s, [1.0, -1.0])
    assert np.max(np.abs(jumps.values)) > 0.0
    residuals = jump_residuals(phi, jumps)
    assert residuals.shape == (2,)
    assert np.all(residuals < GLUE_TOL + 10.0 * data.delta)
    v1 = np.max(np.abs(tail_expansion(pair, small_grid).v1[small_grid.interior()]))
    for k in (-40.0 + 0j, 40.0 + 0j):
        assert normalization_error(phi, k) < 2.0 * v1 / 40.0 + GLUE_TOL
