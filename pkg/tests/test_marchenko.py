from __future__ import annotations

import math
from typing import Callable

import numpy as np
import pytest

from thirdscatter.dataset import RaySamples, ScatteringDataset
from thirdscatter.direct import SolutionProfile
from thirdscatter.marchenko import (
    SQRT3,
    ModelViolationError,
    NystromGrid,
    ResolutionError,
    RhoKernel,
    build_rho,
    neumann_iterate,
    recover_from_F,
    recover_from_G,
    recover_u_from_F,
    recover_v_from_G,
    solve_marchenko,
    solve_marchenko_grid,
    support_check,
    system_residual,
)
from thirdscatter.potentials import free
from thirdscatter.riemann_hilbert import PhiPair
from thirdscatter.spectral import Z, DomainError, XGrid, line_parameter


SMALL_NYSTROM = NystromGrid(y_max=10.0, n_panels=4, order=12)


@pytest.fixture
def exp_kernel() -> RhoKernel:
    return RhoKernel.from_callables(lambda s: np.exp(-s), lambda s: np.exp(s))


def _dataset(*, m: float = 0.0, s: np.ndarray | None = None) -> ScatteringDataset:
    s = np.linspace(0.5, 10.0, 40) if s is None else s
    ones = np.ones_like(s, dtype=complex)
    data = ScatteringDataset(potential={"name": "synthetic"})
    data.add("L", RaySamples("L1", s, 0.01 * np.exp(-s)))
    data.add("R", RaySamples("L3", s, 0.02 * np.exp(-s)))
    data.add("M", RaySamples("L2", s, m * ones))
    data.add("N", RaySamples("L4", s, 0.0 * ones))
    for ray in ("L3", "L4", "R+"):
        data.add("T_r", RaySamples(ray, s, ones))
    return data


def test_rho_hat_closed_forms(exp_kernel) -> None:
    w = np.array([0.0, 1.5, -2.0 - 0.5j, 3.0 - 2.0j])
    np.testing.assert_allclose(exp_kernel.rho_hat("+", w), 1.0 / (2 * math.pi * (1.0 + 1j * w)), atol=1e-9)
    wc = np.conj(w)
    np.testing.assert_allclose(exp_kernel.rho_hat("-", wc), 1.0 / (2 * math.pi * (1.0 - 1j * wc)), atol=1e-9)
    assert isinstance(exp_kernel.rho_hat("+", 0.5), complex)


def test_rho_hat_derivative(exp_kernel) -> None:
    w = np.array([0.0, 1.0 - 0.3j])
    expected = -1j / (2 * math.pi * (1.0 + 1j * w) ** 2)
    np.testing.assert_allclose(exp_kernel.rho_hat_derivative("+", w), expected, atol=1e-9)


def test_rho_hat_half_planes(exp_kernel) -> None:
    with pytest.raises(DomainError):
        exp_kernel.rho_hat("+", 0.5j)
    with pytest.raises(DomainError):
        exp_kernel.rho_hat("-", -0.5j)
    with pytest.raises(ValueError):
        exp_kernel.rho_hat("*", 0.0)


@pytest.mark.parametrize("side", ["+", "-"])
def test_kernel_matrix_is_shifted_rho_hat(exp_kernel, side: str) -> None:
    shifts = np.array([0.0, 0.7, -1.2])
    zeta = np.array([0.0, 0.5, 2.0]) * (1.0 if side == "+" else -1.0)
    mat = exp_kernel.kernel_matrix(side, shifts, zeta)
    expected = np.array([[exp_kernel.rho_hat(side, a - Z * b) for b in zeta] for a in shifts])
    np.testing.assert_allclose(mat, expected, atol=1e-12)
    deriv = exp_kernel.kernel_matrix(side, shifts, zeta, derivative=True)
    expected_d = np.array([[exp_kernel.rho_hat_derivative(side, a - Z * b) for b in zeta] for a in shifts])
    np.testing.assert_allclose(deriv, expected_d, atol=1e-12)
    with pytest.raises(DomainError):
        exp_kernel.kernel_matrix(side, shifts, -zeta + (0.5 if side == "-" else -0.5))


def test_zero_kernel_gives_zero_traces() -> None:
    piece = solve_marchenko(RhoKernel.zero(), 0.3, SMALL_NYSTROM)
    assert piece.f0 == 0 and piece.g0 == 0
    assert piece.f0_y == 0 and piece.g0_y == 0
    assert piece.residual == 0.0
    assert piece.condition == pytest.approx(1.0)


def test_slice_solves_discrete_system(exp_kernel) -> None:
    kernel = exp_kernel.scaled(0.1)
    piece = solve_marchenko(kernel, 0.2, SMALL_NYSTROM)
    assert piece.residual < 1e-10
    assert system_residual(kernel, piece, SMALL_NYSTROM) < 1e-10
    assert piece.f_hat.size == SMALL_NYSTROM.n_panels * SMALL_NYSTROM.order
    assert abs(piece.f0_y - piece.f0_y_fd) < 1e-3


def test_neumann_iterates_scale_with_kernel(exp_kernel) -> None:
    gaps, errors = [], []
    for eps in (1e-3, 2e-3):
        kernel = exp_kernel.scaled(eps)
        first, second = neumann_iterate(kernel, 0.0, SMALL_NYSTROM)
        piece = solve_marchenko(kernel, 0.0, SMALL_NYSTROM)
        exact = np.concatenate([piece.f_hat, piece.g_hat])
        gaps.append(np.linalg.norm(second - first))
        errors.append((np.linalg.norm(exact - first), np.linalg.norm(exact - second)))
    assert gaps[1] / gaps[0] == pytest.approx(4.0, rel=1e-8)
    for first_err, second_err in errors:
        assert second_err < 0.1 * first_err


def test_build_rho_from_dataset() -> None:
    kernel = build_rho(_dataset(), n_panels=10, order=8)
    inside = kernel.s_plus >= 0.5
    np.testing.assert_allclose(kernel.rho_plus[inside], 0.01 * np.exp(-kernel.s_plus[inside]), atol=5e-6)
    inside = kernel.s_minus <= -0.5
    np.testing.assert_allclose(kernel.rho_minus[inside], -0.02 * np.exp(kernel.s_minus[inside]), atol=5e-6)
    assert kernel.sup_bound() > 0.0


def test_build_rho_model_violations() -> None:
    with pytest.raises(ModelViolationError) as exc:
        build_rho(_dataset(m=0.5))
    assert exc.value.delta == pytest.approx(0.5)
    data = _dataset()
    data.bound_states = [{"status": "ok"}]
    with pytest.raises(ModelViolationError):
        build_rho(data)


def test_build_rho_needs_common_s_grid() -> None:
    data = _dataset()
    s = data.s_values
    data.add("R", RaySamples("L3", s * 1.01, np.zeros_like(s)))
    with pytest.raises(ValueError, match="same s-grid"):
        build_rho(data)


def test_zero_kernel_recovers_free_potentials() -> None:
    sol = solve_marchenko_grid(RhoKernel.zero(), XGrid(-2.0, 2.0, 41), SMALL_NYSTROM, resolution_tol=1e-6)
    rec = recover_from_F(sol)
    assert not np.any(rec.q) and not np.any(rec.p)
    u1, u2 = recover_u_from_F(sol, 0.2 + 0.1j, 0.05)
    np.testing.assert_allclose(u1, -(0.2 + 0.1j))
    np.testing.assert_allclose(u2, -0.05 + (0.2 + 0.1j) ** 2)


def test_nystrom_refinement() -> None:
    fine = SMALL_NYSTROM.refined()
    assert fine.n_panels == 8 and fine.y_max == 20.0
    y, w = fine.minus
    assert y.min() > -20.0 and y.max() < 0.0
    assert np.sum(w) == pytest.approx(20.0)


def test_full_driving_makes_traces_antisymmetric(exp_kernel) -> None:
    kernel = exp_kernel.scaled(0.3)
    piece = solve_marchenko(kernel, 0.4, SMALL_NYSTROM)
    assert piece.f0 == pytest.approx(-piece.g0, abs=1e-13)
    assert piece.f0_y == pytest.approx(-piece.g0_y, abs=1e-13)
    assert abs(piece.f0) > 1e-3


def test_split_driving_keeps_half_line_terms(exp_kernel) -> None:
    kernel = exp_kernel.scaled(0.3)
    x = 0.4
    split = solve_marchenko(kernel, x, SMALL_NYSTROM, driving="split")
    a = SQRT3 * x
    # the integral terms cancel in F(0+) + G(0-), leaving rho_+ - rho_-
    expected = kernel.rho_hat("+", a) - kernel.rho_hat("-", a)
    assert split.f0 + split.g0 == pytest.approx(expected, abs=1e-12)
    assert abs(expected) > 1e-3
    assert system_residual(kernel, split, SMALL_NYSTROM, driving="split") < 1e-10
    assert system_residual(kernel, split, SMALL_NYSTROM) > 1e-6
    with pytest.raises(ValueError, match="driving"):
        solve_marchenko(kernel, x, SMALL_NYSTROM, driving="half")  # type: ignore[arg-type]


def test_grid_solve_rejects_truncated_y_range(exp_kernel) -> None:
    kernel = exp_kernel.scaled(0.5)
    short = NystromGrid(y_max=1.0, n_panels=2, order=8)
    with pytest.raises(ResolutionError) as exc:
        solve_marchenko_grid(kernel, XGrid(-1.0, 1.0, 5), short, resolution_tol=1e-8)
    assert exc.value.disagreement > 1e-8
    sol = solve_marchenko_grid(kernel, XGrid(-1.0, 1.0, 5), short, resolution_tol=1.0)
    assert len(sol.slices) == 5


def test_dual_recovery_agrees_under_full_driving(exp_kernel) -> None:
    sol = solve_marchenko_grid(exp_kernel.scaled(0.1), XGrid(-1.0, 1.0, 41), SMALL_NYSTROM)
    rec_f, rec_g = recover_from_F(sol), recover_from_G(sol)
    assert rec_g.route == "marchenko-G"
    scale = float(np.max(np.abs(rec_f.q)))
    assert scale > 1e-6
    np.testing.assert_allclose(rec_g.q, rec_f.q, rtol=0, atol=1e-10 * scale)
    np.testing.assert_allclose(rec_g.p, rec_f.p, rtol=0, atol=1e-10 * max(float(np.max(np.abs(rec_f.p))), 1.0))

    v1, v2 = recover_v_from_G(sol)
    np.testing.assert_allclose(v1, -1j * Z * sol.g0)
    np.testing.assert_allclose(rec_g.first, v1)
    t1, t2 = 0.1 - 0.2j, 0.05j
    u1, u2 = recover_u_from_F(sol, t1, t2)
    # u1 - v1 = (1/3) int Q = -t_l1
    np.testing.assert_allclose(u1 - v1, -t1, atol=1e-12)
    np.testing.assert_allclose(u2 - v2, -t2 + t1 * t1 - t1 * v1, atol=1e-12)


def _analytic_phi(grid: XGrid, plus: Callable[[float], complex], minus: Callable[[float], complex]) -> PhiPair:
    def at(fn: Callable[[float], complex], kind: str) -> Callable[[complex], SolutionProfile]:
        def profile(k: complex) -> SolutionProfile:
            phi = np.full(grid.n_points, 1.0 + fn(line_parameter(k)), dtype=complex)
            zeros = np.zeros(grid.n_points, dtype=complex)
            return SolutionProfile(kind=kind, k=k, grid=grid, phi=phi, phi_x=zeros, phi_xx=zeros)

        return profile

    return PhiPair(grid=grid, plus_at=at(plus, "Phi+"), minus_at=at(minus, "Phi-"))


def test_support_check_separates_half_planes() -> None:
    grid = XGrid(-2.0, 2.0, 41)
    data = ScatteringDataset(potential={"name": "synthetic"})
    # Phi+ - 1 analytic above the real s-axis, Phi- - 1 below
    good = _analytic_phi(grid, lambda s: 0.3 / (s + 2j), lambda s: 0.3 / (s - 2j))
    report = support_check(free(), data, grid, phi=good)
    assert report.status == "ok"
    assert report.f_negative_mass < 1e-3
    assert report.g_positive_mass < 1e-3
    assert report.f_cauchy < 1e-2 and report.g_cauchy < 1e-2

    swapped = _analytic_phi(grid, lambda s: 0.3 / (s - 2j), lambda s: 0.3 / (s + 2j))
    report = support_check(free(), data, grid, phi=swapped)
    assert report.f_negative_mass > 0.5
    assert report.g_positive_mass > 0.5


def test_support_check_needs_pole_free_data() -> None:
    data = _dataset()
    data.bound_states = [{"status": "ok"}]
    report = support_check(free(), data, XGrid(-1.0, 1.0, 11))
    assert report.status == "not-applicable"
    assert report.to_dict()["reason"].startswith("bound states")
