from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline

from thirdscatter.dataset import ScatteringDataset
from thirdscatter.numerics import gauss_legendre_panels, one_sided_derivative, parallel_map, spline_derivative
from thirdscatter.potentials import PotentialPair, RecoveredPotential
from thirdscatter.riemann_hilbert import PhiPair, RHData, SingularSystemError, assemble_phi
from thirdscatter.spectral import Z, Z2, DomainError, XGrid


log = logging.getLogger("thirdscatter.marchenko")

Side = Literal["+", "-"]
# "full" drives both halves with rho_hat = rho_hat_+ + rho_hat_-; "split" uses rho_hat_+ for y > 0 and rho_hat_- for y < 0
Driving = Literal["full", "split"]
DRIVINGS = ("full", "split")

TWO_PI = 2.0 * math.pi
SQRT3 = math.sqrt(3.0)
FD_STEP = 0.02
NYSTROM_CONDITION = 1e13


class ModelViolationError(RuntimeError):
    def __init__(self, message: str, *, delta: float | None = None) -> None:
        super().__init__(message)
        self.delta = delta


class ResolutionError(RuntimeError):
    def __init__(self, message: str, *, disagreement: float) -> None:
        super().__init__(message)
        self.disagreement = disagreement


def _check_half_plane(side: Side, w: np.ndarray) -> None:
    im = np.imag(w)
    slack = 1e-12 * (1.0 + np.abs(w))
    if side == "+" and np.any(im > slack):
        raise DomainError("rho_hat_+ needs Im w <= 0")
    if side == "-" and np.any(im < -slack):
        raise DomainError("rho_hat_- needs Im w >= 0")


@dataclass(frozen=True)
class RhoKernel:
    """rho+ on (0, S] and rho- on [-S, 0) tabulated at composite Gauss-Legendre nodes."""

    s_plus: np.ndarray
    w_plus: np.ndarray
    rho_plus: np.ndarray
    s_minus: np.ndarray
    w_minus: np.ndarray
    rho_minus: np.ndarray

    @classmethod
    def from_callables(
        cls,
        plus: Callable[[np.ndarray], np.ndarray],
        minus: Callable[[np.ndarray], np.ndarray],
        *,
        s_max: float = 40.0,
        n_panels: int = 40,
        order: int = 16,
    ) -> RhoKernel:
        sp, wp = gauss_legendre_panels(0.0, s_max, n_panels, order)
        sm, wm = gauss_legendre_panels(-s_max, 0.0, n_panels, order)
        return cls(
            s_plus=sp,
            w_plus=wp,
            rho_plus=np.asarray(plus(sp), dtype=complex),
            s_minus=sm,
            w_minus=wm,
            rho_minus=np.asarray(minus(sm), dtype=complex),
        )

    @classmethod
    def from_samples(
        cls,
        s_plus: np.ndarray,
        rho_plus: np.ndarray,
        s_minus: np.ndarray,
        rho_minus: np.ndarray,
        *,
        n_panels: int = 40,
        order: int = 16,
    ) -> RhoKernel:
        plus = _complex_spline(np.asarray(s_plus, dtype=float), rho_plus)
        minus = _complex_spline(np.asarray(s_minus, dtype=float), rho_minus)
        s_max = float(min(np.max(s_plus), np.max(np.abs(s_minus))))
        return cls.from_callables(plus, minus, s_max=s_max, n_panels=n_panels, order=order)

    @classmethod
    def zero(cls, *, s_max: float = 1.0, n_panels: int = 1, order: int = 4) -> RhoKernel:
        return cls.from_callables(_zero, _zero, s_max=s_max, n_panels=n_panels, order=order)

    def scaled(self, factor: complex) -> RhoKernel:
        return RhoKernel(
            self.s_plus, self.w_plus, factor * self.rho_plus, self.s_minus, self.w_minus, factor * self.rho_minus
        )

    def _nodes(self, side: Side) -> tuple[np.ndarray, np.ndarray]:
        if side == "+":
            return self.s_plus, self.w_plus * self.rho_plus
        if side == "-":
            return self.s_minus, self.w_minus * self.rho_minus
        raise ValueError(f"side must be '+' or '-' (got {side!r})")

    def rho_hat(self, side: Side, w: Any) -> Any:
        """(1/2pi) int over the half line of e^{-isw} rho(s) ds."""
        w_arr = np.asarray(w, dtype=complex)
        _check_half_plane(side, w_arr)
        s, wr = self._nodes(side)
        out = np.exp(-1j * np.multiply.outer(w_arr, s)) @ wr / TWO_PI
        return out if out.ndim else complex(out)

    def rho_hat_derivative(self, side: Side, w: Any) -> Any:
        w_arr = np.asarray(w, dtype=complex)
        _check_half_plane(side, w_arr)
        s, wr = self._nodes(side)
        out = np.exp(-1j * np.multiply.outer(w_arr, s)) @ (-1j * s * wr) / TWO_PI
        return out if out.ndim else complex(out)

    def kernel_matrix(self, side: Side, shifts: np.ndarray, zeta: np.ndarray, *, derivative: bool = False) -> np.ndarray:
        """rho_hat(shift_i - z zeta_j) as a product of two exponential matrices."""
        if side == "+" and np.any(zeta < 0) or side == "-" and np.any(zeta > 0):
            raise DomainError(f"Kernel nodes on the wrong half line for rho_hat_{side}")
        s, wr = self._nodes(side)
        if derivative:
            wr = -1j * s * wr
        left = np.exp(-1j * np.outer(np.asarray(shifts, dtype=float), s))
        right = np.exp(1j * np.outer(s, Z * np.asarray(zeta, dtype=float)))
        return (left * wr[None, :]) @ right / TWO_PI

    def sup_bound(self) -> float:
        return float((np.sum(np.abs(self.w_plus * self.rho_plus)) + np.sum(np.abs(self.w_minus * self.rho_minus))) / TWO_PI)

    def to_dict(self) -> dict[str, Any]:
        def side(s: np.ndarray, v: np.ndarray) -> dict[str, list[float]]:
            return {"s": [float(t) for t in s], "Re": [float(t) for t in v.real], "Im": [float(t) for t in v.imag]}

        return {"plus": side(self.s_plus, self.rho_plus), "minus": side(self.s_minus, self.rho_minus)}


def _zero(s: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(s, dtype=float), dtype=complex)


def _complex_spline(s: np.ndarray, values: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    order = np.argsort(s)
    s = s[order]
    values = np.asarray(values, dtype=complex)[order]
    re = make_interp_spline(s, values.real, k=3)
    im = make_interp_spline(s, values.imag, k=3)
    lo, hi = float(s[0]), float(s[-1])

    def evaluate(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        # extrapolate towards s = 0 only
        inside = (t <= hi) if lo > 0 else (t >= lo)
        return (re(t) + 1j * im(t)) * inside

    return evaluate


def build_rho(
    dataset: ScatteringDataset,
    *,
    m_n_tol: float = 1e-3,
    n_panels: int = 40,
    order: int = 16,
    tail_threshold: float = 1e-6,
) -> RhoKernel:
    """rho+(s) = L(zs) for s > 0, rho-(s) = -R(zs) T_r(z^2 s) / T_r(zs) for s < 0."""
    delta = dataset.secondary_delta
    if delta > m_n_tol:
        raise ModelViolationError(
            f"Secondary reflections max |M|,|N| = {delta:.3e} exceed m_n_tol={m_n_tol:.1e}", delta=delta
        )
    if dataset.bound_states:
        raise ModelViolationError("The Marchenko system is formulated without bound states", delta=delta)
    s = dataset.samples("L", "L1").s
    rho_plus = dataset.samples("L", "L1").values
    r = dataset.samples("R", "L3")
    t_l3 = dataset.samples("T_r", "L3")
    t_l4 = dataset.samples("T_r", "L4")
    if not (np.array_equal(r.s, s) and np.array_equal(t_l3.s, s) and np.array_equal(t_l4.s, s)):
        raise ValueError("L, R and T_r must share the same s-grid")
    # s < 0: zs = -z|s| on L3, z^2 s = -z^2|s| on L4
    rho_minus = -r.values * t_l4.values / t_l3.values
    tail = max(abs(rho_plus[-1]), abs(rho_minus[-1]))
    if tail > tail_threshold:
        log.warning("rho is %.3e at the end of the s-grid; truncating at S=%s", tail, s[-1])
    log.info("Built rho on %s samples per side (delta=%.3e)", s.size, delta)
    return RhoKernel.from_samples(s, rho_plus, -s, rho_minus, n_panels=n_panels, order=order)


@dataclass(frozen=True)
class NystromGrid:
    y_max: float = 30.0
    n_panels: int = 6
    order: int = 16

    @property
    def plus(self) -> tuple[np.ndarray, np.ndarray]:
        return gauss_legendre_panels(0.0, self.y_max, self.n_panels, self.order)

    @property
    def minus(self) -> tuple[np.ndarray, np.ndarray]:
        return gauss_legendre_panels(-self.y_max, 0.0, self.n_panels, self.order)

    def refined(self) -> NystromGrid:
        # doubles Y at the same node density
        return NystromGrid(2.0 * self.y_max, 2 * self.n_panels, self.order)


@dataclass(frozen=True)
class MarchenkoSlice:
    x: float
    y_plus: np.ndarray
    y_minus: np.ndarray
    f_hat: np.ndarray
    g_hat: np.ndarray
    f0: complex
    f0_y: complex
    g0: complex
    g0_y: complex
    residual: float
    condition: float
    # 5-point one-sided differences of the interpolant, for comparison with the exact traces
    f0_y_fd: complex = 0j
    g0_y_fd: complex = 0j


@dataclass(frozen=True)
class MarchenkoSolution:
    grid: XGrid
    slices: list[MarchenkoSlice] = field(repr=False)

    def _trace(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.slices], dtype=complex)

    @property
    def f0(self) -> np.ndarray:
        return self._trace("f0")

    @property
    def f0_y(self) -> np.ndarray:
        return self._trace("f0_y")

    @property
    def g0(self) -> np.ndarray:
        return self._trace("g0")

    @property
    def g0_y(self) -> np.ndarray:
        return self._trace("g0_y")

    @property
    def max_residual(self) -> float:
        return max((s.residual for s in self.slices), default=0.0)


@dataclass(frozen=True)
class _System:
    matrix: np.ndarray
    rhs: np.ndarray
    y_plus: np.ndarray
    w_plus: np.ndarray
    y_minus: np.ndarray
    w_minus: np.ndarray


def _drive(kernel: RhoKernel, side: Side, w: np.ndarray, driving: Driving, *, derivative: bool = False) -> np.ndarray:
    fn = kernel.rho_hat_derivative if derivative else kernel.rho_hat
    if driving == "split":
        return fn(side, w)
    if driving != "full":
        raise ValueError(f"driving must be one of {', '.join(DRIVINGS)} (got {driving!r})")
    # both half-line transforms are defined on the real axis
    return fn("+", w) + fn("-", w)


def _assemble(kernel: RhoKernel, x: float, nystrom: NystromGrid, driving: Driving = "full") -> _System:
    a = SQRT3 * x
    yp, wp = nystrom.plus
    ym, wm = nystrom.minus
    n = yp.size
    y_all = np.concatenate([yp, ym])
    # I1 = int_0^Y F(z) rho_+(a + y - z zeta), I2 = int_-Y^0 G(z) rho_-(a + y - z zeta)
    k_plus = kernel.kernel_matrix("+", a + y_all, yp) * wp[None, :]
    k_minus = kernel.kernel_matrix("-", a + y_all, ym) * wm[None, :]
    matrix = np.zeros((2 * n, 2 * n), dtype=complex)
    matrix[:n, :n] = np.eye(n) - k_plus[:n]
    matrix[:n, n:] = -k_minus[:n]
    matrix[n:, :n] = k_plus[n:]
    matrix[n:, n:] = np.eye(n) + k_minus[n:]
    rhs = np.concatenate([_drive(kernel, "+", a + yp, driving), -_drive(kernel, "-", a + ym, driving)])
    return _System(matrix, rhs, yp, wp, ym, wm)


def _interpolant(
    kernel: RhoKernel,
    system: _System,
    x: float,
    y: np.ndarray,
    f: np.ndarray,
    g: np.ndarray,
    side: Side,
    derivative: bool,
    driving: Driving = "full",
) -> np.ndarray:
    """Nystrom interpolant of F (side '+') or G (side '-') at arbitrary y, or its y-derivative."""
    a = SQRT3 * x
    shifts = a + np.asarray(y, dtype=float)
    i1 = kernel.kernel_matrix("+", shifts, system.y_plus, derivative=derivative) @ (system.w_plus * f)
    i2 = kernel.kernel_matrix("-", shifts, system.y_minus, derivative=derivative) @ (system.w_minus * g)
    drive = _drive(kernel, side, shifts, driving, derivative=derivative)
    if side == "+":
        return drive + i1 + i2
    return -drive - i1 - i2


def solve_marchenko(
    kernel: RhoKernel, x: float, nystrom: NystromGrid | None = None, *, driving: Driving = "full"
) -> MarchenkoSlice:
    """One x-slice of the coupled F/G system by Nystrom discretization."""
    nystrom = nystrom or NystromGrid()
    system = _assemble(kernel, x, nystrom, driving)
    condition = float(np.linalg.cond(system.matrix))
    if not math.isfinite(condition) or condition > NYSTROM_CONDITION:
        raise SingularSystemError(f"Nystrom matrix is singular at x={x:.6g} (cond={condition:.3e})", x=x, condition=condition)
    sol = np.linalg.solve(system.matrix, system.rhs)
    n = system.y_plus.size
    f, g = sol[:n], sol[n:]
    residual = float(
        np.linalg.norm(system.matrix @ sol - system.rhs) / max(float(np.linalg.norm(sol)), np.finfo(float).tiny)
    )

    zero = np.array([0.0])
    f0 = complex(_interpolant(kernel, system, x, zero, f, g, "+", False, driving)[0])
    f0_y = complex(_interpolant(kernel, system, x, zero, f, g, "+", True, driving)[0])
    g0 = complex(_interpolant(kernel, system, x, zero, f, g, "-", False, driving)[0])
    g0_y = complex(_interpolant(kernel, system, x, zero, f, g, "-", True, driving)[0])

    steps = FD_STEP * np.arange(5)
    f_fd = one_sided_derivative(_interpolant(kernel, system, x, steps, f, g, "+", False, driving), FD_STEP)
    g_fd = -one_sided_derivative(_interpolant(kernel, system, x, -steps, f, g, "-", False, driving), FD_STEP)
    log.debug("Marchenko slice x=%.4f cond=%.3e residual=%.3e", x, condition, residual)
    return MarchenkoSlice(
        x=float(x),
        y_plus=system.y_plus,
        y_minus=system.y_minus,
        f_hat=f,
        g_hat=g,
        f0=f0,
        f0_y=f0_y,
        g0=g0,
        g0_y=g0_y,
        residual=residual,
        condition=condition,
        f0_y_fd=f_fd,
        g0_y_fd=g_fd,
    )


def system_residual(
    kernel: RhoKernel, piece: MarchenkoSlice, nystrom: NystromGrid | None = None, *, driving: Driving = "full"
) -> float:
    system = _assemble(kernel, piece.x, nystrom or NystromGrid(), driving)
    sol = np.concatenate([piece.f_hat, piece.g_hat])
    return float(np.linalg.norm(system.matrix @ sol - system.rhs) / max(float(np.linalg.norm(sol)), np.finfo(float).tiny))


def neumann_iterate(
    kernel: RhoKernel, x: float, nystrom: NystromGrid | None = None, *, driving: Driving = "full"
) -> tuple[np.ndarray, np.ndarray]:
    system = _assemble(kernel, x, nystrom or NystromGrid(), driving)
    first = system.rhs
    n2 = first.size
    # matrix = I - K, so the second iterate is rhs + K rhs
    kernel_part = np.eye(n2) - system.matrix
    second = first + kernel_part @ first
    return first, second


def solve_marchenko_grid(
    kernel: RhoKernel,
    grid: XGrid,
    nystrom: NystromGrid | None = None,
    *,
    threads: int = 1,
    resolution_tol: float | None = None,
    driving: Driving = "full",
) -> MarchenkoSolution:
    nystrom = nystrom or NystromGrid()
    slices = parallel_map(lambda x: solve_marchenko(kernel, float(x), nystrom, driving=driving), list(grid.x), threads=threads)
    if resolution_tol is not None:
        mid = grid.n_points // 2
        fine = solve_marchenko(kernel, float(grid.x[mid]), nystrom.refined(), driving=driving)
        coarse = slices[mid]
        scale = max(abs(coarse.f0), abs(coarse.g0), np.finfo(float).tiny)
        disagreement = max(abs(fine.f0 - coarse.f0), abs(fine.g0 - coarse.g0)) / scale
        if disagreement > resolution_tol and scale > 1e-14:
            raise ResolutionError(
                f"Nystrom refinement changes traces by {disagreement:.3e} (tol {resolution_tol:.1e})",
                disagreement=disagreement,
            )
    log.info("Solved Marchenko on %s x-slices (max residual %.3e)", grid.n_points, max(s.residual for s in slices))
    return MarchenkoSolution(grid=grid, slices=slices)


def _checked_derivative(x: np.ndarray, values: np.ndarray, order: int, tol: float | None) -> np.ndarray:
    fine = spline_derivative(x, values, order)
    if tol is not None:
        coarse = spline_derivative(x, values, order, degree=5)
        scale = max(float(np.max(np.abs(fine))), np.finfo(float).tiny)
        disagreement = float(np.max(np.abs(fine - coarse)) / scale)
        if disagreement > tol and scale > 1e-14:
            raise ResolutionError(
                f"x-grid too coarse for derivative order {order} (disagreement {disagreement:.3e})",
                disagreement=disagreement,
            )
    return fine


def recover_u_from_F(sol: MarchenkoSolution, t_l1: complex, t_l2: complex) -> tuple[np.ndarray, np.ndarray]:
    """u1 = -t1 + iz F(x,0+), u2 = -t2 + t1^2 - iz t1 F(x,0+) - z^2 F_y(x,0+)."""
    f0, fy = sol.f0, sol.f0_y
    u1 = -t_l1 + 1j * Z * f0
    u2 = -t_l2 + t_l1 * t_l1 - 1j * Z * t_l1 * f0 - Z2 * fy
    return u1, u2


def recover_v_from_G(sol: MarchenkoSolution) -> tuple[np.ndarray, np.ndarray]:
    """v1 = -iz G(x,0-), v2 = z^2 G_y(x,0-)."""
    return -1j * Z * sol.g0, Z2 * sol.g0_y


def recover_from_F(sol: MarchenkoSolution, *, resolution_tol: float | None = None) -> RecoveredPotential:
    """Q = -3iz F', P = -3z^2 F F' - 3iz F'' + 3z^2 (F_y)' with F = F(x, 0+)."""
    x = sol.grid.x
    f0, fy = sol.f0, sol.f0_y
    d1 = _checked_derivative(x, f0, 1, resolution_tol)
    d2 = _checked_derivative(x, f0, 2, resolution_tol)
    dy = _checked_derivative(x, fy, 1, resolution_tol)
    q = -3j * Z * d1
    p = -3.0 * Z2 * f0 * d1 - 3j * Z * d2 + 3.0 * Z2 * dy
    # t_l1, t_l2 cancel in Q and P; the stored expansion uses t = 0
    return RecoveredPotential(x=x, q=q, p=p, first=1j * Z * f0, second=-Z2 * fy, route="marchenko-F")


def recover_from_G(sol: MarchenkoSolution, *, resolution_tol: float | None = None) -> RecoveredPotential:
    """Q = 3iz G', P = -3z^2 G G' + 3iz G'' - 3z^2 (G_y)' with G = G(x, 0-)."""
    x = sol.grid.x
    g0, gy = sol.g0, sol.g0_y
    d1 = _checked_derivative(x, g0, 1, resolution_tol)
    d2 = _checked_derivative(x, g0, 2, resolution_tol)
    dy = _checked_derivative(x, gy, 1, resolution_tol)
    q = 3j * Z * d1
    p = -3.0 * Z2 * g0 * d1 + 3j * Z * d2 - 3.0 * Z2 * dy
    v1, v2 = recover_v_from_G(sol)
    return RecoveredPotential(x=x, q=q, p=p, first=v1, second=v2, route="marchenko-G")


@dataclass(frozen=True)
class SupportReport:
    status: Literal["ok", "not-applicable"]
    reason: str = ""
    f_negative_mass: float = 0.0
    g_positive_mass: float = 0.0
    f_cauchy: float = 0.0
    g_cauchy: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "reason": self.reason,
            "F_negative_y_mass": self.f_negative_mass,
            "G_positive_y_mass": self.g_positive_mass,
            "F_cauchy_lower": self.f_cauchy,
            "G_cauchy_upper": self.g_cauchy,
        }


def _tail_coefficient(s: np.ndarray, values: np.ndarray) -> np.ndarray:
    big = np.abs(s) >= 0.9 * np.max(np.abs(s))
    design = np.stack([1.0 / s[big], 1.0 / s[big] ** 2], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, values[big], rcond=None)
    return coeffs[0]


def _transform_mass(s: np.ndarray, w: np.ndarray, reg: np.ndarray, y: np.ndarray, wy: np.ndarray, exact: np.ndarray) -> tuple[float, np.ndarray]:
    hat = np.exp(-1j * np.outer(y, s)) @ (w[:, None] * reg) / TWO_PI + exact
    return float(np.sum(wy[:, None] * np.abs(hat) ** 2)), hat


def support_check(
    pair: PotentialPair,
    dataset: ScatteringDataset,
    grid: XGrid,
    *,
    x_values: Sequence[float] = (-1.0, 0.0, 1.0),
    s_max: float = 20.0,
    n_panels: int = 10,
    order: int = 12,
    y_max: float = 5.0,
    threads: int = 1,
    phi: PhiPair | None = None,
) -> SupportReport:
    """Numerical check that F_hat vanishes for y < 0 and G_hat for y > 0, and of the matching Cauchy integrals."""
    if dataset.bound_states:
        return SupportReport(status="not-applicable", reason="bound states present; F and G carry poles")
    if phi is None:
        phi = assemble_phi(RHData(dataset=dataset, secondary_zero=True, delta=dataset.secondary_delta), pair, grid, glue_tol=math.inf)
    sp, wp = gauss_legendre_panels(0.0, s_max, n_panels, order)
    s = np.concatenate([-sp[::-1], sp])
    w = np.concatenate([wp[::-1], wp])
    idx = np.array([grid.index_of(v) for v in x_values])

    def profiles(k: complex) -> tuple[np.ndarray, np.ndarray]:
        return phi.plus(k).phi[idx] - 1.0, phi.minus(k).phi[idx] - 1.0

    pairs = parallel_map(profiles, list(Z * s), threads=threads)
    f_vals = np.stack([p[0] for p in pairs])  # (n_s, n_x)
    g_vals = np.stack([p[1] for p in pairs])

    a_f = _tail_coefficient(s, f_vals)
    a_g = _tail_coefficient(s, g_vals)
    # F - A/(s + i) is analytic above and decays like 1/s^2; G - A/(s - i) below
    f_reg = f_vals - a_f[None, :] / (s + 1j)[:, None]
    g_reg = g_vals - a_g[None, :] / (s - 1j)[:, None]

    # e^{-iys} must stay resolved by the s-panels up to |y| = y_max
    yn, wn = gauss_legendre_panels(-y_max, 0.0, 8, 16)
    yp, wyp = gauss_legendre_panels(0.0, y_max, 8, 16)
    f_tail_pos = -1j * a_f[None, :] * np.exp(-yp)[:, None]
    g_tail_neg = 1j * a_g[None, :] * np.exp(yn)[:, None]
    f_neg, _ = _transform_mass(s, w, f_reg, yn, wn, 0.0)
    f_pos, _ = _transform_mass(s, w, f_reg, yp, wyp, f_tail_pos)
    g_pos, _ = _transform_mass(s, w, g_reg, yp, wyp, 0.0)
    g_neg, _ = _transform_mass(s, w, g_reg, yn, wn, g_tail_neg)
    f_mass = f_neg / max(f_neg + f_pos, np.finfo(float).tiny)
    g_mass = g_pos / max(g_neg + g_pos, np.finfo(float).tiny)

    # Cauchy integrals at alpha = z s: vanish for s < 0 (F) and s > 0 (G)
    test = np.linspace(0.5, 0.5 * s_max, 6)
    f_scale = max(float(np.max(np.abs(f_vals))), np.finfo(float).tiny)
    g_scale = max(float(np.max(np.abs(g_vals))), np.finfo(float).tiny)
    f_cauchy = max(
        float(np.max(np.abs((w[:, None] * f_reg / (s - alpha)[:, None]).sum(axis=0)))) / TWO_PI for alpha in Z * (-test)
    ) / f_scale
    g_cauchy = max(
        float(np.max(np.abs((w[:, None] * g_reg / (s - alpha)[:, None]).sum(axis=0)))) / TWO_PI for alpha in Z * test
    ) / g_scale
    log.info("Support check: F mass(y<0)=%.3e, G mass(y>0)=%.3e", f_mass, g_mass)
    return SupportReport(status="ok", f_negative_mass=f_mass, g_positive_mass=g_mass, f_cauchy=f_cauchy, g_cauchy=g_cauchy)
