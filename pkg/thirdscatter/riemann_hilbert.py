from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import comb

from thirdscatter.dataset import DependencyError, ScatteringDataset, TransmissionTail
from thirdscatter.direct import (
    RTOL,
    SolutionProfile,
    build_mn,
    extract_left,
    large_k_sweep,
    solve_basic,
)
from thirdscatter.numerics import fit_inverse_powers, parallel_map
from thirdscatter.potentials import PotentialPair, RecoveredPotential
from thirdscatter.spectral import Z, Z2, DomainError, XGrid, in_sector, line_parameter


log = logging.getLogger("thirdscatter.riemann_hilbert")

GLUE_TOL = 1e-5
ASYMPTOTIC_TOL = 1e-5
POLE_SEPARATION = 1e-3
SINGULAR_CONDITION = 1e13


class InconsistentDataError(RuntimeError):
    def __init__(self, message: str, *, mismatch: float | None = None) -> None:
        super().__init__(message)
        self.mismatch = mismatch


class SingularSystemError(RuntimeError):
    def __init__(self, message: str, *, x: float, condition: float) -> None:
        super().__init__(message)
        self.x = x
        self.condition = condition


class AsymptoticWindowError(RuntimeError):
    def __init__(self, message: str, *, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


@dataclass
class RHData:
    """Primary scattering data plus bound-state poles for the Riemann-Hilbert problem.

    The jump and glue relations hold only when the secondary reflection
    coefficients M and N vanish, which `secondary_zero` asserts.
    """

    dataset: ScatteringDataset | None
    poles: list[tuple[complex, complex]] = field(default_factory=list)
    secondary_zero: bool = False
    delta: float = 0.0

    @classmethod
    def from_dataset(cls, dataset: ScatteringDataset, *, m_n_tol: float) -> RHData:
        delta = dataset.secondary_delta
        poles = []
        for record in dataset.bound_states:
            gamma = record.get("gamma")
            if record.get("status") == "ok" and gamma:
                k = complex(record["k"]["Re"], record["k"]["Im"])
                poles.append((k, complex(gamma["Re"], gamma["Im"])))
        return cls(dataset=dataset, poles=poles, secondary_zero=delta <= m_n_tol, delta=delta)

    @classmethod
    def reflectionless(cls, poles: Sequence[tuple[complex, complex]]) -> RHData:
        return cls(dataset=None, poles=list(poles), secondary_zero=True, delta=0.0)

    def require_secondary_zero(self) -> None:
        if not self.secondary_zero:
            raise InconsistentDataError(
                f"Secondary reflections are not zero (max |M|,|N| = {self.delta:.3e}); the RH problem does not apply",
                mismatch=self.delta,
            )

    @property
    def tail(self) -> TransmissionTail:
        if self.dataset is None or self.dataset.tail is None:
            raise DependencyError("Transmission tail constants are not available")
        return self.dataset.tail


@dataclass(frozen=True)
class PhiPair:
    grid: XGrid
    plus_at: Callable[[complex], SolutionProfile]
    minus_at: Callable[[complex], SolutionProfile]
    glue: dict[str, float] = field(default_factory=dict)

    def plus(self, k: complex) -> SolutionProfile:
        if not in_sector(k, "P+", closed=True, tol=1e-8):
            raise DomainError(f"Phi+ is defined on closure(P+) (k={k!r})")
        return self.plus_at(complex(k))

    def minus(self, k: complex) -> SolutionProfile:
        if not in_sector(k, "P-", closed=True, tol=1e-8):
            raise DomainError(f"Phi- is defined on closure(P-) (k={k!r})")
        return self.minus_at(complex(k))


@dataclass(frozen=True)
class JumpFunction:
    k: np.ndarray
    grid: XGrid
    values: np.ndarray  # (len(k), n_points) samples of J(k, x)

    @property
    def s(self) -> np.ndarray:
        return np.array([line_parameter(k) for k in self.k])


def _scaled(profile: SolutionProfile, factor: complex, kind: str) -> SolutionProfile:
    return SolutionProfile(
        kind=kind,
        k=profile.k,
        grid=profile.grid,
        phi=factor * profile.phi,
        phi_x=factor * profile.phi_x,
        phi_xx=factor * profile.phi_xx,
    )


def _glue_mismatch(a: SolutionProfile, b: SolutionProfile) -> float:
    inner = a.grid.interior()
    diff = np.max(np.abs(a.phi[inner] - b.phi[inner]))
    scale = max(float(np.max(np.abs(a.phi[inner]))), np.finfo(float).tiny)
    return float(diff / scale)


def assemble_phi(
    data: RHData,
    pair: PotentialPair,
    grid: XGrid,
    *,
    glue_s: Sequence[float] = (0.5, 1.0, 2.0),
    glue_tol: float = GLUE_TOL,
    rtol: float = RTOL,
) -> PhiPair:
    """Phi+ = T_l f on closure(Omega1), m on closure(Omega2); Phi- = g on closure(Omega3), n on closure(Omega4)."""
    data.require_secondary_zero()

    def plus_at(k: complex) -> SolutionProfile:
        if in_sector(k, "Omega1", closed=True, tol=1e-8):
            f = solve_basic("f", k, pair, grid, rtol=rtol)
            t_inv = extract_left(f).t_inv
            if t_inv == 0:
                raise DependencyError(f"T_l has a pole at {k!r}")
            return _scaled(f, 1.0 / t_inv, "Phi+")
        return _scaled(build_mn("m", k, pair, grid, rtol=rtol), 1.0, "Phi+")

    def minus_at(k: complex) -> SolutionProfile:
        if in_sector(k, "Omega3", closed=True, tol=1e-8):
            return _scaled(solve_basic("g", k, pair, grid, rtol=rtol), 1.0, "Phi-")
        return _scaled(build_mn("n", k, pair, grid, rtol=rtol), 1.0, "Phi-")

    glue: dict[str, float] = {"L2": 0.0, "L4": 0.0}
    for s in glue_s:
        k2 = Z2 * s
        f = solve_basic("f", k2, pair, grid, rtol=rtol)
        t_f = _scaled(f, 1.0 / extract_left(f).t_inv, "Phi+")
        glue["L2"] = max(glue["L2"], _glue_mismatch(t_f, build_mn("m", k2, pair, grid, rtol=rtol)))
        k4 = -Z2 * s
        g = solve_basic("g", k4, pair, grid, rtol=rtol)
        glue["L4"] = max(glue["L4"], _glue_mismatch(g, build_mn("n", k4, pair, grid, rtol=rtol)))
    allowed = glue_tol + 10.0 * data.delta
    worst = max(glue.values())
    log.info("Phi glue mismatch on L2=%.3e, L4=%.3e (allowed %.3e)", glue["L2"], glue["L4"], allowed)
    if worst > allowed:
        raise InconsistentDataError(
            f"Phi+/Phi- glue mismatch {worst:.3e} exceeds {allowed:.3e}; M or N is not actually zero", mismatch=worst
        )
    return PhiPair(grid=grid, plus_at=plus_at, minus_at=minus_at, glue=glue)


def jump(data: RHData, pair: PotentialPair, grid: XGrid, k: complex, *, rtol: float = RTOL) -> np.ndarray:
    """J(k, x) on the grid: L(k) T_l(zk) f(zk, x) on L1, -R(k) T_r(zk) g(zk, x) / T_r(k) on -L3."""
    s = line_parameter(k)
    if s == 0:
        raise DomainError("The jump is not defined at k = 0")
    if data.dataset is None:
        return np.zeros(grid.n_points, dtype=complex)
    ds = data.dataset
    zk = Z * k
    if s > 0:
        coeff = ds.value("L", k) * ds.value("T_l", zk)
        if coeff == 0:
            return np.zeros(grid.n_points, dtype=complex)
        return coeff * solve_basic("f", zk, pair, grid, rtol=rtol).psi
    coeff = -ds.value("R", k) * ds.value("T_r", zk) / ds.value("T_r", k)
    if coeff == 0:
        return np.zeros(grid.n_points, dtype=complex)
    return coeff * solve_basic("g", zk, pair, grid, rtol=rtol).psi


def jump_samples(data: RHData, pair: PotentialPair, grid: XGrid, s_values: Sequence[float], *, threads: int = 1) -> JumpFunction:
    k = Z * np.asarray(s_values, dtype=float)
    values = parallel_map(lambda kk: jump(data, pair, grid, kk), list(k), threads=threads)
    return JumpFunction(k=k, grid=grid, values=np.stack(values))


def jump_residuals(phi: PhiPair, jumps: JumpFunction) -> np.ndarray:
    inner = phi.grid.interior()
    out = np.empty(jumps.k.size)
    for i, k in enumerate(jumps.k):
        plus = phi.plus(k).psi[inner]
        minus = phi.minus(k).psi[inner]
        scale = max(float(np.max(np.abs(plus))), np.finfo(float).tiny)
        out[i] = float(np.max(np.abs(plus - minus - jumps.values[i][inner])) / scale)
    return out


def reduced_identity_residual(dataset: ScatteringDataset) -> float:
    """Coupling identities with M = N = 0: T_r(z^2k)^-1 = T_l(k)^-1 T_l(zk)^-1 on L1 and the mirror on L3."""
    worst = 0.0
    for s in dataset.samples("L", "L1").s:
        k = Z * s
        lhs = 1.0 / dataset.value("T_r", Z2 * k)
        rhs = 1.0 / (dataset.value("T_l", k) * dataset.value("T_l", Z * k))
        worst = max(worst, abs(lhs - rhs))
    for s in dataset.samples("R", "L3").s:
        k = -Z * s
        lhs = 1.0 / dataset.value("T_l", Z2 * k)
        rhs = 1.0 / (dataset.value("T_r", k) * dataset.value("T_r", Z * k))
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def pole_rotation(k_j: complex) -> complex:
    if in_sector(Z * k_j, "P-", closed=False, tol=1e-12):
        return Z
    if in_sector(Z2 * k_j, "P-", closed=False, tol=1e-12):
        return Z2
    raise DomainError(f"Pole {k_j!r} has no rotated image in P-")


def centered_norming_constant(k_j: complex) -> complex:
    """Norming product placing the one-pole soliton peak at x = 0."""
    return (1.0 - pole_rotation(k_j)) * k_j


def _validate_poles(poles: Sequence[tuple[complex, complex]]) -> None:
    ks = [complex(k) for k, _ in poles]
    for i, (k, gamma) in enumerate(poles):
        k = complex(k)
        if complex(gamma) == 0:
            raise DomainError(f"gamma_{i} must be nonzero")
        if not in_sector(k, "P+", closed=False, tol=1e-12):
            raise DomainError(f"Pole {k!r} is not inside P+")
        # distance to the line z*s
        w = k / Z
        if abs(w.imag) < POLE_SEPARATION:
            raise DomainError(f"Pole {k!r} lies within {POLE_SEPARATION} of the jump line")
        for other in ks[:i]:
            if abs(k - other) < POLE_SEPARATION:
                raise DomainError(f"Poles {other!r} and {k!r} are closer than {POLE_SEPARATION}")


@dataclass(frozen=True)
class ReflectionlessSolution:
    """Phi(k, x) e^{-kx} = 1 + sum_j a_j(x) / (k - k_j) with residue conditions closed by gamma_j."""

    poles: np.ndarray
    gammas: np.ndarray

    def __post_init__(self) -> None:
        poles = np.asarray(self.poles, dtype=complex).ravel()
        gammas = np.asarray(self.gammas, dtype=complex).ravel()
        if poles.shape != gammas.shape:
            raise ValueError("poles and gammas must have the same length")
        _validate_poles(list(zip(poles, gammas)))
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "gammas", gammas)

    @property
    def rotations(self) -> np.ndarray:
        return np.array([pole_rotation(k) for k in self.poles], dtype=complex)

    @property
    def rates(self) -> np.ndarray:
        return (self.rotations - 1.0) * self.poles

    @property
    def cauchy(self) -> np.ndarray:
        return 1.0 / (self.rotations[:, None] * self.poles[:, None] - self.poles[None, :])

    def _c(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.gammas[None, :] * np.exp(np.outer(x, self.rates))

    def system(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self._c(np.atleast_1d(np.asarray(x, dtype=float)))
        eye = np.eye(self.poles.size, dtype=complex)
        return eye[None, :, :] - c[:, :, None] * self.cauchy[None, :, :], c

    def amplitudes(self, x: np.ndarray, n_derivatives: int = 3) -> list[np.ndarray]:
        """a_j and its x-derivatives, each (n_x, N), from the Leibniz-differentiated residue system."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.poles.size
        if n == 0:
            return [np.zeros((x.size, 0), dtype=complex) for _ in range(n_derivatives + 1)]
        mat, c = self.system(x)
        cond = np.linalg.cond(mat)
        bad = np.flatnonzero(~np.isfinite(cond) | (cond > SINGULAR_CONDITION))
        if bad.size:
            i = int(bad[0])
            raise SingularSystemError(
                f"Residue system is singular at x={x[i]:.6g} (cond={cond[i]:.3e})", x=float(x[i]), condition=float(cond[i])
            )
        rates = self.rates
        out: list[np.ndarray] = []
        for order in range(n_derivatives + 1):
            rhs = c * rates[None, :] ** order
            for i in range(1, order + 1):
                d_i = -(c * rates[None, :] ** i)[:, :, None] * self.cauchy[None, :, :]
                rhs = rhs - comb(order, i, exact=True) * np.einsum("xjl,xl->xj", d_i, out[order - i])
            out.append(np.linalg.solve(mat, rhs[..., None])[..., 0])
        return out

    def linear_residual(self, x: np.ndarray) -> float:
        mat, c = self.system(x)
        a = self.amplitudes(x, 0)[0]
        res = np.einsum("xjl,xl->xj", mat, a) - c
        scale = max(float(np.max(np.abs(c))), 1.0)
        return float(np.max(np.abs(res)) / scale)

    def potentials(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(Q, P, Q') from A1 = sum a_j and A2 = sum a_j k_j."""
        a, a1, a2, a3 = self.amplitudes(x, 3)
        big_a1 = a.sum(axis=1)
        d_a1 = a1.sum(axis=1)
        dd_a1 = a2.sum(axis=1)
        d_a2 = (a1 * self.poles[None, :]).sum(axis=1)
        q = -3.0 * d_a1
        p = 3.0 * (big_a1 * d_a1 - dd_a1 - d_a2)
        dq = -3.0 * dd_a1
        return q, p, dq

    def profile(self, k: complex, grid: XGrid) -> SolutionProfile:
        k = complex(k)
        if np.any(np.abs(self.poles - k) < 1e-12):
            raise DomainError(f"Phi has a pole at {k!r}")
        a, a1, a2, _ = self.amplitudes(grid.x, 3)
        w = 1.0 / (k - self.poles)
        return SolutionProfile(kind="Phi", k=k, grid=grid, phi=1.0 + a @ w, phi_x=a1 @ w, phi_xx=a2 @ w)

    def phi_pair(self, grid: XGrid) -> PhiPair:
        fn = functools.partial(self.profile, grid=grid)
        return PhiPair(grid=grid, plus_at=fn, minus_at=fn)

    def transmission_tail(self, x_far: float) -> TransmissionTail:
        a = self.amplitudes(np.array([x_far]), 0)[0][0]
        return TransmissionTail(t_l1=complex(a.sum()), t_l2=complex((a * self.poles).sum()))

    def transmission(self, k: complex, x_far: float) -> complex:
        a = self.amplitudes(np.array([x_far]), 0)[0][0]
        return complex(1.0 + np.sum(a / (complex(k) - self.poles)))

    def potential_pair(self, *, name: str = "soliton", tail_tol: float = 1e-12) -> PotentialPair:
        @functools.lru_cache(maxsize=256)
        def scalar(x: float) -> tuple[complex, complex, complex]:
            q, p, dq = self.potentials(np.array([x]))
            return complex(q[0]), complex(p[0]), complex(dq[0])

        def pick(index: int) -> Callable[[Any], Any]:
            def evaluate(x: Any) -> Any:
                arr = np.asarray(x, dtype=float)
                if arr.ndim == 0:
                    return scalar(float(arr))[index]
                return self.potentials(arr)[index]

            return evaluate

        return PotentialPair(
            q=pick(0),
            p=pick(1),
            dq=pick(2),
            name=name,
            params={
                "poles": [{"k_re": k.real, "k_im": k.imag, "gamma_re": g.real, "gamma_im": g.imag}
                          for k, g in zip(self.poles, self.gammas)]
            },
            tail_tol=tail_tol,
        )


def solve_reflectionless(poles: Sequence[tuple[complex, complex]], grid: XGrid) -> tuple[ReflectionlessSolution, PhiPair]:
    sol = ReflectionlessSolution(
        poles=np.array([k for k, _ in poles], dtype=complex), gammas=np.array([g for _, g in poles], dtype=complex)
    )
    # surface singular x early
    sol.amplitudes(grid.x, 0)
    log.info("Reflectionless solve with %s pole(s) on %s points", sol.poles.size, grid.n_points)
    return sol, sol.phi_pair(grid)


def phi_ode_residual(sol: ReflectionlessSolution, k: complex, grid: XGrid) -> float:
    k = complex(k)
    a, a1, a2, a3 = sol.amplitudes(grid.x, 3)
    w = 1.0 / (k - sol.poles)
    phi = 1.0 + a @ w
    d1, d2, d3 = a1 @ w, a2 @ w, a3 @ w
    q, p, _ = sol.potentials(grid.x)
    res = d3 + 3.0 * k * d2 + (3.0 * k * k + q) * d1 + (k * q + p) * phi
    return float(np.max(np.abs(res)) / max(float(np.max(np.abs(phi))), np.finfo(float).tiny))


def _fit_profiles(
    profiles: Sequence[SolutionProfile], k_values: np.ndarray, n_terms: int, asymptotic_tol: float
) -> tuple[np.ndarray, np.ndarray, float]:
    values = np.stack([prof.phi - 1.0 for prof in profiles])
    coeffs, residual = fit_inverse_powers(k_values, values, n_terms)
    if residual > asymptotic_tol:
        raise AsymptoticWindowError(
            f"Large-k fit residual {residual:.3e} exceeds {asymptotic_tol:.1e}; widen the |k| sweep", residual=residual
        )
    return coeffs[0], coeffs[1], residual


def recover_from_plus(
    phi: PhiPair,
    tail: TransmissionTail,
    *,
    k_values: np.ndarray | None = None,
    n_terms: int = 5,
    asymptotic_tol: float = ASYMPTOTIC_TOL,
    threads: int = 1,
) -> RecoveredPotential:
    """u1, u2 from e^{-kx} Phi+ = 1 + (t1 + u1)/k + (t2 + t1 u1 + u2)/k^2 + ..., then Q and P."""
    k_values = large_k_sweep("plus") if k_values is None else np.asarray(k_values, dtype=complex)
    for k in k_values:
        if not in_sector(k, "Omega1", closed=True, tol=1e-8):
            raise DomainError(f"recover_from_plus samples must lie in closure(Omega1) (k={k!r})")
    profiles = parallel_map(phi.plus, list(k_values), threads=threads)
    c1, c2, residual = _fit_profiles(profiles, k_values, n_terms, asymptotic_tol)
    t1, t2 = tail.t_l1, tail.t_l2
    u1 = c1 - t1
    u2 = c2 - t2 - t1 * u1
    log.info("Recovered u1, u2 from Phi+ (fit residual %.3e)", residual)
    return RecoveredPotential.from_expansion(phi.grid.x, u1, u2, route="plus", residual=residual)


def recover_from_minus(
    phi: PhiPair,
    *,
    k_values: np.ndarray | None = None,
    n_terms: int = 5,
    asymptotic_tol: float = ASYMPTOTIC_TOL,
    threads: int = 1,
) -> RecoveredPotential:
    """v1, v2 from e^{-kx} Phi- = 1 + v1/k + v2/k^2 + ..., then Q and P."""
    k_values = large_k_sweep("minus") if k_values is None else np.asarray(k_values, dtype=complex)
    for k in k_values:
        if not in_sector(k, "Omega3", closed=True, tol=1e-8):
            raise DomainError(f"recover_from_minus samples must lie in closure(Omega3) (k={k!r})")
    profiles = parallel_map(phi.minus, list(k_values), threads=threads)
    v1, v2, residual = _fit_profiles(profiles, k_values, n_terms, asymptotic_tol)
    log.info("Recovered v1, v2 from Phi- (fit residual %.3e)", residual)
    return RecoveredPotential.from_expansion(phi.grid.x, v1, v2, route="minus", residual=residual)


def normalization_error(phi: PhiPair, k: complex) -> float:
    prof = phi.plus(k) if in_sector(k, "P+", closed=True, tol=1e-8) else phi.minus(k)
    inner = phi.grid.interior()
    return float(np.max(np.abs(prof.phi[inner] - 1.0)))

