from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from thirdscatter.dataset import (
    COEFFICIENT_RAYS,
    DependencyError,
    RaySamples,
    ScatteringDataset,
    TransmissionTail,
)
from thirdscatter.numerics import (
    cumulative_from_left,
    cumulative_from_right,
    fit_inverse_powers,
    parallel_map,
    spline_derivative,
)
from thirdscatter.potentials import PotentialPair, adjoint_potentials
from thirdscatter.spectral import Z, Z2, DomainError, XGrid, canonical_arg, classify_k, in_sector, ray_points


log = logging.getLogger("thirdscatter.direct")

Kind = Literal["f", "g", "m", "n", "fbar", "gbar"]
Side = Literal["left", "right"]

RTOL = 1e-10
ATOL = 1e-12
DOMAIN_TOL = 1e-8
MAX_CONDITION = 1e12

# 3-Wronskian constants as printed, divided by k^3
PRINTED_DOWN_CONSTANT = -3.0 * Z * (1.0 - Z)
PRINTED_UP_CONSTANT = 3.0 * (1.0 - Z2)

_DOMAINS: dict[str, str] = {"f": "Omega1", "fbar": "Omega1", "g": "Omega3", "gbar": "Omega3", "m": "Omega2", "n": "Omega4"}


class IntegrationError(RuntimeError):
    def __init__(self, message: str, *, kind: str, k: complex) -> None:
        super().__init__(f"{message} (kind={kind}, k={k!r})")
        self.kind = kind
        self.k = k


class ConditioningError(RuntimeError):
    def __init__(self, message: str, *, condition: float) -> None:
        super().__init__(message)
        self.condition = condition


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SolutionProfile:
    """One basic solution stored as phi = e^{-kx} psi and its first two x-derivatives."""

    kind: str
    k: complex
    grid: XGrid
    phi: np.ndarray
    phi_x: np.ndarray
    phi_xx: np.ndarray

    @property
    def stack(self) -> np.ndarray:
        k = self.k
        return np.stack(
            [
                self.phi,
                self.phi_x + k * self.phi,
                self.phi_xx + 2.0 * k * self.phi_x + k * k * self.phi,
            ]
        )

    def _scaled(self, row: int) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(self.k * self.grid.x) * self.stack[row]

    @property
    def psi(self) -> np.ndarray:
        return self._scaled(0)

    @property
    def psi_x(self) -> np.ndarray:
        return self._scaled(1)

    @property
    def psi_xx(self) -> np.ndarray:
        return self._scaled(2)


@dataclass(frozen=True)
class Extraction:
    k: complex
    side: Side
    t_inv: complex
    c2: complex
    c3: complex
    physical2: bool
    physical3: bool
    condition: float

    @property
    def primary(self) -> complex:
        """L (left) or R (right); only meaningful on L1 / L3."""
        return self.c2 / self.t_inv if self.physical2 else complex("nan")

    @property
    def secondary(self) -> complex:
        """M (left) or N (right); only meaningful on L2 / L4."""
        return self.c3 / self.t_inv if self.physical3 else complex("nan")


@dataclass(frozen=True)
class TailExpansion:
    grid: XGrid
    u1: np.ndarray
    u2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray


@dataclass(frozen=True)
class BranchConstants:
    down: complex
    up: complex
    printed_down: complex
    printed_up: complex

    @property
    def up_discrepancy(self) -> complex:
        """Unit phase between the calibrated and printed upper-branch constants."""
        return self.up / self.printed_up


@dataclass(frozen=True)
class LargeKFit:
    grid: XGrid
    c1: np.ndarray
    c2: np.ndarray
    residual: float


def _check_k(kind: str, k: complex) -> complex:
    k = complex(k)
    if k == 0:
        raise DomainError(f"k = 0 is excluded ({kind})")
    if not in_sector(k, _DOMAINS[kind], closed=True, tol=DOMAIN_TOL):
        raise DomainError(f"k={k!r} is outside the closure of {_DOMAINS[kind]} required by {kind}")
    return k


def free_profile(kind: str, k: complex, grid: XGrid) -> SolutionProfile:
    n = grid.n_points
    return SolutionProfile(
        kind=kind,
        k=complex(k),
        grid=grid,
        phi=np.ones(n, dtype=complex),
        phi_x=np.zeros(n, dtype=complex),
        phi_xx=np.zeros(n, dtype=complex),
    )


def solve_basic(
    kind: Kind,
    k: complex,
    pair: PotentialPair,
    grid: XGrid,
    *,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> SolutionProfile:
    """Jost solution f, g (or the adjoint fbar, gbar) normalized by its exponential end.

    The factored unknown phi = e^{-kx} psi solves
    phi''' = -3k phi'' - (3k^2 + Q) phi' - (kQ + P) phi and is marched from the
    normalization end inward, where the other two modes decay.
    """
    if kind not in ("f", "g", "fbar", "gbar"):
        raise ValueError(f"solve_basic handles f, g, fbar, gbar (got {kind})")
    k = _check_k(kind, k)
    if pair.is_free():
        return free_profile(kind, k, grid)

    if kind in ("fbar", "gbar"):
        adj = adjoint_potentials(pair)
        q_of, p_of = adj.q, adj.p
    else:
        q_of, p_of = pair.q, pair.p

    k2 = k * k

    def rhs(x: float, y: np.ndarray) -> np.ndarray:
        q = complex(q_of(x))
        p = complex(p_of(x))
        return np.array([y[1], y[2], -3.0 * k * y[2] - (3.0 * k2 + q) * y[1] - (k * q + p) * y[0]])

    x = grid.x
    backward = kind in ("f", "fbar")
    span = (grid.x_max, grid.x_min) if backward else (grid.x_min, grid.x_max)
    t_eval = x[::-1] if backward else x
    y0 = np.array([1.0, 0.0, 0.0], dtype=complex)

    sol = solve_ivp(rhs, span, y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success or sol.y.shape[1] != grid.n_points:
        raise IntegrationError(f"Adaptive integration failed: {sol.message}", kind=kind, k=k)
    y = sol.y[:, ::-1] if backward else sol.y
    log.debug("solve_basic %s k=%s nfev=%s", kind, k, sol.nfev)
    return SolutionProfile(kind=kind, k=k, grid=grid, phi=y[0], phi_x=y[1], phi_xx=y[2])


def _mode_exponents(k: complex) -> np.ndarray:
    return np.array([0.0, (Z - 1.0) * k, (Z2 - 1.0) * k], dtype=complex)


def _extract(profile: SolutionProfile, side: Side) -> Extraction:
    k = profile.k
    if k == 0:
        raise DomainError("k = 0 is excluded from extraction")
    idx = 0 if side == "left" else -1
    x_end = profile.grid.x[idx]
    mu = _mode_exponents(k)
    modes = np.vstack([np.ones(3, dtype=complex), mu, mu * mu])
    scale = np.diag([1.0, 1.0 / abs(k), 1.0 / abs(k) ** 2])
    condition = float(np.linalg.cond(scale @ modes))
    if condition > MAX_CONDITION:
        raise ConditioningError(f"Extraction matrix ill-conditioned at k={k!r} (cond={condition:.3e})", condition=condition)
    rhs = np.array([profile.phi[idx], profile.phi_x[idx], profile.phi_xx[idx]], dtype=complex)
    d = np.linalg.solve(modes, rhs)
    with np.errstate(over="ignore", invalid="ignore"):
        c = d * np.exp(-mu * x_end)
    tag = classify_k(k).tag
    if side == "left":
        physical2, physical3 = tag == "L1", tag == "L2"
    else:
        physical2, physical3 = tag == "L3", tag == "L4"
    return Extraction(
        k=k,
        side=side,
        t_inv=complex(c[0]),
        c2=complex(c[1]),
        c3=complex(c[2]),
        physical2=physical2,
        physical3=physical3,
        condition=condition,
    )


def extract_left(f_profile: SolutionProfile) -> Extraction:
    """(T_l^-1, L T_l^-1, M T_l^-1) from the 3x3 mode matrix at x_min."""
    if f_profile.kind not in ("f", "fbar"):
        raise ValueError(f"extract_left needs a left Jost profile (got {f_profile.kind})")
    return _extract(f_profile, "left")


def extract_right(g_profile: SolutionProfile) -> Extraction:
    """(T_r^-1, R T_r^-1, N T_r^-1) from the 3x3 mode matrix at x_max."""
    if g_profile.kind not in ("g", "gbar"):
        raise ValueError(f"extract_right needs a right Jost profile (got {g_profile.kind})")
    return _extract(g_profile, "right")


def _same_grid(*profiles: SolutionProfile) -> None:
    first = profiles[0].grid
    for prof in profiles[1:]:
        if prof.grid != first:
            raise GridMismatchError("Profiles live on different grids")


def wronskian2_profile(a: SolutionProfile, b: SolutionProfile) -> np.ndarray:
    _same_grid(a, b)
    sa, sb = a.stack, b.stack
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp((a.k + b.k) * a.grid.x) * (sa[0] * sb[1] - sa[1] * sb[0])


def wronskian2(a: SolutionProfile, b: SolutionProfile, x_index: int) -> complex:
    return complex(wronskian2_profile(a, b)[x_index])


def wronskian3_profile(a: SolutionProfile, b: SolutionProfile, c: SolutionProfile) -> np.ndarray:
    _same_grid(a, b, c)
    sa, sb, sc = a.stack, b.stack, c.stack
    det = (
        sa[0] * (sb[1] * sc[2] - sb[2] * sc[1])
        - sb[0] * (sa[1] * sc[2] - sa[2] * sc[1])
        + sc[0] * (sa[1] * sb[2] - sa[2] * sb[1])
    )
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp((a.k + b.k + c.k) * a.grid.x) * det


def wronskian3(a: SolutionProfile, b: SolutionProfile, c: SolutionProfile, x_index: int) -> complex:
    return complex(wronskian3_profile(a, b, c)[x_index])


def relative_spread(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=complex)
    ref = complex(np.median(values.real) + 1j * np.median(values.imag))
    scale = abs(ref) if ref != 0 else max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    return float(np.max(np.abs(values - ref)) / scale)


def build_mn(
    kind: Literal["m", "n"],
    k: complex,
    pair: PotentialPair,
    grid: XGrid,
    *,
    t_r: complex | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> SolutionProfile:
    """m or n from the 2-Wronskian of conjugated adjoint Jost solutions.

    m(k,x) = T_r(zk) [fbar(-z^2 k*, x)*; gbar(-z k*, x)*] / (z(1-z)k)
    n(k,x) = T_r(z^2 k) [fbar(-z k*, x)*; gbar(-z^2 k*, x)*] / (-z(1-z)k)
    """
    if kind not in ("m", "n"):
        raise ValueError(f"build_mn handles m and n (got {kind})")
    k = _check_k(kind, k)
    kc = k.conjugate()
    if kind == "m":
        a, b = -Z2 * kc, -Z * kc
        k_tr = Z * k
        denominator = Z * (1.0 - Z) * k
    else:
        a, b = -Z * kc, -Z2 * kc
        k_tr = Z2 * k
        denominator = -Z * (1.0 - Z) * k

    if t_r is None:
        t_r_inv = extract_right(solve_basic("g", k_tr, pair, grid, rtol=rtol, atol=atol)).t_inv
        if t_r_inv == 0:
            raise DependencyError(f"T_r has a pole at {k_tr!r}; {kind}({k!r}) is undefined")
        t_r = 1.0 / t_r_inv

    fbar = solve_basic("fbar", a, pair, grid, rtol=rtol, atol=atol)
    gbar = solve_basic("gbar", b, pair, grid, rtol=rtol, atol=atol)
    # e^{-alpha x} A^(j) and e^{-beta x} B^(j) with alpha + beta = k
    A = np.conj(fbar.stack)
    B = np.conj(gbar.stack)
    q = np.asarray(pair.q(grid.x), dtype=complex)

    w0 = A[0] * B[1] - A[1] * B[0]
    w1 = A[0] * B[2] - A[2] * B[0]
    # A''' = -Q A' - (Q' - P) A - k^3 A for both factors, so A B''' - A''' B = -Q w0
    w2 = A[1] * B[2] - A[2] * B[1] - q * w0

    const = t_r / denominator
    psi0, psi1, psi2 = const * w0, const * w1, const * w2
    phi = psi0
    phi_x = psi1 - k * phi
    phi_xx = psi2 - 2.0 * k * phi_x - k * k * phi
    return SolutionProfile(kind=kind, k=k, grid=grid, phi=phi, phi_x=phi_x, phi_xx=phi_xx)


@functools.lru_cache(maxsize=1)
def calibrate_branch_constants() -> BranchConstants:
    grid = XGrid(-1.0, 1.0, 9)
    k = -1.0 + 0.0j
    idx = grid.n_points // 2
    e = functools.partial(free_profile, "f", grid=grid)
    down = wronskian3(e(k=k), e(k=Z * k), e(k=Z2 * k), idx) / k**3
    up = wronskian3(e(k=k), e(k=Z2 * k), e(k=Z * k), idx) / k**3
    constants = BranchConstants(down=down, up=up, printed_down=PRINTED_DOWN_CONSTANT, printed_up=PRINTED_UP_CONSTANT)
    if abs(down - PRINTED_DOWN_CONSTANT) > 1e-12 * abs(down):
        log.warning("Lower-branch Wronskian constant differs from the printed value: %s vs %s", down, PRINTED_DOWN_CONSTANT)
    if abs(up - PRINTED_UP_CONSTANT) > 1e-12 * abs(up):
        log.info(
            "Upper-branch Wronskian constant calibrated to %s (printed %s, phase %.6f rad)",
            up,
            PRINTED_UP_CONSTANT,
            math.atan2(constants.up_discrepancy.imag, constants.up_discrepancy.real),
        )
    return constants


def _is_lower_branch(k: complex) -> bool:
    return canonical_arg(k) >= math.pi - DOMAIN_TOL


def wronskian_triple(
    k: complex, pair: PotentialPair, grid: XGrid, *, rtol: float = RTOL, atol: float = ATOL
) -> tuple[SolutionProfile, SolutionProfile, SolutionProfile]:
    """[f(k); g(zk); n(z^2 k)] on the lower half of Omega1, [f(k); g(z^2 k); m(zk)] on the upper."""
    k = _check_k("f", k)
    f = solve_basic("f", k, pair, grid, rtol=rtol, atol=atol)
    if _is_lower_branch(k):
        g = solve_basic("g", Z * k, pair, grid, rtol=rtol, atol=atol)
        third = build_mn("n", Z2 * k, pair, grid, rtol=rtol, atol=atol)
    else:
        g = solve_basic("g", Z2 * k, pair, grid, rtol=rtol, atol=atol)
        third = build_mn("m", Z * k, pair, grid, rtol=rtol, atol=atol)
    return f, g, third


def transmission_from_wronskian(
    k: complex,
    pair: PotentialPair,
    grid: XGrid,
    *,
    x_index: int | None = None,
    profiles: tuple[SolutionProfile, SolutionProfile, SolutionProfile] | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> complex:
    k = _check_k("f", k)
    if profiles is None:
        profiles = wronskian_triple(k, pair, grid, rtol=rtol, atol=atol)
    constants = calibrate_branch_constants()
    constant = constants.down if _is_lower_branch(k) else constants.up
    idx = grid.n_points // 2 if x_index is None else x_index
    return wronskian3(*profiles, idx) / (constant * k**3)


def inverse_transmission(
    k: complex,
    pair: PotentialPair,
    grid: XGrid,
    *,
    route: Literal["extraction", "wronskian"] = "extraction",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> complex:
    if route == "wronskian":
        return transmission_from_wronskian(k, pair, grid, rtol=rtol, atol=atol)
    return extract_left(solve_basic("f", k, pair, grid, rtol=rtol, atol=atol)).t_inv


def coupling_identity_residual(side: Side, dataset: ScatteringDataset, k: complex) -> float:
    """|T_r(z^2k)^-1 - T_l(k)^-1 T_l(zk)^-1 (1 - L(k) M(zk))| on L1, and the mirrored identity on L3."""
    k = complex(k)
    if side == "left":
        if classify_k(k).tag != "L1":
            raise DomainError(f"Left coupling identity needs k on L1 (got {k!r})")
        lhs = 1.0 / dataset.value("T_r", Z2 * k)
        rhs = (
            (1.0 / dataset.value("T_l", k))
            * (1.0 / dataset.value("T_l", Z * k))
            * (1.0 - dataset.value("L", k) * dataset.value("M", Z * k))
        )
    elif side == "right":
        if classify_k(k).tag != "L3":
            raise DomainError(f"Right coupling identity needs k on L3 (got {k!r})")
        lhs = 1.0 / dataset.value("T_l", Z2 * k)
        rhs = (
            (1.0 / dataset.value("T_r", k))
            * (1.0 / dataset.value("T_r", Z * k))
            * (1.0 - dataset.value("R", k) * dataset.value("N", Z * k))
        )
    else:
        raise ValueError(f"side must be left or right (got {side})")
    return float(abs(lhs - rhs))


def tail_expansion(pair: PotentialPair, grid: XGrid) -> TailExpansion:
    """u1, u2 (large-k coefficients of f) and v1, v2 (of g) by cumulative quadrature."""
    x = grid.x
    q, p, _ = pair.sample(grid)
    iq_right = cumulative_from_right(x, q)
    ip_right = cumulative_from_right(x, p)
    iq_left = cumulative_from_left(x, q)
    ip_left = cumulative_from_left(x, p)
    u1 = iq_right / 3.0
    u2 = q / 3.0 + ip_right / 3.0 + 0.5 * u1 * u1
    v1 = -iq_left / 3.0
    v2 = q / 3.0 - ip_left / 3.0 + 0.5 * v1 * v1
    return TailExpansion(grid=grid, u1=u1, u2=u2, v1=v1, v2=v2)


def tail_constants_from_potentials(pair: PotentialPair, grid: XGrid) -> TransmissionTail:
    """t_l1 = -(1/3) int Q, t_l2 = t_l1^2 / 2 - (1/3) int P."""
    tails = tail_expansion(pair, grid)
    big_u1 = complex(tails.u1[0])
    ip_total = complex(cumulative_from_right(grid.x, pair.sample(grid)[1])[0])
    return TransmissionTail(t_l1=-big_u1, t_l2=0.5 * big_u1 * big_u1 - ip_total / 3.0)


def large_k_sweep(half: Literal["plus", "minus"], k_min: float = 10.0, k_max: float = 40.0, n: int = 8) -> np.ndarray:
    angles = (5 * math.pi / 6, math.pi, 7 * math.pi / 6) if half == "plus" else (-math.pi / 6, 0.0, math.pi / 6)
    radii = np.geomspace(k_min, k_max, n)
    return np.concatenate([radii * np.exp(1j * a) for a in angles])


def fit_tail_constants(
    k_values: np.ndarray, t_inv_values: np.ndarray, *, n_terms: int = 5
) -> TransmissionTail:
    """Fit T_l = 1 + t_l1/k + t_l2/k^2 + ... on a large-|k| sweep."""
    coeffs, residual = fit_inverse_powers(k_values, 1.0 / np.asarray(t_inv_values, dtype=complex) - 1.0, n_terms)
    return TransmissionTail(t_l1=complex(coeffs[0]), t_l2=complex(coeffs[1]), residual=residual)


def large_k_profile_fit(
    kind: Literal["f", "g"],
    pair: PotentialPair,
    grid: XGrid,
    k_values: np.ndarray,
    *,
    n_terms: int = 5,
    threads: int = 1,
) -> LargeKFit:
    """1/k and 1/k^2 coefficients of e^{-kx} f (u1, u2) or e^{-kx} g (v1, v2)."""
    profiles = parallel_map(lambda kk: solve_basic(kind, kk, pair, grid), list(k_values), threads=threads)
    values = np.stack([prof.phi - 1.0 for prof in profiles])
    coeffs, residual = fit_inverse_powers(np.asarray(k_values), values, n_terms)
    return LargeKFit(grid=grid, c1=coeffs[0], c2=coeffs[1], residual=residual)


def large_k_remainder(
    pair: PotentialPair, grid: XGrid, k_values: np.ndarray, *, tails: TailExpansion | None = None
) -> np.ndarray:
    tails = tails or tail_expansion(pair, grid)
    inner = grid.interior()
    out = []
    for k in k_values:
        prof = solve_basic("f", k, pair, grid)
        rem = prof.phi - 1.0 - tails.u1 / k - tails.u2 / k**2
        out.append(float(np.max(np.abs(rem[inner]))))
    return np.asarray(out)


def ode_residual(profile: SolutionProfile, pair: PotentialPair) -> float:
    grid = profile.grid
    if profile.kind in ("fbar", "gbar"):
        adj = adjoint_potentials(pair)
        q, p = adj.sample(grid)
    else:
        q, p, _ = pair.sample(grid)
    k = profile.k
    phi_xxx = spline_derivative(grid.x, profile.phi_xx, 1)
    res = phi_xxx + 3.0 * k * profile.phi_xx + (3.0 * k * k + q) * profile.phi_x + (k * q + p) * profile.phi
    inner = grid.interior()
    scale = max(float(np.max(np.abs(profile.phi[inner]))), np.finfo(float).tiny)
    return float(np.max(np.abs(res[inner])) / scale)


def compute_dataset(
    pair: PotentialPair,
    grid: XGrid,
    s_values: np.ndarray,
    *,
    large_k: np.ndarray | None = None,
    threads: int = 1,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> ScatteringDataset:
    """All six coefficients on a common s-grid, plus fitted transmission tail constants."""
    s_values = np.asarray(s_values, dtype=float)
    if np.any(s_values <= 0):
        raise DomainError("Ray parameters must be positive (k = 0 is excluded)")
    dataset = ScatteringDataset(potential=pair.describe())

    jobs: list[tuple[str, str, float]] = []
    for side_kind, rays in (("f", ("L1", "L2", "R-")), ("g", ("L3", "L4", "R+"))):
        for ray in rays:
            jobs.extend((side_kind, ray, float(s)) for s in s_values)

    def run(job: tuple[str, str, float]) -> Extraction:
        kind, ray, s = job
        k = complex(ray_points(ray, np.array([s]))[0])
        prof = solve_basic(kind, k, pair, grid, rtol=rtol, atol=atol)  # type: ignore[arg-type]
        return extract_left(prof) if kind == "f" else extract_right(prof)

    log.info("Forward sweep: %s solves on %s rays", len(jobs), 6)
    results = parallel_map(run, jobs, threads=threads)

    table: dict[str, list[Extraction]] = {}
    for (kind, ray, _), ext in zip(jobs, results):
        table.setdefault(ray, []).append(ext)

    for ray, exts in table.items():
        t_name = "T_l" if ray in COEFFICIENT_RAYS["T_l"] else "T_r"
        t_inv = np.array([e.t_inv for e in exts])
        dataset.add(t_name, RaySamples(ray, s_values, 1.0 / t_inv))
        if ray == "L1":
            dataset.add("L", RaySamples(ray, s_values, np.array([e.primary for e in exts])))
        elif ray == "L2":
            dataset.add("M", RaySamples(ray, s_values, np.array([e.secondary for e in exts])))
        elif ray == "L3":
            dataset.add("R", RaySamples(ray, s_values, np.array([e.primary for e in exts])))
        elif ray == "L4":
            dataset.add("N", RaySamples(ray, s_values, np.array([e.secondary for e in exts])))

    if large_k is not None and len(large_k):
        t_inv_big = parallel_map(
            lambda kk: inverse_transmission(kk, pair, grid, rtol=rtol, atol=atol), list(large_k), threads=threads
        )
        dataset.tail = fit_tail_constants(np.asarray(large_k), np.asarray(t_inv_big))
    return dataset
