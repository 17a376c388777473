from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np
from scipy.integrate import simpson

from thirdscatter.direct import RTOL, inverse_transmission, solve_basic
from thirdscatter.numerics import circle_derivative, parallel_map
from thirdscatter.potentials import PotentialPair
from thirdscatter.spectral import Z, Z2, XGrid, canonical_arg


log = logging.getLogger("thirdscatter.bound_states")

Route = Literal["extraction", "wronskian"]
CandidateStatus = Literal["converged", "nonconverged", "possibly-nonsimple", "outside-region"]
RecordStatus = Literal["ok", "unsupported-branch", "possibly-nonsimple"]

ROOT_TOL = 1e-8
SIMPLE_TOL = 1e-6
RAY_FLAG_TOL = 1e-3
SPREAD_TOL = 1e-4

# Rays inside Omega1 where the Wronskian formula or the dependency relation changes.
BRANCH_RAYS: dict[str, float] = {"5pi/6": 5 * math.pi / 6, "pi": math.pi, "7pi/6": 7 * math.pi / 6}


class BoundStateError(RuntimeError):
    def __init__(self, message: str, *, k: complex, spread: float | None = None) -> None:
        super().__init__(message)
        self.k = k
        self.spread = spread


class ArgumentPrincipleMismatch(RuntimeError):
    def __init__(self, message: str, *, counted: int, found: int) -> None:
        super().__init__(message)
        self.counted = counted
        self.found = found


@dataclass(frozen=True)
class SearchRegion:
    """Annular sector r_min <= |k| <= r_max, theta_min <= arg k <= theta_max inside closure(Omega1)."""

    r_min: float = 0.2
    r_max: float = 5.0
    theta_min: float = 2 * math.pi / 3
    theta_max: float = 4 * math.pi / 3

    def __post_init__(self) -> None:
        if not (0.0 < self.r_min < self.r_max):
            raise ValueError("SearchRegion needs 0 < r_min < r_max")
        lo, hi = 2 * math.pi / 3 - 1e-12, 4 * math.pi / 3 + 1e-12
        if not (lo <= self.theta_min < self.theta_max <= hi):
            raise ValueError("SearchRegion angles must lie in [2pi/3, 4pi/3]")

    def contains(self, k: complex, *, tol: float = 0.0) -> bool:
        r, a = abs(k), canonical_arg(k)
        return (self.r_min - tol <= r <= self.r_max + tol) and (self.theta_min - tol <= a <= self.theta_max + tol)

    def subsectors(self) -> list[SearchRegion]:
        cuts = [a for a in BRANCH_RAYS.values() if self.theta_min < a < self.theta_max]
        edges = [self.theta_min, *cuts, self.theta_max]
        return [SearchRegion(self.r_min, self.r_max, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]

    def boundary(self, n_per_edge: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n_per_edge, endpoint=False)
        th = self.theta_min + (self.theta_max - self.theta_min) * t
        r = self.r_min + (self.r_max - self.r_min) * t
        # outer arc ccw, edge at theta_max inward, inner arc cw, edge at theta_min outward
        outer = self.r_max * np.exp(1j * th)
        left_edge = (self.r_max - (self.r_max - self.r_min) * t) * np.exp(1j * self.theta_max)
        inner = self.r_min * np.exp(1j * (self.theta_max - (self.theta_max - self.theta_min) * t))
        right_edge = r * np.exp(1j * self.theta_min)
        path = np.concatenate([outer, left_edge, inner, right_edge])
        return np.append(path, path[0])

    def polar_grid(self, n_radial: int, n_angular: int) -> tuple[np.ndarray, np.ndarray]:
        radii = np.linspace(self.r_min, self.r_max, n_radial)
        angles = np.linspace(self.theta_min, self.theta_max, n_angular)
        return radii, angles

    def to_dict(self) -> dict[str, float]:
        return {"r_min": self.r_min, "r_max": self.r_max, "theta_min": self.theta_min, "theta_max": self.theta_max}


@dataclass(frozen=True)
class Candidate:
    k: complex
    status: CandidateStatus
    iterations: int
    value: complex
    derivative: complex
    near_ray: str | None = None


@dataclass(frozen=True)
class BoundStateSearch:
    roots: list[complex]
    candidates: list[Candidate]
    contour_count: int
    region: SearchRegion


@dataclass(frozen=True)
class BoundStateRecord:
    k: complex
    status: RecordStatus
    residue_tl: complex
    dependency: complex | None = None
    c_l: float | None = None
    c_r: float | None = None
    near_ray: str | None = None

    @property
    def gamma(self) -> complex | None:
        if self.dependency is None:
            return None
        return self.residue_tl * self.dependency

    def to_dict(self) -> dict[str, Any]:
        def cx(v: complex | None) -> dict[str, float] | None:
            return None if v is None else {"Re": float(v.real), "Im": float(v.imag)}

        return {
            "k": cx(self.k),
            "status": self.status,
            "residue_Tl": cx(self.residue_tl),
            "D": cx(self.dependency),
            "gamma": cx(self.gamma),
            "c_l": self.c_l,
            "c_r": self.c_r,
            "near_ray": self.near_ray,
        }


@dataclass
class _Evaluator:
    pair: PotentialPair
    grid: XGrid
    route: Route = "extraction"
    cache: dict[complex, complex] = field(default_factory=dict)

    def __call__(self, k: complex) -> complex:
        k = complex(k)
        hit = self.cache.get(k)
        if hit is None:
            hit = inverse_transmission(k, self.pair, self.grid, route=self.route)
            self.cache[k] = hit
        return hit


def _distance_to_boundary(k: complex) -> float:
    a = canonical_arg(k)
    gap = min(abs(a - 2 * math.pi / 3), abs(4 * math.pi / 3 - a))
    return abs(k) * math.sin(min(gap, math.pi / 2))


def _step_radius(k: complex) -> float:
    return max(min(1e-3 * abs(k), 0.5 * _distance_to_boundary(k)), 1e-7)


def nearest_branch_ray(k: complex, *, tol: float = RAY_FLAG_TOL) -> str | None:
    a = canonical_arg(k)
    for name, angle in BRANCH_RAYS.items():
        if abs(a - angle) * abs(k) <= tol:
            return name
    return None


def newton_refine(
    func: Callable[[complex], complex],
    k0: complex,
    region: SearchRegion,
    *,
    root_tol: float = ROOT_TOL,
    max_iter: int = 30,
) -> Candidate:
    k = complex(k0)
    value = func(k)
    deriv = circle_derivative(func, k, radius=_step_radius(k))
    for it in range(1, max_iter + 1):
        if deriv == 0:
            break
        step = value / deriv
        k = k - step
        if not region.contains(k, tol=1e-9):
            return Candidate(k, "outside-region", it, value, deriv)
        value = func(k)
        deriv = circle_derivative(func, k, radius=_step_radius(k))
        if abs(step) <= root_tol * abs(k):
            if abs(deriv) < SIMPLE_TOL:
                log.warning("Zero at k=%s has |d(T_l^-1)/dk|=%.3e: possibly nonsimple", k, abs(deriv))
                return Candidate(k, "possibly-nonsimple", it, value, deriv, nearest_branch_ray(k))
            return Candidate(k, "converged", it, value, deriv, nearest_branch_ray(k))
    log.warning("Newton did not converge from k0=%s (last k=%s, |h|=%.3e)", k0, k, abs(value))
    return Candidate(k, "nonconverged", max_iter, value, deriv)


def winding_number(values: np.ndarray) -> float:
    phase = np.unwrap(np.angle(values))
    return float((phase[-1] - phase[0]) / (2.0 * math.pi))


def contour_count(
    func: Callable[[complex], complex],
    region: SearchRegion,
    *,
    n_per_edge: int = 24,
    threads: int = 1,
    max_refinements: int = 3,
) -> int:
    """Zeros of func inside region by the argument principle on its boundary."""
    n = n_per_edge
    for _ in range(max_refinements + 1):
        path = region.boundary(n)
        values = np.asarray(parallel_map(func, list(path), threads=threads), dtype=complex)
        if np.min(np.abs(values)) == 0.0:
            raise ArgumentPrincipleMismatch(f"Zero on the contour of {region}", counted=-1, found=-1)
        jumps = np.abs(np.angle(values[1:] / values[:-1]))
        winding = winding_number(values)
        if np.max(jumps) < math.pi / 3 and abs(winding - round(winding)) < 0.05:
            return int(round(winding))
        n *= 2
    raise ArgumentPrincipleMismatch(
        f"Argument-principle contour under-resolved on {region} (winding {winding:.3f})", counted=-1, found=-1
    )


def _scan_minima(values: np.ndarray) -> list[tuple[int, int]]:
    mag = np.abs(values)
    n_r, n_a = mag.shape
    out = []
    for i in range(n_r):
        for j in range(n_a):
            lo_i, hi_i = max(i - 1, 0), min(i + 2, n_r)
            lo_j, hi_j = max(j - 1, 0), min(j + 2, n_a)
            if mag[i, j] <= np.min(mag[lo_i:hi_i, lo_j:hi_j]):
                out.append((i, j))
    return out


def find_bound_states(
    pair: PotentialPair,
    grid: XGrid,
    *,
    region: SearchRegion | None = None,
    n_radial: int = 12,
    n_angular: int = 8,
    n_contour: int = 24,
    root_tol: float = ROOT_TOL,
    route: Route = "extraction",
    threads: int = 1,
) -> BoundStateSearch:
    """Simple zeros of T_l^-1 in a compact part of Omega1, cross-checked by the argument principle."""
    region = region or SearchRegion()
    if pair.is_free():
        return BoundStateSearch(roots=[], candidates=[], contour_count=0, region=region)
    func = _Evaluator(pair, grid, route)

    roots: list[complex] = []
    candidates: list[Candidate] = []
    counted = 0
    for sub in region.subsectors():
        radii, angles = sub.polar_grid(n_radial, n_angular)
        kk = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()
        values = np.asarray(parallel_map(func, list(kk), threads=threads), dtype=complex).reshape(len(radii), len(angles))
        seeds = [radii[i] * np.exp(1j * angles[j]) for i, j in _scan_minima(values)]
        log.debug("Subsector %s: %s seeds", sub, len(seeds))

        refined = parallel_map(lambda k0: newton_refine(func, k0, sub, root_tol=root_tol), seeds, threads=threads)
        sub_roots: list[complex] = []
        for cand in refined:
            candidates.append(cand)
            if cand.status != "converged" or not sub.contains(cand.k, tol=1e-9):
                continue
            if any(abs(cand.k - r) <= 1e-6 * max(1.0, abs(r)) for r in roots + sub_roots):
                continue
            if cand.near_ray is not None:
                log.warning("Bound state k=%s lies within %.0e of the %s ray", cand.k, RAY_FLAG_TOL, cand.near_ray)
            sub_roots.append(cand.k)

        count = contour_count(func, sub, n_per_edge=n_contour, threads=threads)
        if count != len(sub_roots):
            raise ArgumentPrincipleMismatch(
                f"Argument principle counts {count} zeros in {sub} but Newton found {len(sub_roots)}",
                counted=count,
                found=len(sub_roots),
            )
        counted += count
        roots.extend(sub_roots)

    roots.sort(key=lambda k: (canonical_arg(k), abs(k)))
    log.info("Bound-state search: %s zero(s) of T_l^-1 in %s", len(roots), region)
    return BoundStateSearch(roots=roots, candidates=candidates, contour_count=counted, region=region)


def dependency_rotation(k_j: complex) -> complex:
    """z for arg k_j in [7pi/6, 4pi/3), z^2 for arg k_j in (2pi/3, 5pi/6]."""
    a = canonical_arg(k_j)
    if 7 * math.pi / 6 - 1e-12 <= a < 4 * math.pi / 3:
        return Z
    if 2 * math.pi / 3 < a <= 5 * math.pi / 6 + 1e-12:
        return Z2
    raise BoundStateError(f"No dependency relation implemented for arg k={a:.6f}", k=k_j)


def _dependency(k_j: complex, pair: PotentialPair, grid: XGrid, *, rtol: float) -> tuple[complex, float]:
    rot = dependency_rotation(k_j)
    f = solve_basic("f", k_j, pair, grid, rtol=rtol)
    g = solve_basic("g", rot * k_j, pair, grid, rtol=rtol)
    mid = grid.interior(0.5)
    x = grid.x[mid]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ratio = np.exp((k_j - rot * k_j) * x) * f.phi[mid] / g.phi[mid]
        g_mag = np.abs(g.psi[mid])
    ok = np.isfinite(ratio) & (g_mag > 1e-8 * np.max(g_mag))
    if not np.any(ok):
        raise BoundStateError("g vanishes on the interior grid", k=k_j)
    ratio = ratio[ok]
    d = complex(np.median(ratio.real) + 1j * np.median(ratio.imag))
    if d == 0:
        raise BoundStateError("Dependency ratio is zero", k=k_j)
    spread = float(np.max(np.abs(ratio - d)) / abs(d))
    return d, spread


def dependency_constant(
    k_j: complex, pair: PotentialPair, grid: XGrid, *, spread_tol: float = SPREAD_TOL, rtol: float = RTOL
) -> complex:
    """D_j with f(k_j, x) = D_j g(z k_j, x) (or g(z^2 k_j, x) on the conjugate branch)."""
    d, spread = _dependency(k_j, pair, grid, rtol=rtol)
    if spread > spread_tol:
        raise BoundStateError(
            f"f/g is not constant in x at k={k_j!r} (spread {spread:.3e}); not a bound state", k=k_j, spread=spread
        )
    return d


def _inverse_root_norm(psi: np.ndarray, grid: XGrid) -> float:
    mag2 = np.abs(psi) ** 2
    if max(mag2[0], mag2[-1]) > 1e-12 * np.max(mag2):
        raise BoundStateError("Bound-state profile does not decay at the grid ends; widen the grid", k=complex("nan"))
    return float(simpson(mag2, x=grid.x) ** -0.5)


def normalization_constants(k_j: complex, pair: PotentialPair, grid: XGrid, *, rtol: float = RTOL) -> tuple[float, float]:
    rot = dependency_rotation(k_j)
    f = solve_basic("f", k_j, pair, grid, rtol=rtol)
    g = solve_basic("g", rot * k_j, pair, grid, rtol=rtol)
    try:
        return _inverse_root_norm(f.psi, grid), _inverse_root_norm(g.psi, grid)
    except BoundStateError as e:
        raise BoundStateError(str(e), k=k_j) from e


def characterize(
    k_j: complex,
    pair: PotentialPair,
    grid: XGrid,
    *,
    route: Route = "extraction",
    spread_tol: float = SPREAD_TOL,
) -> BoundStateRecord:
    func = _Evaluator(pair, grid, route)
    deriv = circle_derivative(func, k_j, radius=_step_radius(k_j))
    near = nearest_branch_ray(k_j)
    if abs(deriv) < SIMPLE_TOL:
        return BoundStateRecord(k=k_j, status="possibly-nonsimple", residue_tl=complex("nan"), near_ray=near)
    residue = 1.0 / deriv
    try:
        dependency_rotation(k_j)
    except BoundStateError:
        log.warning("Bound state k=%s is on an unsupported dependency branch", k_j)
        return BoundStateRecord(k=k_j, status="unsupported-branch", residue_tl=residue, near_ray=near)
    d = dependency_constant(k_j, pair, grid, spread_tol=spread_tol)
    c_l, c_r = normalization_constants(k_j, pair, grid)
    return BoundStateRecord(k=k_j, status="ok", residue_tl=residue, dependency=d, c_l=c_l, c_r=c_r, near_ray=near)
