from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.special import erfc

from thirdscatter.numerics import spline_derivative
from thirdscatter.spectral import Z, XGrid


log = logging.getLogger("thirdscatter.potentials")

Profile = Callable[[Any], Any]


class PotentialError(ValueError):
    pass


def _zero(x: Any) -> Any:
    return np.zeros_like(np.asarray(x, dtype=float), dtype=complex)


@dataclass(frozen=True)
class PotentialPair:
    """Complex potentials Q, P of psi''' + Q psi' + P psi = k^3 psi."""

    q: Profile
    p: Profile
    dq: Profile
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)
    tail_tol: float = 1e-12
    # closed forms of int_x^inf Q and int_x^inf P when known
    q_tail: Profile | None = None
    p_tail: Profile | None = None

    def sample(self, grid: XGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = grid.x
        return (
            np.asarray(self.q(x), dtype=complex),
            np.asarray(self.p(x), dtype=complex),
            np.asarray(self.dq(x), dtype=complex),
        )

    def tail_magnitude(self, grid: XGrid) -> float:
        ends = np.array([grid.x_min, grid.x_max])
        return float(
            max(
                np.max(np.abs(self.q(ends))),
                np.max(np.abs(self.p(ends))),
                np.max(np.abs(self.dq(ends))),
            )
        )

    def check_tails(self, grid: XGrid) -> float:
        tail = self.tail_magnitude(grid)
        if tail > self.tail_tol:
            raise PotentialError(
                f"Potential '{self.name}' is {tail:.3e} at the grid ends (tail_tol={self.tail_tol:.1e}); widen the grid"
            )
        return tail

    def is_free(self) -> bool:
        return self.name == "free"

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "params": dict(self.params), "tail_tol": self.tail_tol}

    @classmethod
    def from_samples(
        cls,
        x: np.ndarray,
        q: np.ndarray,
        p: np.ndarray,
        *,
        name: str = "sampled",
        tail_tol: float = 1e-12,
    ) -> PotentialPair:
        x = np.asarray(x, dtype=float)
        q_re = make_interp_spline(x, np.real(q), k=5)
        q_im = make_interp_spline(x, np.imag(q), k=5)
        p_re = make_interp_spline(x, np.real(p), k=5)
        p_im = make_interp_spline(x, np.imag(p), k=5)
        dq_re = q_re.derivative(1)
        dq_im = q_im.derivative(1)
        lo, hi = float(x[0]), float(x[-1])

        def _wrap(re_part: Any, im_part: Any) -> Profile:
            def evaluate(t: Any) -> Any:
                t = np.asarray(t, dtype=float)
                inside = (t >= lo) & (t <= hi)
                out = (re_part(t) + 1j * im_part(t)) * inside
                return out if out.ndim else complex(out)

            return evaluate

        return cls(
            q=_wrap(q_re, q_im),
            p=_wrap(p_re, p_im),
            dq=_wrap(dq_re, dq_im),
            name=name,
            params={"n_samples": int(x.size), "x_min": lo, "x_max": hi},
            tail_tol=tail_tol,
        )


@dataclass(frozen=True)
class AdjointPair:
    q: Profile
    p: Profile

    def sample(self, grid: XGrid) -> tuple[np.ndarray, np.ndarray]:
        x = grid.x
        return np.asarray(self.q(x), dtype=complex), np.asarray(self.p(x), dtype=complex)


def adjoint_potentials(pair: PotentialPair) -> AdjointPair:
    """Q_bar = conj(Q), P_bar = conj(Q') - conj(P)."""

    def q_bar(x: Any) -> Any:
        return np.conj(pair.q(x))

    def p_bar(x: Any) -> Any:
        return np.conj(pair.dq(x)) - np.conj(pair.p(x))

    return AdjointPair(q=q_bar, p=p_bar)


def potentials_from_expansion(x: np.ndarray, first: np.ndarray, second: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Q = -3 w1', P = 3 (w1 w1' - w1'' - w2') for the 1/k, 1/k^2 coefficients w1, w2 of e^{-kx} psi."""
    d1 = spline_derivative(x, first, 1)
    d2 = spline_derivative(x, first, 2)
    e1 = spline_derivative(x, second, 1)
    return -3.0 * d1, 3.0 * (first * d1 - d2 - e1)


@dataclass(frozen=True)
class RecoveredPotential:

    x: np.ndarray
    q: np.ndarray
    p: np.ndarray
    first: np.ndarray
    second: np.ndarray
    route: str
    residual: float = 0.0

    @classmethod
    def from_expansion(
        cls, x: np.ndarray, first: np.ndarray, second: np.ndarray, *, route: str, residual: float = 0.0
    ) -> RecoveredPotential:
        q, p = potentials_from_expansion(x, first, second)
        return cls(x=x, q=q, p=p, first=first, second=second, route=route, residual=residual)

    def as_pair(self, *, tail_tol: float = 1e-12) -> PotentialPair:
        return PotentialPair.from_samples(self.x, self.q, self.p, name=f"recovered-{self.route}", tail_tol=tail_tol)


def free() -> PotentialPair:
    def zero_tail(x: Any) -> Any:
        return _zero(x)

    return PotentialPair(q=_zero, p=_zero, dq=_zero, name="free", q_tail=zero_tail, p_tail=zero_tail)


def _gauss_tail(width: float) -> Profile:
    # int_x^inf exp(-t^2/w^2) dt
    def tail(x: Any) -> Any:
        return 0.5 * math.sqrt(math.pi) * width * erfc(np.asarray(x, dtype=float) / width)

    return tail


def gauss(eps: float = 1.0, p_ratio: float = 0.3, width: float = 1.0, tail_tol: float = 1e-12) -> PotentialPair:
    """Q = eps exp(-x^2/w^2), P = p_ratio * Q."""
    if width <= 0:
        raise PotentialError("gauss width must be positive")
    base_tail = _gauss_tail(width)

    def q(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return eps * np.exp(-((x / width) ** 2)) + 0j

    def p(x: Any) -> Any:
        return p_ratio * q(x)

    def dq(x: Any) -> Any:
        return -2.0 * np.asarray(x, dtype=float) / width**2 * q(x)

    return PotentialPair(
        q=q,
        p=p,
        dq=dq,
        name="gauss",
        params={"eps": eps, "p_ratio": p_ratio, "width": width},
        tail_tol=tail_tol,
        q_tail=lambda x: eps * base_tail(x) + 0j,
        p_tail=lambda x: p_ratio * eps * base_tail(x) + 0j,
    )


def super_gauss(eps: float = 1.0, p_ratio: float = 0.3, width: float = 1.0, tail_tol: float = 1e-12) -> PotentialPair:
    if width <= 0:
        raise PotentialError("super-gauss width must be positive")

    def q(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return eps * np.exp(-((x / width) ** 4)) + 0j

    def p(x: Any) -> Any:
        return p_ratio * q(x)

    def dq(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return -4.0 * x**3 / width**4 * q(x)

    return PotentialPair(
        q=q,
        p=p,
        dq=dq,
        name="super-gauss",
        params={"eps": eps, "p_ratio": p_ratio, "width": width},
        tail_tol=tail_tol,
    )


def complex_phase(
    eps: float = 1.0, phase: float = 0.5, p_ratio: float = 0.3, width: float = 1.0, tail_tol: float = 1e-12
) -> PotentialPair:
    """Q = eps e^{i phase} exp(-x^2/w^2), P = p_ratio eps e^{-i phase} exp(-x^2/w^2)."""
    if width <= 0:
        raise PotentialError("complex-phase width must be positive")
    rot = complex(math.cos(phase), math.sin(phase))
    base_tail = _gauss_tail(width)

    def envelope(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return np.exp(-((x / width) ** 2))

    def q(x: Any) -> Any:
        return eps * rot * envelope(x)

    def p(x: Any) -> Any:
        return p_ratio * eps * rot.conjugate() * envelope(x)

    def dq(x: Any) -> Any:
        return -2.0 * np.asarray(x, dtype=float) / width**2 * q(x)

    return PotentialPair(
        q=q,
        p=p,
        dq=dq,
        name="complex-phase",
        params={"eps": eps, "phase": phase, "p_ratio": p_ratio, "width": width},
        tail_tol=tail_tol,
        q_tail=lambda x: eps * rot * base_tail(x),
        p_tail=lambda x: p_ratio * eps * rot.conjugate() * base_tail(x),
    )


def pair(eps: float = 0.05, tail_tol: float = 1e-12) -> PotentialPair:
    """Q = eps exp(-x^2), P = eps i x exp(-x^2)."""

    def q(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return eps * np.exp(-(x**2)) + 0j

    def p(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return 1j * eps * x * np.exp(-(x**2))

    def dq(x: Any) -> Any:
        return -2.0 * np.asarray(x, dtype=float) * q(x)

    def q_tail(x: Any) -> Any:
        return eps * 0.5 * math.sqrt(math.pi) * erfc(np.asarray(x, dtype=float)) + 0j

    def p_tail(x: Any) -> Any:
        # int_x^inf t exp(-t^2) dt = exp(-x^2)/2
        x = np.asarray(x, dtype=float)
        return 1j * eps * 0.5 * np.exp(-(x**2))

    return PotentialPair(
        q=q,
        p=p,
        dq=dq,
        name="pair",
        params={"eps": eps},
        tail_tol=tail_tol,
        q_tail=q_tail,
        p_tail=p_tail,
    )


def dipole(eps: float = 0.02, tail_tol: float = 1e-12) -> PotentialPair:
    """Q = eps d/dx exp(-x^2), P = Q' / (1 - z^2).

    M and N vanish to first order in eps and rho is regular at s = 0, so the
    single-rho Marchenko model holds up to O(eps^2).
    """
    # 1 / (1 - z^2) = (1 - z) / 3
    tie = (1.0 - Z) / 3.0

    def q(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return -2.0 * eps * x * np.exp(-(x**2)) + 0j

    def dq(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return eps * (4.0 * x**2 - 2.0) * np.exp(-(x**2)) + 0j

    def p(x: Any) -> Any:
        return tie * dq(x)

    def q_tail(x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        return -eps * np.exp(-(x**2)) + 0j

    def p_tail(x: Any) -> Any:
        return -tie * q(x)

    return PotentialPair(
        q=q,
        p=p,
        dq=dq,
        name="dipole",
        params={"eps": eps},
        tail_tol=tail_tol,
        q_tail=q_tail,
        p_tail=p_tail,
    )


PRESETS: dict[str, Callable[..., PotentialPair]] = {
    "free": lambda **_: free(),
    "gauss": gauss,
    "super-gauss": super_gauss,
    "complex-phase": complex_phase,
    "pair": pair,
    "dipole": dipole,
}

# documented parameter ranges
PRESET_RANGES: dict[str, tuple[float, float]] = {
    "eps": (0.0, 10.0),
    "p_ratio": (-10.0, 10.0),
    "width": (0.05, 5.0),
    "phase": (-math.pi, math.pi),
}

_PRESET_RE = re.compile(r"^\s*([A-Za-z][\w-]*)\s*(?:\((.*)\))?\s*$")


def parse_preset(text: str) -> tuple[str, dict[str, float]]:
    m = _PRESET_RE.match(text or "")
    if not m:
        raise PotentialError(f"Cannot parse preset: {text!r}")
    name, body = m.group(1).lower(), m.group(2)
    params: dict[str, float] = {}
    if body:
        for item in body.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise PotentialError(f"Preset parameter must be key=value: {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            key = {"ε": "eps", "epsilon": "eps", "θ": "phase"}.get(key, key)
            try:
                params[key] = float(value)
            except ValueError as e:
                raise PotentialError(f"Preset parameter {key} is not a number: {value!r}") from e
    return name, params


def build_preset(name: str, params: dict[str, Any] | None = None, *, tail_tol: float = 1e-12) -> PotentialPair:
    params = dict(params or {})
    factory = PRESETS.get(name)
    if factory is None:
        raise PotentialError(f"Unknown preset: {name} (known: {', '.join(sorted(PRESETS))})")
    for key, value in params.items():
        lo, hi = PRESET_RANGES.get(key, (-math.inf, math.inf))
        if not (lo <= float(value) <= hi):
            raise PotentialError(f"Preset parameter {key}={value} outside [{lo}, {hi}]")
    if name == "free":
        if params:
            raise PotentialError("Preset 'free' takes no parameters")
        return free()
    try:
        return factory(**params, tail_tol=tail_tol)
    except TypeError as e:
        raise PotentialError(f"Bad parameters for preset {name}: {e}") from e


def gaussian_u1_closed_form(x: np.ndarray, eps: float = 1.0) -> np.ndarray:
    """(1/3) int_x^inf eps exp(-t^2) dt = eps sqrt(pi)/6 erfc(x)."""
    return eps * math.sqrt(math.pi) / 6.0 * erfc(np.asarray(x, dtype=float))
