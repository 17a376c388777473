from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np


@dataclass(frozen=True)
class CubeRootGeometry:
    z: complex = complex(-0.5, math.sqrt(3.0) / 2.0)

    @property
    def z_squared(self) -> complex:
        return self.z.conjugate()

    def rotate(self, k: complex, power: int) -> complex:
        power %= 3
        if power == 0:
            return complex(k)
        return complex(k) * (self.z if power == 1 else self.z_squared)

    def invariant_residual(self) -> float:
        """max of |z^3 - 1|, |1 + z + z^2|, ||z| - 1| and |z^2 - z*z|."""
        z, z2 = self.z, self.z_squared
        return float(max(abs(z**3 - 1.0), abs(1.0 + z + z2), abs(abs(z) - 1.0), abs(z2 - z * z)))


GEOMETRY = CubeRootGeometry()
Z = GEOMETRY.z
Z2 = GEOMETRY.z_squared

ANGLE_TOL = 1e-10

SectorTag = Literal[
    "Omega1up",
    "Omega1down",
    "Omega2",
    "Omega3down",
    "Omega3up",
    "Omega4",
    "Omega1",
    "Omega3",
    "L1",
    "L2",
    "L3",
    "L4",
    "L",
    "R-",
    "R+",
    "P+",
    "P-",
    "origin",
]

# Open sectors and boundary rays on the canonical branch (-2pi/3, 4pi/3].
_OPEN_SECTORS: tuple[tuple[str, float, float], ...] = (
    ("Omega2", -2 * math.pi / 3, -math.pi / 3),
    ("Omega3down", -math.pi / 3, 0.0),
    ("Omega3up", 0.0, math.pi / 3),
    ("Omega4", math.pi / 3, 2 * math.pi / 3),
    ("Omega1up", 2 * math.pi / 3, math.pi),
    ("Omega1down", math.pi, 4 * math.pi / 3),
)

_RAYS: tuple[tuple[str, float], ...] = (
    ("L3", -math.pi / 3),
    ("R+", 0.0),
    ("L4", math.pi / 3),
    ("L1", 2 * math.pi / 3),
    ("R-", math.pi),
    ("L2", 4 * math.pi / 3),
)

# Unit direction of each ray: k = direction * s with s >= 0.
RAY_DIRECTIONS: dict[str, complex] = {
    "L1": Z,
    "L2": Z2,
    "L3": -Z,
    "L4": -Z2,
    "R+": 1.0 + 0.0j,
    "R-": -1.0 + 0.0j,
}

# Angular extent of the composite and closed labels.
_SPANS: dict[str, tuple[float, float]] = {
    "Omega1": (2 * math.pi / 3, 4 * math.pi / 3),
    "Omega3": (-math.pi / 3, math.pi / 3),
    "P+": (2 * math.pi / 3, 5 * math.pi / 3),
    "P-": (-math.pi / 3, 2 * math.pi / 3),
}
for _name, _lo, _hi in _OPEN_SECTORS:
    _SPANS[_name] = (_lo, _hi)
_SPANS["Omega2"] = (4 * math.pi / 3, 5 * math.pi / 3)

# Counterclockwise rotation by 2pi/3 permutes the twelve elementary labels.
_ROTATION: dict[str, str] = {
    "Omega1up": "Omega2",
    "Omega1down": "Omega3down",
    "Omega2": "Omega3up",
    "Omega3down": "Omega4",
    "Omega3up": "Omega1up",
    "Omega4": "Omega1down",
    "L1": "L2",
    "R-": "L3",
    "L2": "R+",
    "L3": "L4",
    "R+": "L1",
    "L4": "R-",
    "origin": "origin",
}


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SectorLabel:
    tag: str
    closed: bool = False

    @property
    def is_ray(self) -> bool:
        return self.tag in RAY_DIRECTIONS

    def contains(self, k: complex, *, tol: float = ANGLE_TOL) -> bool:
        return in_sector(k, self.tag, closed=self.closed, tol=tol)


def canonical_arg(k: complex) -> float:
    a = cmath.phase(k)
    if a <= -2 * math.pi / 3 + ANGLE_TOL:
        a += 2 * math.pi
    return a


def rotate(k: complex, power: int) -> complex:
    return GEOMETRY.rotate(k, power)


def classify_k(k: complex, *, tol: float = ANGLE_TOL) -> SectorLabel:
    if k == 0:
        return SectorLabel("origin", closed=True)
    a = canonical_arg(k)
    for name, angle in _RAYS:
        if abs(a - angle) <= tol:
            return SectorLabel(name, closed=True)
    # 4pi/3 and -2pi/3 are the same ray
    if abs(a - (-2 * math.pi / 3)) <= tol:
        return SectorLabel("L2", closed=True)
    for name, lo, hi in _OPEN_SECTORS:
        if lo < a < hi:
            return SectorLabel(name)
    raise AssertionError(f"unclassified argument {a!r}")


def rotate_label(label: SectorLabel, power: int = 1) -> SectorLabel:
    tag = label.tag
    for _ in range(power % 3):
        try:
            tag = _ROTATION[tag]
        except KeyError as e:
            raise DomainError(f"Label {label.tag} has no rotation image") from e
    return SectorLabel(tag, closed=label.closed)


def in_sector(k: complex, tag: str, *, closed: bool = True, tol: float = ANGLE_TOL) -> bool:
    if k == 0:
        return closed
    if tag in RAY_DIRECTIONS:
        return classify_k(k, tol=tol).tag == tag
    if tag == "L":
        return classify_k(k, tol=tol).tag in ("L1", "L3")
    lo, hi = _SPANS[tag]
    a = canonical_arg(k)
    # spans crossing 4pi/3 are measured on the shifted branch
    if hi > 4 * math.pi / 3 + tol and a < lo - tol:
        a += 2 * math.pi
    if closed:
        return lo - tol <= a <= hi + tol
    return lo + tol < a < hi - tol


def line_parameter(k: complex, *, tol: float = ANGLE_TOL) -> float:
    """Real s with k = z*s for k on the directed line through L1 and L3."""
    if k == 0:
        return 0.0
    w = complex(k) / Z
    if abs(w.imag) > tol * abs(k):
        raise DomainError(f"k={k!r} is not on the line z*s (off by {abs(w.imag) / abs(k):.3e} rad)")
    return w.real


def ray_points(tag: str, s: np.ndarray) -> np.ndarray:
    try:
        direction = RAY_DIRECTIONS[tag]
    except KeyError as e:
        raise DomainError(f"Unknown ray: {tag}") from e
    return direction * np.asarray(s, dtype=float)


@dataclass(frozen=True)
class XGrid:
    x_min: float = -12.0
    x_max: float = 12.0
    n_points: int = 2048

    def __post_init__(self) -> None:
        if not (self.x_min < 0.0 < self.x_max):
            raise DomainError(f"XGrid needs x_min < 0 < x_max (got {self.x_min}, {self.x_max})")
        if self.n_points < 8:
            raise DomainError("XGrid needs at least 8 points")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    def index_of(self, x: float) -> int:
        return int(np.argmin(np.abs(self.x - x)))

    def interior(self, fraction: float = 0.9) -> slice:
        cut = int(round(self.n_points * (1.0 - fraction) / 2.0))
        return slice(cut, self.n_points - cut)

    def refined(self) -> XGrid:
        return XGrid(self.x_min, self.x_max, 2 * self.n_points - 1)


@dataclass(frozen=True)
class KPath:
    k: np.ndarray
    label: SectorLabel
    s: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        k = np.asarray(self.k, dtype=complex)
        object.__setattr__(self, "k", k)
        for value in k:
            if value != 0 and not in_sector(complex(value), self.label.tag, closed=True):
                raise DomainError(f"k={value!r} lies outside closure of {self.label.tag}")
        if self.s is not None:
            s = np.asarray(self.s, dtype=float)
            if s.shape != k.shape:
                raise DomainError("KPath s and k must have the same shape")
            if s.size > 1 and not (np.all(np.diff(s) > 0) or np.all(np.diff(s) < 0)):
                raise DomainError("KPath s must be monotone")
            object.__setattr__(self, "s", s)

    @classmethod
    def ray(cls, tag: str, s: np.ndarray) -> KPath:
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("Ray parameters must be non-negative")
        return cls(k=ray_points(tag, s), label=SectorLabel(tag, closed=True), s=s)

    @classmethod
    def line(cls, s: np.ndarray) -> KPath:
        s = np.asarray(s, dtype=float)
        return cls(k=Z * s, label=SectorLabel("L", closed=True), s=s)

    @classmethod
    def polar(cls, tag: str, radii: np.ndarray, angles: np.ndarray) -> KPath:
        rr, aa = np.meshgrid(np.asarray(radii, dtype=float), np.asarray(angles, dtype=float), indexing="ij")
        return cls(k=(rr * np.exp(1j * aa)).ravel(), label=SectorLabel(tag, closed=True))

    def __len__(self) -> int:
        return int(self.k.size)
