from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from thirdscatter.spectral import RAY_DIRECTIONS, classify_k, ray_points


log = logging.getLogger("thirdscatter.dataset")

DATASET_FORMAT = "thirdscatter.dataset.v1"

# coefficient -> rays it is sampled on
COEFFICIENT_RAYS: dict[str, tuple[str, ...]] = {
    "T_l": ("L1", "L2", "R-"),
    "L": ("L1",),
    "M": ("L2",),
    "T_r": ("L3", "L4", "R+"),
    "R": ("L3",),
    "N": ("L4",),
}


class DependencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransmissionTail:
    t_l1: complex
    t_l2: complex
    residual: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "t_l1": _complex_to_dict(self.t_l1),
            "t_l2": _complex_to_dict(self.t_l2),
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> TransmissionTail:
        return cls(
            t_l1=_complex_from_dict(raw["t_l1"]),
            t_l2=_complex_from_dict(raw["t_l2"]),
            residual=float(raw.get("residual", 0.0)),
        )


@dataclass(frozen=True)
class RaySamples:
    ray: str
    s: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.ray not in RAY_DIRECTIONS:
            raise ValueError(f"Unknown ray: {self.ray}")
        s = np.asarray(self.s, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if s.shape != values.shape:
            raise ValueError("RaySamples s and values must have the same shape")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> np.ndarray:
        return ray_points(self.ray, self.s)

    def to_dict(self) -> dict[str, Any]:
        return {
            "s": [float(v) for v in self.s],
            "Re": [float(v) for v in self.values.real],
            "Im": [float(v) for v in self.values.imag],
        }

    @classmethod
    def from_dict(cls, ray: str, raw: Mapping[str, Any]) -> RaySamples:
        re = np.asarray(raw["Re"], dtype=float)
        im = np.asarray(raw["Im"], dtype=float)
        return cls(ray=ray, s=np.asarray(raw["s"], dtype=float), values=re + 1j * im)


@dataclass
class ScatteringDataset:
    """The six scattering coefficients sampled on their rays."""

    potential: dict[str, Any]
    coefficients: dict[str, dict[str, RaySamples]] = field(default_factory=dict)
    tail: TransmissionTail | None = None
    bound_states: list[dict[str, Any]] = field(default_factory=list)

    def add(self, name: str, samples: RaySamples) -> None:
        if name not in COEFFICIENT_RAYS:
            raise ValueError(f"Unknown coefficient: {name}")
        if samples.ray not in COEFFICIENT_RAYS[name]:
            raise ValueError(f"{name} is not defined on ray {samples.ray}")
        self.coefficients.setdefault(name, {})[samples.ray] = samples

    def samples(self, name: str, ray: str) -> RaySamples:
        try:
            return self.coefficients[name][ray]
        except KeyError as e:
            raise DependencyError(f"Dataset has no {name} samples on {ray}") from e

    def value(self, name: str, k: complex, *, tol: float = 1e-9) -> complex:
        ray = classify_k(k).tag
        samples = self.samples(name, ray)
        s = abs(k)
        hit = np.flatnonzero(np.abs(samples.s - s) <= tol * max(1.0, s))
        if hit.size == 0:
            raise DependencyError(f"Dataset has no {name} sample at k={k!r} (ray {ray}, s={s:.6g})")
        return complex(samples.values[hit[0]])

    def max_abs(self, name: str) -> float:
        rays = self.coefficients.get(name, {})
        if not rays:
            return 0.0
        return float(max(np.max(np.abs(r.values)) if r.values.size else 0.0 for r in rays.values()))

    @property
    def secondary_delta(self) -> float:
        return max(self.max_abs("M"), self.max_abs("N"))

    @property
    def s_values(self) -> np.ndarray:
        return self.samples("L", "L1").s

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": DATASET_FORMAT,
            "potential": self.potential,
            "coefficients": {
                name: {ray: samples.to_dict() for ray, samples in sorted(rays.items())}
                for name, rays in sorted(self.coefficients.items())
            },
            "tail": self.tail.to_dict() if self.tail is not None else None,
            "bound_states": list(self.bound_states),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> ScatteringDataset:
        if raw.get("format") != DATASET_FORMAT:
            raise ValueError(f"Not a scattering dataset (format={raw.get('format')!r})")
        out = cls(potential=dict(raw.get("potential") or {}))
        for name, rays in (raw.get("coefficients") or {}).items():
            for ray, samples in rays.items():
                out.add(name, RaySamples.from_dict(ray, samples))
        if raw.get("tail"):
            out.tail = TransmissionTail.from_dict(raw["tail"])
        out.bound_states = list(raw.get("bound_states") or [])
        return out


def _complex_to_dict(value: complex) -> dict[str, float]:
    return {"Re": float(complex(value).real), "Im": float(complex(value).imag)}


def _complex_from_dict(raw: Any) -> complex:
    if isinstance(raw, Mapping):
        return complex(float(raw["Re"]), float(raw["Im"]))
    re, im = raw
    return complex(float(re), float(im))


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path: Path) -> Any:
    if not path.exists():
        raise FileNotFoundError(f"Input not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def write_dataset(dataset: ScatteringDataset, path: Path) -> Path:
    log.info("Writing dataset: %s", path)
    return write_json(path, dataset.to_dict())


def read_dataset(path: Path) -> ScatteringDataset:
    return ScatteringDataset.from_dict(read_json(path))


def write_csv(path: Path, header: Iterable[str], columns: Iterable[np.ndarray]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float) for c in columns]
    with path.open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(list(header))
        for row in zip(*cols):
            writer.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path: Path) -> dict[str, np.ndarray]:
    if not path.exists():
        raise FileNotFoundError(f"Input not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_potential_csv(path: Path, x: np.ndarray, q: np.ndarray, p: np.ndarray) -> Path:
    q = np.asarray(q, dtype=complex)
    p = np.asarray(p, dtype=complex)
    return write_csv(path, ["x", "Re Q", "Im Q", "Re P", "Im P"], [x, q.real, q.imag, p.real, p.imag])


def read_potential_csv(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cols = read_csv(path)
    try:
        return cols["x"], cols["Re Q"] + 1j * cols["Im Q"], cols["Re P"] + 1j * cols["Im P"]
    except KeyError as e:
        raise ValueError(f"{path} is not a potential CSV (missing column {e})") from e


PROFILE_COLUMNS = ("x", "Re psi", "Im psi", "Re psi_x", "Im psi_x", "Re psi_xx", "Im psi_xx")


def write_profile_csv(path: Path, x: np.ndarray, psi: np.ndarray, psi_x: np.ndarray, psi_xx: np.ndarray) -> Path:
    cols: list[np.ndarray] = [np.asarray(x, dtype=float)]
    for values in (psi, psi_x, psi_xx):
        values = np.asarray(values, dtype=complex)
        cols.extend([values.real, values.imag])
    return write_csv(path, PROFILE_COLUMNS, cols)


def read_profile_csv(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    cols = read_csv(path)
    missing = [c for c in PROFILE_COLUMNS if c not in cols]
    if missing:
        raise ValueError(f"{path} is not a solution-profile CSV (missing {', '.join(missing)})")
    return (
        cols["x"],
        cols["Re psi"] + 1j * cols["Im psi"],
        cols["Re psi_x"] + 1j * cols["Im psi_x"],
        cols["Re psi_xx"] + 1j * cols["Im psi_xx"],
    )


def write_poles(path: Path, poles: Iterable[tuple[complex, complex]]) -> Path:
    return write_json(
        path,
        {
            "poles": [
                {"k_re": k.real, "k_im": k.imag, "gamma_re": g.real, "gamma_im": g.imag}
                for k, g in ((complex(k), complex(g)) for k, g in poles)
            ]
        },
    )


def parse_poles(raw: Any) -> list[tuple[complex, complex]]:
    """Reflectionless input: a list (or {'poles': list}) of {k_re, k_im, gamma_re, gamma_im}."""
    if isinstance(raw, Mapping):
        raw = raw.get("poles", [])
    if not isinstance(raw, list):
        raise ValueError("poles must be a list")
    out: list[tuple[complex, complex]] = []
    for i, item in enumerate(raw):
        if not isinstance(item, Mapping):
            raise ValueError(f"poles[{i}] must be a mapping")
        try:
            k = complex(float(item["k_re"]), float(item["k_im"]))
            gamma = complex(float(item.get("gamma_re", 0.0)), float(item.get("gamma_im", 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"poles[{i}] needs numeric k_re, k_im, gamma_re, gamma_im") from e
        out.append((k, gamma))
    return out
