from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from thirdscatter.dataset import parse_poles, read_json
from thirdscatter.marchenko import DRIVINGS
from thirdscatter.potentials import PRESET_RANGES, PRESETS, PotentialError, parse_preset


class ConfigError(RuntimeError):
    pass


PIPELINES = ("forward", "bound-states", "rh-solitons", "marchenko", "roundtrip", "selftest")
ROUNDTRIP_MODES = ("marchenko", "reflectionless")
ROOT_ROUTES = ("extraction", "wronskian")

DEFAULT_TOLERANCES: dict[str, float] = {
    "tail_tol": 1e-12,
    "residual_tol": 1e-6,
    "identity_tol": 1e-6,
    "m_n_tol": 1e-3,
    "root_tol": 1e-8,
    "glue_tol": 1e-5,
    "dual_route_tol": 1e-5,
    "free_tol": 1e-8,
    "reflection_tol": 1e-4,
    "pole_tol": 1e-5,
    "gamma_tol": 1e-4,
    "recovery_tol": 0.05,
    "rho_tol": 0.02,
    "dual_recovery_tol": 0.01,
    "system_tol": 1e-10,
    "support_tol": 1e-4,
    "asymptotic_tol": 1e-5,
    "tail_fit_tol": 1e-4,
    "residue_tol": 1e-12,
    "soliton_recovery_tol": 1e-5,
    "resolution_tol": 1e-3,
}


@dataclass(frozen=True)
class GridSettings:
    x_min: float = -12.0
    x_max: float = 12.0
    n_points: int = 2048


SOLITON_GRID = GridSettings(-16.0, 16.0, 2048)


@dataclass(frozen=True)
class SweepSettings:
    s_min: float = 0.25
    s_max: float = 6.0
    n_s: int = 24
    k_min: float = 10.0
    k_max: float = 40.0
    n_large_k: int = 8


@dataclass(frozen=True)
class BoundStateSettings:
    enabled: bool = True
    r_min: float = 0.2
    r_max: float = 5.0
    theta_min: float = 2 * math.pi / 3
    theta_max: float = 4 * math.pi / 3
    n_radial: int = 12
    n_angular: int = 8
    n_contour: int = 24
    route: str = "extraction"


@dataclass(frozen=True)
class MarchenkoSettings:
    x_min: float = -6.0
    x_max: float = 6.0
    n_x: int = 241
    y_max: float = 30.0
    n_panels: int = 6
    order: int = 16
    s_panels: int = 40
    s_order: int = 16
    driving: str = "full"


@dataclass(frozen=True)
class RunConfig:
    """Fully materialised run settings; `as_dict()` is what gets hashed for provenance."""

    pipeline: str = "forward"
    preset: str = "free"
    params: dict[str, float] = field(default_factory=dict)
    poles: list[dict[str, float]] = field(default_factory=list)
    input_dataset: Path | None = None
    roundtrip: str = "marchenko"
    grid: GridSettings = field(default_factory=GridSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    bound_states: BoundStateSettings = field(default_factory=BoundStateSettings)
    marchenko: MarchenkoSettings = field(default_factory=MarchenkoSettings)
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out_dir: Path = Path("out")
    threads: int = 1

    def tol(self, name: str) -> float:
        return float(self.tolerances[name])

    @property
    def potential_label(self) -> str:
        if not self.params:
            return self.preset
        inner = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.preset}({inner})"

    def as_dict(self) -> dict[str, Any]:
        raw = asdict(self)
        raw["input_dataset"] = str(self.input_dataset) if self.input_dataset is not None else None
        raw["out_dir"] = str(self.out_dir)
        return raw

    def config_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _section(raw: Mapping[str, Any], name: str) -> dict[str, Any]:
    value = raw.get(name, {}) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a mapping.")
    return value


def _build(cls: type, values: Mapping[str, Any], name: str) -> Any:
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{name} has unknown keys: {', '.join(unknown)}")
    try:
        defaults = cls()
        coerced = {k: type(getattr(defaults, k))(v) for k, v in values.items()}
        return cls(**coerced)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from e


def _validate_preset(preset: str, params: Mapping[str, float]) -> None:
    if preset == "soliton":
        # an empty pole list falls back to the default one-pole soliton
        return
    if preset not in PRESETS:
        raise ConfigError(f"Unknown preset: {preset} (known: {', '.join(sorted([*PRESETS, 'soliton']))})")
    for key, value in params.items():
        lo, hi = PRESET_RANGES.get(key, (-math.inf, math.inf))
        if not (lo <= float(value) <= hi):
            raise ConfigError(f"Preset parameter {key}={value} outside [{lo}, {hi}]")


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.pipeline not in PIPELINES:
        raise ConfigError(f"pipeline must be one of {', '.join(PIPELINES)}.")
    if cfg.roundtrip not in ROUNDTRIP_MODES:
        raise ConfigError(f"roundtrip must be one of {', '.join(ROUNDTRIP_MODES)}.")
    if cfg.bound_states.route not in ROOT_ROUTES:
        raise ConfigError(f"bound_states.route must be one of {', '.join(ROOT_ROUTES)}.")
    if cfg.marchenko.driving not in DRIVINGS:
        raise ConfigError(f"marchenko.driving must be one of {', '.join(DRIVINGS)}.")
    for name, value in cfg.tolerances.items():
        if not (value > 0):
            raise ConfigError(f"tolerances.{name} must be positive.")
    g = cfg.grid
    if not (g.x_min < 0 < g.x_max) or g.n_points < 8:
        raise ConfigError("grid needs x_min < 0 < x_max and n_points >= 8.")
    s = cfg.sweep
    if not (0 < s.s_min < s.s_max) or s.n_s < 2 or not (0 < s.k_min < s.k_max) or s.n_large_k < 3:
        raise ConfigError("sweep needs 0 < s_min < s_max, n_s >= 2, 0 < k_min < k_max, n_large_k >= 3.")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1.")
    _validate_preset(cfg.preset, cfg.params)
    if cfg.input_dataset is not None and not cfg.input_dataset.exists():
        raise ConfigError(f"input_dataset not found: {cfg.input_dataset}")
    return cfg


def _parse_potential(raw: Any) -> tuple[str, dict[str, float]]:
    if raw is None:
        return "free", {}
    if isinstance(raw, str):
        try:
            return parse_preset(raw)
        except PotentialError as e:
            raise ConfigError(str(e)) from e
    if isinstance(raw, dict):
        name = str(raw.get("preset") or raw.get("name") or "").lower()
        if not name:
            raise ConfigError("potential mapping requires preset.")
        params = raw.get("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("potential.params must be a mapping.")
        try:
            return name, {str(k): float(v) for k, v in params.items()}
        except (TypeError, ValueError) as e:
            raise ConfigError(f"potential.params: {e}") from e
    raise ConfigError("potential must be a preset string or a mapping.")


def _widen_for_solitons(cfg: RunConfig, *, explicit_grid: bool) -> RunConfig:
    uses_poles = (
        cfg.preset == "soliton"
        or cfg.pipeline == "rh-solitons"
        or (cfg.pipeline == "roundtrip" and cfg.roundtrip == "reflectionless")
    )
    if not uses_poles or explicit_grid or cfg.grid != GridSettings():
        return cfg
    # soliton tails decay like exp(-2|x|) for |k_j| near 1
    return replace(cfg, grid=SOLITON_GRID)


def _resolve(path_raw: Any, base: Path) -> Path:
    path = Path(str(path_raw))
    if not path.is_absolute():
        path = (base / path).resolve()
    return path


def load_config(path: Path, *, pipeline: str | None = None) -> RunConfig:
    """Read a YAML (or JSON) run config; relative paths resolve against the file's directory."""
    if not path.exists():
        raise ConfigError(f"Config not found: {path}")

    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("Config root must be a mapping.")
    return config_from_mapping(raw, base=path.parent, pipeline=pipeline)


def config_from_mapping(raw: Mapping[str, Any], *, base: Path = Path("."), pipeline: str | None = None) -> RunConfig:
    preset, params = _parse_potential(raw.get("potential"))

    poles = raw.get("poles", []) or []
    if isinstance(poles, str):
        pole_path = _resolve(poles, base)
        if not pole_path.exists():
            raise ConfigError(f"poles file not found: {pole_path}")
        poles = read_json(pole_path)
    try:
        pole_list = [
            {"k_re": k.real, "k_im": k.imag, "gamma_re": g.real, "gamma_im": g.imag} for k, g in parse_poles(poles)
        ]
    except ValueError as e:
        raise ConfigError(str(e)) from e

    tolerances = dict(DEFAULT_TOLERANCES)
    tol_raw = _section(raw, "tolerances")
    unknown = sorted(set(tol_raw) - set(DEFAULT_TOLERANCES))
    if unknown:
        raise ConfigError(f"Unknown tolerances: {', '.join(unknown)}")
    try:
        tolerances.update({k: float(v) for k, v in tol_raw.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"tolerances: {e}") from e

    input_dataset = raw.get("input_dataset")
    try:
        threads = int(raw.get("threads", 1))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"threads: {e}") from e
    cfg = RunConfig(
        pipeline=str(pipeline or raw.get("pipeline", "forward")),
        preset=preset,
        params=params,
        poles=pole_list,
        input_dataset=_resolve(input_dataset, base) if input_dataset else None,
        roundtrip=str(raw.get("roundtrip", "marchenko")),
        grid=_build(GridSettings, _section(raw, "grid"), "grid"),
        sweep=_build(SweepSettings, _section(raw, "sweep"), "sweep"),
        bound_states=_build(BoundStateSettings, _section(raw, "bound_states"), "bound_states"),
        marchenko=_build(MarchenkoSettings, _section(raw, "marchenko"), "marchenko"),
        tolerances=tolerances,
        out_dir=_resolve(raw.get("out_dir", "out"), base),
        threads=threads,
    )
    return _validate(_widen_for_solitons(cfg, explicit_grid="grid" in raw))


def apply_overrides(
    cfg: RunConfig,
    *,
    pipeline: str | None = None,
    preset: str | None = None,
    tolerances: list[str] | None = None,
    out_dir: Path | None = None,
    threads: int | None = None,
    roundtrip: str | None = None,
) -> RunConfig:
    """CLI flags win over the file; `--tolerance KEY=VAL` may repeat."""
    changes: dict[str, Any] = {}
    if pipeline:
        changes["pipeline"] = pipeline
    if preset:
        name, params = _parse_potential(preset)
        changes["preset"], changes["params"] = name, params
    if tolerances:
        merged = dict(cfg.tolerances)
        for item in tolerances:
            if "=" not in item:
                raise ConfigError(f"--tolerance expects KEY=VAL (got {item!r})")
            key, value = (s.strip() for s in item.split("=", 1))
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"Unknown tolerance: {key}")
            try:
                merged[key] = float(value)
            except ValueError as e:
                raise ConfigError(f"--tolerance {key}: {value!r} is not a number") from e
        changes["tolerances"] = merged
    if out_dir is not None:
        changes["out_dir"] = out_dir
    if threads is not None:
        changes["threads"] = int(threads)
    if roundtrip:
        changes["roundtrip"] = roundtrip
    if not changes:
        return cfg
    return _validate(_widen_for_solitons(replace(cfg, **changes), explicit_grid=False))
