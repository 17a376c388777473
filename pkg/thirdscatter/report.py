from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

from thirdscatter.dataset import write_json


ReportStatus = Literal["pass", "fail", "skipped"]


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed}


@dataclass
class RunReport:
    """Named checks with measured value against tolerance; overall status is their conjunction."""

    pipeline: str
    provenance: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    skipped_reason: str = ""

    def check(self, name: str, value: float, tolerance: float) -> Check:
        value = float(value)
        passed = (not math.isnan(value)) and value <= tolerance
        item = Check(name=name, value=value, tolerance=float(tolerance), passed=passed)
        self.checks.append(item)
        return item

    def expect(self, name: str, condition: bool) -> Check:
        item = Check(name=name, value=0.0 if condition else 1.0, tolerance=0.0, passed=bool(condition))
        self.checks.append(item)
        return item

    def skip(self, reason: str) -> None:
        self.skipped_reason = reason

    def extend(self, other: RunReport, prefix: str) -> None:
        for item in other.checks:
            self.checks.append(Check(f"{prefix}.{item.name}", item.value, item.tolerance, item.passed))
        for key, value in other.info.items():
            self.info[f"{prefix}.{key}"] = value

    @property
    def status(self) -> ReportStatus:
        if self.skipped_reason:
            return "skipped"
        return "pass" if all(c.passed for c in self.checks) else "fail"

    @property
    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def exit_code(self) -> int:
        return 1 if self.status == "fail" else 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "pipeline": self.pipeline,
            "status": self.status,
            "skipped_reason": self.skipped_reason,
            "provenance": self.provenance,
            "checks": [c.to_dict() for c in self.checks],
            "info": self.info,
            "artifacts": sorted(self.artifacts),
        }

    def write(self, path: Path) -> Path:
        return write_json(path, self.to_dict())
