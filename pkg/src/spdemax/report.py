from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Report:
    """Pass/fail verdict of one numerical check.

    ``max_violation`` is already divided by ``scale``; the verdict is pass
    exactly when it does not exceed ``tolerance``.
    """

    name: str
    max_violation: float
    tolerance: float
    location: tuple | None = None
    context: str = ""
    scale: float = 1.0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    @property
    def raw_violation(self) -> float:
        return self.max_violation * self.scale

    def line(self) -> str:
        if self.location is None:
            at = "none"
        else:
            at = "(" + ",".join("none" if v is None else f"{v:.6g}" for v in self.location) + ")"
        return (f"CHECK {self.name} verdict={self.verdict} "
                f"max_violation={self.max_violation:.6e} at={at} tol={self.tolerance:.6e}")

    def __bool__(self) -> bool:
        return self.passed


def parse_line(line: str) -> dict:
    """Inverse of ``Report.line`` for the fields it carries."""
    parts = line.split()
    if len(parts) != 6 or parts[0] != "CHECK":
        raise ValueError(f"not a CHECK line: {line!r}")
    out = {"name": parts[1]}
    for item in parts[2:]:
        key, _, val = item.partition("=")
        out[key] = val
    out["max_violation"] = float(out["max_violation"])
    out["tol"] = float(out["tol"])
    return out
