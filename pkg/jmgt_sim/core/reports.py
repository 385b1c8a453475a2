"""Pass/fail records shared by the kernel, quadrature and energy checks."""

from dataclasses import dataclass, field
from typing import Any, Dict, List


@dataclass
class CheckReport:
    """Outcome of one numerical check.

    Attributes:
        name: Stable identifier used as the key in verdict files.
        passed: Overall verdict.
        tolerance: Human-readable description of the acceptance band.
        measured: Named scalar measurements backing the verdict.
        failures: One dict per failing sample (for example a grid point and
            derivative order), empty when ``passed``.
        detail: Optional free-text note.
    """

    name: str
    passed: bool
    tolerance: str = ""
    measured: Dict[str, Any] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self, max_failures: int = 20) -> Dict[str, Any]:
        """Serialize with a stable key order, truncating long failure lists."""
        out: Dict[str, Any] = {
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "measured": {k: _plain(v) for k, v in self.measured.items()},
        }
        if self.failures:
            out["failures"] = [
                {k: _plain(v) for k, v in f.items()} for f in self.failures[:max_failures]
            ]
            out["failure_count"] = len(self.failures)
        if self.detail:
            out["detail"] = self.detail
        return out


def _plain(value: Any) -> Any:
    """Convert numpy scalars to builtin types so json can encode them."""
    if hasattr(value, "item") and getattr(value, "ndim", 1) == 0:
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
