"""Base class every scenario must inherit from."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping

from ..core.exceptions import ValidationError
from ..core.reports import CheckReport
from .config import RunConfig

logger = logging.getLogger(__name__)

VERDICT_FILE = "checks.json"
ENERGY_FILE = "energies.csv"


@dataclass
class ScenarioResult:
    """Outcome of one scenario execution.

    Attributes:
        scenario: Name of the scenario that produced the result.
        checks: Every check the scenario evaluated, in evaluation order.
        artifacts: Files written to the output directory.
        summary: Free-form run facts recorded next to the checks.
        failed: Set when the scenario itself judged the run a failure
            independently of the checks (unexpected termination).
    """

    scenario: str
    checks: List[CheckReport] = field(default_factory=list)
    artifacts: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    failed: bool = False

    @property
    def passed(self) -> bool:
        return not self.failed and all(check.passed for check in self.checks)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1

    def add(self, check: CheckReport) -> CheckReport:
        self.checks.append(check)
        if not check.passed:
            logger.warning(f"[{self.scenario}] {check.name}: FAIL {check.measured}")
        else:
            logger.info(f"[{self.scenario}] {check.name}: PASS")
        return check

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "verdict": "PASS" if self.passed else "FAIL",
            "summary": self.summary,
            "checks": {check.name: check.to_dict() for check in self.checks},
        }

    def write_verdicts(self, out_dir: Path) -> Path:
        """Write ``checks.json`` with a stable key order."""
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / VERDICT_FILE
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n")
        if path not in self.artifacts:
            self.artifacts.append(path)
        return path


def _json_default(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot encode {type(value).__name__}")


class ScenarioBase:
    """Base class for config-driven scenarios.

    Subclass this, set ``name``, list the config sections the scenario needs
    in ``required_sections`` and its ``[study]`` options with their defaults
    in ``options``, then implement :meth:`execute`. The
    :class:`~jmgt_sim.cli.scenario_manager.ScenarioManager` validates the
    config against both before any computation starts.

    Attributes:
        name: Unique scenario identifier, matched against ``scenario`` in the
            config. Defaults to the class name if left empty.
        version: Version string recorded in verdict files.
        description: One-line summary shown by ``jmgt-sim list``.
        required_sections: Config tables that must be present.
        options: Allowed ``[study]`` keys and their default values.

    Example:
        >>> class Quick(ScenarioBase):
        ...     name = "quick"
        ...     options = {"samples": 4}
        ...
        ...     def execute(self, config, out_dir):
        ...         result = ScenarioResult(self.name)
        ...         return result
    """

    name: str = ""
    version: str = "1.0.0"
    description: str = ""
    required_sections: List[str] = []
    options: Dict[str, Any] = {}

    def __init__(self) -> None:
        if isinstance(self.__class__.required_sections, list):
            self.required_sections = list(self.__class__.required_sections)
        if isinstance(self.__class__.options, dict):
            self.options = dict(self.__class__.options)
        if "name" not in self.__class__.__dict__ and not self.name:
            self.name = self.__class__.__name__

    def validate(self, config: RunConfig) -> None:
        """Check required sections and ``[study]`` keys.

        Raises:
            ValidationError: Naming the missing section or unknown option.
        """
        for section in self.required_sections:
            if section not in config.raw:
                raise ValidationError(
                    f"scenario '{self.name}' requires a [{section}] table", key=section
                )
        unknown = sorted(set(config.study) - set(self.options))
        if unknown:
            key = f"study.{unknown[0]}"
            raise ValidationError(f"unknown key '{key}' for scenario '{self.name}'", key=key)

    def option(self, config: RunConfig, key: str) -> Any:
        """``[study]`` value for ``key``, or the scenario default."""
        return config.study.get(key, self.options[key])

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        """Run the scenario and write its artifacts under ``out_dir``."""
        raise NotImplementedError

    def metadata(self) -> Mapping[str, Any]:
        return {"name": self.name, "version": self.version, "description": self.description}

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} name='{self.name}' version='{self.version}'>"


def float_option(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"study.{key}: expected a number, got {value!r}", key=f"study.{key}")
    return float(value)

