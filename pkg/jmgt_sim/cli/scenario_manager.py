"""Scenario manager that validates configs and dispatches scenario runs."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Type

from ..core.exceptions import (
    ScenarioNotFoundError,
    ScenarioRegistrationError,
    ValidationError,
)
from ..core.observer_registry import ObserverRegistry
from .config import RunConfig
from .scenario_base import ScenarioBase, ScenarioResult

logger = logging.getLogger(__name__)


class ScenarioManager:
    """Registry and runner for scenario classes.

    Typical workflow: ``register(cls)`` for every scenario, then
    ``run(config)`` with a parsed :class:`RunConfig`. The manager picks the
    scenario named in the config, validates the config against it, executes
    it and writes the verdict file.

    Lifecycle events (class constants) are dispatched through an
    :class:`ObserverRegistry` that callers can subscribe to via
    :meth:`subscribe`.

    Example:
        >>> manager = ScenarioManager()
        >>> manager.register(Simulate)
        >>> result = manager.run(config)
        >>> result.exit_status
        0
    """

    EVENT_SCENARIO_REGISTERED = "scenario.registered"
    EVENT_SCENARIO_STARTED = "scenario.started"
    EVENT_SCENARIO_FINISHED = "scenario.finished"
    EVENT_SCENARIO_FAILED = "scenario.failed"

    def __init__(self, log_level: str = "INFO", validate_metadata: bool = True) -> None:
        """Initialize the manager.

        Args:
            log_level: Root logging level applied via ``logging.basicConfig``.
            validate_metadata: Validate ``name`` and ``version`` of every
                registered scenario.
        """
        self._registry = ObserverRegistry()
        self._scenarios: Dict[str, Type[ScenarioBase]] = {}
        self._validate_metadata = validate_metadata

        logging.basicConfig(level=getattr(logging, log_level.upper()))

    def register(self, scenario_class: Type[ScenarioBase], validate: bool = True) -> None:
        """Register a scenario class under its ``name``.

        Re-registering a name overwrites the previous class with a warning.

        Raises:
            ScenarioRegistrationError: If the class does not inherit from
                :class:`ScenarioBase`.
            ValidationError: If metadata validation is enabled and ``name``
                or ``version`` is invalid.
        """
        if not isinstance(scenario_class, type) or not issubclass(scenario_class, ScenarioBase):
            label = getattr(scenario_class, "__name__", repr(scenario_class))
            raise ScenarioRegistrationError(f"{label} must inherit from ScenarioBase")

        instance = scenario_class()
        if validate and self._validate_metadata:
            self._validate_scenario_metadata(instance)

        if instance.name in self._scenarios:
            logger.warning(f"Scenario '{instance.name}' is already registered. Overwriting.")
        self._scenarios[instance.name] = scenario_class
        logger.debug(f"Registered scenario '{instance.name}' v{instance.version}")
        self.trigger(self.EVENT_SCENARIO_REGISTERED, {"scenario": instance.name})

    def _validate_scenario_metadata(self, scenario: ScenarioBase) -> None:
        if not scenario.name or not isinstance(scenario.name, str):
            raise ValidationError("Scenario must have a valid 'name' attribute", key="name")
        if not scenario.version or not isinstance(scenario.version, str):
            raise ValidationError(
                f"Scenario '{scenario.name}' must have a valid 'version' attribute", key="version"
            )
        if not isinstance(scenario.options, dict):
            raise ValidationError(f"Scenario '{scenario.name}' options must be a dict", key="options")

    def unregister(self, name: str) -> None:
        if name not in self._scenarios:
            raise ScenarioNotFoundError(f"Scenario '{name}' not found")
        del self._scenarios[name]
        logger.info(f"Unregistered scenario '{name}'")

    def get(self, name: str) -> ScenarioBase:
        """Fresh instance of the scenario registered as ``name``."""
        if name not in self._scenarios:
            raise ScenarioNotFoundError(f"Scenario '{name}' not registered")
        return self._scenarios[name]()

    def names(self) -> List[str]:
        return sorted(self._scenarios)

    def validate(self, config: RunConfig) -> ScenarioBase:
        scenario = self.get(config.scenario)
        scenario.validate(config)
        return scenario

    def run(self, config: RunConfig, out_dir: Optional[Path] = None) -> ScenarioResult:
        """Validate ``config``, execute its scenario and write ``checks.json``.

        Raises:
            ScenarioNotFoundError: If the config names an unknown scenario.
            ValidationError: If the config misses a section or option the
                scenario needs.
        """
        scenario = self.validate(config)
        target = Path(out_dir) if out_dir is not None else config.out_dir
        payload = {"scenario": scenario.name, "out_dir": target}
        self.trigger(self.EVENT_SCENARIO_STARTED, payload)
        logger.info(f"Running scenario '{scenario.name}' into {target}")
        try:
            result = scenario.execute(config, target)
        except Exception as e:
            self.trigger(
                self.EVENT_SCENARIO_FAILED,
                {"scenario": scenario.name, "error": str(e), "type": type(e).__name__},
            )
            raise
        result.summary.setdefault("scenario_version", scenario.version)
        result.write_verdicts(target)
        self.trigger(self.EVENT_SCENARIO_FINISHED, {"scenario": scenario.name, "result": result})
        logger.info(
            f"Scenario '{scenario.name}' finished: {'PASS' if result.passed else 'FAIL'} "
            f"({sum(c.passed for c in result.checks)}/{len(result.checks)} checks)"
        )
        return result

    def subscribe(self, event_name: str, callback: Any, priority: int = 50) -> None:
        self._registry.register(event_name, callback, None, priority)

    def trigger(self, event_name: str, payload: Any = None) -> Any:
        return self._registry.trigger(event_name, payload)

    @property
    def registry(self) -> ObserverRegistry:
        return self._registry
