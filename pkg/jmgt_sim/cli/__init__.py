"""
Config-driven scenarios and the ``jmgt-sim`` command.
"""

from .config import RunConfig, load_config, parse_config
from .scenario_base import ScenarioBase, ScenarioResult
from .scenario_manager import ScenarioManager
from .scenarios import check_kernel, default_manager

__all__ = [
    "RunConfig",
    "ScenarioBase",
    "ScenarioManager",
    "ScenarioResult",
    "check_kernel",
    "default_manager",
    "load_config",
    "parse_config",
]
