"""Run configuration files.

Configs are TOML documents. Every section and key is checked against the
schema below; unknown entries are rejected so that a typo cannot silently
fall back to a default.

    scenario = "small_data_global"   # required
    seed = 0

    [solver]    tau, c, delta, sigma, dt, T, history, picard_tol,
                picard_max_iter, soe_tol, blowup_factor
    [kernel]    type = "abel" | "exponential" | "regularized_abel" |
                "mittag_leffler" | "polynomial" | "dirac", plus parameters
    [domain]    lengths (numbers or "pi", "2pi", "0.5*pi"), modes, dealias
    [initial]   preset = "zero" | "single_mode" | "smooth_bump" | "sine_cubed",
                k, amplitude, decay, psi2_amplitude
    [source]    preset = "none" | "decaying_mode", k, amplitude, rate
    [output]    dir, stride
    [study]     scenario-specific options
"""

import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from ..core.exceptions import DomainError, JmgtError, ParseError, ValidationError
from ..core.kernels import KernelSpec, kernel_from_dict
from ..core.solver import HISTORY_BACKENDS, SolverConfig
from ..core.spectral import BoxDomain

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

OUTPUT_ENV = "JMGT_SIM_OUT"

SCENARIOS = (
    "simulate",
    "small_data_global",
    "inviscid_growth",
    "kernel_compare",
    "convergence_study",
    "positivity_suite",
)
INITIAL_PRESETS = ("zero", "single_mode", "smooth_bump", "sine_cubed")
SOURCE_PRESETS = ("none", "decaying_mode")

SOLVER_DEFAULTS: Dict[str, Any] = {
    "tau": 1.0,
    "c": 1.0,
    "delta": 0.5,
    "sigma": 1.0,
    "dt": 1e-2,
    "T": 1.0,
    "history": "exact",
    "picard_tol": 1e-10,
    "picard_max_iter": 50,
    "soe_tol": 1e-6,
    "blowup_factor": 1e3,
}
DOMAIN_KEYS = {"lengths", "modes", "dealias"}
INITIAL_KEYS = {"preset", "k", "amplitude", "decay", "psi2_amplitude"}
SOURCE_KEYS = {"preset", "k", "amplitude", "rate"}
OUTPUT_KEYS = {"dir", "stride"}
TOP_LEVEL = {"scenario", "seed", "solver", "kernel", "domain", "initial", "source", "output", "study"}

_PI_PATTERN = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*?\s*)?pi\s*$")
_POSITION = re.compile(r"line (\d+), column (\d+)")


@dataclass(frozen=True)
class InitialData:
    preset: str = "zero"
    k: Tuple[int, ...] = (1,)
    amplitude: float = 0.0
    decay: float = 1.0
    psi2_amplitude: float = 0.0


@dataclass(frozen=True)
class SourceConfig:
    preset: str = "none"
    k: Tuple[int, ...] = (1,)
    amplitude: float = 0.0
    rate: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a run config file.

    ``solver`` holds every physical and numerical parameter; ``study`` holds
    the scenario-specific options, already checked against the scenario's
    option table by the scenario manager.
    """

    scenario: str
    solver: SolverConfig
    initial: InitialData = field(default_factory=InitialData)
    source: SourceConfig = field(default_factory=SourceConfig)
    out_dir: Path = Path("out")
    stride: int = 1
    seed: int = 0
    study: Mapping[str, Any] = field(default_factory=dict)
    raw: Mapping[str, Any] = field(default_factory=dict, repr=False)

    @property
    def kernel(self) -> KernelSpec:
        return self.solver.kernel

    @property
    def domain(self) -> BoxDomain:
        return self.solver.domain

    def with_output(
        self,
        out_dir: Optional[Union[str, Path]] = None,
        stride: Optional[int] = None,
        seed: Optional[int] = None,
    ) -> "RunConfig":
        """Copy with command-line overrides applied.

        Raises:
            ValidationError: If ``stride`` is below one.
        """
        if stride is not None and stride < 1:
            raise ValidationError(f"output.stride must be >= 1, got {stride}", key="output.stride")
        return replace(
            self,
            out_dir=Path(out_dir) if out_dir is not None else self.out_dir,
            stride=stride if stride is not None else self.stride,
            seed=seed if seed is not None else self.seed,
        )


def parse_length(value: Any, key: str = "domain.lengths") -> float:
    """Number, or a multiple of pi written as ``"pi"``, ``"2pi"`` or ``"0.5*pi"``."""
    if isinstance(value, bool):
        raise ValidationError(f"{key}: expected a length, got {value!r}", key=key)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _PI_PATTERN.match(value)
        if match:
            factor = match.group(1)
            try:
                return (float(factor) if factor else 1.0) * math.pi
            except ValueError:
                pass
    raise ValidationError(f"{key}: cannot read {value!r} as a length", key=key)


def _table(data: Mapping[str, Any], name: str) -> Dict[str, Any]:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ValidationError(f"'{name}' must be a table", key=name)
    return dict(value)


def _reject_unknown(section: str, entries: Mapping[str, Any], allowed: set) -> None:
    unknown = sorted(set(entries) - set(allowed))
    if unknown:
        key = f"{section}.{unknown[0]}" if section else unknown[0]
        raise ValidationError(f"unknown key '{key}'", key=key)


def _number(section: str, name: str, value: Any, integer: bool = False) -> Any:
    key = f"{section}.{name}" if section else name
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{key}: expected a number, got {value!r}", key=key)
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError(f"{key}: expected an integer, got {value!r}", key=key)
        return int(value)
    return float(value)


def _modes(section: str, value: Any) -> Tuple[int, ...]:
    key = f"{section}.k" if section != "domain" else "domain.modes"
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ValidationError(f"{key}: must not be empty", key=key)
    return tuple(_number(section, key.split(".")[-1], v, integer=True) for v in items)


def _solver_section(data: Mapping[str, Any]) -> Dict[str, Any]:
    entries = _table(data, "solver")
    _reject_unknown("solver", entries, set(SOLVER_DEFAULTS))
    values = dict(SOLVER_DEFAULTS)
    for name, value in entries.items():
        if name == "history":
            if value not in HISTORY_BACKENDS:
                raise ValidationError(
                    f"solver.history must be one of {HISTORY_BACKENDS}, got {value!r}",
                    key="solver.history",
                )
            values[name] = value
        else:
            values[name] = _number("solver", name, value, integer=name == "picard_max_iter")
    return values


def _kernel_section(data: Mapping[str, Any]) -> KernelSpec:
    entries = _table(data, "kernel")
    if not entries:
        raise ValidationError("missing [kernel] table", key="kernel")
    try:
        return kernel_from_dict(entries)
    except DomainError as e:
        raise ValidationError(f"kernel: {e}", key="kernel") from e


def _domain_section(data: Mapping[str, Any]) -> BoxDomain:
    entries = _table(data, "domain")
    _reject_unknown("domain", entries, DOMAIN_KEYS)
    raw_lengths = entries.get("lengths", ["pi"])
    lengths = [parse_length(v) for v in (raw_lengths if isinstance(raw_lengths, list) else [raw_lengths])]
    modes = _modes("domain", entries.get("modes", [32] * len(lengths)))
    dealias = entries.get("dealias", True)
    if not isinstance(dealias, bool):
        raise ValidationError("domain.dealias must be true or false", key="domain.dealias")
    try:
        return BoxDomain(tuple(lengths), modes, dealias)
    except JmgtError as e:
        raise ValidationError(f"domain: {e}", key="domain") from e


def _initial_section(data: Mapping[str, Any], dim: int) -> InitialData:
    entries = _table(data, "initial")
    _reject_unknown("initial", entries, INITIAL_KEYS)
    preset = entries.get("preset", "zero")
    if preset not in INITIAL_PRESETS:
        raise ValidationError(
            f"initial.preset must be one of {INITIAL_PRESETS}, got {preset!r}", key="initial.preset"
        )
    k = _modes("initial", entries.get("k", [1] * dim))
    if len(k) != dim:
        raise ValidationError(f"initial.k needs {dim} entries", key="initial.k")
    values = {
        name: _number("initial", name, entries[name])
        for name in ("amplitude", "decay", "psi2_amplitude")
        if name in entries
    }
    if preset == "single_mode" and "amplitude" not in values:
        raise ValidationError("initial.amplitude is required for single_mode", key="initial.amplitude")
    if preset == "smooth_bump" and values.get("decay", 1.0) <= 0.0:
        raise ValidationError("initial.decay must be positive", key="initial.decay")
    return InitialData(preset=preset, k=k, **values)


def _source_section(data: Mapping[str, Any], dim: int) -> SourceConfig:
    entries = _table(data, "source")
    _reject_unknown("source", entries, SOURCE_KEYS)
    preset = entries.get("preset", "none")
    if preset not in SOURCE_PRESETS:
        raise ValidationError(
            f"source.preset must be one of {SOURCE_PRESETS}, got {preset!r}", key="source.preset"
        )
    k = _modes("source", entries.get("k", [1] * dim))
    if len(k) != dim:
        raise ValidationError(f"source.k needs {dim} entries", key="source.k")
    values = {
        name: _number("source", name, entries[name]) for name in ("amplitude", "rate") if name in entries
    }
    if preset == "decaying_mode" and values.get("rate", 1.0) <= 0.0:
        raise ValidationError("source.rate must be positive", key="source.rate")
    return SourceConfig(preset=preset, k=k, **values)


def load_document(text: str) -> Dict[str, Any]:
    """Decode TOML text, mapping syntax errors to :class:`ParseError`."""
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        column = getattr(e, "colno", None)
        if line is None:
            match = _POSITION.search(str(e))
            if match:
                line, column = int(match.group(1)), int(match.group(2))
        raise ParseError(f"invalid config syntax: {e}", line=line, column=column) from e


def parse_config(text: str, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Parse and validate a run config.

    ``JMGT_SIM_OUT`` in ``env`` (default ``os.environ``) overrides
    ``output.dir``.

    Raises:
        ParseError: On TOML syntax errors, with line and column.
        ValidationError: On a missing scenario, an unknown key or an
            out-of-range value, naming the offending key.
    """
    data = load_document(text)
    _reject_unknown("", data, TOP_LEVEL)
    scenario = data.get("scenario")
    if scenario is None:
        raise ValidationError("missing required key 'scenario'", key="scenario")
    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}", key="scenario")

    domain = _domain_section(data)
    kernel = _kernel_section(data)
    solver_values = _solver_section(data)
    try:
        solver = SolverConfig(kernel=kernel, domain=domain, **solver_values)
    except JmgtError as e:
        raise ValidationError(f"solver: {e}", key="solver") from e

    output = _table(data, "output")
    _reject_unknown("output", output, OUTPUT_KEYS)
    stride = _number("output", "stride", output.get("stride", 1), integer=True)
    if stride < 1:
        raise ValidationError("output.stride must be >= 1", key="output.stride")
    environ = os.environ if env is None else env
    out_dir = environ.get(OUTPUT_ENV) or output.get("dir") or f"out/{scenario}"
    seed = _number("", "seed", data.get("seed", 0), integer=True)

    config = RunConfig(
        scenario=scenario,
        solver=solver,
        initial=_initial_section(data, domain.dim),
        source=_source_section(data, domain.dim),
        out_dir=Path(out_dir),
        stride=stride,
        seed=seed,
        study=_table(data, "study"),
        raw=data,
    )
    logger.debug(f"Parsed config for scenario '{scenario}' with kernel {kernel.label}")
    return config


def load_config(path: Union[str, Path], env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Read ``path`` as UTF-8 and :func:`parse_config` it."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text, env=env)
