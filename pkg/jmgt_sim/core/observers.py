"""Observers shipped with the simulator."""

import csv
import logging
import math
from pathlib import Path
from typing import IO, Any, Dict, Optional, Union

from ..utils.decorators import observe
from .diagnostics import CSV_COLUMNS
from .exceptions import StopRun
from .observer_base import ObserverBase

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """Shortest round-trip text for a number (``.`` decimal separator)."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class EnergyCsvWriter(ObserverBase):
    """Stream one CSV row per recorded step.

    The header is written on ``run.started``; rows follow the column order
    of :data:`jmgt_sim.core.diagnostics.CSV_COLUMNS`. The file is closed when
    the observer is detached.
    """

    name = "energy_csv"
    description = "Writes energies.csv"

    def __init__(self, path: Union[str, Path]):
        super().__init__()
        self.path = Path(path)
        self.rows = 0
        self._handle: Optional[IO[str]] = None
        self._writer: Any = None

    @observe("run.started", priority=100)
    def start(self, payload: Dict[str, Any]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(CSV_COLUMNS)
        self.rows = 0

    @observe("step.recorded", priority=100)
    def write(self, payload: Dict[str, Any]) -> None:
        if self._writer is None:
            return
        self._writer.writerow([format_value(v) for v in payload["report"].csv_row()])
        self.rows += 1

    @observe("run.finished")
    def finish(self, payload: Dict[str, Any]) -> None:
        self.close()
        logger.debug(f"Wrote {self.rows} rows to {self.path}")

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self._writer = None

    def on_detach(self) -> None:
        self.close()


class BlowupWatch(ObserverBase):
    """Soft blow-up indicator on ``||psi_t||_inf``.

    Records the first time after step 0 that the norm exceeds ``factor``
    times its initial value. With ``stop=True`` the run is ended there by
    raising :class:`StopRun`.
    """

    name = "blowup_watch"

    def __init__(self, factor: float = 1e3, stop: bool = False):
        super().__init__()
        self.factor = factor
        self.stop = stop
        self.initial = 0.0
        self.peak = 0.0
        self.crossed_at: Optional[float] = None

    @observe("run.started")
    def reset(self, payload: Dict[str, Any]) -> None:
        self.initial = payload["report"].linf_psi_t
        self.peak = self.initial
        self.crossed_at = None

    @observe("step.recorded")
    def check(self, payload: Dict[str, Any]) -> None:
        report = payload["report"]
        self.peak = max(self.peak, report.linf_psi_t)
        # step 0 is the reference record
        if payload.get("n") == 0 or self.crossed_at is not None or self.initial <= 0.0:
            return
        if report.linf_psi_t > self.factor * self.initial:
            self.crossed_at = report.t
            logger.warning(f"||psi_t||_inf grew by more than {self.factor:g}x at t={report.t:g}")
            if self.stop:
                raise StopRun(f"blow-up indicator crossed at t={report.t:g}")

    @property
    def growth(self) -> float:
        if self.initial > 0.0:
            return self.peak / self.initial
        return math.inf if self.peak > 0.0 else 1.0


class ProgressLogger(ObserverBase):
    """Log time, Y and Picard iterations every ``every`` records."""

    name = "progress"

    def __init__(self, every: int = 100):
        super().__init__()
        self.every = max(1, int(every))
        self._count = 0

    @observe("step.recorded", priority=0)
    def log(self, payload: Dict[str, Any]) -> None:
        self._count += 1
        if self._count % self.every:
            return
        report = payload["report"]
        logger.info(
            f"t={report.t:.4g} Y={report.Y:.6e} |psi_t|_inf={report.linf_psi_t:.3e} "
            f"picard={report.picard_iters}"
        )

    @observe("run.failed")
    def failed(self, payload: Dict[str, Any]) -> None:
        logger.warning(f"Run failed at t={payload.get('t')}: {payload.get('error')}")
