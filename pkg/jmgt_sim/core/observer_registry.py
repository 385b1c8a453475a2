"""Observer registry: run-event subscriptions and synchronous dispatch."""

import re
import time
from typing import Any, Callable, Dict, List, Optional
import logging

from .exceptions import ObserverError, StopRun

logger = logging.getLogger(__name__)


class ObserverRegistry:
    """Event bus carrying solver and scenario events to observers.

    Callbacks are kept per event name and sorted by priority (higher first,
    registration order for ties). On :meth:`trigger` the registry gathers
    every callback whose registered name matches the fired event (literally
    or through a wildcard pattern like ``"step.*"``) and invokes them
    in priority order, threading the return value of each callback into the
    next as its payload.

    Dispatch is synchronous: observers run on the thread that advances the
    simulation, between time steps.

    Features:
        - Priority-based execution with deterministic ordering.
        - Wildcard event matching (``"step.*"``, ``"scenario.*"``).
        - :class:`StopRun` to end the run from an observer.
        - Observer-level enable/disable: callbacks from disabled observers
          are skipped without unregistering.
    """

    VALID_STRATEGIES = ("log_and_continue", "fail_fast", "collect_all")

    def __init__(self) -> None:
        """Initialize an empty registry with the default error strategy."""
        self._observers: Dict[str, List[Dict[str, Any]]] = {}
        self._error_strategy: str = "log_and_continue"
        self._tracing: bool = False
        self.errors: List[Dict[str, Any]] = []

    def register(
        self,
        event_name: str,
        callback: Callable,
        observer: Optional[Any] = None,
        priority: int = 50,
    ) -> None:
        """Register a callback to run when an event fires.

        Args:
            event_name: Event name to subscribe to. May be a literal like
                ``"step.recorded"`` or a wildcard pattern like ``"run.*"``.
            callback: Function invoked when the event fires. Receives the
                event payload and may return a replacement payload.
            observer: Owning observer instance, used for attribution and to
                honor its ``enabled`` flag. ``None`` for anonymous callbacks.
            priority: Higher values run earlier. Default 50.

        Example:
            >>> reg = ObserverRegistry()
            >>> reg.register("step.*", lambda p: p, priority=100)
        """
        entry = {
            "callback": callback,
            "observer": observer,
            "observer_name": observer.name if observer else "anonymous",
            "priority": priority,
        }
        self._observers.setdefault(event_name, []).append(entry)
        # sort is stable, so ties keep registration order
        self._observers[event_name].sort(key=lambda o: o["priority"], reverse=True)

        logger.debug(
            f"Registered observer '{entry['observer_name']}' for '{event_name}' "
            f"(priority={priority})"
        )

    def unregister(self, event_name: str, callback: Callable, observer: Optional[Any] = None) -> bool:
        """Remove a previously registered callback from an event.

        Args:
            event_name: Event name the callback was registered under.
            callback: The exact callable passed to :meth:`register`.
            observer: The same owning observer used at registration.

        Returns:
            True if a callback was found and removed; False otherwise.
        """
        if event_name not in self._observers:
            return False

        before = len(self._observers[event_name])
        self._observers[event_name] = [
            entry
            for entry in self._observers[event_name]
            if not (entry["callback"] == callback and entry["observer"] is observer)
        ]
        removed = len(self._observers[event_name]) < before
        if removed:
            logger.debug(f"Unregistered observer for '{event_name}'")
        return removed

    @staticmethod
    def _matches(pattern: str, event: str) -> bool:
        regex = "^" + re.escape(pattern).replace(r"\*", ".*") + "$"
        return re.match(regex, event) is not None

    def _matching(self, event_name: str) -> List[Dict[str, Any]]:
        matching: List[Dict[str, Any]] = []
        for registered, entries in self._observers.items():
            if registered == event_name or ("*" in registered and self._matches(registered, event_name)):
                matching.extend(entries)
        matching.sort(key=lambda o: o["priority"], reverse=True)
        return matching

    def trigger(self, event_name: str, payload: Any = None) -> Any:
        """Fire an event and run matching observers in priority order.

        Each callback's non-``None`` return value becomes the payload of the
        next callback. :class:`StopRun` raised by a callback is re-raised
        after logging so the run loop can terminate cleanly.

        Args:
            event_name: Event name to fire. Literal plus wildcard matches are
                dispatched.
            payload: Data threaded through the chain.

        Returns:
            The payload after the last callback returned.

        Raises:
            StopRun: If an observer asks the run to end.
            ObserverError: If the error strategy is ``"fail_fast"`` and an
                observer raises.

        Example:
            >>> reg = ObserverRegistry()
            >>> reg.register("step.recorded", lambda p: p + 1)
            >>> reg.trigger("step.recorded", 41)
            42
        """
        entries = self._matching(event_name)
        if not entries:
            return payload

        if self._tracing:
            logger.debug(f"Triggering '{event_name}' with {len(entries)} observers")

        failures = 0
        result = payload

        for entry in entries:
            observer = entry["observer"]
            name = entry["observer_name"]

            if observer is not None and not getattr(observer, "enabled", True):
                logger.debug(f"Skipping disabled observer '{name}'")
                continue

            try:
                start = time.perf_counter() if self._tracing else 0.0
                new_result = entry["callback"](result)
                if self._tracing:
                    logger.debug(
                        f"Observer '{name}' on '{event_name}' "
                        f"(priority={entry['priority']}) took "
                        f"{time.perf_counter() - start:.4f}s"
                    )
                if new_result is not None:
                    result = new_result

            except StopRun as e:
                logger.info(f"Run stopped by observer '{name}' on '{event_name}': {e}")
                raise

            except Exception as e:
                error_msg = f"Observer '{name}' failed on '{event_name}': {e}"
                logger.error(error_msg)

                if observer is not None and hasattr(observer, "on_error"):
                    try:
                        observer.on_error(e)
                    except Exception as notify_error:
                        logger.error(f"Error in observer error handler: {notify_error}")

                if self._error_strategy == "fail_fast":
                    raise ObserverError(error_msg) from e
                if self._error_strategy == "collect_all":
                    failures += 1
                    self.errors.append({"observer": name, "error": e, "event": event_name})

        if failures:
            logger.warning(f"Event '{event_name}' completed with {failures} observer errors")

        return result

    def get_observers(self, event_name: str) -> List[Dict[str, Any]]:
        """Return every callback that would run for an event, in order.

        Args:
            event_name: Event name to resolve, wildcard matches included.

        Returns:
            List of dicts with keys ``callback``, ``observer``,
            ``observer_name``, ``priority``.
        """
        return self._matching(event_name)

    def get_all_events(self) -> List[str]:
        """Return every registered event name (wildcard patterns as-is)."""
        return list(self._observers.keys())

    def clear_all(self) -> None:
        """Remove every registered callback and collected error."""
        self._observers.clear()
        self.errors.clear()
        logger.debug("Cleared all observers")

    def set_error_strategy(self, strategy: str) -> None:
        """Choose how observer exceptions are handled during dispatch.

        Strategies:
            - ``"log_and_continue"`` (default): log the error and run the
              next observer.
            - ``"fail_fast"``: raise :class:`ObserverError`, aborting the run.
            - ``"collect_all"``: run every observer and keep the failures in
              :attr:`errors`.

        Raises:
            ValueError: If ``strategy`` is not one of the listed names.
        """
        if strategy not in self.VALID_STRATEGIES:
            raise ValueError(f"Invalid strategy. Must be one of {list(self.VALID_STRATEGIES)}")
        self._error_strategy = strategy
        logger.debug(f"Observer error strategy set to '{strategy}'")

    def enable_tracing(self, enabled: bool = True) -> None:
        """Toggle per-observer timing logs at DEBUG level."""
        self._tracing = enabled
