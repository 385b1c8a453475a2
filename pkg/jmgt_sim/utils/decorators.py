"""Decorators for declaring run observers."""

from functools import wraps
from typing import Callable


def observe(event_name: str, priority: int = 50) -> Callable:
    """Mark an observer method as a callback for a run event.

    The decorator attaches metadata to the wrapped method;
    :class:`ObserverBase` collects every method marked this way when the
    observer is instantiated and registers them when it is attached to a
    registry.

    Args:
        event_name: Event to subscribe to. Supports wildcard patterns
            like ``"step.*"`` or ``"run.*"``.
        priority: Execution order relative to other observers of the same
            event; higher runs first. Default 50.

    Returns:
        A decorator that wraps the method with observer metadata and
        preserves its original signature via :func:`functools.wraps`.

    Example:
        >>> from jmgt_sim import ObserverBase, observe
        >>> class PeakTracker(ObserverBase):
        ...     name = "peak"
        ...
        ...     @observe("step.recorded", priority=10)
        ...     def track(self, payload):
        ...         self.peak = max(getattr(self, "peak", 0.0), payload["report"].Y)
    """

    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(self, *args, **kwargs):
            return func(self, *args, **kwargs)

        wrapper._is_observer = True
        wrapper._event_name = event_name
        wrapper._priority = priority

        return wrapper

    return decorator
