"""Base class for run observers."""

from typing import Any, Callable, Dict, List, Optional

from .observer_registry import ObserverRegistry


class ObserverBase:
    """Base class for objects that watch a simulation run.

    Subclass this, set ``name``, and decorate methods with
    :func:`jmgt_sim.observe` to subscribe them to run events
    (``run.started``, ``step.recorded``, ``run.finished``, ``run.failed``).
    :func:`jmgt_sim.core.solver.run` attaches every observer it is given to a
    fresh :class:`ObserverRegistry` before the first step and detaches them
    after the last.

    Attributes:
        name: Observer identifier used in logs. Defaults to the class name.
        description: Short summary of what the observer records.
        enabled: Whether callbacks from this observer currently execute.

    Example:
        >>> from jmgt_sim import ObserverBase, observe
        >>> class MaxEnergy(ObserverBase):
        ...     name = "max_energy"
        ...
        ...     def on_attach(self):
        ...         self.value = 0.0
        ...
        ...     @observe("step.recorded")
        ...     def update(self, payload):
        ...         self.value = max(self.value, payload["report"].E)
    """

    name: str = ""
    description: str = ""

    def __init__(self) -> None:
        """Initialize the observer and collect decorated callbacks."""
        self.enabled: bool = True
        self._callbacks: Dict[str, List[Dict[str, Any]]] = {}
        self._registry: Optional[ObserverRegistry] = None

        if "name" not in self.__class__.__dict__ and not self.name:
            self.name = self.__class__.__name__

        self._collect_decorated()

    def on_attach(self) -> None:
        """Run once when the observer is attached to a registry."""
        pass

    def on_detach(self) -> None:
        """Run once when the observer is detached, after the run ends."""
        pass

    def on_error(self, error: Exception) -> None:
        """Handle exceptions raised by this observer's callbacks.

        Called by the registry before it applies its error strategy.

        Args:
            error: The exception raised by the failing callback.
        """
        pass

    def add_callback(self, event_name: str, callback: Callable, priority: int = 50) -> None:
        """Subscribe a callback at runtime, typically from :meth:`on_attach`.

        Args:
            event_name: Event name or wildcard pattern.
            callback: Callable receiving the event payload.
            priority: Higher values run earlier.
        """
        if self._registry is not None:
            self._registry.register(event_name, callback, self, priority)
        else:
            self._callbacks.setdefault(event_name, []).append(
                {"callback": callback, "priority": priority}
            )

    def attach(self, registry: ObserverRegistry) -> None:
        """Register every collected callback with ``registry``."""
        self._registry = registry
        for event_name, entries in self._callbacks.items():
            for entry in entries:
                registry.register(event_name, entry["callback"], self, entry["priority"])
        self.on_attach()

    def detach(self) -> None:
        """Remove this observer's callbacks from its registry."""
        if self._registry is None:
            return
        self.on_detach()
        for event_name in self._registry.get_all_events():
            for entry in list(self._registry.get_observers(event_name)):
                if entry["observer"] is self:
                    self._registry.unregister(event_name, entry["callback"], self)
        self._registry = None

    def _collect_decorated(self) -> None:
        for attr_name in dir(self):
            if attr_name.startswith("_"):
                continue
            try:
                attr = getattr(self, attr_name)
            except AttributeError:
                continue
            if callable(attr) and getattr(attr, "_is_observer", False):
                self._callbacks.setdefault(attr._event_name, []).append(
                    {"callback": attr, "priority": getattr(attr, "_priority", 50)}
                )

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} name='{self.name}' enabled={self.enabled}>"
