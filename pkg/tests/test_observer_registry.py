"""
Tests for ObserverRegistry class.
"""

import pytest

from jmgt_sim import ObserverBase
from jmgt_sim.core.exceptions import ObserverError, StopRun
from jmgt_sim.core.observer_registry import ObserverRegistry


@pytest.fixture
def registry():
    """Create a fresh ObserverRegistry for each test."""
    return ObserverRegistry()


@pytest.fixture
def counting_observer():
    """Observer that counts the errors reported to it."""

    class Counting(ObserverBase):
        name = "counting"

        def __init__(self):
            super().__init__()
            self.error_count = 0

        def on_error(self, error):
            self.error_count += 1

    return Counting()


def test_register_observer(registry):
    """Test registering a callback."""

    def callback(payload):
        return payload

    registry.register("step.recorded", callback)
    entries = registry.get_observers("step.recorded")
    assert len(entries) == 1
    assert entries[0]["callback"] == callback
    assert entries[0]["observer_name"] == "anonymous"


def test_priority_order(registry):
    """Test higher priority runs first, ties keep registration order."""
    calls = []
    registry.register("step.recorded", lambda p: calls.append("low"), priority=10)
    registry.register("step.recorded", lambda p: calls.append("high"), priority=100)
    registry.register("step.recorded", lambda p: calls.append("mid-a"), priority=50)
    registry.register("step.recorded", lambda p: calls.append("mid-b"), priority=50)

    registry.trigger("step.recorded", {})
    assert calls == ["high", "mid-a", "mid-b", "low"]


def test_unregister(registry):
    """Test unregistering a callback."""

    def callback(payload):
        return payload

    registry.register("run.started", callback)
    assert registry.unregister("run.started", callback) is True
    assert registry.get_observers("run.started") == []


def test_unregister_nonexistent(registry):
    """Test unregistering something never registered."""
    assert registry.unregister("run.started", lambda p: p) is False


def test_payload_threading(registry):
    """Test return values feed the next callback."""
    registry.register("step.recorded", lambda p: p + 1, priority=100)
    registry.register("step.recorded", lambda p: p * 10, priority=50)
    assert registry.trigger("step.recorded", 1) == 20


def test_none_return_keeps_payload(registry):
    """Test a callback returning None leaves the payload unchanged."""
    seen = []
    registry.register("step.recorded", lambda p: None, priority=100)
    registry.register("step.recorded", lambda p: seen.append(p))
    result = registry.trigger("step.recorded", {"n": 3})
    assert result == {"n": 3}
    assert seen == [{"n": 3}]


def test_wildcard_matching(registry):
    """Test wildcard patterns receive matching events only."""
    seen = []
    registry.register("run.*", lambda p: seen.append(p))
    registry.trigger("run.started", "a")
    registry.trigger("run.finished", "b")
    registry.trigger("step.recorded", "c")
    assert seen == ["a", "b"]


def test_wildcard_and_literal_share_priority_order(registry):
    """Test literal and wildcard subscribers are merged by priority."""
    calls = []
    registry.register("step.*", lambda p: calls.append("wild"), priority=90)
    registry.register("step.recorded", lambda p: calls.append("literal"), priority=10)
    registry.trigger("step.recorded")
    assert calls == ["wild", "literal"]


def test_stop_run_is_reraised(registry):
    """Test StopRun escapes dispatch and skips later callbacks."""
    calls = []

    def stopper(payload):
        raise StopRun("enough")

    registry.register("step.recorded", stopper, priority=100)
    registry.register("step.recorded", lambda p: calls.append(p), priority=10)

    with pytest.raises(StopRun):
        registry.trigger("step.recorded", 1)
    assert calls == []


def test_error_strategy_log_and_continue(registry, counting_observer):
    """Test errors are logged, reported to the observer and dispatch continues."""
    calls = []

    def failing(payload):
        raise RuntimeError("boom")

    registry.register("step.recorded", failing, counting_observer, priority=100)
    registry.register("step.recorded", lambda p: calls.append(p))
    registry.trigger("step.recorded", 5)
    assert calls == [5]
    assert counting_observer.error_count == 1


def test_error_strategy_fail_fast(registry):
    """Test fail_fast wraps the error in ObserverError."""

    def failing(payload):
        raise RuntimeError("boom")

    registry.register("run.started", failing)
    registry.set_error_strategy("fail_fast")
    with pytest.raises(ObserverError) as exc_info:
        registry.trigger("run.started")
    assert isinstance(exc_info.value.__cause__, RuntimeError)


def test_error_strategy_collect_all(registry):
    """Test collect_all keeps every failure."""

    def failing(payload):
        raise ValueError("bad")

    registry.register("step.recorded", failing)
    registry.register("step.recorded", failing, priority=10)
    registry.set_error_strategy("collect_all")
    registry.trigger("step.recorded")
    assert len(registry.errors) == 2
    assert registry.errors[0]["event"] == "step.recorded"


def test_set_invalid_error_strategy(registry):
    """Test invalid error strategy."""
    with pytest.raises(ValueError):
        registry.set_error_strategy("invalid_strategy")


def test_disabled_observer_skipped(registry, counting_observer):
    """Test callbacks of a disabled observer do not run."""
    calls = []
    registry.register("step.recorded", lambda p: calls.append(p), counting_observer)

    registry.trigger("step.recorded", 1)
    counting_observer.enabled = False
    registry.trigger("step.recorded", 2)
    assert calls == [1]


def test_tracing(registry, caplog):
    """Test tracing logs per-observer timing."""
    registry.register("run.started", lambda p: p)
    registry.enable_tracing(True)
    with caplog.at_level("DEBUG", logger="jmgt_sim.core.observer_registry"):
        registry.trigger("run.started", 0)
    assert any("took" in record.message for record in caplog.records)


def test_get_all_events(registry):
    """Test listing registered event names."""
    registry.register("run.started", lambda p: p)
    registry.register("step.*", lambda p: p)
    assert set(registry.get_all_events()) == {"run.started", "step.*"}


def test_clear_all(registry):
    """Test clearing every callback."""
    registry.register("run.started", lambda p: p)
    registry.register("run.finished", lambda p: p)
    registry.clear_all()
    assert registry.get_all_events() == []


def test_trigger_no_observers(registry):
    """Test triggering an event nobody listens to."""
    assert registry.trigger("run.finished", {"x": 1}) == {"x": 1}
