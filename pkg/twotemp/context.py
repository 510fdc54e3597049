"""Context management for nested run spans."""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Generator, Optional

from .models import RunSpan, RunStatus

try:
    import psutil
    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False

logger = logging.getLogger(__name__)


def _resident_mb() -> Optional[float]:
    if not PSUTIL_AVAILABLE:
        return None
    return psutil.Process().memory_info().rss / 2**20


class RunContext:
    """Thread-local context for managing the run hierarchy.

    Each worker thread of a sweep carries its own current span, so nested spans
    (sweep, level, model run) stay correctly parented under concurrency.
    """

    def __init__(self):
        self._local = threading.local()

    @property
    def current_span(self) -> Optional[RunSpan]:
        """Get the current active span."""
        return getattr(self._local, "current_span", None)

    def set_current_span(self, span: Optional[RunSpan]):
        self._local.current_span = span

    @contextmanager
    def span_context(self, span: RunSpan) -> Generator[RunSpan, None, None]:
        """Context manager for setting the current span.

        Args:
            span: The span to set as current

        Yields:
            The span instance
        """
        previous_span = self.current_span
        self.set_current_span(span)
        try:
            yield span
        finally:
            self.set_current_span(previous_span)

    def create_child_span(self, name: str, **attributes: Any) -> RunSpan:
        current = self.current_span
        return RunSpan(name=name, parent=current.name if current else None, attributes=attributes)


# Global run context instance
_run_context = RunContext()


def get_current_span() -> Optional[RunSpan]:
    """Get the current active span.

    Returns:
        Current RunSpan instance or None if no span is active
    """
    return _run_context.current_span


@contextmanager
def run_span(name: str, **attributes: Any) -> Generator[RunSpan, None, None]:
    """Time a unit of work and log its outcome.

    Exceptions are recorded on the span, logged and re-raised.

    Args:
        name: What is being run
        **attributes: Parameters of the run, logged with it

    Yields:
        The active span
    """
    span = _run_context.create_child_span(name, **attributes)
    logger.debug("start %s %s", name, attributes)
    with _run_context.span_context(span):
        try:
            yield span
        except BaseException as e:
            span.set_error(e)
            span.finish(RunStatus.FAILED)
            logger.error("%s failed after %.1f ms: %s", name, span.duration_ms, e)
            raise
    span.finish()
    rss = _resident_mb()
    if rss is not None:
        span.set_attribute("rss_mb", rss)
        logger.debug("finish %s in %.1f ms (rss %.0f MB)", name, span.duration_ms, rss)
    else:
        logger.debug("finish %s in %.1f ms", name, span.duration_ms)
