"""Tests for run spans."""

import logging
import threading

import pytest

from twotemp.context import get_current_span, run_span
from twotemp.models import RunStatus


def test_no_span_outside_context():
    assert get_current_span() is None


def test_nested_spans_are_parented():
    with run_span("sweep", epsilon=0.25) as outer:
        assert get_current_span() is outer
        with run_span("level") as inner:
            assert inner.parent == "sweep"
        assert get_current_span() is outer
    assert get_current_span() is None
    assert outer.status == RunStatus.COMPLETED
    assert outer.duration_ms >= 0.0
    assert outer.attributes["epsilon"] == 0.25


def test_failure_is_recorded_and_reraised(caplog):
    with caplog.at_level(logging.ERROR, logger="twotemp.context"):
        with pytest.raises(RuntimeError):
            with run_span("level") as span:
                raise RuntimeError("boom")
    assert span.status == RunStatus.FAILED
    assert span.error["type"] == "RuntimeError"
    assert "level failed" in caplog.text
    assert get_current_span() is None


def test_spans_are_thread_local():
    seen = []

    def worker():
        seen.append(get_current_span())

    with run_span("sweep"):
        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()
    assert seen == [None]


def test_to_dict():
    with run_span("model", model="infinite") as span:
        pass
    data = span.to_dict()
    assert data["name"] == "model"
    assert data["status"] == "completed"
    assert data["attributes"]["model"] == "infinite"
