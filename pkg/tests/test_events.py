import pytest
from hypothesis import given, strategies as st

from edrsim.events import EventKind, EventQueue, PastEventError


@given(st.lists(st.integers(0, 20), max_size=60))
def test_pops_in_time_then_schedule_order(times):
    q = EventQueue()
    for i, t in enumerate(times):
        q.schedule(float(t), EventKind.ARRIVAL, i)
    out = [q.pop() for _ in range(len(q))]
    assert [(t, p) for t, _, _, p in out] == sorted((float(t), i) for i, t in enumerate(times))


def test_past_events_rejected():
    q = EventQueue()
    q.schedule(5.0, EventKind.ARRIVAL)
    q.pop()
    q.schedule(5.0, EventKind.INGRESS)  # same instant is allowed
    with pytest.raises(PastEventError):
        q.schedule(4.999, EventKind.ARRIVAL)
    assert q.peek_time() == 5.0
    q.pop()
    assert q.peek_time() is None and len(q) == 0
