import numpy as np
import pytest

from edrsim.config import build_config
from edrsim.core import FeatureVector, Query, StoredEntry


def make_entry(vec, t=0.0, app="A", idx=0, size=100):
    v = vec if isinstance(vec, FeatureVector) else FeatureVector(vec)
    return StoredEntry(idx, app, ("r", idx), size, 10, t, vector=v)


def vquery(vec, idx=0, app="A", t=0.0, ingress=0):
    return Query(idx, app, 100, t, ingress, vector=FeatureVector(vec))


def bquery(key, idx=0, coin=True, app="A", t=0.0, ingress=0):
    return Query(idx, app, 100, t, ingress, bucket_key=key, reuse_coin=coin)


def small_config(**sections):
    """A quick 5 s TrafficDetection run unless overridden."""
    base = {"workload": {"duration_s": 5, "rate": 500}}
    for sec, kv in sections.items():
        base.setdefault(sec, {}).update(kv)
    return build_config(base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
