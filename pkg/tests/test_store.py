import pytest

from edrsim.core import BucketId
from edrsim.store import BucketNotOwned, DuplicateOwnership, ReuseStore, dump_buckets, parse_dump

from conftest import bquery, vquery

B = BucketId(0, 7)


def test_unowned_bucket_raises():
    s = ReuseStore(0)
    with pytest.raises(BucketNotOwned):
        s.lookup(bquery(7), B, 0.6)
    s.create(B)
    with pytest.raises(DuplicateOwnership):
        s.create(B)


def test_profile_mode_needs_coin_and_content():
    s = ReuseStore(0)
    s.create(B, reuse_rating=0.7)
    assert not s.lookup(bquery(7, coin=True), B, 0.6).hit  # empty bucket
    s.insert(bquery(7, idx=1), B, "r", 64, now=1.0)
    assert s.lookup(bquery(7, idx=2, coin=True), B, 0.6, lookup_cost_ms=0.6).hit
    assert not s.lookup(bquery(7, idx=3, coin=False), B, 0.6).hit
    st = s.bucket(B).stats
    assert (st.hits, st.misses) == (1, 2)


def test_profile_mode_dedups_by_bucket_key():
    s = ReuseStore(0)
    s.create(B)
    assert s.insert(bquery(7, idx=1), B, "r", 64, now=1.0) is not None
    assert s.insert(bquery(7, idx=2), B, "r", 64, now=2.0) is None
    assert len(s.bucket(B).entries) == 1
    assert s.bytes_stored == 100 + 64


def test_app_mismatch_is_miss_and_not_stored():
    s = ReuseStore(0)
    s.create(B)
    s.insert(bquery(7, app="A"), B, "r", 64, now=0.0)
    assert not s.lookup(bquery(7, app="B"), B, 0.6).hit
    assert s.insert(bquery(7, idx=5, app="B"), B, "r", 64, now=1.0) is None
    assert s.bucket(B).app == "A"


def test_vector_mode_threshold_and_dedup():
    s = ReuseStore(0)
    s.create(B)
    s.insert(vquery([1.0, 0.0], idx=0), B, "r0", 8, now=0.0)
    d = s.lookup(vquery([1.0, 0.1], idx=1), B, 0.9)
    assert d.hit and d.entry.query_index == 0 and d.similarity > 0.99
    assert not s.lookup(vquery([0.0, 1.0], idx=2), B, 0.9).hit
    assert s.insert(vquery([1.0, 0.0], idx=3), B, "r3", 8, now=1.0) is None


def test_secondary_tables_widen_candidates():
    s = ReuseStore(0)
    b1, b2 = BucketId(0, 1), BucketId(0, 2)
    sec = BucketId(1, 99)
    s.create(b1)
    s.create(b2)
    s.insert(vquery([1.0, 0.0], idx=0), b1, "r", 8, now=0.0, secondary_ids=(sec,))
    q = vquery([1.0, 0.05], idx=1)
    assert not s.lookup(q, b2, 0.9).hit
    assert s.lookup(q, b2, 0.9, secondary_ids=(sec,)).hit


def test_budget_evicts_oldest_first():
    s = ReuseStore(0, budget_bytes=3 * 110)
    b1, b2 = BucketId(0, 1), BucketId(0, 2)
    s.create(b1)
    s.create(b2)
    for i in range(5):
        s.insert(vquery([1.0, float(i)], idx=i), b1 if i % 2 else b2, "r", 10, now=float(i))
    assert s.bytes_stored <= 330
    assert s.evictions == 2
    kept = sorted(e.query_index for b in s for e in b.entries)
    assert kept == [2, 3, 4]
    assert sum(b.stats.bytes_stored for b in s) == s.bytes_stored


def test_export_import_roundtrip():
    a, b = ReuseStore(0), ReuseStore(1)
    a.create(B, reuse_rating=0.5)
    sec = BucketId(1, 3)
    a.insert(vquery([1.0, 0.0], idx=0), B, "r", 8, now=0.0, secondary_ids=(sec,))
    xfer = a.export_bucket(B, 1)
    assert xfer.total_bytes == 108 and not a.owns(B) and a.bytes_stored == 0
    assert a._secondary == {}
    with pytest.raises(ValueError):
        a.import_bucket(xfer)
    b.import_bucket(xfer)
    assert b.owns(B) and b.bytes_stored == 108
    assert b.bucket(B).reuse_rating == 0.5
    other = BucketId(0, 9)
    b.create(other)
    assert b.lookup(vquery([1.0, 0.01], idx=1), other, 0.9, secondary_ids=(sec,)).hit
    with pytest.raises(ValueError):
        b.export_bucket(B, 1)


def test_dump_roundtrip():
    s = ReuseStore(0)
    s.create(B)
    s.insert(bquery(7), B, "r", 64, now=0.1)
    rows = parse_dump(dump_buckets(s))
    assert rows == [(B, "A", 0.1, 64)]
    assert parse_dump(dump_buckets(ReuseStore(1))) == []
