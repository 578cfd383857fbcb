import threading
import time

import pytest

from blockpipe.blockmodel import Version
from blockpipe.errors import CapacityError
from blockpipe.statedb import KvStore


def test_get_empty_is_absent():
    assert KvStore().get(b"missing") is None


def test_put_then_get():
    store = KvStore()
    store.put(b"k", b"v", Version(5, 2))
    assert store.get(b"k") == (b"v", Version(5, 2))


def test_overwrite_updates_value_and_version():
    store = KvStore()
    store.put(b"k", b"v1", Version(1, 0))
    store.put(b"k", b"v2", Version(2, 3))
    assert store.get(b"k") == (b"v2", Version(2, 3))
    assert len(store) == 1


def test_versions_are_opaque_to_store():
    store = KvStore()
    store.put(b"k", b"new", Version(9, 9))
    store.put(b"k", b"old", Version(1, 1))  # no ordering enforced
    assert store.get(b"k") == (b"old", Version(1, 1))


def test_capacity_error_on_next_distinct_key():
    store = KvStore(capacity=4)
    for i in range(4):
        store.put(b"k%d" % i, b"v", Version(1, i))
    store.put(b"k0", b"v2", Version(2, 0))  # overwrites are fine
    with pytest.raises(CapacityError):
        store.put(b"k-new", b"v", Version(2, 1))


class SlowWriteStore(KvStore):
    """Widens the write window so the read-block-during-write contract is observable."""

    def __init__(self, delay, **kwargs):
        super().__init__(**kwargs)
        self.delay = delay

    def _install(self, key, value, version):
        time.sleep(self.delay)
        super()._install(key, value, version)


def test_get_blocks_during_inflight_put():
    store = SlowWriteStore(0.15)
    store.put(b"k", b"v0", Version(1, 0))
    seen = {}

    def writer():
        store.put(b"k", b"v1", Version(2, 0))

    def reader():
        t0 = time.perf_counter()
        seen["value"] = store.get(b"k")
        seen["waited"] = time.perf_counter() - t0

    w = threading.Thread(target=writer)
    w.start()
    time.sleep(0.03)  # let the put enter its write window
    r = threading.Thread(target=reader)
    r.start()
    w.join()
    r.join()
    assert seen["value"] == (b"v1", Version(2, 0))  # sees the new value, not the old
    assert seen["waited"] > 0.05  # and had to wait for the write to finish


def test_reads_of_other_keys_not_blocked_by_write():
    store = SlowWriteStore(0.2)
    store.put(b"other", b"x", Version(1, 0))
    w = threading.Thread(target=lambda: store.put(b"k", b"v", Version(2, 0)))
    w.start()
    time.sleep(0.03)
    t0 = time.perf_counter()
    assert store.get(b"other") == (b"x", Version(1, 0))
    assert time.perf_counter() - t0 < 0.05
    w.join()


def test_snapshot_is_point_in_time_copy():
    store = KvStore()
    store.put(b"k", b"v", Version(1, 0))
    snap = store.snapshot()
    store.put(b"k2", b"v2", Version(1, 1))
    assert b"k2" not in snap
    assert snap == {b"k": (b"v", Version(1, 0))}


def test_dump_format(tmp_path):
    store = KvStore()
    store.put(b"b", b"\x01\x02", Version(3, 4))
    store.put(b"a", b"\xff", Version(1, 0))
    path = tmp_path / "state.tsv"
    store.dump(path)
    lines = path.read_text().splitlines()
    assert lines == ["61\tff\t1.0", "62\t0102\t3.4"]
