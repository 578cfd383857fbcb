import threading
import time

import pytest

from blockpipe import fifos, workload
from blockpipe.fifos import Channel, build_verification_request


def test_channel_fifo_order():
    ch = Channel(8)
    ch.put_many([1, 2, 3])
    ch.put(4)
    assert [ch.get() for _ in range(4)] == [1, 2, 3, 4]


def test_channel_get_many_exact_count():
    ch = Channel(8)
    out = []
    t = threading.Thread(target=lambda: out.extend(ch.get_many(5)))
    t.start()
    ch.put_many([1, 2])
    time.sleep(0.02)
    assert t.is_alive()  # still waiting for the rest
    ch.put_many([3, 4, 5])
    t.join(timeout=2)
    assert out == [1, 2, 3, 4, 5]
    assert ch.get_many(0) == []


def test_channel_producer_blocks_when_full():
    ch = Channel(2)
    ch.put_many([1, 2])
    done = threading.Event()

    def producer():
        ch.put_many([3, 4, 5])
        done.set()

    t = threading.Thread(target=producer)
    t.start()
    time.sleep(0.05)
    assert not done.is_set()  # blocked on capacity
    assert ch.get_many(3) == [1, 2, 3]
    t.join(timeout=2)
    assert done.is_set()
    assert ch.get_many(2) == [4, 5]


def test_channel_qsize():
    ch = Channel(4)
    ch.put_many([1, 2, 3])
    assert ch.qsize() == 3
    ch.get()
    assert ch.qsize() == 2


def test_build_verification_request_prefails_bad_der():
    req = build_verification_request(b"\xde\xad", b"pub", b"d" * 32)
    assert req.prefailed
    good = build_verification_request(bytes.fromhex("3006020101020101"), b"pub", b"d" * 32)
    assert not good.prefailed
    assert good.r[-1] == 1 and good.s[-1] == 1


def test_extract_block_shapes(net, cache):
    gen = workload.WorkloadGenerator(net)
    block = next(gen.blocks(count=1, sizes=[4]))
    contents = fifos.extract_block(block, cache)
    assert contents.block_entry.num_txs == 4
    assert [e.tx_num for e in contents.tx_entries] == [0, 1, 2, 3]
    assert len(contents.ends_entries) == sum(e.num_ends for e in contents.tx_entries)
    assert len(contents.rdset_entries) == sum(e.rdset_size for e in contents.tx_entries)
    assert len(contents.wrset_entries) == sum(e.wrset_size for e in contents.tx_entries)
    # endorser ids resolve through the cache
    for entry in contents.ends_entries:
        assert cache.cert_for(entry.endorser_id) is not None


def test_feed_pushes_block_entry_first(net, cache):
    gen = workload.WorkloadGenerator(net)
    block = next(gen.blocks(count=1, sizes=[2]))
    contents = fifos.extract_block(block, cache)
    f = fifos.FifoSet()
    contents.feed(f)
    assert f.block.qsize() == 1
    assert f.block.get() == contents.block_entry
    assert f.tx.get_many(2) == contents.tx_entries
