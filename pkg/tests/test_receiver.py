import random

import pytest

from blockpipe import fifos, receiver, sender, wire, workload
from blockpipe.receiver import SectionReceiver, classify_packet
from blockpipe.wire import SectionPacket, SectionType

from test_blockmodel import make_block


def fresh(net, **kwargs):
    f = fifos.FifoSet(block_depth=64, tx_depth=4096, ends_depth=8192, rdset_depth=8192, wrset_depth=8192)
    return SectionReceiver(net.build_cache(), f, **kwargs), f


def drain(channel):
    out = []
    while channel.qsize():
        out.append(channel.get())
    return out


def drain_all(f):
    return {
        "block": drain(f.block),
        "tx": drain(f.tx),
        "ends": drain(f.ends),
        "rdset": drain(f.rdset),
        "wrset": drain(f.wrset),
    }


def reference_all(blocks, cache):
    bundles = [fifos.extract_block(b, cache) for b in blocks]
    return {
        "block": [b.block_entry for b in bundles],
        "tx": [e for b in bundles for e in b.tx_entries],
        "ends": [e for b in bundles for e in b.ends_entries],
        "rdset": [e for b in bundles for e in b.rdset_entries],
        "wrset": [e for b in bundles for e in b.wrset_entries],
    }


def normalize(contents):
    # block entries carry a receiver-side emission timestamp; compare the rest
    out = dict(contents)
    out["block"] = [(e.block_num, e.num_txs, e.request) for e in contents["block"]]
    return out


def assert_fifos_match(got, want):
    assert normalize(got) == normalize(want)


def test_classify_by_port(net):
    datagram = b"arbitrary bytes"
    kind, out = classify_packet(datagram, dst_port=9999, protocol_port=5000)
    assert (kind, out) == ("normal", datagram)


def test_classify_parses_protocol_packets(net, cache):
    packet = sender.packets_for_block(make_block(net), cache)[0]
    kind, parsed = classify_packet(packet.encode(), dst_port=5000, protocol_port=5000)
    assert kind == "section"
    assert parsed.section_type == SectionType.HEADER


def test_bad_magic_counted_and_dropped(net):
    rcv, f = fresh(net)
    rcv.handle_datagram(b"\x00\x01" + b"x" * 30)
    rcv.handle_datagram(b"\xb1\x0c")  # short header
    assert rcv.counters.packets_malformed == 2
    assert f.block.qsize() == 0


def test_passthrough_byte_identical_in_order(net):
    seen = []
    rcv, _ = fresh(net, bypass=seen.append)
    payloads = [bytes([i]) * 9 for i in range(5)]
    for p in payloads:
        rcv.handle_datagram(p, dst_port=1234)
    assert seen == payloads
    assert rcv.counters.packets_passthrough == 5


def test_end_to_end_differential(net, cache):
    source = workload.WorkloadGenerator(net)
    blocks = list(source.blocks(count=3, sizes=[4, 1, 6]))
    rcv, f = fresh(net)
    for block in blocks:
        for packet in sender.packets_for_block(block, cache):
            rcv.handle_datagram(packet.encode())
    assert rcv.counters.blocks_completed == 3
    assert_fifos_match(drain_all(f), reference_all(blocks, cache))


def test_shuffled_arrival_identical_contents(net, cache):
    blocks = [make_block(net, num_txs=4, number=n) for n in (1, 2)]
    want = reference_all(blocks, cache)
    for seed in (1, 2, 3):
        datagrams = [p.encode() for b in blocks for p in sender.packets_for_block(b, cache)]
        random.Random(seed).shuffle(datagrams)
        rcv, f = fresh(net)
        for d in datagrams:
            rcv.handle_datagram(d)
        assert_fifos_match(drain_all(f), want)


def test_interleaved_blocks_release_in_block_order(net, cache):
    blocks = [make_block(net, num_txs=3, number=n) for n in (7, 8)]
    packets = [sender.packets_for_block(b, cache) for b in blocks]
    rcv, f = fresh(net)
    # interleave: one packet of each alternately, block 8 finishing first
    order = [packets[1][0], packets[0][0], packets[1][1], packets[0][1], packets[1][2],
             packets[1][3], packets[1][4], packets[0][2], packets[0][3], packets[0][4]]
    for p in order:
        rcv.handle_datagram(p.encode())
    got = drain_all(f)
    assert [e.block_num for e in got["block"]] == [7, 8]
    tx_nums = [(e.block_num, e.tx_num) for e in got["tx"]]
    assert tx_nums == [(7, 0), (7, 1), (7, 2), (8, 0), (8, 1), (8, 2)]


def test_dropped_packet_counts_incomplete_no_output(net, cache):
    rcv, f = fresh(net, deadline=0.25)
    packets = sender.packets_for_block(make_block(net, num_txs=3), cache)
    for i, p in enumerate(packets):
        if i != 2:
            rcv.handle_datagram(p.encode(), now=10.0)
    rcv.check_deadlines(now=10.2)
    assert rcv.counters.blocks_incomplete == 0  # deadline not reached yet
    rcv.check_deadlines(now=10.3)
    assert rcv.counters.blocks_incomplete == 1
    assert rcv.counters.blocks_completed == 0
    assert f.block.qsize() == 0 and f.tx.qsize() == 0


def test_expired_block_unblocks_later_ones(net, cache):
    blocks = [make_block(net, num_txs=2, number=n) for n in (1, 2)]
    rcv, f = fresh(net, deadline=0.25)
    lost = sender.packets_for_block(blocks[0], cache)
    for p in lost[:-1]:
        rcv.handle_datagram(p.encode(), now=5.0)
    for p in sender.packets_for_block(blocks[1], cache):
        rcv.handle_datagram(p.encode(), now=5.1)
    assert f.block.qsize() == 0  # block 2 held: block 1 still pending
    rcv.check_deadlines(now=5.5)
    assert rcv.counters.blocks_incomplete == 1
    released = drain_all(f)
    assert [e.block_num for e in released["block"]] == [2]


def test_unknown_identity_fails_block(net, cache):
    from blockpipe.identity import IdentityCache

    rcv_cache = IdentityCache(net.org_indices)  # empty receiver cache
    f = fifos.FifoSet()
    rcv = SectionReceiver(rcv_cache, f)
    for packet in sender.packets_for_block(make_block(net), cache):
        rcv.handle_datagram(packet.encode())
    assert rcv.counters.blocks_failed == 1
    assert f.block.qsize() == 0


def test_cache_sync_packet_installs_identity(net, cache):
    from blockpipe.identity import IdentityCache

    rcv_cache = IdentityCache(net.org_indices)
    f = fifos.FifoSet(block_depth=8, tx_depth=64, ends_depth=64, rdset_depth=64, wrset_depth=64)
    rcv = SectionReceiver(rcv_cache, f)
    for encoded_id, cert in cache.items():
        rcv.handle_datagram(wire.encode_cache_sync(encoded_id, cert).encode())
    assert rcv.counters.packets_cache_sync == len(cache)
    for packet in sender.packets_for_block(make_block(net), cache):
        rcv.handle_datagram(packet.encode())
    assert rcv.counters.blocks_completed == 1


def test_sender_syncs_unregistered_identity_on_the_fly(net):
    import socket
    import threading

    from blockpipe import blockmodel
    from blockpipe.identity import Certificate, IdentityCache, Role, public_key_bytes
    from blockpipe import identity as ident

    # a client whose certificate is not in the static config
    stray_key = ident.derive_private_key(777777)
    stray_cert = Certificate("Org2", Role.CLIENT, 3, public_key_bytes(stray_key)).to_bytes()
    tx = blockmodel.Transaction(stray_cert, 1, [], [(b"k", b"v")], b"n" * 16)
    for org_index in (0, 1):
        node = net.endorser_node(org_index)
        blockmodel.endorse(tx, node.private_key, node.cert_bytes)
    blockmodel.client_sign(tx, stray_key)
    orderer = net.orderer_node()
    block = blockmodel.build_signed_block([tx], orderer.private_key, orderer.cert_bytes, 1)

    rcv, f = fresh(net)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind(("127.0.0.1", 0))
    try:
        bs = sender.BlockSender(net.build_cache(), sock.getsockname())
        report = bs.send_block(block)
        assert report.cache_sync_packets == 1
        sock.settimeout(1.0)
        for _ in range(report.packets_sent + report.cache_sync_packets):
            rcv.handle_datagram(sock.recvfrom(65535)[0])
        bs.close()
    finally:
        sock.close()
    assert rcv.counters.blocks_completed == 1
    got = drain_all(f)
    assert got["tx"][0].request.public_key == Certificate.from_bytes(stray_cert).public_key


def test_prefailed_der_flows_as_false_not_abort(net, cache):
    block = make_block(net, num_txs=2)
    block.transactions[0].signature = b"\x30\x02\x05\x00"  # undecodable DER
    # re-sign the block so only the tx signature is broken
    from blockpipe import blockmodel

    orderer = net.orderer_node()
    block = blockmodel.build_signed_block(block.transactions, orderer.private_key, orderer.cert_bytes, 1)
    rcv, f = fresh(net)
    for packet in sender.packets_for_block(block, cache):
        rcv.handle_datagram(packet.encode())
    assert rcv.counters.blocks_completed == 1
    got = drain_all(f)
    assert got["tx"][0].request.prefailed
    assert not got["tx"][1].request.prefailed


def test_stale_duplicate_packets_ignored(net, cache):
    rcv, f = fresh(net)
    packets = sender.packets_for_block(make_block(net), cache)
    for p in packets:
        rcv.handle_datagram(p.encode())
    rcv.handle_datagram(packets[0].encode())  # late duplicate of a completed block
    assert rcv.counters.packets_stale == 1
    assert rcv.counters.blocks_completed == 1
