import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockpipe import blockmodel, receiver, sender, wire, workload
from blockpipe.errors import FrameLimitError, ProtocolError
from blockpipe.wire import FieldKind, SectionPacket, SectionType

from test_blockmodel import make_block, make_tx


def test_split_sections_counts(net):
    assert len(sender.split_sections(make_block(net, num_txs=5))) == 7
    assert len(sender.split_sections(make_block(net, num_txs=1))) == 3


def test_split_sections_reproduce_digest_coverage(net):
    block = make_block(net, num_txs=3)
    sections = sender.split_sections(block)
    covered = b"".join(sections[:-1])
    assert hashlib.sha256(covered).digest() == blockmodel.block_digest_of(block)
    assert hashlib.sha256(b"".join(sections[1:-1])).digest() == block.header.data_hash
    assert b"".join(sections) == blockmodel.encode_baseline(block)


def test_tx_annotations_cover_expected_kinds(net):
    block = make_block(net, num_txs=1)
    section = sender.split_sections(block)[1]
    pointers = sender.generate_annotations(section, SectionType.TRANSACTION)
    kinds = [p.field_kind for p in pointers]
    assert kinds.count(FieldKind.ENDORSEMENT_BLOB) == 2
    for kind in (FieldKind.CREATOR_ID_SLOT, FieldKind.CC_ID, FieldKind.READ_SET,
                 FieldKind.WRITE_SET, FieldKind.CLIENT_SIGNATURE):
        assert kinds.count(kind) == 1


def test_header_and_metadata_annotations(net):
    block = make_block(net)
    sections = sender.split_sections(block)
    header_kinds = {p.field_kind for p in sender.generate_annotations(sections[0], SectionType.HEADER)}
    assert header_kinds == {FieldKind.BLOCK_NUMBER, FieldKind.PREV_HASH, FieldKind.DATA_HASH}
    meta_kinds = {p.field_kind for p in sender.generate_annotations(sections[-1], SectionType.METADATA)}
    assert meta_kinds == {FieldKind.CREATOR_ID_SLOT, FieldKind.ORDERER_SIGNATURE}


def test_pointer_extraction_matches_full_decode(net):
    block = make_block(net, num_txs=2)
    section = sender.split_sections(block)[1]
    tx, _ = blockmodel.parse_tx_section(section)
    pointers = {p.field_kind: p for p in sender.generate_annotations(section, SectionType.TRANSACTION)}
    sig = pointers[FieldKind.CLIENT_SIGNATURE]
    assert section[sig.offset : sig.offset + sig.length] == tx.signature
    cc = pointers[FieldKind.CC_ID]
    assert int.from_bytes(section[cc.offset : cc.offset + cc.length], "big") == tx.cc_id
    creator = pointers[FieldKind.CREATOR_ID_SLOT]
    assert section[creator.offset : creator.offset + creator.length] == tx.creator_cert


def test_remove_identities_shrinks_section(net, cache):
    block = make_block(net, num_txs=1)  # 2 endorsements per tx
    section = sender.split_sections(block)[1]
    payload, locators = sender.remove_identities(section, SectionType.TRANSACTION, cache)
    assert len(locators) == 3  # creator + 2 endorsers
    assert len(section) - len(payload) >= 2 * (860 - 2)
    for locator in locators:
        encoded = int.from_bytes(payload[locator.offset : locator.offset + 2], "big")
        assert encoded == locator.encoded_id


def test_remove_identities_no_identities_is_noop(net, cache):
    section = sender.split_sections(make_block(net))[0]  # header carries none
    payload, locators = sender.remove_identities(section, SectionType.HEADER, cache)
    assert payload == section and locators == []


def test_remove_insert_roundtrip(net, cache):
    block = make_block(net, num_txs=3)
    for index, section in enumerate(sender.split_sections(block)):
        stype = sender._section_type_of(index, 5)
        payload, locators = sender.remove_identities(section, stype, cache)
        assert receiver.insert_identities(payload, locators, cache) == section


def test_remove_identities_unknown_identity_without_register(net):
    from blockpipe.identity import IdentityCache

    empty = IdentityCache(net.org_indices)
    block = make_block(net, num_txs=1)
    section = sender.split_sections(block)[1]
    with pytest.raises(ProtocolError):
        sender.remove_identities(section, SectionType.TRANSACTION, empty, register=False)


def test_packet_codec_roundtrip(net, cache):
    block = make_block(net, num_txs=2)
    for packet in sender.packets_for_block(block, cache):
        back = SectionPacket.decode(packet.encode())
        assert back == SectionPacket(
            packet.section_type,
            packet.block_number,
            packet.section_index,
            packet.total_sections,
            packet.payload,
            sorted(packet.locators, key=lambda a: a.offset),
            sorted(packet.pointers, key=lambda a: a.offset),
        )


def test_annotation_order_locators_then_pointers(net, cache):
    block = make_block(net, num_txs=1)
    raw = sender.packets_for_block(block, cache)[1].encode()
    first_kind = raw[wire.FIXED_HEADER_LEN]
    assert first_kind == 1  # locators lead the variable header


def test_frame_limit_error_names_transaction(net, cache):
    from blockpipe import blockmodel
    from blockpipe.blockmodel import Transaction, Version

    client = net.client_nodes()[0]
    tx = Transaction(client.cert_bytes, 1, [], [(b"k", b"v" * 1000)], b"n" * 16)
    for org_index in (0, 1):
        node = net.endorser_node(org_index)
        blockmodel.endorse(tx, node.private_key, node.cert_bytes)
    blockmodel.client_sign(tx, client.private_key)
    orderer = net.orderer_node()
    block = blockmodel.build_signed_block([tx], orderer.private_key, orderer.cert_bytes, 1)
    with pytest.raises(FrameLimitError) as err:
        sender.packets_for_block(block, cache, max_frame=512)
    assert "transaction 0" in str(err.value)


def test_send_report_counts(net, cache):
    import socket

    block = make_block(net, num_txs=4)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind(("127.0.0.1", 0))
    try:
        bs = sender.BlockSender(cache, sock.getsockname())
        report = bs.send_block(block)
        assert report.packets_sent == 6  # header + 4 txs + metadata
        assert report.cache_sync_packets == 0  # config identities pre-synced
        assert report.baseline_bytes == len(blockmodel.encode_baseline(block))
        assert 0 < report.wire_bytes < report.baseline_bytes
        bs.close()
    finally:
        sock.close()


def test_wire_byte_accounting_exact(net, cache):
    block = make_block(net, num_txs=5)
    packets = sender.packets_for_block(block, cache)
    wire_bytes = sum(len(p.encode()) for p in packets)
    baseline = len(blockmodel.encode_baseline(block))
    occurrences = sum(1 + len(tx.endorsements) for tx in block.transactions) + 1
    pointers = sum(len(p.pointers) for p in packets)
    # each occurrence shrinks to a 2-byte id plus a 5-byte locator; pointers
    # cost 6 bytes and each packet a 20-byte fixed header
    expected = baseline - (860 - 2) * occurrences + 5 * occurrences + 6 * pointers + 20 * len(packets)
    assert wire_bytes == expected
