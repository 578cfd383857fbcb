"""Protocol receiver: classifies datagrams, reinserts identities from locator
annotations, extracts fields through pointer annotations (no nested re-parsing),
computes the three digest streams, and releases each block's typed FIFO entries
atomically in block-number order once all its sections have arrived.

Loss handling is detection only: a block missing sections past the reassembly
deadline is counted and skipped, never retransmitted.
"""

from __future__ import annotations

import hashlib
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import blockmodel, wire
from .blockmodel import SECTION_PREFIX_LEN
from .errors import ConfigError, DecodeError, MalformedPacket, MissingIdentityError, ProtocolError
from .fifos import (
    BlockFifoEntry,
    EndsFifoEntry,
    FifoContents,
    FifoSet,
    RdsetFifoEntry,
    TxFifoEntry,
    VerificationRequest,
    WrsetFifoEntry,
    build_verification_request,
)
from .identity import Certificate, IdentityCache
from .wire import FieldKind, Locator, Pointer, SectionPacket, SectionType

DEFAULT_REASSEMBLY_DEADLINE = 0.25


def classify_packet(datagram: bytes, dst_port: int, protocol_port: int = wire.DEFAULT_PORT):
    """('section', SectionPacket) for protocol traffic, ('normal', bytes) for
    anything on another port. Raises MalformedPacket for bad frames on the
    protocol port."""
    if dst_port != protocol_port:
        return "normal", datagram
    return "section", SectionPacket.decode(datagram)


def insert_identities(payload: bytes, locators: list[Locator], cache: IdentityCache) -> bytes:
    """Byte-exact inverse of the sender's identity removal."""
    out = bytearray()
    pos = 0
    for locator in sorted(locators, key=lambda l: l.offset):
        cert = cache.cert_for(locator.encoded_id)
        if cert is None:
            raise MissingIdentityError(locator.encoded_id)
        out += payload[pos : locator.offset]
        out += cert
        pos = locator.offset + 2
    out += payload[pos:]
    return bytes(out)


@dataclass
class ReceiverCounters:
    packets_total: int = 0
    packets_section: int = 0
    packets_cache_sync: int = 0
    packets_passthrough: int = 0
    packets_malformed: int = 0
    packets_stale: int = 0
    blocks_completed: int = 0
    blocks_incomplete: int = 0
    blocks_failed: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def _pointer_map(pointers: list[Pointer]) -> dict[FieldKind, list[Pointer]]:
    out: dict[FieldKind, list[Pointer]] = {}
    for p in pointers:
        out.setdefault(p.field_kind, []).append(p)
    return out


def _one(pmap: dict[FieldKind, list[Pointer]], kind: FieldKind, section: bytes) -> bytes:
    try:
        p = pmap[kind][0]
    except (KeyError, IndexError):
        raise ProtocolError(f"missing {kind.name} pointer") from None
    if p.offset + p.length > len(section):
        raise ProtocolError(f"{kind.name} pointer outside section")
    return section[p.offset : p.offset + p.length]


@dataclass
class _StagedHeader:
    section: bytes
    number: int


@dataclass
class _StagedTx:
    section: bytes
    entry_fields: tuple  # (cc_id, num_ends, rdset_size, wrset_size, request)
    ends: list[tuple[int, VerificationRequest]]  # (endorser_id, request)
    rdset: list[tuple[bytes, blockmodel.Version]]
    wrset: list[tuple[bytes, bytes]]


@dataclass
class _StagedMetadata:
    orderer_key: bytes
    sig: bytes


@dataclass
class _PendingBlock:
    total: int
    first_seen: float
    sections: dict[int, object] = field(default_factory=dict)


class SectionReceiver:
    """Single-ingest-context receiver. handle_datagram and check_deadlines are
    called from one thread; FIFO consumers run elsewhere."""

    def __init__(
        self,
        cache: IdentityCache,
        fifos: FifoSet,
        port: int = wire.DEFAULT_PORT,
        deadline: float = DEFAULT_REASSEMBLY_DEADLINE,
        bypass=None,
        clock=time.monotonic,
    ):
        self.cache = cache
        self.fifos = fifos
        self.port = port
        self.deadline = deadline
        self.bypass = bypass
        self.clock = clock
        self.counters = ReceiverCounters()
        self._pending: dict[int, _PendingBlock] = {}
        self._ready: dict[int, FifoContents] = {}
        self._closed_blocks: set[int] = set()  # completed or failed or expired

    # -- ingest ------------------------------------------------------------

    def handle_datagram(self, datagram: bytes, dst_port: int | None = None, now: float | None = None) -> None:
        self.counters.packets_total += 1
        if dst_port is None:
            dst_port = self.port
        try:
            kind, parsed = classify_packet(datagram, dst_port, self.port)
        except MalformedPacket:
            self.counters.packets_malformed += 1
            return
        if kind == "normal":
            self.counters.packets_passthrough += 1
            if self.bypass is not None:
                self.bypass(parsed)
            return
        packet: SectionPacket = parsed
        if packet.section_type == SectionType.CACHE_SYNC:
            self._handle_cache_sync(packet)
            return
        self.counters.packets_section += 1
        self._handle_section(packet, self.clock() if now is None else now)

    def _handle_cache_sync(self, packet: SectionPacket) -> None:
        self.counters.packets_cache_sync += 1
        try:
            encoded_id, cert = wire.decode_cache_sync(packet)
            self.cache.insert(encoded_id, cert)
        except (MalformedPacket, ConfigError):
            self.counters.packets_malformed += 1

    def _handle_section(self, packet: SectionPacket, now: float) -> None:
        num = packet.block_number
        if num in self._closed_blocks or num in self._ready:
            self.counters.packets_stale += 1
            return
        pending = self._pending.get(num)
        if pending is None:
            if packet.total_sections < 3:
                self.counters.packets_malformed += 1
                return
            pending = _PendingBlock(packet.total_sections, now)
            self._pending[num] = pending
        if packet.total_sections != pending.total or packet.section_index >= pending.total:
            self._fail_block(num)
            return
        if packet.section_index in pending.sections:
            self.counters.packets_stale += 1
            return
        try:
            staged = self._stage_section(packet)
        except (ProtocolError, DecodeError, ValueError):
            self._fail_block(num)
            return
        pending.sections[packet.section_index] = staged
        if len(pending.sections) == pending.total:
            self._complete_block(num, pending)
        self._maybe_release()

    # -- per-section extraction ---------------------------------------------

    def _stage_section(self, packet: SectionPacket):
        section = insert_identities(packet.payload, packet.locators, self.cache)
        pmap = _pointer_map(packet.pointers)
        if packet.section_type == SectionType.HEADER:
            if packet.section_index != 0:
                raise ProtocolError("header section must be index 0")
            number_bytes = _one(pmap, FieldKind.BLOCK_NUMBER, section)
            (number,) = struct.unpack(">Q", number_bytes)
            if number != packet.block_number:
                raise ProtocolError("header block number disagrees with packet header")
            return _StagedHeader(section, number)
        if packet.section_type == SectionType.METADATA:
            if packet.section_index != packet.total_sections - 1:
                raise ProtocolError("metadata section must be the last index")
            cert = _one(pmap, FieldKind.CREATOR_ID_SLOT, section)
            sig = _one(pmap, FieldKind.ORDERER_SIGNATURE, section)
            return _StagedMetadata(Certificate.from_bytes(cert).public_key, sig)
        if packet.section_type != SectionType.TRANSACTION:
            raise ProtocolError(f"unexpected section type {packet.section_type}")
        if not 1 <= packet.section_index <= packet.total_sections - 2:
            raise ProtocolError("transaction section index outside 1..total-2")
        return self._stage_tx(section, pmap)

    def _stage_tx(self, section: bytes, pmap: dict[FieldKind, list[Pointer]]) -> _StagedTx:
        creator_cert = _one(pmap, FieldKind.CREATOR_ID_SLOT, section)
        client_key = Certificate.from_bytes(creator_cert).public_key
        (cc_id,) = struct.unpack(">H", _one(pmap, FieldKind.CC_ID, section))

        sig_ptr = pmap.get(FieldKind.CLIENT_SIGNATURE, [None])[0]
        if sig_ptr is None or sig_ptr.offset + sig_ptr.length > len(section):
            raise ProtocolError("missing CLIENT_SIGNATURE pointer")
        client_sig = section[sig_ptr.offset : sig_ptr.offset + sig_ptr.length]
        # The signed span runs from the body start up to the signature field's
        # length prefix.
        tx_digest = hashlib.sha256(section[SECTION_PREFIX_LEN : sig_ptr.offset - 2]).digest()
        request = build_verification_request(client_sig, client_key, tx_digest)

        rd_bytes = _one(pmap, FieldKind.READ_SET, section)
        rdset = _parse_read_entries(rd_bytes)
        wr_ptr = pmap[FieldKind.WRITE_SET][0]
        wr_bytes = _one(pmap, FieldKind.WRITE_SET, section)
        wrset = _parse_write_entries(wr_bytes)

        # The payload span (read set | write set | nonce) feeds each
        # endorsement digest; the nonce length sits right after the write set.
        nonce_off = wr_ptr.offset + wr_ptr.length
        if nonce_off + 2 > len(section):
            raise ProtocolError("nonce field outside section")
        (nonce_len,) = struct.unpack_from(">H", section, nonce_off)
        payload_end = nonce_off + 2 + nonce_len
        if payload_end > len(section):
            raise ProtocolError("nonce overruns section")
        rd_off = pmap[FieldKind.READ_SET][0].offset
        payload = section[rd_off:payload_end]

        ends = []
        for blob_ptr in pmap.get(FieldKind.ENDORSEMENT_BLOB, []):
            if blob_ptr.offset + blob_ptr.length > len(section):
                raise ProtocolError("endorsement blob pointer outside section")
            blob = section[blob_ptr.offset : blob_ptr.offset + blob_ptr.length]
            cert, sig = _parse_endorsement_blob(blob)
            endorser_id = self.cache.id_for(cert)
            if endorser_id is None:
                raise ProtocolError("endorser certificate missing from cache")
            digest = hashlib.sha256(payload + cert).digest()
            ends.append((endorser_id, build_verification_request(sig, Certificate.from_bytes(cert).public_key, digest)))

        entry_fields = (cc_id, len(ends), len(rdset), len(wrset), request)
        return _StagedTx(section, entry_fields, ends, rdset, wrset)

    # -- completion and ordered release --------------------------------------

    def _complete_block(self, num: int, pending: _PendingBlock) -> None:
        del self._pending[num]
        header: _StagedHeader = pending.sections[0]
        meta: _StagedMetadata = pending.sections[pending.total - 1]
        digest = hashlib.sha256()
        digest.update(header.section)
        tx_staged: list[_StagedTx] = []
        for index in range(1, pending.total - 1):
            staged: _StagedTx = pending.sections[index]
            digest.update(staged.section)
            tx_staged.append(staged)
        block_request = build_verification_request(meta.sig, meta.orderer_key, digest.digest())

        contents = FifoContents(BlockFifoEntry(num, len(tx_staged), block_request))
        for tx_num, staged in enumerate(tx_staged):
            cc_id, num_ends, rdset_size, wrset_size, request = staged.entry_fields
            contents.tx_entries.append(
                TxFifoEntry(num, tx_num, cc_id, num_ends, rdset_size, wrset_size, request)
            )
            contents.ends_entries.extend(
                EndsFifoEntry(num, tx_num, endorser_id, req) for endorser_id, req in staged.ends
            )
            contents.rdset_entries.extend(
                RdsetFifoEntry(num, tx_num, key, version) for key, version in staged.rdset
            )
            contents.wrset_entries.extend(
                WrsetFifoEntry(num, tx_num, key, value) for key, value in staged.wrset
            )
        self._ready[num] = contents

    def _fail_block(self, num: int) -> None:
        self.counters.blocks_failed += 1
        self._pending.pop(num, None)
        self._closed_blocks.add(num)
        self._maybe_release()

    def _maybe_release(self) -> None:
        while self._ready:
            num = min(self._ready)
            if self._pending and min(self._pending) < num:
                return  # an earlier block is still incomplete
            contents = self._ready.pop(num)
            self._closed_blocks.add(num)
            self.counters.blocks_completed += 1
            # Stamp emission time at release; validation latency is measured
            # from here to result publication.
            contents.block_entry = BlockFifoEntry(
                contents.block_entry.block_num,
                contents.block_entry.num_txs,
                contents.block_entry.request,
                self.clock(),
            )
            contents.feed(self.fifos)

    def check_deadlines(self, now: float | None = None) -> None:
        if not self._pending:
            return
        if now is None:
            now = self.clock()
        expired = [num for num, p in self._pending.items() if now - p.first_seen > self.deadline]
        for num in expired:
            del self._pending[num]
            self._closed_blocks.add(num)
            self.counters.blocks_incomplete += 1
        if expired:
            self._maybe_release()

    # -- socket loop ----------------------------------------------------------

    def serve(self, sock: socket.socket, stop: threading.Event, poll: float = 0.05) -> None:
        sock.settimeout(poll)
        while not stop.is_set():
            try:
                datagram, _ = sock.recvfrom(65535)
            except socket.timeout:
                self.check_deadlines()
                continue
            except OSError:
                break
            self.handle_datagram(datagram)
            self.check_deadlines()


def _parse_read_entries(data: bytes) -> list[tuple[bytes, blockmodel.Version]]:
    r = blockmodel._Reader(data)
    out = []
    for _ in range(r.u16("read set count")):
        key = r.lp16("read key")
        vblock = r.u64("read version block")
        vtx = r.u32("read version tx")
        out.append((key, blockmodel.Version(vblock, vtx)))
    if r.pos != len(data):
        raise DecodeError(r.pos, "trailing bytes in read set")
    return out


def _parse_write_entries(data: bytes) -> list[tuple[bytes, bytes]]:
    r = blockmodel._Reader(data)
    out = []
    for _ in range(r.u16("write set count")):
        key = r.lp16("write key")
        value = r.lp16("write value")
        out.append((key, value))
    if r.pos != len(data):
        raise DecodeError(r.pos, "trailing bytes in write set")
    return out


def _parse_endorsement_blob(blob: bytes) -> tuple[bytes, bytes]:
    r = blockmodel._Reader(blob)
    cert = r.lp16("endorser certificate")
    sig = r.lp16("endorsement signature")
    if r.pos != len(blob):
        raise DecodeError(r.pos, "trailing bytes in endorsement blob")
    return cert, sig


def open_receive_socket(port: int, host: str = "0.0.0.0", rcvbuf: int = 8 << 20) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, rcvbuf)
    except OSError:
        pass
    sock.bind((host, port))
    return sock
