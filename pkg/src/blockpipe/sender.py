"""Protocol sender: splits a block into sections, strips identities into
locator annotations, generates field pointers, and transmits one self-contained
UDP datagram per section."""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass, field

from . import blockmodel, wire
from .blockmodel import Block
from .errors import FrameLimitError, ProtocolError
from .identity import EncodedId, IdentityCache
from .wire import FieldKind, Locator, Pointer, SectionPacket, SectionType


def split_sections(block: Block) -> list[bytes]:
    """One header section, one section per transaction, one metadata section.

    The concatenation of the header and transaction sections reproduces the
    byte range covered by the block digest.
    """
    sections = [blockmodel.encode_header_section(block.header)]
    sections.extend(blockmodel.encode_tx_section(tx) for tx in block.transactions)
    sections.append(blockmodel.encode_metadata_section(block.metadata))
    return sections


def _section_type_of(index: int, total: int) -> SectionType:
    if index == 0:
        return SectionType.HEADER
    if index == total - 1:
        return SectionType.METADATA
    return SectionType.TRANSACTION


def generate_annotations(section: bytes, section_type: SectionType) -> list[Pointer]:
    """Pointers covering exactly the fields the receiver extracts, so it never
    re-parses the nesting. Offsets address the original (reconstructed) section."""
    if section_type == SectionType.HEADER:
        _, layout = blockmodel.parse_header_section(section)
        return [
            Pointer(FieldKind.BLOCK_NUMBER, *layout.number),
            Pointer(FieldKind.PREV_HASH, *layout.prev_hash),
            Pointer(FieldKind.DATA_HASH, *layout.data_hash),
        ]
    if section_type == SectionType.TRANSACTION:
        _, layout = blockmodel.parse_tx_section(section)
        pointers = [
            Pointer(FieldKind.CREATOR_ID_SLOT, *layout.creator_cert),
            Pointer(FieldKind.CC_ID, *layout.cc_id),
            Pointer(FieldKind.READ_SET, *layout.read_set),
            Pointer(FieldKind.WRITE_SET, *layout.write_set),
        ]
        pointers.extend(Pointer(FieldKind.ENDORSEMENT_BLOB, *span) for span in layout.endorsement_blobs)
        pointers.append(Pointer(FieldKind.CLIENT_SIGNATURE, *layout.client_signature))
        return pointers
    if section_type == SectionType.METADATA:
        _, layout = blockmodel.parse_metadata_section(section)
        return [
            Pointer(FieldKind.CREATOR_ID_SLOT, *layout.orderer_cert),
            Pointer(FieldKind.ORDERER_SIGNATURE, *layout.signature),
        ]
    raise ValueError(f"no annotations for section type {section_type}")


def _identity_spans(section: bytes, section_type: SectionType) -> list[tuple[int, int]]:
    if section_type == SectionType.HEADER:
        return []
    if section_type == SectionType.TRANSACTION:
        _, layout = blockmodel.parse_tx_section(section)
        return [layout.creator_cert] + layout.endorsement_certs
    _, layout = blockmodel.parse_metadata_section(section)
    return [layout.orderer_cert]


def remove_identities(
    section: bytes, section_type: SectionType, cache: IdentityCache, register: bool = True
) -> tuple[bytes, list[Locator]]:
    """Replace each inline certificate with its 16-bit id.

    Returns the modified section and one locator per replacement; locator
    offsets address the modified payload. Exact inverse of insert_identities.
    """
    spans = _identity_spans(section, section_type)
    out = bytearray()
    locators = []
    pos = 0
    for offset, length in spans:
        cert = section[offset : offset + length]
        encoded = cache.id_for(cert)
        if encoded is None:
            if not register:
                raise ProtocolError("identity not in cache and registration disabled")
            encoded = cache.register(cert)
        out += section[pos:offset]
        locators.append(Locator(len(out), encoded))
        out += encoded.to_bytes(2, "big")
        pos = offset + length
    out += section[pos:]
    return bytes(out), locators


@dataclass
class SendReport:
    """Wire accounting for one block (L7 bytes, as the baseline is measured)."""

    block_num: int
    packets_sent: int = 0
    cache_sync_packets: int = 0
    wire_bytes: int = 0
    baseline_bytes: int = 0

    @property
    def ratio(self) -> float:
        return self.baseline_bytes / self.wire_bytes if self.wire_bytes else 0.0


def packets_for_block(
    block: Block, cache: IdentityCache, max_frame: int = wire.DEFAULT_MAX_FRAME
) -> list[SectionPacket]:
    """Pure framing path: the section packets for a block, in section order."""
    sections = split_sections(block)
    total = len(sections)
    packets = []
    for index, section in enumerate(sections):
        section_type = _section_type_of(index, total)
        pointers = generate_annotations(section, section_type)
        payload, locators = remove_identities(section, section_type, cache)
        packet = SectionPacket(section_type, block.number, index, total, payload, locators, pointers)
        if len(packet.encode()) > max_frame:
            what = f"transaction {index - 1}" if section_type == SectionType.TRANSACTION else section_type.name.lower()
            raise FrameLimitError(
                f"block {block.number} {what}: packet of {len(packet.encode())} bytes exceeds frame limit {max_frame}"
            )
        packets.append(packet)
    return packets


class BlockSender:
    """One sender per destination. send_block emits all packets of a block
    before returning; distinct blocks may be pipelined by the caller."""

    def __init__(
        self,
        cache: IdentityCache,
        dest: tuple[str, int],
        max_frame: int = wire.DEFAULT_MAX_FRAME,
        sock: socket.socket | None = None,
        pace: float = 0.0,
    ):
        self.cache = cache
        self.dest = dest
        self.max_frame = max_frame
        self.pace = pace
        self._sock = sock or socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._synced_ids: set[EncodedId] = {encoded for encoded, _ in cache.items()}

    def close(self) -> None:
        self._sock.close()

    def _send(self, data: bytes) -> int:
        self._sock.sendto(data, self.dest)
        if self.pace:
            time.sleep(self.pace)
        return len(data)

    def sync_identity(self, encoded_id: EncodedId, report: SendReport) -> None:
        cert = self.cache.cert_for(encoded_id)
        if cert is None:
            raise ProtocolError(f"cannot sync unknown id 0x{encoded_id:04x}")
        report.wire_bytes += self._send(wire.encode_cache_sync(encoded_id, cert).encode())
        report.cache_sync_packets += 1
        self._synced_ids.add(encoded_id)

    def send_block(self, block: Block) -> SendReport:
        report = SendReport(block.number, baseline_bytes=len(blockmodel.encode_baseline(block)))
        packets = packets_for_block(block, self.cache, self.max_frame)
        for packet in packets:
            for locator in packet.locators:
                if locator.encoded_id not in self._synced_ids:
                    self.sync_identity(locator.encoded_id, report)
            report.wire_bytes += self._send(packet.encode())
            report.packets_sent += 1
        return report
