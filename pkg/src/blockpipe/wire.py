"""Self-contained UDP packet framing: the L7 section-packet header and the
pointer/locator annotation codec shared by sender and receiver.

Fixed header (20 bytes, big-endian):
    magic 0xB1 0x0C | version u8 | section_type u8 | block_number u64 |
    section_index u16 | total_sections u16 | annotation_count u16 |
    payload_length u16

Variable header: annotations, locators first (ascending offset) then pointers
(ascending offset). Locator offsets address the modified payload; pointer
offsets address the reconstructed section.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import MalformedPacket

MAGIC = b"\xb1\x0c"
PROTOCOL_VERSION = 1
DEFAULT_PORT = 5000
DEFAULT_MAX_FRAME = 8192

_FIXED = struct.Struct(">2sBBQHHHH")
FIXED_HEADER_LEN = _FIXED.size

_KIND_POINTER = 0
_KIND_LOCATOR = 1
_POINTER = struct.Struct(">BBHH")
_LOCATOR = struct.Struct(">BHH")


class SectionType(enum.IntEnum):
    HEADER = 0
    TRANSACTION = 1
    METADATA = 2
    CACHE_SYNC = 3


class FieldKind(enum.IntEnum):
    BLOCK_NUMBER = 0
    PREV_HASH = 1
    DATA_HASH = 2
    CREATOR_ID_SLOT = 3
    CLIENT_SIGNATURE = 4
    CC_ID = 5
    READ_SET = 6
    WRITE_SET = 7
    ENDORSEMENT_BLOB = 8
    ORDERER_SIGNATURE = 9


@dataclass(frozen=True)
class Pointer:
    field_kind: FieldKind
    offset: int
    length: int


@dataclass(frozen=True)
class Locator:
    offset: int
    encoded_id: int


@dataclass
class SectionPacket:
    section_type: SectionType
    block_number: int
    section_index: int
    total_sections: int
    payload: bytes
    locators: list[Locator]
    pointers: list[Pointer]

    def encode(self) -> bytes:
        locators = sorted(self.locators, key=lambda a: a.offset)
        pointers = sorted(self.pointers, key=lambda a: a.offset)
        parts = [
            _FIXED.pack(
                MAGIC,
                PROTOCOL_VERSION,
                int(self.section_type),
                self.block_number,
                self.section_index,
                self.total_sections,
                len(locators) + len(pointers),
                len(self.payload),
            )
        ]
        parts.extend(_LOCATOR.pack(_KIND_LOCATOR, a.offset, a.encoded_id) for a in locators)
        parts.extend(_POINTER.pack(_KIND_POINTER, int(a.field_kind), a.offset, a.length) for a in pointers)
        parts.append(self.payload)
        return b"".join(parts)

    @classmethod
    def decode(cls, datagram: bytes) -> "SectionPacket":
        if len(datagram) < FIXED_HEADER_LEN:
            raise MalformedPacket(f"datagram shorter than fixed header ({len(datagram)} bytes)")
        magic, version, stype, block_num, index, total, ann_count, payload_len = _FIXED.unpack_from(datagram)
        if magic != MAGIC:
            raise MalformedPacket(f"bad magic {magic.hex()}")
        if version != PROTOCOL_VERSION:
            raise MalformedPacket(f"unsupported protocol version {version}")
        try:
            section_type = SectionType(stype)
        except ValueError:
            raise MalformedPacket(f"unknown section type {stype}") from None

        pos = FIXED_HEADER_LEN
        locators: list[Locator] = []
        pointers: list[Pointer] = []
        for _ in range(ann_count):
            if pos >= len(datagram):
                raise MalformedPacket("annotation list truncated")
            kind = datagram[pos]
            if kind == _KIND_LOCATOR:
                if pos + _LOCATOR.size > len(datagram):
                    raise MalformedPacket("locator annotation truncated")
                _, offset, encoded_id = _LOCATOR.unpack_from(datagram, pos)
                locators.append(Locator(offset, encoded_id))
                pos += _LOCATOR.size
            elif kind == _KIND_POINTER:
                if pos + _POINTER.size > len(datagram):
                    raise MalformedPacket("pointer annotation truncated")
                _, raw_kind, offset, length = _POINTER.unpack_from(datagram, pos)
                try:
                    field_kind = FieldKind(raw_kind)
                except ValueError:
                    raise MalformedPacket(f"unknown pointer field kind {raw_kind}") from None
                pointers.append(Pointer(field_kind, offset, length))
                pos += _POINTER.size
            else:
                raise MalformedPacket(f"unknown annotation kind {kind}")
        payload = datagram[pos:]
        if len(payload) != payload_len:
            raise MalformedPacket(f"payload length {len(payload)} != declared {payload_len}")
        for loc in locators:
            if loc.offset + 2 > len(payload):
                raise MalformedPacket(f"locator offset {loc.offset} outside payload")
        return cls(section_type, block_num, index, total, payload, locators, pointers)


def encode_cache_sync(encoded_id: int, cert_bytes: bytes) -> SectionPacket:
    payload = struct.pack(">HH", encoded_id, len(cert_bytes)) + cert_bytes
    return SectionPacket(SectionType.CACHE_SYNC, 0, 0, 0, payload, [], [])


def decode_cache_sync(packet: SectionPacket) -> tuple[int, bytes]:
    payload = packet.payload
    if len(payload) < 4:
        raise MalformedPacket("cache sync payload truncated")
    encoded_id, cert_len = struct.unpack_from(">HH", payload)
    cert = payload[4 : 4 + cert_len]
    if len(cert) != cert_len:
        raise MalformedPacket("cache sync certificate truncated")
    return encoded_id, cert
