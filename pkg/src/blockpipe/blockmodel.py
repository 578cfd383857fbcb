"""Block, transaction, and endorsement domain objects, a length-prefixed nested
binary encoding (the baseline every dissemination comparison is measured
against), and the canonical signing digests.

Encoding layout (all integers big-endian; full reference in docs/wire.md):

    block    := header_section tx_section* metadata_section
    section  := u8 tag | u32 body_len | body
    header   := u64 number | prev_hash[32] | data_hash[32]
    tx       := cert_field(creator) | u16 cc_id | read_set | write_set |
                nonce_field | endorsements | sig_field(client)
    metadata := cert_field(orderer) | sig_field(orderer)

Signing digests:
  * tx digest        = SHA-256 over the tx body up to (excluding) the client
                       signature field;
  * endorsement      = SHA-256 over (payload bytes || endorser certificate),
    digest             payload being the read_set|write_set|nonce span;
  * data hash        = SHA-256 over the concatenated tx sections;
  * block digest     = SHA-256 over (header section || concatenated tx
                       sections) — what the orderer signs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.asymmetric import ec

from . import identity
from .errors import DecodeError

TAG_HEADER = 0x01
TAG_TRANSACTION = 0x02
TAG_METADATA = 0x03

SECTION_PREFIX_LEN = 5  # tag byte + u32 body length

DEFAULT_MAX_TXS = 256

ZERO_HASH = b"\x00" * 32


@dataclass(frozen=True, order=True)
class Version:
    block_num: int
    tx_num: int

    def pack(self) -> bytes:
        return struct.pack(">QI", self.block_num, self.tx_num)


# Expected version that matches only a key absent from the database.
ABSENT_VERSION = Version(0, 0)


@dataclass
class Endorsement:
    endorser_cert: bytes
    signature: bytes


@dataclass
class Transaction:
    creator_cert: bytes
    cc_id: int
    read_set: list[tuple[bytes, Version]]
    write_set: list[tuple[bytes, bytes]]
    nonce: bytes
    endorsements: list[Endorsement] = field(default_factory=list)
    signature: bytes = b""


@dataclass
class BlockHeader:
    number: int
    prev_hash: bytes
    data_hash: bytes


@dataclass
class BlockMetadata:
    orderer_cert: bytes
    signature: bytes


@dataclass
class Block:
    header: BlockHeader
    transactions: list[Transaction]
    metadata: BlockMetadata

    @property
    def number(self) -> int:
        return self.header.number


class _Reader:
    """Cursor over encoded bytes; every failure reports its byte offset."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(self.pos, f"truncated {what} ({n} bytes needed)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack(">H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack(">I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack(">Q", self.take(8, what))[0]

    def lp16(self, what: str) -> bytes:
        return self.take(self.u16(what + " length"), what)


def _u16(value: int) -> bytes:
    return struct.pack(">H", value)


def _lp16(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError(f"field of {len(data)} bytes exceeds u16 length prefix")
    return _u16(len(data)) + data


def _section(tag: int, body: bytes) -> bytes:
    return struct.pack(">BI", tag, len(body)) + body


# --------------------------------------------------------------------------
# Encoding
# --------------------------------------------------------------------------

def _tx_payload_bytes(tx: Transaction) -> bytes:
    out = [_u16(len(tx.read_set))]
    for key, version in tx.read_set:
        out.append(_lp16(key))
        out.append(version.pack())
    out.append(_u16(len(tx.write_set)))
    for key, value in tx.write_set:
        out.append(_lp16(key))
        out.append(_lp16(value))
    out.append(_lp16(tx.nonce))
    return b"".join(out)


def _tx_presig_bytes(tx: Transaction) -> bytes:
    out = [_lp16(tx.creator_cert), _u16(tx.cc_id), _tx_payload_bytes(tx)]
    out.append(_u16(len(tx.endorsements)))
    for end in tx.endorsements:
        out.append(_lp16(end.endorser_cert))
        out.append(_lp16(end.signature))
    return b"".join(out)


def encode_tx_section(tx: Transaction) -> bytes:
    return _section(TAG_TRANSACTION, _tx_presig_bytes(tx) + _lp16(tx.signature))


def encode_header_section(header: BlockHeader) -> bytes:
    body = struct.pack(">Q", header.number) + header.prev_hash + header.data_hash
    return _section(TAG_HEADER, body)


def encode_metadata_section(meta: BlockMetadata) -> bytes:
    return _section(TAG_METADATA, _lp16(meta.orderer_cert) + _lp16(meta.signature))


def encode_baseline(block: Block) -> bytes:
    """Full nested encoding with every certificate inline — the wire baseline."""
    parts = [encode_header_section(block.header)]
    parts.extend(encode_tx_section(tx) for tx in block.transactions)
    parts.append(encode_metadata_section(block.metadata))
    return b"".join(parts)


# --------------------------------------------------------------------------
# Decoding with field layouts
# --------------------------------------------------------------------------

Span = tuple[int, int]  # (offset, length) relative to section start


@dataclass
class TxLayout:
    """Byte spans of the fields a receiver extracts from a transaction section."""

    creator_cert: Span
    cc_id: Span
    read_set: Span
    write_set: Span
    nonce_field: Span
    endorsement_blobs: list[Span]
    endorsement_certs: list[Span]
    client_signature: Span

    @property
    def payload(self) -> Span:
        start = self.read_set[0]
        end = self.nonce_field[0] + self.nonce_field[1]
        return start, end - start

    @property
    def signed_span(self) -> Span:
        # Body start through the client signature field's length prefix.
        return SECTION_PREFIX_LEN, self.client_signature[0] - 2 - SECTION_PREFIX_LEN


@dataclass
class HeaderLayout:
    number: Span
    prev_hash: Span
    data_hash: Span


@dataclass
class MetadataLayout:
    orderer_cert: Span
    signature: Span


def _expect_section(r: _Reader, tag: int, what: str) -> int:
    """Consume a section prefix, returning the body length."""
    got = r.u8(f"{what} tag")
    if got != tag:
        raise DecodeError(r.pos - 1, f"expected {what} tag 0x{tag:02x}, got 0x{got:02x}")
    body_len = r.u32(f"{what} body length")
    if r.pos + body_len > len(r.data):
        raise DecodeError(r.pos, f"{what} body overruns input")
    return body_len


def parse_header_section(section: bytes) -> tuple[BlockHeader, HeaderLayout]:
    r = _Reader(section)
    _expect_section(r, TAG_HEADER, "header section")
    num_off = r.pos
    number = r.u64("block number")
    prev_off = r.pos
    prev_hash = r.take(32, "previous block hash")
    data_off = r.pos
    data_hash = r.take(32, "data hash")
    layout = HeaderLayout((num_off, 8), (prev_off, 32), (data_off, 32))
    return BlockHeader(number, prev_hash, data_hash), layout


def parse_tx_section(section: bytes) -> tuple[Transaction, TxLayout]:
    r = _Reader(section)
    _expect_section(r, TAG_TRANSACTION, "transaction section")

    cert_len = r.u16("creator certificate length")
    creator_span = (r.pos, cert_len)
    creator = r.take(cert_len, "creator certificate")

    cc_span = (r.pos, 2)
    cc_id = r.u16("chaincode id")

    rd_start = r.pos
    read_set = []
    for _ in range(r.u16("read set count")):
        key = r.lp16("read key")
        vblock = r.u64("read version block")
        vtx = r.u32("read version tx")
        read_set.append((key, Version(vblock, vtx)))
    rd_span = (rd_start, r.pos - rd_start)

    wr_start = r.pos
    write_set = []
    for _ in range(r.u16("write set count")):
        key = r.lp16("write key")
        value = r.lp16("write value")
        write_set.append((key, value))
    wr_span = (wr_start, r.pos - wr_start)

    nonce_start = r.pos
    nonce = r.lp16("nonce")
    nonce_span = (nonce_start, r.pos - nonce_start)

    endorsements = []
    blob_spans = []
    cert_spans = []
    for _ in range(r.u16("endorsement count")):
        blob_start = r.pos
        ecert_len = r.u16("endorser certificate length")
        cert_spans.append((r.pos, ecert_len))
        ecert = r.take(ecert_len, "endorser certificate")
        esig = r.lp16("endorsement signature")
        endorsements.append(Endorsement(ecert, esig))
        blob_spans.append((blob_start, r.pos - blob_start))

    sig_len = r.u16("client signature length")
    sig_span = (r.pos, sig_len)
    signature = r.take(sig_len, "client signature")

    tx = Transaction(creator, cc_id, read_set, write_set, nonce, endorsements, signature)
    layout = TxLayout(creator_span, cc_span, rd_span, wr_span, nonce_span, blob_spans, cert_spans, sig_span)
    return tx, layout


def parse_metadata_section(section: bytes) -> tuple[BlockMetadata, MetadataLayout]:
    r = _Reader(section)
    _expect_section(r, TAG_METADATA, "metadata section")
    cert_len = r.u16("orderer certificate length")
    cert_span = (r.pos, cert_len)
    cert = r.take(cert_len, "orderer certificate")
    sig_len = r.u16("orderer signature length")
    sig_span = (r.pos, sig_len)
    sig = r.take(sig_len, "orderer signature")
    return BlockMetadata(cert, sig), MetadataLayout(cert_span, sig_span)


def decode_baseline(data: bytes) -> Block:
    r = _Reader(data)
    body_len = _expect_section(r, TAG_HEADER, "header section")
    header, _ = parse_header_section(data[r.pos - SECTION_PREFIX_LEN : r.pos + body_len])
    r.pos += body_len

    transactions = []
    while r.pos < len(data) and data[r.pos] == TAG_TRANSACTION:
        start = r.pos
        body_len = _expect_section(r, TAG_TRANSACTION, "transaction section")
        r.pos += body_len
        tx, _ = parse_tx_section(data[start : r.pos])
        transactions.append(tx)

    start = r.pos
    body_len = _expect_section(r, TAG_METADATA, "metadata section")
    r.pos += body_len
    meta, _ = parse_metadata_section(data[start : r.pos])
    if r.pos != len(data):
        raise DecodeError(r.pos, "trailing bytes after metadata section")
    return Block(header, transactions, meta)


# --------------------------------------------------------------------------
# Canonical digests
# --------------------------------------------------------------------------

def tx_digest(tx: Transaction) -> bytes:
    """SHA-256 over the transaction's serialized bytes excluding the client signature field."""
    return hashlib.sha256(_tx_presig_bytes(tx)).digest()


def endorsement_digest(tx: Transaction, endorser_cert: bytes) -> bytes:
    return hashlib.sha256(_tx_payload_bytes(tx) + endorser_cert).digest()


def block_digest(header_bytes: bytes, all_tx_section_bytes: bytes) -> bytes:
    return hashlib.sha256(header_bytes + all_tx_section_bytes).digest()


def compute_data_hash(transactions: list[Transaction]) -> bytes:
    h = hashlib.sha256()
    for tx in transactions:
        h.update(encode_tx_section(tx))
    return h.digest()


def block_digest_of(block: Block) -> bytes:
    header_bytes = encode_header_section(block.header)
    tx_bytes = b"".join(encode_tx_section(tx) for tx in block.transactions)
    return block_digest(header_bytes, tx_bytes)


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

def endorse(tx: Transaction, endorser_key: ec.EllipticCurvePrivateKey, endorser_cert: bytes) -> Endorsement:
    sig = identity.sign(endorsement_digest(tx, endorser_cert), endorser_key)
    endorsement = Endorsement(endorser_cert, sig)
    tx.endorsements.append(endorsement)
    return endorsement


def client_sign(tx: Transaction, client_key: ec.EllipticCurvePrivateKey) -> Transaction:
    """Attach the client signature; covers everything up to the signature field,
    so endorsements must already be in place."""
    tx.signature = identity.sign(tx_digest(tx), client_key)
    return tx


def build_signed_block(
    transactions: list[Transaction],
    orderer_key: ec.EllipticCurvePrivateKey,
    orderer_cert: bytes,
    number: int,
    prev_hash: bytes = ZERO_HASH,
    max_txs: int = DEFAULT_MAX_TXS,
) -> Block:
    if not transactions:
        raise ValueError("a block carries at least one transaction")
    if len(transactions) > max_txs:
        raise ValueError(f"{len(transactions)} transactions exceed the configured maximum {max_txs}")
    header = BlockHeader(number, prev_hash, compute_data_hash(transactions))
    block = Block(header, transactions, BlockMetadata(orderer_cert, b""))
    block.metadata.signature = identity.sign(block_digest_of(block), orderer_key)
    return block


def identity_bytes_of(block: Block) -> int:
    """Bytes of the baseline encoding occupied by inline certificates."""
    total = len(block.metadata.orderer_cert)
    for tx in block.transactions:
        total += len(tx.creator_cert)
        total += sum(len(e.endorser_cert) for e in tx.endorsements)
    return total
