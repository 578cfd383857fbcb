"""Node identities: certificate records, 16-bit encoded ids, the bidirectional
identity cache, and ECDSA P-256 signing with DER signature codecs.

An encoded id packs (organization index, role, node sequence) into 16 bits:
org index in bits 15..8, role in bits 7..4, sequence in bits 3..0. Ids are
unique across all nodes of a configured network.
"""

from __future__ import annotations

import enum
import struct
import threading
from dataclasses import dataclass
from typing import Mapping, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import Prehashed, encode_dss_signature

from .errors import ConfigError, DerDecodeError

# Serialized certificate size; padding fills the remainder.
DEFAULT_CERT_SIZE = 860

EncodedId = int

_PREHASHED_SHA256 = ec.ECDSA(Prehashed(hashes.SHA256()))
# Deterministic nonces keep seeded workloads byte-identical across runs.
_PREHASHED_SHA256_DET = ec.ECDSA(Prehashed(hashes.SHA256()), deterministic_signing=True)


class Role(enum.IntEnum):
    ORDERER = 0
    ADMIN = 1
    PEER = 2
    CLIENT = 3


def encode_id(org_index: int, role: Role | int, seq: int) -> EncodedId:
    """Pack (org index, role, node sequence) into a 16-bit id."""
    role = int(role)
    if not 0 <= org_index <= 0xFF:
        raise ValueError(f"org index {org_index} outside 0..255")
    if not 0 <= role <= 0xF:
        raise ValueError(f"role {role} outside 0..15")
    if not 0 <= seq <= 0xF:
        raise ValueError(f"node sequence {seq} outside 0..15")
    return (org_index << 8) | (role << 4) | seq


def decode_id(encoded: EncodedId) -> tuple[int, Role, int]:
    """Inverse of encode_id. Raises ValueError for ids with an undefined role nibble."""
    if not 0 <= encoded <= 0xFFFF:
        raise ValueError(f"encoded id {encoded} outside 16-bit range")
    return encoded >> 8, Role((encoded >> 4) & 0xF), encoded & 0xF


@dataclass(frozen=True)
class Certificate:
    """Self-describing identity record.

    Serialized layout (big-endian, length-prefixed fields in fixed order):
    u16 org_name_len | org_name utf-8 | u8 role | u8 seq | u16 key_len |
    key bytes | zero padding up to the configured total size.
    """

    org_name: str
    role: Role
    seq: int
    public_key: bytes  # SEC1 uncompressed P-256 point

    def to_bytes(self, total_size: int = DEFAULT_CERT_SIZE) -> bytes:
        name = self.org_name.encode("utf-8")
        body = struct.pack(">H", len(name)) + name
        body += struct.pack(">BBH", int(self.role), self.seq, len(self.public_key))
        body += self.public_key
        if len(body) > total_size:
            raise ValueError(f"certificate fields ({len(body)} bytes) exceed size {total_size}")
        return body + b"\x00" * (total_size - len(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        if len(data) < 6:
            raise ValueError("certificate record too short")
        (name_len,) = struct.unpack_from(">H", data, 0)
        pos = 2 + name_len
        if pos + 4 > len(data):
            raise ValueError("certificate record truncated")
        name = data[2:pos].decode("utf-8")
        role, seq, key_len = struct.unpack_from(">BBH", data, pos)
        pos += 4
        if pos + key_len > len(data):
            raise ValueError("certificate key truncated")
        return cls(name, Role(role), seq, data[pos : pos + key_len])


class IdentityCache:
    """Bidirectional map between serialized certificates and encoded ids.

    Entries persist for the process lifetime (no eviction). Reads are lock-free;
    the rare registrations are serialized and visible to subsequent reads.
    """

    def __init__(self, org_indices: Optional[Mapping[str, int]] = None):
        self._org_indices = dict(org_indices) if org_indices else {}
        self._by_cert: dict[bytes, EncodedId] = {}
        self._by_id: dict[EncodedId, bytes] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._by_cert)

    def id_for(self, cert_bytes: bytes) -> Optional[EncodedId]:
        return self._by_cert.get(cert_bytes)

    def cert_for(self, encoded_id: EncodedId) -> Optional[bytes]:
        return self._by_id.get(encoded_id)

    def insert(self, encoded_id: EncodedId, cert_bytes: bytes) -> None:
        """Install an explicit (id, certificate) pair, as config init and cache
        sync do. Idempotent for identical pairs; conflicting bindings raise."""
        with self._lock:
            existing = self._by_id.get(encoded_id)
            if existing is not None and existing != cert_bytes:
                raise ConfigError(f"id 0x{encoded_id:04x} already bound to a different certificate")
            existing_id = self._by_cert.get(cert_bytes)
            if existing_id is not None and existing_id != encoded_id:
                raise ConfigError(
                    f"certificate already bound to id 0x{existing_id:04x}, not 0x{encoded_id:04x}"
                )
            self._by_id[encoded_id] = cert_bytes
            self._by_cert[cert_bytes] = encoded_id

    def register(self, cert_bytes: bytes) -> EncodedId:
        """Return the id for a certificate, deriving and inserting it on first sight."""
        found = self._by_cert.get(cert_bytes)
        if found is not None:
            return found
        cert = Certificate.from_bytes(cert_bytes)
        try:
            org_index = self._org_indices[cert.org_name]
        except KeyError:
            raise ConfigError(f"organization {cert.org_name!r} not in network config") from None
        encoded = encode_id(org_index, cert.role, cert.seq)
        self.insert(encoded, cert_bytes)
        return encoded

    def items(self):
        return self._by_id.items()


def generate_private_key() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(ec.SECP256R1())


def derive_private_key(scalar: int) -> ec.EllipticCurvePrivateKey:
    """Deterministic key from a scalar in [1, n-1]; used for seeded network configs."""
    return ec.derive_private_key(scalar, ec.SECP256R1())


def public_key_bytes(key: ec.EllipticCurvePrivateKey | ec.EllipticCurvePublicKey) -> bytes:
    if isinstance(key, ec.EllipticCurvePrivateKey):
        key = key.public_key()
    return key.public_bytes(serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint)


def load_public_key(point: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), point)


def sign(digest: bytes, private_key: ec.EllipticCurvePrivateKey) -> bytes:
    """Sign a precomputed 32-byte SHA-256 digest; returns a DER-encoded signature."""
    if len(digest) != 32:
        raise ValueError(f"digest must be 32 bytes, got {len(digest)}")
    return private_key.sign(digest, _PREHASHED_SHA256_DET)


def verify(signature: bytes, public_key: ec.EllipticCurvePublicKey, digest: bytes) -> bool:
    """True iff the DER signature verifies over the 32-byte digest.

    A mismatched signature returns False; malformed DER raises DerDecodeError.
    """
    if len(digest) != 32:
        raise ValueError(f"digest must be 32 bytes, got {len(digest)}")
    der_decode_signature(signature)
    try:
        public_key.verify(signature, digest, _PREHASHED_SHA256)
    except InvalidSignature:
        return False
    return True


def _decode_der_integer(data: bytes, pos: int) -> tuple[bytes, int]:
    if pos + 2 > len(data):
        raise DerDecodeError(pos, "truncated INTEGER header")
    if data[pos] != 0x02:
        raise DerDecodeError(pos, f"expected INTEGER tag 0x02, got 0x{data[pos]:02x}")
    length = data[pos + 1]
    if length & 0x80:
        raise DerDecodeError(pos + 1, "long-form INTEGER length not valid here")
    pos += 2
    if pos + length > len(data):
        raise DerDecodeError(pos, "truncated INTEGER value")
    value = data[pos : pos + length]
    if length == 0:
        raise DerDecodeError(pos, "empty INTEGER")
    if value[0] & 0x80:
        raise DerDecodeError(pos, "negative INTEGER not valid for r/s")
    if length > 1 and value[0] == 0x00 and not value[1] & 0x80:
        raise DerDecodeError(pos, "non-minimal INTEGER encoding")
    if value[0] == 0x00:
        value = value[1:]  # sign byte
    if len(value) > 32:
        raise DerDecodeError(pos, f"INTEGER wider than 256 bits ({len(value)} bytes)")
    return value.rjust(32, b"\x00"), pos + length


def der_decode_signature(data: bytes) -> tuple[bytes, bytes]:
    """Decode a DER ECDSA signature to fixed-width 32-byte big-endian (r, s)."""
    if len(data) < 2:
        raise DerDecodeError(0, "truncated SEQUENCE header")
    if data[0] != 0x30:
        raise DerDecodeError(0, f"expected SEQUENCE tag 0x30, got 0x{data[0]:02x}")
    length = data[1]
    if length & 0x80:
        raise DerDecodeError(1, "long-form SEQUENCE length not valid for P-256 signatures")
    if 2 + length != len(data):
        raise DerDecodeError(1, f"SEQUENCE length {length} does not match input ({len(data) - 2})")
    r, pos = _decode_der_integer(data, 2)
    s, pos = _decode_der_integer(data, pos)
    if pos != len(data):
        raise DerDecodeError(pos, "trailing bytes after second INTEGER")
    return r, s


def der_encode_signature(r: bytes, s: bytes) -> bytes:
    """Inverse of der_decode_signature for 32-byte big-endian (r, s) values."""

    def enc(value: bytes) -> bytes:
        stripped = value.lstrip(b"\x00") or b"\x00"
        if stripped[0] & 0x80:
            stripped = b"\x00" + stripped
        return bytes([0x02, len(stripped)]) + stripped

    body = enc(r) + enc(s)
    return bytes([0x30, len(body)]) + body


def signature_to_ints(r: bytes, s: bytes) -> tuple[int, int]:
    return int.from_bytes(r, "big"), int.from_bytes(s, "big")


def der_from_ints(r: int, s: int) -> bytes:
    return encode_dss_signature(r, s)
