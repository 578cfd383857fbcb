"""Typed FIFO entries between the protocol receiver and the validation
pipeline, the bounded queue set carrying them, and a reference extractor that
computes the same entries directly from an in-memory block (the differential
oracle for the receiver path).
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from . import blockmodel, identity
from .blockmodel import Block, Version
from .errors import DerDecodeError
from .identity import Certificate, EncodedId, IdentityCache


class Channel:
    """Bounded single-producer/single-consumer queue. The producer blocks when
    the channel is full. Batched puts and gets keep the per-entry locking cost
    down on the pipeline's hot path."""

    def __init__(self, maxsize: int):
        if maxsize < 1:
            raise ValueError("channel capacity must be at least 1")
        self.maxsize = maxsize
        self._items: deque = deque()
        self._mutex = threading.Lock()
        self._not_empty = threading.Condition(self._mutex)
        self._not_full = threading.Condition(self._mutex)

    def put(self, item) -> None:
        self.put_many((item,))

    def put_many(self, items: Sequence) -> None:
        index = 0
        with self._mutex:
            while index < len(items):
                while len(self._items) >= self.maxsize:
                    self._not_full.wait()
                room = self.maxsize - len(self._items)
                chunk = items[index : index + room]
                self._items.extend(chunk)
                index += len(chunk)
                self._not_empty.notify()

    def get(self):
        with self._mutex:
            while not self._items:
                self._not_empty.wait()
            item = self._items.popleft()
            self._not_full.notify()
            return item

    def get_many(self, count: int) -> list:
        """Exactly `count` items, blocking until all have arrived. Callers pop
        groups whose size they learned upstream, so count never exceeds what
        the producer will send."""
        out: list = []
        with self._mutex:
            while len(out) < count:
                while not self._items:
                    self._not_empty.wait()
                while self._items and len(out) < count:
                    out.append(self._items.popleft())
                self._not_full.notify()
        return out

    def qsize(self) -> int:
        with self._mutex:
            return len(self._items)


@dataclass(frozen=True)
class VerificationRequest:
    """One signature check: fixed-width (r, s), SEC1 public key point, digest.

    prefailed marks requests whose DER signature failed to decode; they flow
    through the pipeline and verify as False.
    """

    r: bytes
    s: bytes
    public_key: bytes
    digest: bytes
    prefailed: bool = False


def build_verification_request(signature: bytes, public_key: bytes, digest: bytes) -> VerificationRequest:
    try:
        r, s = identity.der_decode_signature(signature)
    except DerDecodeError:
        return VerificationRequest(b"", b"", public_key, digest, prefailed=True)
    return VerificationRequest(r, s, public_key, digest)


@dataclass(frozen=True)
class BlockFifoEntry:
    block_num: int
    num_txs: int
    request: VerificationRequest
    emitted_at: float = 0.0


@dataclass(frozen=True)
class TxFifoEntry:
    block_num: int
    tx_num: int
    cc_id: int
    num_ends: int
    rdset_size: int
    wrset_size: int
    request: VerificationRequest


@dataclass(frozen=True)
class EndsFifoEntry:
    block_num: int
    tx_num: int
    endorser_id: EncodedId
    request: VerificationRequest


@dataclass(frozen=True)
class RdsetFifoEntry:
    block_num: int
    tx_num: int
    key: bytes
    expected_version: Version


@dataclass(frozen=True)
class WrsetFifoEntry:
    block_num: int
    tx_num: int
    key: bytes
    value: bytes


class FifoSet:
    """The five bounded single-producer/single-consumer queues feeding the
    pipeline. Producers block when a queue is full (backpressure contract)."""

    def __init__(
        self,
        block_depth: int = 8,
        tx_depth: int = 512,
        ends_depth: int = 2048,
        rdset_depth: int = 4096,
        wrset_depth: int = 4096,
    ):
        self.block = Channel(block_depth)
        self.tx = Channel(tx_depth)
        self.ends = Channel(ends_depth)
        self.rdset = Channel(rdset_depth)
        self.wrset = Channel(wrset_depth)

    def depths(self) -> dict[str, int]:
        return {
            "block": self.block.qsize(),
            "tx": self.tx.qsize(),
            "ends": self.ends.qsize(),
            "rdset": self.rdset.qsize(),
            "wrset": self.wrset.qsize(),
        }


@dataclass
class FifoContents:
    """Per-block FIFO payload in emission order."""

    block_entry: BlockFifoEntry
    tx_entries: list[TxFifoEntry] = field(default_factory=list)
    ends_entries: list[EndsFifoEntry] = field(default_factory=list)
    rdset_entries: list[RdsetFifoEntry] = field(default_factory=list)
    wrset_entries: list[WrsetFifoEntry] = field(default_factory=list)

    def feed(self, fifos: FifoSet) -> None:
        """Push the block's entries: the block entry first, then each queue's
        group in original order. Requires tx_depth >= the block's transaction
        count so the consumer can always drain ahead of the producer."""
        fifos.block.put(self.block_entry)
        fifos.tx.put_many(self.tx_entries)
        fifos.ends.put_many(self.ends_entries)
        fifos.rdset.put_many(self.rdset_entries)
        fifos.wrset.put_many(self.wrset_entries)


def extract_block(block: Block, cache: IdentityCache, emitted_at: float = 0.0) -> FifoContents:
    """Reference extractor: FIFO contents computed directly from the in-memory
    block, independent of the packet/annotation machinery."""
    block_num = block.number
    orderer_key = Certificate.from_bytes(block.metadata.orderer_cert).public_key
    contents = FifoContents(
        BlockFifoEntry(
            block_num,
            len(block.transactions),
            build_verification_request(block.metadata.signature, orderer_key, blockmodel.block_digest_of(block)),
            emitted_at,
        )
    )
    for tx_num, tx in enumerate(block.transactions):
        client_key = Certificate.from_bytes(tx.creator_cert).public_key
        contents.tx_entries.append(
            TxFifoEntry(
                block_num,
                tx_num,
                tx.cc_id,
                len(tx.endorsements),
                len(tx.read_set),
                len(tx.write_set),
                build_verification_request(tx.signature, client_key, blockmodel.tx_digest(tx)),
            )
        )
        for end in tx.endorsements:
            endorser_id = cache.id_for(end.endorser_cert)
            if endorser_id is None:
                endorser_id = cache.register(end.endorser_cert)
            endorser_key = Certificate.from_bytes(end.endorser_cert).public_key
            contents.ends_entries.append(
                EndsFifoEntry(
                    block_num,
                    tx_num,
                    endorser_id,
                    build_verification_request(
                        end.signature, endorser_key, blockmodel.endorsement_digest(tx, end.endorser_cert)
                    ),
                )
            )
        for key, version in tx.read_set:
            contents.rdset_entries.append(RdsetFifoEntry(block_num, tx_num, key, version))
        for key, value in tx.write_set:
            contents.wrset_entries.append(WrsetFifoEntry(block_num, tx_num, key, value))
    return contents
