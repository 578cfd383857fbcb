"""Seeded workload generation in the style of a banking (smallbank) or digital
rights management (drm) application, with configurable injection of invalid
signatures, unsatisfiable endorsement policies, and read-write conflicts.

The generator endorses each transaction against the pre-block shadow state, so
an honest stream with zero injection rates validates completely clean. A stream
is fully determined by (config, seed)."""

from __future__ import annotations

import random
from typing import Iterator, Optional

from . import blockmodel, identity
from .blockmodel import Block, Endorsement, Transaction, Version
from .config import NetworkConfig
from .errors import ConfigError
from .identity import Role
from .policy import principals_of


def _account_key(index: int) -> bytes:
    return b"acct%06d" % index


def _corrupt_signature(sig: bytes) -> bytes:
    # Flip a bit in the last byte: the DER structure survives, the value fails.
    return sig[:-1] + bytes([sig[-1] ^ 0x01])


class WorkloadGenerator:
    def __init__(self, config: NetworkConfig, seed: Optional[int] = None):
        self.config = config
        self.settings = config.workload
        if self.settings.accounts > config.statedb_capacity:
            raise ConfigError(
                f"keyspace of {self.settings.accounts} accounts exceeds store capacity {config.statedb_capacity}"
            )
        self.rng = random.Random(self.settings.seed if seed is None else seed)
        self.clients = config.client_nodes()
        self.orderer = config.orderer_node()
        self.cc_ids = sorted(config.chaincodes)
        asts = config.policy_asts()
        # Endorsing orgs per chaincode: every distinct org the policy names,
        # or the first ends_per_tx orgs when explicitly pinned.
        self._endorsers: dict[int, list] = {}
        for cc_id in self.cc_ids:
            orgs = sorted({p.org for p in principals_of(asts[cc_id])})
            nodes = [config.org(name).node(Role.PEER, 0) for name in orgs]
            self._endorsers[cc_id] = nodes
        self._tx_counter = 0
        self._shadow: dict[bytes, Version] = {}

    def _reads_writes(self) -> tuple[int, int]:
        s = self.settings
        if s.profile == "drm":
            # fewer database accesses per transaction than the banking profile
            return 1, 1
        reads = self.rng.randint(s.reads_min, s.reads_max)
        writes = s.split_writes if s.split_writes > 0 else self.rng.randint(s.writes_min, s.writes_max)
        return reads, writes

    def _sample_keys(self, count: int, avoid: set[bytes]) -> list[bytes]:
        keys: list[bytes] = []
        seen: set[bytes] = set()
        attempts = 0
        while len(keys) < count:
            key = _account_key(self.rng.randrange(self.settings.accounts))
            attempts += 1
            if key in seen or (key in avoid and attempts < 50 * count):
                continue
            keys.append(key)
            seen.add(key)
        return keys

    def _fake_signature(self) -> bytes:
        return identity.der_encode_signature(self.rng.randbytes(32), self.rng.randbytes(32))

    def _build_tx(self, block_written: list[bytes]) -> tuple[Transaction, bool]:
        """Returns (tx, will_be_valid). block_written lists keys written by
        earlier valid transactions of the current block."""
        s = self.settings
        rng = self.rng
        sig_bad = rng.random() < s.invalid_sig_rate
        policy_bad = rng.random() < s.invalid_policy_rate
        conflict = rng.random() < s.conflict_rate and block_written

        n_reads, n_writes = self._reads_writes()
        avoid = set(block_written)
        read_keys = self._sample_keys(n_reads, avoid)
        if conflict:
            read_keys[0] = rng.choice(block_written)
        write_keys = self._sample_keys(n_writes, set())

        read_set = [(key, self._shadow.get(key, blockmodel.ABSENT_VERSION)) for key in read_keys]
        write_set = [(key, rng.randbytes(s.value_size)) for key in write_keys]

        client = self.clients[self._tx_counter % len(self.clients)]
        cc_id = self.cc_ids[0] if len(self.cc_ids) == 1 else rng.choice(self.cc_ids)
        tx = Transaction(client.cert_bytes, cc_id, read_set, write_set, rng.randbytes(16))

        endorsers = self._endorsers[cc_id]
        if s.ends_per_tx:
            endorsers = endorsers[: s.ends_per_tx]
        for node in endorsers:
            if s.fake_signatures:
                tx.endorsements.append(Endorsement(node.cert_bytes, self._fake_signature()))
            else:
                blockmodel.endorse(tx, node.private_key, node.cert_bytes)
        if policy_bad:
            # Every endorsement fails verification, so no monotone policy can
            # be satisfied; the full exhaustion path runs.
            for end in tx.endorsements:
                end.signature = _corrupt_signature(end.signature)

        if s.fake_signatures:
            tx.signature = self._fake_signature()
        else:
            blockmodel.client_sign(tx, client.private_key)
        if sig_bad:
            tx.signature = _corrupt_signature(tx.signature)

        self._tx_counter += 1
        valid = not sig_bad and not policy_bad and not any(k in avoid for k, _ in read_set)
        return tx, valid

    def _build_block(self, number: int, size: int, prev_hash: bytes) -> Block:
        txs = []
        block_written: list[bytes] = []
        committed: list[tuple[int, Transaction]] = []
        for _ in range(size):
            tx, valid = self._build_tx(block_written)
            if valid:
                block_written.extend(key for key, _ in tx.write_set)
                committed.append((len(txs), tx))
            txs.append(tx)
        if self.settings.fake_signatures:
            header = blockmodel.BlockHeader(number, prev_hash, blockmodel.compute_data_hash(txs))
            block = Block(header, txs, blockmodel.BlockMetadata(self.orderer.cert_bytes, self._fake_signature()))
        else:
            block = blockmodel.build_signed_block(txs, self.orderer.private_key, self.orderer.cert_bytes, number, prev_hash)
        for tx_num, tx in committed:
            for key, _ in tx.write_set:
                self._shadow[key] = Version(number, tx_num)
        return block

    def blocks(self, count: Optional[int] = None, sizes: Optional[list[int]] = None) -> Iterator[Block]:
        """Yield consecutive signed blocks. `sizes` pins the per-block
        transaction counts; otherwise block_size applies until total_txs."""
        s = self.settings
        number = s.start_block
        prev_hash = blockmodel.ZERO_HASH
        if sizes is not None:
            plan = list(sizes)
        else:
            if count is not None:
                plan = [s.block_size] * count
            else:
                remaining = s.total_txs
                plan = []
                while remaining > 0:
                    plan.append(min(s.block_size, remaining))
                    remaining -= plan[-1]
        for size in plan:
            block = self._build_block(number, size, prev_hash)
            prev_hash = blockmodel.block_digest_of(block)
            yield block
            number += 1


def generate_workload(config: NetworkConfig, seed: Optional[int] = None, **kwargs) -> Iterator[Block]:
    return WorkloadGenerator(config, seed=seed).blocks(**kwargs)
