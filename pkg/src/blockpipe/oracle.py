"""Sequential reference validator: single-threaded ground truth for
differential testing and for quantifying the dissemination path's verification
savings.

Unlike the pipeline, this validator verifies every endorsement of a
transaction before evaluating its policy, and evaluates policy sub-expressions
sequentially in full — the behavior of a conventional software peer."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import blockmodel, identity
from .blockmodel import ABSENT_VERSION, Block, Version
from .errors import DerDecodeError
from .identity import Certificate
from .pipeline import TxFlag
from .policy import PolicyExpr, eval_expr

StoreState = dict[bytes, tuple[bytes, Version]]


@dataclass
class OracleCounts:
    block_verifications: int = 0
    tx_verifications: int = 0
    ends_verifications: int = 0

    @property
    def total(self) -> int:
        return self.block_verifications + self.tx_verifications + self.ends_verifications


@dataclass
class OracleBlockResult:
    block_num: int
    block_valid: bool
    flags: list[TxFlag] = field(default_factory=list)


def _verify(signature: bytes, cert_bytes: bytes, digest: bytes) -> tuple[bool, bool]:
    """(verified, counted); malformed DER fails without burning a verification."""
    key = identity.load_public_key(Certificate.from_bytes(cert_bytes).public_key)
    try:
        return identity.verify(signature, key, digest), True
    except DerDecodeError:
        return False, False


def validate_block_reference(
    block: Block,
    store: StoreState,
    policies: dict[int, PolicyExpr],
    counts: OracleCounts | None = None,
) -> OracleBlockResult:
    """Validate one block, mutating `store` with the writes of valid
    transactions. Returns per-transaction flags in order."""
    counts = counts if counts is not None else OracleCounts()
    result = OracleBlockResult(block.number, True)

    ok, counted = _verify(block.metadata.signature, block.metadata.orderer_cert, blockmodel.block_digest_of(block))
    counts.block_verifications += int(counted)
    if not ok:
        result.block_valid = False
        result.flags = [TxFlag.SKIPPED_BLOCK_INVALID] * len(block.transactions)
        return result

    flags: list[TxFlag] = []
    for tx in block.transactions:
        ok, counted = _verify(tx.signature, tx.creator_cert, blockmodel.tx_digest(tx))
        counts.tx_verifications += int(counted)
        if not ok:
            flags.append(TxFlag.INVALID_SIG)
            continue

        # Verify all endorsements, then evaluate the policy over the full set.
        valid_principals: set = set()
        for end in tx.endorsements:
            ok, counted = _verify(end.signature, end.endorser_cert, blockmodel.endorsement_digest(tx, end.endorser_cert))
            counts.ends_verifications += int(counted)
            if ok:
                cert = Certificate.from_bytes(end.endorser_cert)
                valid_principals.add((cert.org_name, cert.role))
        expr = policies.get(tx.cc_id)
        if expr is None or not eval_expr(expr, valid_principals):
            flags.append(TxFlag.INVALID_POLICY)
            continue
        flags.append(TxFlag.VALID)

    # mvcc in transaction order, then commit the writes of valid transactions.
    for tx_num, (tx, flag) in enumerate(zip(block.transactions, flags)):
        if flag is not TxFlag.VALID:
            continue
        for key, expected in tx.read_set:
            entry = store.get(key)
            current = entry[1] if entry is not None else ABSENT_VERSION
            if current != expected:
                flags[tx_num] = TxFlag.INVALID_MVCC
                break
        if flags[tx_num] is TxFlag.VALID:
            for key, value in tx.write_set:
                store[key] = (value, Version(block.number, tx_num))

    result.flags = flags
    return result


def validate_stream(
    blocks, policies: dict[int, PolicyExpr], store: StoreState | None = None
) -> tuple[list[OracleBlockResult], StoreState, OracleCounts]:
    """Validate a block stream against a fresh (or given) store."""
    store = store if store is not None else {}
    counts = OracleCounts()
    results = [validate_block_reference(block, store, policies, counts) for block in blocks]
    return results, store, counts
