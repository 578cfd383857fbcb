"""The block processor: a 2-stage block-level pipeline (block_verify followed
by block_validate) whose second stage is a 3-stage transaction-level parallel
pipeline (tx_verify, tx_vscc, tx_mvcc_commit).

Scheduling properties the rest of the system relies on:

  * work conservation — a free lane picks up the next undispatched transaction;
  * early abort — an invalid block skips all transaction and endorsement
    verification; an invalid transaction signature discards its endorsements;
  * wave-synchronized endorsement issue — tx_vscc issues up to
    engines_per_vscc endorsements concurrently, records every completion, and
    re-checks the policy before issuing more, so stop-on-satisfied counts are
    deterministic under any timing;
  * in-order collection — statuses enter the mvcc/commit stage in ascending
    transaction number regardless of lane completion order;
  * valid/invalid flags are independent of lane count and scheduling.
"""

from __future__ import annotations

import enum
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .blockmodel import ABSENT_VERSION, Version
from .engine import VerificationEngine
from .errors import CapacityError, MailboxClosed
from .fifos import BlockFifoEntry, EndsFifoEntry, FifoSet, TxFifoEntry
from .policy import CompiledPolicy, RegisterFile
from .results import ResultMailbox
from .statedb import KvStore

_STOP = object()


@dataclass
class PipelineConfig:
    tx_validators: int = 4
    engines_per_vscc: int = 2
    synthetic_delay: Optional[float] = None  # seconds; None = real crypto
    decide: Optional[Callable] = None  # synthetic-mode verdict source

    def __post_init__(self):
        if self.tx_validators < 1:
            raise ValueError("tx_validators must be at least 1")
        if self.engines_per_vscc < 1:
            raise ValueError("engines_per_vscc must be at least 1")

    def engine(self) -> VerificationEngine:
        return VerificationEngine(self.synthetic_delay, self.decide)


class TxFlag(str, enum.Enum):
    VALID = "valid"
    INVALID_SIG = "invalid_sig"
    INVALID_POLICY = "invalid_policy"
    INVALID_MVCC = "invalid_mvcc"
    SKIPPED_BLOCK_INVALID = "skipped_block_invalid"


@dataclass(frozen=True)
class TxStatus:
    tx_num: int
    flag: TxFlag


@dataclass
class BlockStats:
    block_num: int
    num_txs: int
    emitted_at: float = 0.0
    published_at: float = 0.0
    latency_seconds: float = 0.0
    verify_seconds: float = 0.0
    tx_verify_seconds: float = 0.0
    vscc_seconds: float = 0.0
    mvcc_seconds: float = 0.0
    block_verifications: int = 0
    tx_verifications: int = 0
    ends_verifications: int = 0
    queue_depths: dict = field(default_factory=dict)
    vscc_tx_seconds: list = field(default_factory=list)

    @property
    def total_verifications(self) -> int:
        return self.block_verifications + self.tx_verifications + self.ends_verifications


@dataclass
class ValidationResult:
    block_num: int
    block_valid: bool
    num_txs: int
    tx_flags: list[TxStatus]
    stats: BlockStats
    error: Optional[str] = None


@dataclass
class _VerifiedBlock:
    entry: BlockFifoEntry
    block_valid: bool
    verify_seconds: float
    verify_count: int
    queue_depths: dict


@dataclass
class _TxWork:
    entry: TxFifoEntry
    ends: list[EndsFifoEntry]
    block_valid: bool


@dataclass
class _TxOutcome:
    block_num: int
    tx_num: int
    flag: Optional[TxFlag]  # None = valid so far, pending mvcc
    rdset_size: int
    wrset_size: int
    tx_verifications: int
    ends_verifications: int
    verify_seconds: float
    vscc_seconds: float


@dataclass
class _BlockBegin:
    entry: BlockFifoEntry
    block_valid: bool
    verify_seconds: float
    verify_count: int
    queue_depths: dict
    done: threading.Event


class Pipeline:
    """Stage graph of bounded queues; every stage is its own thread. The mvcc
    stage is the sole store writer. Backpressure propagates by queue blocking:
    a stalled result consumer eventually stalls the whole pipeline."""

    def __init__(
        self,
        fifos: FifoSet,
        store: KvStore,
        policies: dict[int, CompiledPolicy],
        config: PipelineConfig,
        mailbox: ResultMailbox,
        num_orgs: int,
        clock=time.perf_counter,
    ):
        self.fifos = fifos
        self.store = store
        self.policies = policies
        self.config = config
        self.mailbox = mailbox
        self.num_orgs = num_orgs
        self.clock = clock
        self._verified_q: queue.Queue = queue.Queue(maxsize=1)
        # The validate stage admits one block at a time, so the work/collector/
        # mvcc links each hold at most one block's items; the cheap unbounded
        # queues are safe there and keep the per-transaction locking cost low.
        # Any free lane picks up the next undispatched transaction.
        self._work_q: queue.SimpleQueue = queue.SimpleQueue()
        self._completion_q: queue.SimpleQueue = queue.SimpleQueue()
        self._ordered_q: queue.SimpleQueue = queue.SimpleQueue()
        self._marker_q: queue.Queue = queue.Queue(maxsize=2)
        self._threads: list[threading.Thread] = []
        self._started = False

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        if self._started:
            raise RuntimeError("pipeline already started")
        self._started = True
        targets = [("block-verify", self._verify_loop), ("block-validate", self._validate_loop)]
        targets.extend((f"lane-{i}", self._lane_loop) for i in range(self.config.tx_validators))
        targets.append(("tx-collector", self._collector_loop))
        targets.append(("tx-mvcc-commit", self._mvcc_loop))
        for name, target in targets:
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        """Drain in-flight blocks, then close the mailbox. The consumer must
        keep reading results for the drain to make progress."""
        self.fifos.block.put(_STOP)

    def join(self, timeout: Optional[float] = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        for t in self._threads:
            t.join(None if deadline is None else max(0.0, deadline - time.monotonic()))

    # -- stage 1: block_verify ------------------------------------------------

    def _verify_loop(self) -> None:
        engine = self.config.engine()  # dedicated slot so blocks verify on arrival
        while True:
            entry = self.fifos.block.get()
            if entry is _STOP:
                self._verified_q.put(_STOP)
                return
            depths = self.fifos.depths()
            t0 = self.clock()
            ok = engine.verify(entry.request)
            elapsed = self.clock() - t0
            count = 0 if entry.request.prefailed else 1
            self._verified_q.put(_VerifiedBlock(entry, ok, elapsed, count, depths))

    # -- stage 2: block_validate (scheduler side) ------------------------------

    def _validate_loop(self) -> None:
        while True:
            vb = self._verified_q.get()
            if vb is _STOP:
                for _ in range(self.config.tx_validators):
                    self._work_q.put(_STOP)
                self._marker_q.put(_STOP)
                return
            done = threading.Event()
            self._marker_q.put(
                _BlockBegin(vb.entry, vb.block_valid, vb.verify_seconds, vb.verify_count, vb.queue_depths, done)
            )
            for _ in range(vb.entry.num_txs):
                entry: TxFifoEntry = self.fifos.tx.get()
                ends = self.fifos.ends.get_many(entry.num_ends)
                self._work_q.put(_TxWork(entry, ends, vb.block_valid))
            # Hold the validate stage until the block's result is published;
            # the next block may meanwhile occupy block_verify.
            done.wait()

    # -- lanes: tx_verify + tx_vscc --------------------------------------------

    def _lane_loop(self) -> None:
        regfile = RegisterFile(self.num_orgs)
        tx_engine = self.config.engine()
        ends_engine = self.config.engine()  # bank of engines_per_vscc slots
        while True:
            work = self._work_q.get()
            if work is _STOP:
                return
            self._completion_q.put(self._process_tx(work, regfile, tx_engine, ends_engine))

    def _process_tx(self, work, regfile, tx_engine, ends_engine) -> _TxOutcome:
        entry = work.entry
        flag: Optional[TxFlag] = None
        verify_seconds = 0.0
        tx_verifications = 0
        if not work.block_valid:
            flag = TxFlag.SKIPPED_BLOCK_INVALID  # no engine use at all
        else:
            t0 = self.clock()
            ok = tx_engine.verify(entry.request)
            verify_seconds = self.clock() - t0
            tx_verifications = 0 if entry.request.prefailed else 1
            if not ok:
                flag = TxFlag.INVALID_SIG

        t0 = self.clock()
        ends_verifications = 0
        if flag is None:
            # tx_vscc: issue endorsements in waves of up to engines_per_vscc,
            # re-checking the policy output before each new wave.
            policy = self.policies.get(entry.cc_id)
            if policy is None:
                flag = TxFlag.INVALID_POLICY
            else:
                regfile.clear()
                satisfied = False
                index = 0
                while not satisfied and index < len(work.ends):
                    wave = work.ends[index : index + self.config.engines_per_vscc]
                    index += len(wave)
                    verdicts = ends_engine.verify_wave([e.request for e in wave])
                    for end, ok in zip(wave, verdicts):
                        regfile.record_result(end.endorser_id, ok)
                        if not end.request.prefailed:
                            ends_verifications += 1
                    satisfied = policy.evaluate(regfile)
                if not satisfied:
                    flag = TxFlag.INVALID_POLICY
        vscc_seconds = self.clock() - t0

        return _TxOutcome(
            entry.block_num,
            entry.tx_num,
            flag,
            entry.rdset_size,
            entry.wrset_size,
            tx_verifications,
            ends_verifications,
            verify_seconds,
            vscc_seconds,
        )

    # -- tx_collector -----------------------------------------------------------

    def _collector_loop(self) -> None:
        held: dict[int, dict[int, _TxOutcome]] = {}
        while True:
            begin = self._marker_q.get()
            if begin is _STOP:
                self._ordered_q.put(_STOP)
                return
            self._ordered_q.put(begin)
            block_num = begin.entry.block_num
            pending = held.pop(block_num, {})
            for tx_num in range(begin.entry.num_txs):
                while tx_num not in pending:
                    outcome: _TxOutcome = self._completion_q.get()
                    if outcome.block_num == block_num:
                        pending[outcome.tx_num] = outcome
                    else:
                        held.setdefault(outcome.block_num, {})[outcome.tx_num] = outcome
                self._ordered_q.put(pending.pop(tx_num))

    # -- tx_mvcc_commit -----------------------------------------------------------

    def _mvcc_loop(self) -> None:
        while True:
            item = self._ordered_q.get()
            if item is _STOP:
                self.mailbox.close()
                return
            begin: _BlockBegin = item
            try:
                result = self._commit_block(begin)
                self.mailbox.publish(result)
            except MailboxClosed:
                begin.done.set()
                return
            begin.done.set()

    def _commit_block(self, begin: _BlockBegin) -> ValidationResult:
        entry = begin.entry
        stats = BlockStats(
            block_num=entry.block_num,
            num_txs=entry.num_txs,
            emitted_at=entry.emitted_at,
            verify_seconds=begin.verify_seconds,
            block_verifications=begin.verify_count,
            queue_depths=begin.queue_depths,
        )
        flags: list[TxStatus] = []
        error: Optional[str] = None
        for _ in range(entry.num_txs):
            outcome: _TxOutcome = self._ordered_q.get()
            stats.tx_verify_seconds += outcome.verify_seconds
            stats.vscc_seconds += outcome.vscc_seconds
            stats.tx_verifications += outcome.tx_verifications
            stats.ends_verifications += outcome.ends_verifications
            stats.vscc_tx_seconds.append(outcome.vscc_seconds)

            t0 = self.clock()
            # Invalid transactions still consume their read/write entries so
            # the FIFOs stay aligned; only valid ones touch the store.
            reads = self.fifos.rdset.get_many(outcome.rdset_size)
            writes = self.fifos.wrset.get_many(outcome.wrset_size)
            flag = outcome.flag
            if flag is None:
                flag = TxFlag.VALID
                if error is not None:
                    flag = TxFlag.INVALID_MVCC
                else:
                    for read in reads:
                        current = self.store.get(read.key)
                        version = current[1] if current is not None else ABSENT_VERSION
                        if version != read.expected_version:
                            flag = TxFlag.INVALID_MVCC
                            break
                    if flag is TxFlag.VALID:
                        try:
                            for write in writes:
                                self.store.put(write.key, write.value, Version(outcome.block_num, outcome.tx_num))
                        except CapacityError as exc:
                            flag = TxFlag.INVALID_MVCC
                            error = str(exc)
            stats.mvcc_seconds += self.clock() - t0
            flags.append(TxStatus(outcome.tx_num, flag))

        stats.published_at = self.clock()
        stats.latency_seconds = stats.published_at - entry.emitted_at if entry.emitted_at else 0.0
        return ValidationResult(entry.block_num, begin.block_valid, entry.num_txs, flags, stats, error)


def process_block(
    fifos: FifoSet,
    store: KvStore,
    policies: dict[int, CompiledPolicy],
    config: PipelineConfig,
    num_orgs: int,
) -> ValidationResult:
    """Run a transient pipeline over exactly one block already staged in the
    FIFOs. Convenience for tests and single-shot validation."""
    mailbox = ResultMailbox(depth=1)
    pipe = Pipeline(fifos, store, policies, config, mailbox, num_orgs)
    pipe.start()
    result = mailbox.get_block_data()
    pipe.stop()
    pipe.join(timeout=10.0)
    assert result is not None
    return result
