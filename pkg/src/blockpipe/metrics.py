"""Run metrics: JSON-lines result records, CSV summaries, and aggregate
statistics (commit throughput excludes any ledger I/O — validation latency runs
from a block's first FIFO emission to result publication)."""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .pipeline import ValidationResult


def result_to_record(result: ValidationResult) -> dict:
    stats = result.stats
    return {
        "block_num": result.block_num,
        "block_valid": result.block_valid,
        "num_txs": result.num_txs,
        "flags": [status.flag.value for status in result.tx_flags],
        "error": result.error,
        "stats": {
            "emitted_at": stats.emitted_at,
            "published_at": stats.published_at,
            "latency_ms": stats.latency_seconds * 1e3,
            "verify_ms": stats.verify_seconds * 1e3,
            "tx_verify_ms": stats.tx_verify_seconds * 1e3,
            "vscc_ms": stats.vscc_seconds * 1e3,
            "mvcc_ms": stats.mvcc_seconds * 1e3,
            "block_verifications": stats.block_verifications,
            "tx_verifications": stats.tx_verifications,
            "ends_verifications": stats.ends_verifications,
            "queue_depths": stats.queue_depths,
            "vscc_tx_ms": [t * 1e3 for t in stats.vscc_tx_seconds],
        },
    }


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class RunMetrics:
    """Aggregate view over the per-block records of one run."""

    blocks: int = 0
    committed_txs: int = 0
    valid_txs: int = 0
    flag_counts: dict = field(default_factory=dict)
    commit_tps: float = 0.0
    elapsed_seconds: float = 0.0
    latency_ms_mean: float = 0.0
    latency_ms_p50: float = 0.0
    latency_ms_p95: float = 0.0
    block_verifications: int = 0
    tx_verifications: int = 0
    ends_verifications: int = 0
    wire_bytes: int = 0
    baseline_bytes: int = 0
    bandwidth_ratio: float = 0.0
    counters: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _percentile(values: list[float], q: float) -> float:
    if not values:
        return 0.0
    values = sorted(values)
    index = min(len(values) - 1, max(0, round(q * (len(values) - 1))))
    return values[index]


def summarize(records: list[dict], counters: dict | None = None) -> RunMetrics:
    metrics = RunMetrics(blocks=len(records), counters=dict(counters or {}))
    if not records:
        return metrics
    latencies = []
    first_emit = None
    last_publish = None
    for record in records:
        stats = record["stats"]
        metrics.committed_txs += record["num_txs"]
        for flag in record["flags"]:
            metrics.flag_counts[flag] = metrics.flag_counts.get(flag, 0) + 1
        metrics.valid_txs = metrics.flag_counts.get("valid", 0)
        latencies.append(stats["latency_ms"])
        metrics.block_verifications += stats["block_verifications"]
        metrics.tx_verifications += stats["tx_verifications"]
        metrics.ends_verifications += stats["ends_verifications"]
        if stats["emitted_at"]:
            first_emit = stats["emitted_at"] if first_emit is None else min(first_emit, stats["emitted_at"])
        last_publish = stats["published_at"] if last_publish is None else max(last_publish, stats["published_at"])
    metrics.latency_ms_mean = statistics.fmean(latencies)
    metrics.latency_ms_p50 = _percentile(latencies, 0.50)
    metrics.latency_ms_p95 = _percentile(latencies, 0.95)
    if first_emit is not None and last_publish is not None and last_publish > first_emit:
        metrics.elapsed_seconds = last_publish - first_emit
        metrics.commit_tps = metrics.committed_txs / metrics.elapsed_seconds
    return metrics


_CSV_COLUMNS = [
    "block_num",
    "block_valid",
    "num_txs",
    "valid_txs",
    "latency_ms",
    "verify_ms",
    "tx_verify_ms",
    "vscc_ms",
    "mvcc_ms",
    "block_verifications",
    "tx_verifications",
    "ends_verifications",
]


def write_summary_csv(path, records: list[dict]) -> None:
    """Per-block rows for spreadsheet-side analysis."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for record in records:
            stats = record["stats"]
            writer.writerow(
                [
                    record["block_num"],
                    int(record["block_valid"]),
                    record["num_txs"],
                    sum(1 for f in record["flags"] if f == "valid"),
                    f"{stats['latency_ms']:.3f}",
                    f"{stats['verify_ms']:.3f}",
                    f"{stats['tx_verify_ms']:.3f}",
                    f"{stats['vscc_ms']:.3f}",
                    f"{stats['mvcc_ms']:.3f}",
                    stats["block_verifications"],
                    stats["tx_verifications"],
                    stats["ends_verifications"],
                ]
            )


def compare_with_oracle(oracle_results, records: list[dict]) -> list[str]:
    """Diff oracle flags against a results file; empty list means no mismatch."""
    diffs = []
    by_num = {record["block_num"]: record for record in records}
    for oracle_result in oracle_results:
        record = by_num.pop(oracle_result.block_num, None)
        if record is None:
            diffs.append(f"block {oracle_result.block_num}: missing from results")
            continue
        if record["block_valid"] != oracle_result.block_valid:
            diffs.append(
                f"block {oracle_result.block_num}: block_valid {record['block_valid']} != {oracle_result.block_valid}"
            )
        expected = [flag.value for flag in oracle_result.flags]
        if record["flags"] != expected:
            for tx_num, (got, want) in enumerate(zip(record["flags"], expected)):
                if got != want:
                    diffs.append(f"block {oracle_result.block_num} tx {tx_num}: {got} != {want}")
            if len(record["flags"]) != len(expected):
                diffs.append(
                    f"block {oracle_result.block_num}: {len(record['flags'])} flags, oracle has {len(expected)}"
                )
    for num in sorted(by_num):
        diffs.append(f"block {num}: present in results but not in block stream")
    return diffs
