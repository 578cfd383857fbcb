"""Command line interface.

Subcommands:
  orderer       generate a seeded workload and send it over UDP
  validator     receive, validate through the pipeline, write results JSONL
  oracle-check  re-validate dumped blocks sequentially and diff the results
  report        render summary.csv plus throughput/latency figures
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import threading
from dataclasses import replace
from pathlib import Path

from . import metrics, oracle, report
from .blockmodel import decode_baseline
from .config import NetworkConfig, load_config
from .errors import ConfigError
from .fifos import FifoSet
from .pipeline import Pipeline
from .receiver import SectionReceiver, open_receive_socket
from .results import ResultMailbox
from .sender import BlockSender
from .statedb import KvStore
from .workload import WorkloadGenerator

_DURATION_UNITS = {"us": 1e-6, "ms": 1e-3, "s": 1.0}


def parse_duration(text: str) -> float:
    """'360us', '1.5ms', '0.25s', or bare seconds."""
    m = re.fullmatch(r"\s*([0-9.]+)\s*(us|ms|s)?\s*", text)
    if m is None:
        raise argparse.ArgumentTypeError(f"cannot parse duration {text!r}")
    return float(m.group(1)) * _DURATION_UNITS[m.group(2) or "s"]


def parse_endpoint(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    """'host:port', ':port', or bare port."""
    host, sep, port = text.rpartition(":")
    if not sep:
        return default_host, int(text)
    return host or default_host, int(port)


def run_orderer(
    config: NetworkConfig,
    dest: tuple[str, int],
    blocks: int | None = None,
    block_size: int | None = None,
    baseline_dump: Path | None = None,
    pace: float = 0.0,
) -> dict:
    if block_size is not None:
        config.workload = replace(config.workload, block_size=block_size)
    generator = WorkloadGenerator(config)
    sender = BlockSender(config.build_cache(), dest, config.protocol.max_frame, pace=pace)
    if baseline_dump is not None:
        baseline_dump = Path(baseline_dump)
        baseline_dump.mkdir(parents=True, exist_ok=True)

    totals = {"blocks": 0, "txs": 0, "packets": 0, "cache_sync_packets": 0, "wire_bytes": 0, "baseline_bytes": 0}
    try:
        for block in generator.blocks(count=blocks):
            if baseline_dump is not None:
                from .blockmodel import encode_baseline

                (baseline_dump / f"block_{block.number:06d}.bin").write_bytes(encode_baseline(block))
            report_ = sender.send_block(block)
            totals["blocks"] += 1
            totals["txs"] += len(block.transactions)
            totals["packets"] += report_.packets_sent
            totals["cache_sync_packets"] += report_.cache_sync_packets
            totals["wire_bytes"] += report_.wire_bytes
            totals["baseline_bytes"] += report_.baseline_bytes
    finally:
        sender.close()
    totals["bandwidth_ratio"] = totals["baseline_bytes"] / totals["wire_bytes"] if totals["wire_bytes"] else 0.0
    return totals


def run_validator(
    config: NetworkConfig,
    listen: tuple[str, int] | None = None,
    out_path: Path | None = None,
    until_txs: int | None = None,
    max_idle: float = 10.0,
    state_dump: Path | None = None,
) -> tuple[list[dict], metrics.RunMetrics]:
    host, port = listen or ("0.0.0.0", config.protocol.port)
    cache = config.build_cache()
    fifos = FifoSet()
    store = KvStore(config.statedb_capacity)
    mailbox = ResultMailbox(depth=config.mailbox_depth)
    recv = SectionReceiver(cache, fifos, port=port, deadline=config.protocol.reassembly_deadline)
    pipe = Pipeline(fifos, store, config.compiled_policies(), config.pipeline, mailbox, len(config.orgs))

    sock = open_receive_socket(port, host)
    stop = threading.Event()
    ingest = threading.Thread(target=recv.serve, args=(sock, stop), name="ingest", daemon=True)
    ingest.start()
    pipe.start()

    target = until_txs if until_txs is not None else config.workload.total_txs
    records: list[dict] = []
    committed = 0
    try:
        while committed < target:
            result = mailbox.get_block_data(timeout=max_idle)
            if result is None:
                break  # idle past max_idle or pipeline shut down
            records.append(metrics.result_to_record(result))
            committed += result.num_txs
    finally:
        stop.set()
        sock.close()
        ingest.join(timeout=2.0)
        pipe.stop()
        while True:
            result = mailbox.get_block_data(timeout=1.0)
            if result is None:
                break
            records.append(metrics.result_to_record(result))
        pipe.join(timeout=10.0)

    if out_path is not None:
        metrics.write_jsonl(out_path, records)
    if state_dump is not None:
        store.dump(state_dump)
    summary = metrics.summarize(records, recv.counters.as_dict())
    return records, summary


def run_oracle_check(config: NetworkConfig, blocks_dir: Path, results_path: Path) -> list[str]:
    paths = sorted(Path(blocks_dir).glob("block_*.bin"))
    if not paths:
        raise ConfigError(f"no block_*.bin files under {blocks_dir}")
    blocks = (decode_baseline(path.read_bytes()) for path in paths)
    oracle_results, _, _ = oracle.validate_stream(blocks, config.policy_asts())
    records = metrics.read_jsonl(results_path)
    return metrics.compare_with_oracle(oracle_results, records)


def _add_config_arg(parser):
    parser.add_argument("--config", required=True, type=Path, help="network config YAML")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockpipe")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orderer", help="send a seeded block stream")
    _add_config_arg(p)
    p.add_argument("--blocks", type=int, default=None, help="number of blocks (default: total_txs/block_size)")
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--dest", required=True, help="host:port of the validator")
    p.add_argument("--baseline-dump", type=Path, default=None, help="directory for baseline-encoded blocks")
    p.add_argument("--pace-us", type=float, default=0.0, help="sleep between packets, microseconds")
    p.add_argument("--seed", type=int, default=None, help="override workload seed")

    p = sub.add_parser("validator", help="receive and validate blocks")
    _add_config_arg(p)
    p.add_argument("--listen", default=None, help="listen endpoint, e.g. :5000")
    p.add_argument("--out", type=Path, default=None, help="results JSONL path")
    p.add_argument("--lanes", type=int, default=None, help="override parallel tx validators")
    p.add_argument("--engines", type=int, default=None, help="override verification slots per tx_vscc")
    p.add_argument("--synthetic-delay", type=parse_duration, default=None, help="e.g. 360us; replaces real crypto")
    p.add_argument("--until-txs", type=int, default=None, help="stop after this many committed txs")
    p.add_argument("--max-idle", type=float, default=10.0, help="stop after this many idle seconds")
    p.add_argument("--state-dump", type=Path, default=None, help="write the final store as key/value/version lines")

    p = sub.add_parser("oracle-check", help="diff results against the sequential reference validator")
    _add_config_arg(p)
    p.add_argument("--blocks", required=True, type=Path, help="directory of baseline block dumps")
    p.add_argument("--results", required=True, type=Path, help="results JSONL from the validator")

    p = sub.add_parser("report", help="render summary.csv and figures from results JSONL")
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "orderer":
        config = load_config(args.config)
        if args.seed is not None:
            config.workload = replace(config.workload, seed=args.seed)
        totals = run_orderer(
            config,
            parse_endpoint(args.dest),
            blocks=args.blocks,
            block_size=args.block_size,
            baseline_dump=args.baseline_dump,
            pace=args.pace_us / 1e6,
        )
        print(json.dumps(totals, indent=2))
        return 0

    if args.command == "validator":
        config = load_config(args.config)
        if args.lanes is not None:
            config.pipeline = replace(config.pipeline, tx_validators=args.lanes)
        if args.engines is not None:
            config.pipeline = replace(config.pipeline, engines_per_vscc=args.engines)
        if args.synthetic_delay is not None:
            config.pipeline = replace(config.pipeline, synthetic_delay=args.synthetic_delay or None)
        listen = parse_endpoint(args.listen, default_host="0.0.0.0") if args.listen else None
        _, summary = run_validator(
            config,
            listen=listen,
            out_path=args.out,
            until_txs=args.until_txs,
            max_idle=args.max_idle,
            state_dump=args.state_dump,
        )
        print(json.dumps(summary.as_dict(), indent=2))
        return 0

    if args.command == "oracle-check":
        config = load_config(args.config)
        diffs = run_oracle_check(config, args.blocks, args.results)
        if diffs:
            for line in diffs:
                print(line)
            print(f"{len(diffs)} mismatches")
            return 1
        print("no mismatches")
        return 0

    if args.command == "report":
        paths = report.render_report(args.results, args.out_dir)
        for path in paths:
            print(path)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
