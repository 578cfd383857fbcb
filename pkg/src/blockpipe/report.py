"""Render run figures (file output only) and the CSV summary from a results
JSON-lines file."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import metrics


def _throughput_figure(records: list[dict], path: Path) -> None:
    records = sorted(records, key=lambda r: r["stats"]["published_at"])
    t0 = records[0]["stats"]["emitted_at"] or records[0]["stats"]["published_at"]
    times, cumulative, per_block = [], [], []
    total = 0
    for record in records:
        total += record["num_txs"]
        times.append(record["stats"]["published_at"] - t0)
        cumulative.append(total)
        latency = record["stats"]["latency_ms"]
        per_block.append(record["num_txs"] / (latency / 1e3) if latency > 0 else 0.0)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=False)
    ax1.plot(times, cumulative, lw=1.2)
    ax1.set_xlabel("time since first block [s]")
    ax1.set_ylabel("committed transactions")
    ax1.set_title("cumulative commit progress")
    ax1.grid(alpha=0.3)

    ax2.plot([r["block_num"] for r in records], per_block, ".", ms=3)
    ax2.set_xlabel("block number")
    ax2.set_ylabel("per-block rate [tx/s]")
    ax2.set_title("per-block validation rate")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _latency_figure(records: list[dict], path: Path) -> None:
    latencies = sorted(r["stats"]["latency_ms"] for r in records)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.hist(latencies, bins=min(50, max(5, len(latencies) // 4)), color="#4878cf")
    ax1.set_xlabel("block validation latency [ms]")
    ax1.set_ylabel("blocks")
    ax1.set_title("latency histogram")
    cdf_y = [(i + 1) / len(latencies) for i in range(len(latencies))]
    ax2.plot(latencies, cdf_y, lw=1.2)
    ax2.set_xlabel("block validation latency [ms]")
    ax2.set_ylabel("CDF")
    ax2.set_ylim(0, 1.02)
    ax2.grid(alpha=0.3)
    ax2.set_title("latency CDF")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(results_path, out_dir) -> list[Path]:
    """Write summary.csv plus throughput/latency PNGs next to it; returns the
    created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = metrics.read_jsonl(results_path)
    if not records:
        raise ValueError(f"no records in {results_path}")

    csv_path = out_dir / "summary.csv"
    metrics.write_summary_csv(csv_path, records)
    throughput_path = out_dir / "throughput.png"
    _throughput_figure(records, throughput_path)
    latency_path = out_dir / "latency.png"
    _latency_figure(records, latency_path)
    return [csv_path, throughput_path, latency_path]
