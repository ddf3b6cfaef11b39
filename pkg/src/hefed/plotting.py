"""Figures for bench reports, rendered off-screen to PNG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_phases(reports, path) -> Path:
    """Grouped bars of the four timed phases per term, on a log axis."""
    phases = [
        ("plaintext_query_s", "plaintext query"),
        ("encrypted_query_s", "encrypted query"),
        ("ingest_s", "ingest"),
        ("decrypt_s", "field decryption"),
    ]
    labels = [f"{r.term}\n{r.records}x{r.agencies}" for r in reports]
    x = np.arange(len(reports))
    width = 0.8 / len(phases)
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(reports)), 4))
    for i, (attr, name) in enumerate(phases):
        vals = [max(getattr(r, attr), 1e-7) for r in reports]
        ax.bar(x + (i - 1.5) * width, vals, width, label=name)
    ax.set_yscale("log")
    ax.set_ylabel("seconds (median)")
    ax.set_xticks(x, labels, fontsize=8)
    ax.legend(fontsize=8, loc="upper left", bbox_to_anchor=(1.0, 1.0))
    ax.set_title("search latency by phase")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scaling(reports, path) -> Path | None:
    """Encrypted query time against total record count; needs two or more sizes."""
    totals = sorted({r.records * r.agencies for r in reports})
    if len(totals) < 2:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for term in sorted({r.term for r in reports}):
        pts = sorted((r.records * r.agencies, r.encrypted_query_s) for r in reports if r.term == term)
        ax.plot(*zip(*pts), marker="o", label=term)
    ax.set_xlabel("records searched")
    ax.set_ylabel("encrypted query seconds")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_figures(reports, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [plot_phases(reports, out / "bench_phases.png")]
    scaling = plot_scaling(reports, out / "bench_scaling.png")
    if scaling is not None:
        written.append(scaling)
    return written
