"""Figures and summary tables rendered from a finished run directory."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pipeline import read_report  # noqa: E402

SUMMARY_COLUMNS = ("system", "dimension", "window_s", "delay_s", "mi_threshold", "n_features", "validation_ccc", "test_ccc")


def _num(v: str) -> float:
    return float(v) if v not in ("", "nan") else float("nan")


def summarize(rows: list[dict]) -> list[dict]:
    """One line per test row: the winning configuration and its two scores."""
    out = []
    for t in (r for r in rows if r["partition"] == "test"):
        key = ("system", "dimension", "window_s", "delay_s", "mi_threshold")
        val = next(r for r in rows if r["partition"] == "validation" and all(r[k] == t[k] for k in key))
        out.append({**{k: t[k] for k in key}, "n_features": t["n_features"], "validation_ccc": val["ccc"], "test_ccc": t["ccc"]})
    return out


def plot_delay_curves(rows: list[dict], path: Path) -> Path:
    curves: dict[tuple, list[tuple[float, float]]] = defaultdict(list)
    for r in rows:
        if r["partition"] == "validation":
            key = (r["system"], r["dimension"], r["window_s"], r["mi_threshold"])
            curves[key].append((_num(r["delay_s"]), _num(r["ccc"])))
    dims = sorted({k[1] for k in curves})
    fig, axes = plt.subplots(1, max(len(dims), 1), figsize=(6 * max(len(dims), 1), 4), squeeze=False)
    for ax, dim in zip(axes[0], dims):
        for key, pts in sorted(curves.items()):
            if key[1] != dim:
                continue
            d, c = zip(*sorted(pts))
            ax.plot(d, c, marker="o", ms=3, label=f"{key[0]} W={key[2]}s MI>={key[3]}")
        ax.set_title(f"{dim}: validation CCC by delay")
        ax.set_xlabel("delay (s)")
        ax.set_ylabel("CCC")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_best(summary: list[dict], path: Path) -> Path:
    labels = [f"{s['system']}\n{s['dimension']}" for s in summary]
    x = np.arange(len(summary))
    fig, ax = plt.subplots(figsize=(max(4, 1.4 * len(summary) + 2), 4))
    ax.bar(x - 0.2, [_num(s["validation_ccc"]) for s in summary], 0.4, label="validation")
    ax.bar(x + 0.2, [_num(s["test_ccc"]) for s in summary], 0.4, label="test")
    ax.set_xticks(x, labels, fontsize=8)
    ax.set_ylabel("CCC")
    ax.set_title("Best configuration per system")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_mi(files: list[Path], path: Path) -> Path | None:
    files = [f for f in files if f.exists()]
    if not files:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for f in files:
        with f.open(newline="", encoding="utf-8") as fh:
            mi = [float(r["mi"]) for r in csv.DictReader(fh)]
        ax.hist(mi, bins=40, histtype="step", label=f.stem)
    ax.set_xlabel("MI with target (nats)")
    ax.set_ylabel("features")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training(log_path: Path, tags: list[str], path: Path) -> Path | None:
    if not log_path.exists():
        return None
    logs = {}
    with log_path.open(encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            logs[rec["tag"]] = rec
    chosen = [t for t in tags if t in logs]
    if not chosen:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for t in chosen:
        rec = logs[t]
        epochs = np.arange(1, len(rec["val_sse"]) + 1)
        ax.plot(epochs, rec["train_sse"], label=f"{t} train")
        ax.plot(epochs, rec["val_sse"], "--", label=f"{t} validation")
        ax.axvline(rec["best_epoch"], color="grey", lw=0.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("SSE (standardized)")
    ax.set_yscale("log")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(run_dir: str | Path, out: str | Path | None = None) -> list[Path]:
    """Write summary.csv and PNG figures for the run in ``run_dir``."""
    run_dir = Path(run_dir)
    out = Path(out or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = read_report(run_dir / "report.csv")
    summary = summarize(rows)
    written = []
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    written.append(out / "summary.csv")
    written.append(plot_delay_curves(rows, out / "ccc_vs_delay.png"))
    if summary:
        written.append(plot_best(summary, out / "best_per_system.png"))
    stems = [f"{s['system']}__{s['dimension']}__W{s['window_s']}__D{s['delay_s']}" for s in summary]
    tags = [f"{stem}__T{s['mi_threshold']}" for stem, s in zip(stems, summary)]
    for p in (
        plot_mi([run_dir / "mi" / f"{stem}.csv" for stem in stems], out / "mi_distribution.png"),
        plot_training(run_dir / "training.jsonl", tags, out / "training_curves.png"),
    ):
        if p is not None:
            written.append(p)
    return written
