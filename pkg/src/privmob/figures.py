"""Render utility and attack curves next to the delimited report output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiment import RunResult, summarize

_STYLE = {
    "direct": dict(color="tab:blue", marker="o"),
    "threshold": dict(color="tab:orange", marker="s"),
    "static-hybrid": dict(color="tab:green", marker="^"),
    "dynamic-hybrid": dict(color="tab:red", marker="d"),
}

_LABELS = {
    "mae": "mean absolute error",
    "mre": "mean relative error",
    "attack_accuracy": "trajectory recovery accuracy",
}


def _curves(rows: list[dict], metric: str) -> dict[str, tuple[list[float], list[float]]]:
    out: dict[str, tuple[list[float], list[float]]] = {}
    for row in rows:
        if row[metric] is None:
            continue
        xs, ys = out.setdefault(row["scheme"], ([], []))
        xs.append(row["epsilon"])
        ys.append(row[metric])
    return out


def render_figures(runs: list[RunResult], out_dir: str | Path) -> list[Path]:
    """One PNG per metric with data, written alongside the CSV reports."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(runs)

    written: list[Path] = []
    for metric in ("mae", "mre", "attack_accuracy"):
        curves = _curves(rows, metric)
        if not curves:
            continue
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for scheme, (xs, ys) in curves.items():
            style = _STYLE.get(scheme, {})
            ax.plot(xs, ys, label=scheme, **style)
        ax.set_xlabel("epsilon")
        ax.set_ylabel(_LABELS[metric])
        if metric == "attack_accuracy":
            ax.set_ylim(0.0, 1.0)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out / f"{metric}_vs_epsilon.png"
        # Fixed metadata keeps reruns byte-identical.
        fig.savefig(path, dpi=150, metadata={"Software": "privmob"})
        plt.close(fig)
        written.append(path)
    return written
