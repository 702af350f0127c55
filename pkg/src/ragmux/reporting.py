"""Report rendering: text tables, delimiter-separated series for external
plotting, and matplotlib figures written next to them.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport
from .simtrain import TrainReport

_TABLE_COLUMNS = ("dataset", "n", "em", "f1", "turns", "cost",
                  "passage%", "graph%", "hybrid%")


def summary_table(reports: Sequence[EvalReport]) -> str:
    rows = []
    for report in reports:
        agg = report.aggregates
        fr = agg["mode_fractions"]
        rows.append((report.dataset, str(agg["n"]), f"{agg['mean_em']:.3f}",
                     f"{agg['mean_f1']:.3f}", f"{agg['mean_turns']:.2f}",
                     f"{agg['mean_cost_unit']:.2f}", f"{100 * fr['passage']:.0f}",
                     f"{100 * fr['graph']:.0f}", f"{100 * fr['hybrid']:.0f}"))
    widths = [max(len(col), *(len(r[i]) for r in rows)) if rows else len(col)
              for i, col in enumerate(_TABLE_COLUMNS)]
    def fmt(values):
        return "  ".join(v.ljust(w) for v, w in zip(values, widths)).rstrip()
    lines = [fmt(_TABLE_COLUMNS), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def write_series(report: EvalReport, out_dir: str | Path) -> Path:
    """Per-question turn/score series as CSV, one file per dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{report.dataset}_series.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["question_id", "em", "f1", "retrieval_turns", "cost_unit"])
        for row in report.rows:
            writer.writerow([row.question_id, row.em, f"{row.f1:.6f}",
                             row.retrieval_turns, f"{row.cost_unit:.6f}"])
    return path


def render_benchmark_figures(reports: Sequence[EvalReport], out_dir: str | Path,
                             ) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    names = [r.dataset for r in reports]
    ems = [r.aggregates["mean_em"] for r in reports]
    f1s = [r.aggregates["mean_f1"] for r in reports]
    turns = [r.aggregates["mean_turns"] for r in reports]

    fig, (ax_scores, ax_turns) = plt.subplots(1, 2, figsize=(10, 4))
    x = range(len(names))
    ax_scores.bar([i - 0.2 for i in x], ems, width=0.4, label="EM")
    ax_scores.bar([i + 0.2 for i in x], f1s, width=0.4, label="F1")
    ax_scores.set_xticks(list(x), names, rotation=20)
    ax_scores.set_ylim(0, 1.05)
    ax_scores.set_title("Answer quality")
    ax_scores.legend()
    ax_turns.bar(list(x), turns, width=0.5, color="tab:orange")
    ax_turns.set_xticks(list(x), names, rotation=20)
    ax_turns.set_title("Mean retrieval turns")
    fig.tight_layout()
    path = out / "benchmark_summary.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    for report in reports:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        counts: dict[int, int] = {}
        for row in report.rows:
            counts[row.retrieval_turns] = counts.get(row.retrieval_turns, 0) + 1
        keys = sorted(counts)
        ax.bar(keys, [counts[k] for k in keys], width=0.6)
        ax.set_xlabel("retrieval turns")
        ax.set_ylabel("questions")
        ax.set_title(f"{report.dataset}: retrieval turns")
        fig.tight_layout()
        path = out / f"{report.dataset}_turns.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_training_figures(reports: Sequence[tuple[int, TrainReport]],
                            out_dir: str | Path) -> Path:
    """Cost and accuracy curves per seed with the stage boundary marked."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig, (ax_cost, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    boundary = None
    for seed, report in reports:
        updates = [row.update for row in report.rows]
        ax_cost.plot(updates, [row.mean_cost for row in report.rows],
                     alpha=0.7, label=f"seed {seed}")
        ax_acc.plot(updates, [row.accuracy for row in report.rows], alpha=0.7)
        if report.stage_boundary is not None:
            boundary = report.stage_boundary
    for ax, title in ((ax_cost, "mean retrieval cost"), (ax_acc, "accuracy")):
        if boundary is not None:
            ax.axvline(boundary - 0.5, color="gray", linestyle="--", linewidth=1)
        ax.set_xlabel("update")
        ax.set_title(title)
    if len(reports) <= 10:
        ax_cost.legend(fontsize=7)
    fig.tight_layout()
    path = out / "training_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
