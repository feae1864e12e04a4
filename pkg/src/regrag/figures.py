"""Figure rendering for evaluation reports.

Charts are written next to the delimited report output: one grouped bar chart
of quality metrics per mode, one bar chart of token consumption, and a
per-case hit strip for the single-mode view.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport  # noqa: E402

_METRICS = (
    ("hit_rate", "hit rate"),
    ("citation_precision", "precision"),
    ("citation_recall", "recall"),
    ("keyword_coverage", "keyword coverage"),
)


def save_eval_figures(reports: dict[str, EvalReport], out_dir: str | Path) -> list[Path]:
    """Render metric and token-consumption charts; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    modes = list(reports)
    aggs = [reports[m].aggregates for m in modes]

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(_METRICS)
    for i, (key, label) in enumerate(_METRICS):
        xs = [j + i * width for j in range(len(modes))]
        ax.bar(xs, [a[key] for a in aggs], width=width, label=label)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(modes))])
    ax.set_xticklabels(modes)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Retrieval quality by mode")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "eval_metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(modes, [a["tokens_total"] for a in aggs], color="#4477aa")
    ax.set_ylabel("context tokens consumed")
    ax.set_title("Token consumption by mode")
    fig.tight_layout()
    path = out_dir / "eval_tokens.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if len(modes) == 1:
        report = reports[modes[0]]
        if report.results:
            fig, ax = plt.subplots(figsize=(7, 2.5))
            ids = [r.case_id for r in report.results]
            hits = [1 if r.hit else 0 for r in report.results]
            colors = ["#228833" if h else "#cc3311" for h in hits]
            ax.bar(range(len(ids)), hits, color=colors)
            ax.set_xticks(range(len(ids)))
            ax.set_xticklabels(ids, rotation=45, ha="right", fontsize=7)
            ax.set_yticks([0, 1])
            ax.set_yticklabels(["miss", "hit"])
            ax.set_title(f"Per-case retrieval hits ({modes[0]})")
            fig.tight_layout()
            path = out_dir / "eval_hits.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written
