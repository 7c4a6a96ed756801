"""Report output: aligned text tables, tab-delimited files, and figures."""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import LabelEvalReport, QaEvalReport


def label_report_table(report: LabelEvalReport) -> str:
    header = f"{'Label':<16}{'P':>8}{'R':>8}{'F1':>8}"
    lines = [header, "-" * len(header)]
    for label, (p, r, f1) in report.per_label.items():
        lines.append(f"{label:<16}{100 * p:>8.1f}{100 * r:>8.1f}{100 * f1:>8.1f}")
    lines.append(f"{'aggregate':<16}{'':>8}{'':>8}{100 * report.aggregate_f1:>8.1f}")
    return "\n".join(lines)


def label_report_tsv(report: LabelEvalReport) -> str:
    lines = ["label\tprecision\trecall\tf1"]
    for label, (p, r, f1) in report.per_label.items():
        lines.append(f"{label}\t{p:.6f}\t{r:.6f}\t{f1:.6f}")
    lines.append(f"aggregate\t\t\t{report.aggregate_f1:.6f}")
    return "\n".join(lines) + "\n"


def qa_report_table(report: QaEvalReport) -> str:
    header = f"{'Acc@3':>8}{'MRR':>8}{'Recall':>8}{'Attempted':>11}{'Total':>8}"
    row = (
        f"{100 * report.acc_at_3:>8.1f}{report.mrr:>8.2f}"
        f"{100 * report.recall:>8.1f}{report.attempted:>11}{report.total:>8}"
    )
    return header + "\n" + row


def qa_report_tsv(report: QaEvalReport) -> str:
    return (
        "acc@3\tmrr\trecall\tattempted\ttotal\n"
        f"{report.acc_at_3:.6f}\t{report.mrr:.6f}\t{report.recall:.6f}"
        f"\t{report.attempted}\t{report.total}\n"
    )


def write_label_report(report: LabelEvalReport, out_prefix: str):
    """Write <prefix>.json, <prefix>.tsv, and <prefix>.png side by side."""
    with open(out_prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    with open(out_prefix + ".tsv", "w", encoding="utf-8") as fh:
        fh.write(label_report_tsv(report))
    render_label_report_figure(report, out_prefix + ".png")


def write_qa_report(report: QaEvalReport, out_prefix: str):
    with open(out_prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    with open(out_prefix + ".tsv", "w", encoding="utf-8") as fh:
        fh.write(qa_report_tsv(report))
    render_qa_report_figure(report, out_prefix + ".png")


def render_label_report_figure(report: LabelEvalReport, path: str):
    labels = list(report.per_label)
    x = range(len(labels))
    width = 0.27
    fig, ax = plt.subplots(figsize=(1.8 * max(len(labels), 3) + 2, 4))
    for off, (name, idx) in enumerate(
        [("precision", 0), ("recall", 1), ("F1", 2)]
    ):
        vals = [100 * report.per_label[l][idx] for l in labels]
        ax.bar([i + (off - 1) * width for i in x], vals, width, label=name)
    ax.axhline(100 * report.aggregate_f1, color="gray", linestyle="--", linewidth=1,
               label=f"aggregate F1 = {100 * report.aggregate_f1:.1f}")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 105)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_qa_report_figure(report: QaEvalReport, path: str):
    names = ["Acc@3", "MRR", "Recall"]
    vals = [report.acc_at_3, report.mrr, report.recall]
    fig, ax = plt.subplots(figsize=(5, 4))
    bars = ax.bar(names, vals, color=["#4878d0", "#ee854a", "#6acc64"])
    for bar, v in zip(bars, vals):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 0.02, f"{v:.2f}",
                ha="center", va="bottom")
    ax.set_ylim(0, 1.1)
    ax.set_title(f"{report.attempted}/{report.total} questions attempted")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
