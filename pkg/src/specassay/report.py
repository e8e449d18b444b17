"""Evaluation reports: text tables, delimited/structured files, and figures.

The analytics themselves live in metrics; this module only aggregates run
files and renders the result as report.txt, metrics.csv, report.json, and a
set of PNG figures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import (  # noqa: E402
    OverlapReport,
    RunRecord,
    StabilityReport,
    confusion,
    consistent_correct_sets,
    mcc,
    overlap,
    p4,
    stability,
    token_summary,
)


@dataclass
class ApproachSummary:
    approach: str
    runs: int
    mean_mcc: float
    mean_p4: float
    mean_tokens_thousands: float | None
    per_run_mcc: list[float] = field(default_factory=list)
    per_run_p4: list[float] = field(default_factory=list)
    any_degenerate: bool = False
    stability: StabilityReport | None = None


@dataclass
class ReportData:
    approaches: list[ApproachSummary]
    overlaps: dict[str, OverlapReport] = field(default_factory=dict)  # per label


def summarize_runs(runs: list[RunRecord]) -> ReportData:
    """Aggregate run files: per-run metrics averaged per approach, stability
    for approaches with reruns, overlap when exactly three approaches exist."""
    by_approach: dict[str, list[RunRecord]] = {}
    for run in runs:
        by_approach.setdefault(run.approach, []).append(run)
    for group in by_approach.values():
        group.sort(key=lambda r: r.run_index)

    tokens = token_summary(runs)
    summaries = []
    for approach, group in sorted(by_approach.items()):
        mccs, p4s, degenerate = [], [], False
        for run in group:
            matrix = confusion(run)
            mv, pv = mcc(matrix), p4(matrix)
            degenerate = degenerate or mv.degenerate or pv.degenerate
            mccs.append(mv.value)
            p4s.append(pv.value)
        summaries.append(
            ApproachSummary(
                approach=approach,
                runs=len(group),
                mean_mcc=sum(mccs) / len(mccs),
                mean_p4=sum(p4s) / len(p4s),
                mean_tokens_thousands=tokens.get(approach),
                per_run_mcc=mccs,
                per_run_p4=p4s,
                any_degenerate=degenerate,
                stability=stability(group) if len(group) >= 2 else None,
            )
        )

    overlaps: dict[str, OverlapReport] = {}
    multi_run = {name: group for name, group in by_approach.items() if len(group) >= 2}
    if len(multi_run) == 3:
        sets_by_label: dict[str, dict[str, set]] = {"CORRECT": {}, "INCORRECT": {}}
        try:
            for name, group in sorted(multi_run.items()):
                per_label = consistent_correct_sets(group)
                for label in ("CORRECT", "INCORRECT"):
                    sets_by_label[label][name] = per_label[label]
            for label in ("CORRECT", "INCORRECT"):
                overlaps[label] = overlap(sets_by_label[label])
        except ValueError:
            overlaps = {}  # approaches cover different candidate sets; skip overlap
    return ReportData(approaches=summaries, overlaps=overlaps)


def _fmt(value: float | None, digits: int = 3) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def render_text(data: ReportData) -> str:
    lines = ["== Classification metrics (mean over runs) =="]
    header = f"{'approach':<18}{'runs':>5}{'MCC':>8}{'P4':>8}{'tokens(k)':>11}"
    lines.append(header)
    lines.append("-" * len(header))
    for s in data.approaches:
        flag = " *" if s.any_degenerate else ""
        lines.append(
            f"{s.approach:<18}{s.runs:>5}{_fmt(s.mean_mcc):>8}{_fmt(s.mean_p4):>8}"
            f"{_fmt(s.mean_tokens_thousands, 2):>11}{flag}"
        )
    if any(s.any_degenerate for s in data.approaches):
        lines.append("  * at least one run had a degenerate confusion matrix")

    if any(s.stability for s in data.approaches):
        lines.append("")
        lines.append("== Stability across reruns ==")
        lines.append(f"{'approach':<18}{'label':<12}{'consistent':>11}{'reachable':>10}{'ratio':>8}")
        for s in data.approaches:
            if s.stability is None:
                continue
            for label, ls in s.stability.per_label.items():
                lines.append(
                    f"{s.approach:<18}{label:<12}{ls.consistent:>11}{ls.reachable:>10}"
                    f"{_fmt(ls.ratio):>8}"
                )

    for label, report in data.overlaps.items():
        lines.append("")
        lines.append(f"== Consistently-correct overlap ({label}) ==")
        a, b, c = report.approaches
        rows = [
            (f"only {a}", report.region(a)),
            (f"only {b}", report.region(b)),
            (f"only {c}", report.region(c)),
            (f"{a} & {b}", report.region(a, b)),
            (f"{a} & {c}", report.region(a, c)),
            (f"{b} & {c}", report.region(b, c)),
            (f"{a} & {b} & {c}", report.region(a, b, c)),
        ]
        for name, count in rows:
            lines.append(f"  {name:<40}{count:>5}")
        lines.append(f"  {'union':<40}{report.union_size:>5}")
    return "\n".join(lines) + "\n"


def write_csv(data: ReportData, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["approach", "runs", "mean_mcc", "mean_p4", "mean_tokens_thousands", "degenerate"]
        )
        for s in data.approaches:
            writer.writerow(
                [
                    s.approach,
                    s.runs,
                    f"{s.mean_mcc:.6f}",
                    f"{s.mean_p4:.6f}",
                    "" if s.mean_tokens_thousands is None else f"{s.mean_tokens_thousands:.6f}",
                    int(s.any_degenerate),
                ]
            )


def _report_json_dict(data: ReportData) -> dict:
    return {
        "approaches": [
            {
                "approach": s.approach,
                "runs": s.runs,
                "mean_mcc": s.mean_mcc,
                "mean_p4": s.mean_p4,
                "per_run_mcc": s.per_run_mcc,
                "per_run_p4": s.per_run_p4,
                "mean_tokens_thousands": s.mean_tokens_thousands,
                "degenerate": s.any_degenerate,
                "stability": None
                if s.stability is None
                else {
                    label: {
                        "consistent": ls.consistent,
                        "reachable": ls.reachable,
                        "ratio": ls.ratio,
                    }
                    for label, ls in s.stability.per_label.items()
                },
            }
            for s in data.approaches
        ],
        "overlap": {
            label: {
                "approaches": list(report.approaches),
                "regions": {
                    "|".join(sorted(key)): count for key, count in sorted(
                        report.regions.items(), key=lambda kv: (len(kv[0]), sorted(kv[0]))
                    )
                },
            }
            for label, report in data.overlaps.items()
        },
    }


def write_json(data: ReportData, path: Path) -> None:
    path.write_text(
        json.dumps(_report_json_dict(data), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def render_figures(data: ReportData, fig_dir: Path) -> list[Path]:
    """Bar charts for metrics, token cost, and stability; returns written paths."""
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    names = [s.approach for s in data.approaches]
    if not names:
        return written

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    x = range(len(names))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [s.mean_mcc for s in data.approaches], width, label="MCC")
    ax.bar([i + width / 2 for i in x], [s.mean_p4 for s in data.approaches], width, label="P4")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylabel("mean over runs")
    ax.set_title("Classification metrics per approach")
    ax.legend()
    fig.tight_layout()
    path = fig_dir / "metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    token_values = [s.mean_tokens_thousands or 0.0 for s in data.approaches]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(names, token_values, color="tab:orange")
    ax.set_ylabel("mean tokens per candidate (thousands)")
    ax.set_title("Token cost per approach")
    plt.setp(ax.get_xticklabels(), rotation=15, ha="right")
    fig.tight_layout()
    path = fig_dir / "tokens.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    with_stability = [s for s in data.approaches if s.stability is not None]
    if with_stability:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        x = range(len(with_stability))
        for offset, label in ((-width / 2, "CORRECT"), (width / 2, "INCORRECT")):
            ratios = [
                (s.stability.per_label[label].ratio or 0.0) for s in with_stability  # type: ignore[union-attr]
            ]
            ax.bar([i + offset for i in x], ratios, width, label=f"{label} label")
        ax.set_xticks(list(x))
        ax.set_xticklabels([s.approach for s in with_stability], rotation=15, ha="right")
        ax.set_ylabel("consistent / reachable")
        ax.set_ylim(0, 1.05)
        ax.set_title("Stability across reruns")
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "stability.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def write_reports(runs: list[RunRecord], out_dir: str | Path) -> ReportData:
    """Write report.txt, metrics.csv, report.json, and figures/ under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = summarize_runs(runs)
    (out_dir / "report.txt").write_text(render_text(data), encoding="utf-8")
    write_csv(data, out_dir / "metrics.csv")
    write_json(data, out_dir / "report.json")
    render_figures(data, out_dir / "figures")
    return data
