"""Figure rendering for the CLI report paths.

Every writer targets a file (Agg backend, no display) and sits next to the
delimited output the corresponding subcommand produces.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .oracle import BalancednessReport  # noqa: E402


def save_balancedness_figure(report: BalancednessReport, path: str, bound: Optional[float] = None) -> None:
    """Per-edge ratio bars with confidence whiskers and the minimum marked."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.18 * len(report.edges) + 2.0), 3.2))
    xs = range(len(report.edges))
    ys = [float(r) for r in report.ratios]
    err = [float(h) for h in report.ci_half_widths] if report.ci_half_widths else None
    ax.bar(xs, ys, yerr=err, color="#4878a8", ecolor="#333333", capsize=2)
    ax.axhline(float(report.minimum), color="#a84848", lw=1, ls="--",
               label=f"min = {float(report.minimum):.4f}")
    if bound is not None:
        ax.axhline(bound, color="#48a868", lw=1, ls=":", label=f"bound = {bound:.4f}")
    ax.set_xlabel("edge id" if len(report.edges) <= 30 else "edge index")
    if len(report.edges) <= 30:
        ax.set_xticks(list(xs), [str(e) for e in report.edges])
    ax.set_ylabel("retention / x")
    ax.set_title(f"{report.scheme} balancedness ({report.mode})")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curve_figure(
    bs: Sequence[float], series: dict[str, Sequence[float]], path: str, ylabel: str
) -> None:
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    for label, vals in series.items():
        ax.plot(bs, vals, marker="o", ms=3, lw=1, label=label)
    ax.set_xlabel("b")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_limit_figure(
    ns: Sequence[int], vals: Sequence[float], asymptote: float, path: str
) -> None:
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.plot(ns, vals, marker="o", ms=3, lw=1, label="hard-instance expression")
    ax.axhline(asymptote, color="#a84848", ls="--", lw=1,
               label=f"limit = {asymptote:.4f}")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("expected reciprocal")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_verify_figure(rows: Sequence[dict], path: str) -> None:
    """Pass/fail counts per check name."""
    names = sorted({r["check"] for r in rows})
    passed = [sum(1 for r in rows if r["check"] == n and r["passed"]) for n in names]
    failed = [sum(1 for r in rows if r["check"] == n and not r["passed"]) for n in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(names) + 2.0), 3.2))
    xs = range(len(names))
    ax.bar(xs, passed, color="#48a868", label="pass")
    ax.bar(xs, failed, bottom=passed, color="#a84848", label="fail")
    ax.set_xticks(list(xs), names, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("checks")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_pipeline_figure(result: dict, path: str) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    labels = ["rounded mean", "bound x F(x)"]
    vals = [result["rounded_mean"], result["bound"] * result["multilinear_value"]]
    errs = [3 * result["rounded_stderr"], 3 * result["bound"] * result["multilinear_stderr"]]
    ax.bar(range(2), vals, yerr=errs, color=["#4878a8", "#48a868"], capsize=4)
    ax.set_xticks([0, 1], labels)
    ax.set_ylabel("value")
    ax.set_title(f"{result['scheme']} rounding vs guarantee")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
