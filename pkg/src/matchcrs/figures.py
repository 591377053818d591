"""Figure rendering for CLI reports (PNG files next to the delimited output)."""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, outdir, name):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def balancedness_figure(report, outdir, guarantee=None, name="balancedness.png"):
    rows = report["per_edge"]
    xs = [r["edge"] for r in rows]
    est = [r.get("estimate", r.get("conditional")) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    if "ci_low" in rows[0]:
        lo = [e - r["ci_low"] for e, r in zip(est, rows)]
        hi = [r["ci_high"] - e for e, r in zip(est, rows)]
        ax.errorbar(xs, est, yerr=[lo, hi], fmt="o", ms=4, capsize=3,
                    label="estimate (99% CI)")
    else:
        ax.plot(xs, est, "o", ms=4, label="exact")
    if guarantee is not None:
        ax.axhline(guarantee, color="crimson", ls="--", lw=1,
                   label=f"guarantee {guarantee:.4f}")
    ax.set_xlabel("edge id")
    ax.set_ylabel("Pr[selected | present]")
    ax.set_title(f"per-edge balancedness ({report.get('scheme', '')})")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, outdir, name)


def gw_figure(report, outdir, name="gw_experiment.png"):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar([0], [report["estimate"]],
                yerr=[[report["estimate"] - report["ci_low"]],
                      [report["ci_high"] - report["estimate"]]],
                fmt="o", capsize=5, label="estimate (99% CI)")
    ax.axhline(report["target"], color="crimson", ls="--", lw=1,
               label=f"target {report['target']:.6f}")
    ax.set_xticks([])
    ax.set_ylabel("Pr[root edge matched]")
    ax.set_title(f"random-tree experiment, {report['kept']:,} kept trees")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, outdir, name)


def density_figure(report, outdir, name="density.png"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(report["ks_sizes"], bins=25, alpha=0.6, label="greedy degree-1")
    if "max_sizes" in report:
        ax.hist(report["max_sizes"], bins=25, alpha=0.6, label="maximum")
    ax.set_xlabel("matching size")
    ax.set_ylabel("trials")
    ax.set_title(f"matching sizes over {report['trials']} samples")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, outdir, name)


def lem_bound_figure(report, outdir, name="lem_bound.png"):
    hist = report.get("margin_histogram")
    fig, ax = plt.subplots(figsize=(6, 4))
    if hist:
        edges = hist["bin_edges"]
        widths = [b - a for a, b in zip(edges, edges[1:])]
        ax.bar(edges[:-1], hist["counts"], width=widths, align="edge")
    ax.axvline(0.0, color="crimson", ls="--", lw=1)
    ax.set_xlabel("inequality margin (LHS - RHS)")
    ax.set_ylabel("samples")
    ax.set_title(f"{report['samples']} weight vectors, "
                 f"{report['violations']} violations")
    return _save(fig, outdir, name)


def conjecture_figure(report, outdir, name="conjecture_probe.png"):
    rows = report["results"]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(rows))
    est = [r["mean"] for r in rows]
    lo = [r["mean"] - r["ci_low"] for r in rows]
    hi = [r["ci_high"] - r["mean"] for r in rows]
    ax.errorbar(xs, est, yerr=[lo, hi], fmt="o", ms=4, capsize=3)
    ax.axhline(rows[0]["mean"], color="crimson", ls="--", lw=1,
               label="uniform matrix")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r["label"] for r in rows], rotation=45, fontsize=7)
    ax.set_ylabel("E[max matching size]")
    ax.set_title("expected maximum matching per matrix")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, outdir, name)


def allocation_figure(report, outdir, name="allocation.png"):
    hist = report.get("welfare_histogram")
    fig, ax = plt.subplots(figsize=(6, 4))
    if hist:
        edges = hist["bin_edges"]
        widths = [b - a for a, b in zip(edges, edges[1:])]
        ax.bar(edges[:-1], hist["counts"], width=widths, align="edge", alpha=0.7)
    ax.axvline(report["lp_objective"], color="black", ls="-", lw=1, label="LP optimum")
    ax.axvline(0.509 * report["lp_objective"], color="crimson", ls="--", lw=1,
               label="0.509 x LP")
    ax.axvline(report["mean_welfare"], color="seagreen", ls=":", lw=2, label="mean")
    ax.set_xlabel("realized welfare")
    ax.set_ylabel("roundings")
    ax.set_title(f"rounded welfare over {report['roundings']} trials")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, outdir, name)


def sample_figure(report, outdir, name="sample.png"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(report["sizes"], bins=25)
    ax.set_xlabel("|realized edge set|")
    ax.set_ylabel("trials")
    ax.set_title(f"realized set sizes over {report['trials']} samples")
    return _save(fig, outdir, name)
