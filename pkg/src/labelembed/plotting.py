"""Figures for verification and benchmark reports (files only, no display)."""

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_campaign", "plot_bench"]


def _save(fig, path):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".png", dir=directory)
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=110, bbox_inches="tight", format="png")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)


def plot_campaign(result, path):
    """Left side against right side of the bound, one marker per trial.

    Lemma campaigns get a bar chart of checked draws per lemma instead.
    """
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    if result.name == "lemmas":
        tallies = {k: v for k, v in result.lemma_report.items() if isinstance(v, dict)}
        names = list(tallies)
        ax.barh(names, [tallies[k]["checked"] for k in names], color="tab:blue",
                label="checked")
        ax.barh(names, [tallies[k]["violated"] for k in names], color="tab:red",
                label="violated")
        ax.set_xlabel("draws")
        ax.legend(loc="lower right")
    else:
        rows = [r for r in result.records if r["status"] == "asserted"]
        rhs = [max(r["min_rhs"], 1e-12) for r in rows]
        lhs = [max(r["excess_01"], 1e-12) for r in rows]
        colors = ["tab:blue" if r["holds"] else "tab:red" for r in rows]
        ax.scatter(rhs, lhs, c=colors, s=14)
        if rows:
            lo = min(min(rhs), min(lhs))
            hi = max(max(rhs), max(lhs))
            ax.plot([lo, hi], [lo, hi], "k--", lw=0.8, label="excess = bound")
            ax.legend(loc="upper left")
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel("bound (grid minimum)")
        ax.set_ylabel("excess target risk")
    ax.set_title("%s: %d asserted, %d skipped" % (result.name, result.asserted,
                                                  result.skipped))
    _save(fig, path)


def plot_bench(rows, path):
    """Wall time against worker count for training and decoding."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    workers = [r["workers"] for r in rows]
    for key, label in (("train_seconds", "train"), ("decode_seconds", "decode")):
        ax.plot(workers, [r[key] for r in rows], marker="o", label=label)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("workers")
    ax.set_ylabel("wall time (s)")
    ax.legend()
    _save(fig, path)
