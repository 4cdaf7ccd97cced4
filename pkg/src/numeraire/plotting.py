"""SVG plots of wealth-ratio distributions and law-of-large-numbers curves.

Output files are byte-stable: no date metadata and a fixed SVG id salt.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_METADATA = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> str:
    with matplotlib.rc_context({"svg.hashsalt": "numeraire", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)
    return str(path)


def plot_ratio_histograms(ratios: dict[str, np.ndarray], path: str | Path) -> str:
    """Histogram of terminal wealth ratios per strategy label."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, r in ratios.items():
        ax.hist(np.asarray(r), bins=80, histtype="step", density=True, label=label)
    ax.axvline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("terminal wealth ratio")
    ax.set_ylabel("density")
    ax.legend(fontsize=7)
    return _save(fig, Path(path))


def plot_lln_curves(reports: dict, path: str | Path) -> str:
    """Tail probability against truncation level for each LLN report."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, rep in reports.items():
        for delta in rep.deltas:
            ax.plot(rep.levels, rep.probabilities[delta], marker="o",
                    label=f"{name}, delta={delta}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("truncation level n")
    ax.set_ylabel("tail probability")
    ax.legend(fontsize=7)
    return _save(fig, Path(path))
