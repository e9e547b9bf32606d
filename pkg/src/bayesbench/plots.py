"""SVG figures: traces, posterior densities with HPD shading, rank bars,
CPU-time boxplots and predictive-check histograms.

Output is deterministic: the SVG hash salt is fixed and no date is embedded.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .posterior import RankSummary, hpd_interval  # noqa: E402

__all__ = ["trace_plot", "density_plot", "rank_plot", "cpu_boxplot", "ppc_plot"]

_RC = {"svg.hashsalt": "bayesbench", "svg.fonttype": "none", "font.size": 8}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _grid(n: int, ncols: int = 3):
    ncols = min(ncols, n)
    nrows = int(np.ceil(n / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.2 * nrows), squeeze=False)
    for ax in axes.ravel()[n:]:
        ax.set_visible(False)
    return fig, axes.ravel()


def trace_plot(draws, names, path) -> None:
    """One panel per parameter with every chain overlaid."""
    with plt.rc_context(_RC):
        fig, axes = _grid(len(names))
        for ax, name in zip(axes, names):
            for c, chain in enumerate(draws.param(name)):
                ax.plot(chain, lw=0.4, alpha=0.8, label=f"chain {c + 1}")
            ax.set_title(name)
            ax.set_xlabel("iteration")
        _save(fig, path)


def density_plot(draws, names, path, mass: float = 0.95) -> None:
    """Histogram density per parameter with the HPD region shaded."""
    with plt.rc_context(_RC):
        fig, axes = _grid(len(names))
        for ax, name in zip(axes, names):
            x = draws.flat(name)
            lo, hi = hpd_interval(x, mass)
            ax.hist(x, bins=50, density=True, color="0.6")
            ax.axvspan(lo, hi, color="tab:blue", alpha=0.2, label=f"{mass:.0%} HPD")
            ax.axvline(x.mean(), color="tab:red", lw=1)
            ax.set_title(name)
        axes[0].legend(loc="upper right")
        _save(fig, path)


def rank_plot(ranks: RankSummary, path) -> None:
    """Stacked bars of each algorithm's posterior rank distribution."""
    with plt.rc_context(_RC):
        k = len(ranks.algorithms)
        order = np.lexsort((ranks.variance, ranks.median))
        fig, ax = plt.subplots(figsize=(6, 0.4 * k + 1.2))
        left = np.zeros(k)
        cmap = plt.get_cmap("viridis", k)
        labels = [ranks.algorithms[i] for i in order]
        dist = ranks.distribution[order]
        for r in range(k):
            ax.barh(labels, dist[:, r], left=left, color=cmap(r), label=f"rank {r + 1}")
            left += dist[:, r]
        ax.invert_yaxis()
        ax.set_xlabel("posterior probability")
        ax.legend(ncol=min(k, 4), fontsize=6, loc="lower right")
        _save(fig, path)


def cpu_boxplot(values: dict[str, np.ndarray], path) -> None:
    """CPU seconds per evaluation (x 10^4) by algorithm."""
    with plt.rc_context(_RC):
        names = sorted(values)
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.boxplot([values[n] for n in names], tick_labels=names)
        ax.set_ylabel("CPU s / evaluation x 1e4")
        ax.tick_params(axis="x", rotation=45)
        _save(fig, path)


def ppc_plot(report, path) -> None:
    """Replicated statistic histograms with the observed value marked."""
    with plt.rc_context(_RC):
        fig, axes = _grid(len(report.stats))
        for ax, st in zip(axes, report.stats):
            ax.hist(st.replicated, bins=30, color="0.6")
            ax.axvline(st.observed, color="tab:red", lw=1.2)
            ax.set_title(f"{st.name} (p = {st.tail_prob:.2f})")
        _save(fig, path)
