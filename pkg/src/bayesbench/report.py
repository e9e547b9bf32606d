"""Self-contained markdown report for one fit."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .pipeline import FitRequest, summary_rows
from .plots import cpu_boxplot, density_plot, rank_plot, trace_plot
from .posterior import rank_posterior, table_csv, table_markdown
from .sampler import PosteriorDraws, summary_diagnostics

__all__ = ["build_report", "headline_parameters"]

MAX_PANELS = 12


def headline_parameters(names: list[str]) -> list[str]:
    """Parameters worth plotting: everything except benchmark effects,
    capped at ``MAX_PANELS``."""
    keep = [n for n in names if not n.startswith("a_bm[")]
    return keep[:MAX_PANELS]


def build_report(request: FitRequest, draws: PosteriorDraws, model, out_dir, seed: int = 0) -> Path:
    """Write ``report.md`` plus its figures and tables into ``out_dir``.

    Regenerating from the same inputs produces identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = headline_parameters(draws.names)
    diag = summary_diagnostics(draws)

    lines = [f"# {request.model} fit", ""]
    lines += [
        f"- chains: {draws.n_chains}, draws per chain: {draws.n_iterations}",
        f"- max R-hat: {diag['max_rhat']:.4f}",
        f"- min ESS: {diag['min_ess']:.0f}",
        f"- divergent transitions: {diag['divergences']}",
        f"- converged: {'yes' if diag['converged'] else 'no'}",
        "",
    ]
    if request.filters:
        lines += ["Filters: " + ", ".join(f"{k}={v}" for k, v in sorted(request.filters.items())), ""]

    trace_plot(draws, names, out / "trace.svg")
    density_plot(draws, names, out / "density.svg")
    lines += ["## Traces", "", "![traces](trace.svg)", "", "## Posterior densities", "",
              "![densities](density.svg)", ""]

    for name, rows in summary_rows(request.model, draws).items():
        (out / f"{name}.csv").write_text(table_csv(rows))
        title = {"summary": "Parameter summary", "hazard": "Average FEval and hazard ratio"}.get(name, name)
        lines += [f"## {title}", "", table_markdown(rows)]

    if request.model in ("bradley_terry", "davidson"):
        ranks = rank_posterior(draws, seed=seed)
        rows = ranks.rows()
        (out / "ranks.csv").write_text(table_csv(rows))
        rank_plot(ranks, out / "ranks.svg")
        lines += ["## Ranks", "", table_markdown(rows), "![ranks](ranks.svg)", ""]

    if request.model == "student_t" and model is not None:
        data = model.data
        values = {a: np.asarray(data.y)[data.alg_idx == i] for i, a in enumerate(data.algorithms)}
        cpu_boxplot(values, out / "cpu.svg")
        lines += ["## CPU time per evaluation", "", "![cpu](cpu.svg)", ""]

    path = out / "report.md"
    path.write_text("\n".join(lines))
    return path
