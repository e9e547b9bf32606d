"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 convergence failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, harness
from .harness import ExperimentConfig, SchemaError
from .pipeline import FitRequest, fit, load_fit, summary_rows, write_fit, write_json

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

PAIR_MODELS = ("bradley_terry", "davidson")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- helpers -----------------------------------------------------------------


def resolve_seed(flag: int | None, fallback: int = 0) -> int:
    """``--seed`` wins, then ``BAYESBENCH_SEED``, then ``fallback``."""
    if flag is not None:
        return flag
    env = os.environ.get("BAYESBENCH_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"BAYESBENCH_SEED must be an integer, got {env!r}", EXIT_VALIDATION) from None
    return fallback


def parse_filters(items: list[str] | None) -> dict:
    out: dict[str, list[str]] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key or not value:
            raise CliError(f"--filter expects key=value, got {item!r}", EXIT_VALIDATION)
        out.setdefault(key.strip(), []).extend(v for v in value.split(",") if v)
    return out


def _claim_output(path: Path, force: bool, is_dir: bool) -> None:
    """Refuse to clobber existing output unless ``--force`` was given."""
    if path.exists():
        occupied = any(path.iterdir()) if path.is_dir() else True
        if occupied and not force:
            raise CliError(f"{path} already exists; pass --force to overwrite", EXIT_IO)
    if is_dir:
        path.mkdir(parents=True, exist_ok=True)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", EXIT_VALIDATION) from None


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "bayesbench": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- subcommands -------------------------------------------------------------


def cmd_bench(args) -> int:
    if not args.config:
        raise CliError("bench needs --config", EXIT_VALIDATION)
    data = _load_json(args.config)
    data["master_seed"] = resolve_seed(args.seed, data.get("master_seed", 0))
    config = ExperimentConfig.from_dict(data)
    out = Path(args.out or "dataset.csv")
    _claim_output(out, args.force, is_dir=False)
    t0 = time.perf_counter()
    rows = harness.run_experiment(config, jobs=args.jobs)
    harness.write_csv(rows, out)
    manifest = {
        "command": "bench",
        "config": config.to_dict(),
        "seed": config.master_seed,
        "rows": len(rows),
        "sha256": _sha256(out),
        "timing": config.timing,
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
        "versions": _versions(),
    }
    write_json(out.with_name(out.name + ".manifest.json"), manifest)
    _say(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def _fit_request(args) -> FitRequest:
    data = _load_json(args.config) if args.config else {}
    if args.model:
        data["model"] = args.model
    if args.dataset:
        data["dataset"] = args.dataset
    if args.epsilon is not None:
        data["epsilon"] = args.epsilon
    if args.filter:
        filters = dict(data.get("filters") or {})
        filters.update(parse_filters(args.filter))
        data["filters"] = filters
    sampler = dict(data.get("sampler") or {})
    for flag, key in (("chains", "chains"), ("warmup", "warmup"), ("iters", "iterations")):
        value = getattr(args, flag)
        if value is not None:
            sampler[key] = value
    data["sampler"] = sampler
    if getattr(args, "prior_scale", None) is not None:
        data["prior_scale"] = args.prior_scale
    data["seed"] = resolve_seed(args.seed, data.get("seed", 0))
    if "model" not in data:
        raise CliError("fit needs a model name (positional or in --config)", EXIT_VALIDATION)
    return FitRequest.from_dict(data)


def cmd_fit(args) -> int:
    request = _fit_request(args)
    out = Path(args.out or f"fit_{request.model}")
    _claim_output(out, args.force, is_dir=True)
    result = fit(request, jobs=args.jobs)
    write_fit(result, out)
    d = result.diagnostics
    _say(
        f"{request.model}: max R-hat {d['max_rhat']:.4f}, min ESS {d['min_ess']:.0f}, "
        f"divergences {d['divergences']} -> {out}"
    )
    if not result.converged:
        raise CliError(f"fit did not converge; diagnostics kept in {out / 'diagnostics.json'}", EXIT_CONVERGENCE)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    from .sampler import PosteriorDraws, summary_diagnostics

    path = Path(args.fit_dir) / "draws.csv"
    if not path.exists():
        raise CliError(f"fit artifact missing: {path}", EXIT_IO)
    draws = PosteriorDraws.from_csv(path)
    if draws.n_chains < 2:
        raise CliError("diagnostics need at least 2 chains", EXIT_VALIDATION)
    diag = summary_diagnostics(draws)
    rows = [{"Parameter": n, "R-hat": diag["rhat"][n], "ESS": diag["ess"][n]} for n in draws.names]
    from .posterior import table_markdown

    text = table_markdown(rows, digits=3)
    text += f"\nmax R-hat {diag['max_rhat']:.4f}; min ESS {diag['min_ess']:.0f}; divergences {diag['divergences']}\n"
    if args.out:
        out = Path(args.out)
        _claim_output(out, args.force, is_dir=False)
        write_json(out, diag)
    print(text, end="")
    return EXIT_OK if diag["converged"] else EXIT_CONVERGENCE


def cmd_summarize(args) -> int:
    from .posterior import table_csv, table_markdown

    request, draws, _ = load_fit(args.fit_dir, need_model=False)
    tables = summary_rows(request.model, draws)
    out = Path(args.out) if args.out else None
    if out:
        _claim_output(out, args.force, is_dir=True)
    for name, rows in tables.items():
        if out:
            (out / f"{name}.csv").write_text(table_csv(rows))
            (out / f"{name}.md").write_text(table_markdown(rows))
        print(f"## {name}\n\n{table_markdown(rows)}")
    return EXIT_OK


def _rank_tables(draws, seed: int, n_samples: int):
    from .posterior import rank_posterior

    ranks = rank_posterior(draws, n_samples=n_samples, seed=seed)
    return ranks, ranks.rows()


def cmd_rank(args) -> int:
    from .posterior import table_csv, table_markdown

    request, draws, _ = load_fit(args.fit_dir, need_model=False)
    if request.model not in PAIR_MODELS:
        raise CliError(f"rank needs a paired-comparison fit, got {request.model}", EXIT_VALIDATION)
    ranks, rows = _rank_tables(draws, resolve_seed(args.seed, request.seed), args.samples)
    if args.out:
        out = Path(args.out)
        _claim_output(out, args.force, is_dir=True)
        (out / "ranks.csv").write_text(table_csv(rows))
        (out / "ranks.md").write_text(table_markdown(rows))
    print(table_markdown(rows), end="")
    return EXIT_OK


def cmd_ppc(args) -> int:
    from .modelcheck import posterior_predictive_check
    from .plots import ppc_plot
    from .posterior import table_csv, table_markdown

    request, draws, model = load_fit(args.fit_dir)
    report = posterior_predictive_check(model, draws, n_rep=args.reps, seed=resolve_seed(args.seed, request.seed))
    rows = report.rows()
    if args.out:
        out = Path(args.out)
        _claim_output(out, args.force, is_dir=True)
        (out / "ppc.csv").write_text(table_csv(rows))
        (out / "ppc.md").write_text(table_markdown(rows))
        ppc_plot(report, out / "ppc.svg")
    print(table_markdown(rows), end="")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    from .modelcheck import sensitivity_analysis
    from .pipeline import prepare_model_input, sampler_config
    from .models import MODELS
    from .posterior import table_csv, table_markdown

    request = _fit_request(args)
    try:
        mults = [float(m) for m in args.multipliers.split(",") if m]
    except ValueError:
        raise CliError(f"--multipliers must be comma-separated numbers, got {args.multipliers!r}",
                       EXIT_VALIDATION) from None
    out = Path(args.out or f"sensitivity_{request.model}")
    _claim_output(out, args.force, is_dir=True)
    data = prepare_model_input(request.model, harness.read_csv(request.dataset), request.epsilon,
                               request.filters, request.tie_mode, request.seed)
    cfg = sampler_config(MODELS[request.model], request.sampler, request.seed)
    report = sensitivity_analysis(request.model, data, mults, cfg, jobs=args.jobs)
    rows = report.rows()
    (out / "sensitivity.csv").write_text(table_csv(rows))
    (out / "sensitivity.md").write_text(table_markdown(rows, digits=3))
    write_json(out / "variants.json", {
        "multipliers": report.multipliers,
        "converged": {str(k): v for k, v in report.converged.items()},
        "flagged": report.flagged,
        "robust": report.robust,
    })
    print(table_markdown(rows, digits=3), end="")
    if report.flagged:
        _say(f"variants failing convergence: {report.flagged}")
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report

    request, draws, model = load_fit(args.fit_dir)
    out = Path(args.out or Path(args.fit_dir) / "report")
    _claim_output(out, args.force, is_dir=True)
    path = build_report(request, draws, model, out, seed=resolve_seed(args.seed, request.seed))
    _say(f"report written to {path}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=None, help="master seed (fallback: BAYESBENCH_SEED)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("model", nargs="?", help="model name")
    fitting.add_argument("dataset", nargs="?", help="dataset CSV written by 'bench'")
    fitting.add_argument("--config", help="fit request JSON")
    fitting.add_argument("--chains", type=int)
    fitting.add_argument("--warmup", type=int)
    fitting.add_argument("--iters", type=int, help="post-warmup iterations per chain")
    fitting.add_argument("--epsilon", type=float, help="success threshold on delta_f")
    fitting.add_argument("--filter", action="append", metavar="KEY=VALUE", help="row filter (repeatable)")
    fitting.add_argument("--prior-scale", type=float, dest="prior_scale", help="multiply every prior scale")

    p = argparse.ArgumentParser(prog="bayesbench", description="Bayesian analysis of optimizer benchmarks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark experiment")
    b.add_argument("--config", help="experiment config JSON")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("fit", parents=[common, fitting], help="fit a model to a dataset")
    f.set_defaults(func=cmd_fit)

    for name, func, helptext in (
        ("diagnose", cmd_diagnose, "convergence diagnostics of a fit"),
        ("summarize", cmd_summarize, "summary tables of a fit"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("fit_dir")
        s.set_defaults(func=func)

    r = sub.add_parser("rank", parents=[common], help="posterior ranks from a paired-comparison fit")
    r.add_argument("fit_dir")
    r.add_argument("--samples", type=int, default=1000)
    r.set_defaults(func=cmd_rank)

    pp = sub.add_parser("ppc", parents=[common], help="posterior predictive check")
    pp.add_argument("fit_dir")
    pp.add_argument("--reps", type=int, default=200)
    pp.set_defaults(func=cmd_ppc)

    se = sub.add_parser("sensitivity", parents=[common, fitting], help="prior sensitivity analysis")
    se.add_argument("--multipliers", default="0.5,1,2")
    se.set_defaults(func=cmd_sensitivity)

    rp = sub.add_parser("report", parents=[common], help="markdown report with SVG figures")
    rp.add_argument("fit_dir")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is None:
        args.jobs = os.cpu_count() or 1
    try:
        return args.func(args)
    except CliError as exc:
        _say(f"error: {exc}")
        return exc.code
    except (SchemaError, ValueError, KeyError) as exc:
        _say(f"error: {exc}")
        return EXIT_VALIDATION
    except OSError as exc:
        _say(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
