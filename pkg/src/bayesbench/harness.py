"""Factorial benchmark experiment, run metrics, CSV persistence and the
model-specific views of the resulting dataset."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import benchfns, optim

__all__ = [
    "DEFAULT_EPSILONS",
    "ExperimentConfig",
    "RunRecord",
    "ModelInput",
    "SchemaError",
    "cell_seed",
    "run_experiment",
    "metrics_from_run",
    "write_csv",
    "read_csv",
    "dumps_csv",
    "apply_filters",
    "prepare_binomial",
    "prepare_relative_improvement",
    "prepare_pairs",
    "prepare_survival",
    "prepare_cpu",
    "prepare_linear",
    "TOP4",
]

DEFAULT_EPSILONS = (1.0, 0.1, 1e-3, 1e-6)
TOP4 = ("CMAES", "DifferentialEvolution", "PSO", "RandomSearch1")


class SchemaError(ValueError):
    """Raised for malformed datasets and configs."""


def eps_label(eps: float) -> str:
    if eps >= 0.01:
        return f"{eps:g}"
    mantissa, exponent = f"{eps:.0e}".split("e")
    return f"{mantissa}e{int(exponent)}"


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple[str, ...]
    benchmarks: tuple[str, ...]
    noise_levels: tuple[float, ...] = (0.0, 3.0)
    budgets_per_dim: tuple[int, ...] = (20, 100, 1000, 10_000, 100_000)
    repetitions: int = 10
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    master_seed: int = 0
    timing: str = "process"  # "off" leaves cpu_seconds empty for byte-reproducible output

    def __post_init__(self):
        for name in ("algorithms", "benchmarks", "noise_levels", "budgets_per_dim", "epsilons"):
            value = getattr(self, name)
            if isinstance(value, (str, bytes)) or not isinstance(value, Iterable):
                raise SchemaError(f"config.{name}: expected a list")
            value = tuple(value)
            object.__setattr__(self, name, value)
            if not value:
                raise SchemaError(f"config.{name}: must be nonempty")
        for i, a in enumerate(self.algorithms):
            if a not in optim.ALGORITHMS:
                raise SchemaError(f"config.algorithms[{i}]: unknown algorithm {a!r}")
        known = set(benchfns.registry_list())
        for i, b in enumerate(self.benchmarks):
            if b not in known:
                raise SchemaError(f"config.benchmarks[{i}]: unknown benchmark {b!r}")
        for i, s in enumerate(self.noise_levels):
            if not isinstance(s, (int, float)) or s < 0:
                raise SchemaError(f"config.noise_levels[{i}]: must be a nonnegative number")
        for i, b in enumerate(self.budgets_per_dim):
            if not isinstance(b, int) or isinstance(b, bool) or b < 1:
                raise SchemaError(f"config.budgets_per_dim[{i}]: must be a positive integer")
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise SchemaError("config.repetitions: must be an integer >= 1")
        eps = self.epsilons
        if any(not isinstance(e, (int, float)) or e <= 0 for e in eps):
            raise SchemaError("config.epsilons: must be positive numbers")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise SchemaError("config.epsilons: must be strictly decreasing")
        if self.timing not in ("process", "off"):
            raise SchemaError("config.timing: must be 'process' or 'off'")
        object.__setattr__(self, "noise_levels", tuple(float(s) for s in self.noise_levels))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in eps))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise SchemaError("config: expected a JSON object")
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise SchemaError(f"config.{unknown[0]}: unknown field")
        for required in ("algorithms", "benchmarks"):
            if required not in data:
                raise SchemaError(f"config.{required}: missing required field")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    @property
    def n_runs(self) -> int:
        return (
            len(self.algorithms) * len(self.benchmarks) * len(self.noise_levels)
            * len(self.budgets_per_dim) * self.repetitions
        )


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    algorithm: str
    benchmark: str
    dimension: int
    noise: float
    budget_per_dim: int
    repetition: int
    delta_f: float
    euclid: float
    epsilons: tuple[float, ...]
    solved: tuple[bool, ...]
    feval: tuple[int | None, ...]
    cpu_seconds: float | None

    def solved_at(self, eps: float) -> bool:
        return self.solved[self._eps_index(eps)]

    def solve_feval(self, eps: float) -> int | None:
        return self.feval[self._eps_index(eps)]

    def _eps_index(self, eps: float) -> int:
        for i, e in enumerate(self.epsilons):
            if math.isclose(e, eps, rel_tol=1e-9):
                return i
        raise KeyError(f"epsilon {eps} was not logged (logged: {list(self.epsilons)})")

    @property
    def key(self) -> tuple:
        return (self.algorithm, self.benchmark, self.noise, self.budget_per_dim, self.repetition)


def cell_seed(master_seed: int, algorithm: str, benchmark: str, noise: float, budget: int, rep: int):
    """Seed for one run, independent of execution order."""
    token = f"{master_seed}|{algorithm}|{benchmark}|{float(noise)!r}|{budget}|{rep}".encode()
    digest = hashlib.sha256(token).digest()
    words = np.frombuffer(digest[:16], dtype="<u4").tolist()
    return np.random.SeedSequence(words)


def metrics_from_run(run: optim.OptRun, fn: benchfns.BenchmarkFunction, epsilons: Sequence[float]) -> dict:
    """Delta f, distance and per-epsilon success/first-hit evaluation of a run."""
    delta_f = run.best_f_true - fn.f_min
    euclid = benchfns.distance_to_nearest_minimum(fn, run.best_x)
    solved, feval = [], []
    for eps in epsilons:
        ok = delta_f < eps
        solved.append(bool(ok))
        hit = None
        if ok:
            below = np.flatnonzero(run.trace_delta < eps)
            hit = int(run.trace_evals[below[0]])
        feval.append(hit)
    return {
        "delta_f": float(delta_f),
        "euclid": float(euclid),
        "solved": tuple(solved),
        "feval": tuple(feval),
    }


def _run_cell(args) -> RunRecord:
    config, alg, bm, noise, budget, rep = args
    fn = benchfns.get_function(bm)
    seed = cell_seed(config.master_seed, alg, bm, noise, budget, rep)
    run = optim.optimize(optim.default_params(alg), fn, benchfns.NoiseSpec(noise), budget * fn.dimension, seed)
    m = metrics_from_run(run, fn, config.epsilons)
    return RunRecord(
        algorithm=alg,
        benchmark=bm,
        dimension=fn.dimension,
        noise=float(noise),
        budget_per_dim=int(budget),
        repetition=int(rep),
        epsilons=tuple(config.epsilons),
        cpu_seconds=run.cpu_seconds if config.timing == "process" else None,
        **m,
    )


def run_experiment(config: ExperimentConfig, jobs: int = 1, progress=None) -> list[RunRecord]:
    """Run every (algorithm, benchmark, noise, budget, repetition) cell.

    Rows come back sorted by their canonical key regardless of ``jobs``.
    """
    cells = [
        (config, a, b, s, n, r)
        for a, b, s, n in itertools.product(
            config.algorithms, config.benchmarks, config.noise_levels, config.budgets_per_dim
        )
        for r in range(config.repetitions)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            it = pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (8 * jobs)))
            rows = []
            for row in it:
                rows.append(row)
                if progress:
                    progress(len(rows), len(cells))
    else:
        rows = []
        for cell in cells:
            rows.append(_run_cell(cell))
            if progress:
                progress(len(rows), len(cells))
    rows.sort(key=lambda r: r.key)
    return rows


# -- CSV ---------------------------------------------------------------------

_FIXED_HEAD = ["algorithm", "benchmark", "dimension", "noise", "budget_per_dim", "repetition", "delta_f", "euclid"]


def csv_header(epsilons: Sequence[float]) -> list[str]:
    labels = [eps_label(e) for e in epsilons]
    return _FIXED_HEAD + [f"solved_{l}" for l in labels] + [f"feval_{l}" for l in labels] + ["cpu_seconds"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps_csv(dataset: Sequence[RunRecord]) -> str:
    if not dataset:
        raise SchemaError("cannot write an empty dataset")
    epsilons = dataset[0].epsilons
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(epsilons))
    for r in dataset:
        if r.epsilons != epsilons:
            raise SchemaError("all rows must share the same epsilon grid")
        w.writerow(
            [_fmt(v) for v in (r.algorithm, r.benchmark, r.dimension, r.noise, r.budget_per_dim,
                               r.repetition, r.delta_f, r.euclid)]
            + [_fmt(s) for s in r.solved]
            + [_fmt(f) for f in r.feval]
            + [_fmt(r.cpu_seconds)]
        )
    return buf.getvalue()


def write_csv(dataset: Sequence[RunRecord], path) -> None:
    text = dumps_csv(dataset)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _parse_epsilons(header: list[str]) -> tuple[float, ...]:
    solved_cols = [h for h in header if h.startswith("solved_")]
    try:
        eps = tuple(float(h[len("solved_"):]) for h in solved_cols)
    except ValueError as exc:
        raise SchemaError(f"bad epsilon column in header: {exc}") from None
    if not eps or csv_header(eps) != header:
        raise SchemaError(f"header mismatch; expected columns like {csv_header(DEFAULT_EPSILONS)}")
    return eps


def read_csv(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        eps = _parse_epsilons(header)
        k = len(eps)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            col = 0
            try:
                parsed = {}
                for col, name in enumerate(_FIXED_HEAD):
                    raw = row[col]
                    if name in ("algorithm", "benchmark"):
                        if not raw:
                            raise ValueError("empty")
                        parsed[name] = raw
                    elif name in ("dimension", "budget_per_dim", "repetition"):
                        parsed[name] = int(raw)
                    else:
                        parsed[name] = float(raw)
                solved = []
                for i in range(k):
                    col = len(_FIXED_HEAD) + i
                    if row[col] not in ("0", "1"):
                        raise ValueError(f"expected 0 or 1, got {row[col]!r}")
                    solved.append(row[col] == "1")
                feval = []
                for i in range(k):
                    col = len(_FIXED_HEAD) + k + i
                    feval.append(int(row[col]) if row[col] else None)
                    if (feval[-1] is not None) != solved[i]:
                        raise ValueError("feval must be present exactly when solved is 1")
                col = len(header) - 1
                cpu = float(row[col]) if row[col] else None
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: column {header[col]!r}: {exc}") from None
            rows.append(RunRecord(epsilons=eps, solved=tuple(solved), feval=tuple(feval), cpu_seconds=cpu, **parsed))
    return rows


# -- filtering ---------------------------------------------------------------

_FILTER_TYPES = {
    "algorithm": str,
    "benchmark": str,
    "dimension": int,
    "noise": float,
    "budget_per_dim": int,
    "repetition": int,
}


def _normalise_filter(key: str, value) -> set:
    if key not in _FILTER_TYPES:
        raise SchemaError(f"unknown filter key {key!r}; expected one of {sorted(_FILTER_TYPES)}")
    cast = _FILTER_TYPES[key]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    elif not isinstance(value, (list, tuple, set)):
        value = [value]
    try:
        return {cast(float(v)) if cast is int else cast(v) for v in value}
    except ValueError:
        raise SchemaError(f"filter {key}: cannot interpret {value!r} as {cast.__name__}") from None


def apply_filters(dataset: Iterable[RunRecord], filters: Mapping[str, Any] | None) -> list[RunRecord]:
    """Keep rows whose fields match every filter (a value or a list of values)."""
    checks = {k: _normalise_filter(k, v) for k, v in (filters or {}).items()}
    return [r for r in dataset if all(getattr(r, k) in allowed for k, allowed in checks.items())]


# -- model inputs ------------------------------------------------------------


@dataclass
class ModelInput:
    """Design data for one model.

    ``alg_idx``/``bm_idx`` index into ``algorithms``/``benchmarks``. For pair
    data ``algo0``/``algo1`` hold the two contestants, ``y == 1`` means algo1
    won, and ``tie`` marks tied comparisons.
    """

    kind: str
    y: np.ndarray
    bm_idx: np.ndarray
    algorithms: list[str]
    benchmarks: list[str]
    alg_idx: np.ndarray | None = None
    x: np.ndarray | None = None
    n_trials: np.ndarray | None = None
    event: np.ndarray | None = None
    algo0: np.ndarray | None = None
    algo1: np.ndarray | None = None
    tie: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.y)
        K, J = len(self.algorithms), len(self.benchmarks)
        if n == 0:
            raise SchemaError(f"{self.kind}: empty model input")
        self._check_index("bm_idx", J, n)
        for name in ("alg_idx", "algo0", "algo1"):
            if getattr(self, name) is not None:
                self._check_index(name, K, n)
        for name in ("x", "n_trials", "event", "tie"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise SchemaError(f"{self.kind}: {name} has length {len(arr)}, expected {n}")
        if self.n_trials is not None and np.any((self.y < 0) | (self.y > self.n_trials)):
            raise SchemaError(f"{self.kind}: successes must satisfy 0 <= y <= N")
        if self.algo0 is not None and np.any(self.algo0 == self.algo1):
            raise SchemaError(f"{self.kind}: a pair row compares an algorithm with itself")

    def _check_index(self, name, size, n):
        idx = getattr(self, name)
        if len(idx) != n:
            raise SchemaError(f"{self.kind}: {name} has length {len(idx)}, expected {n}")
        if np.any((idx < 0) | (idx >= size)):
            raise SchemaError(f"{self.kind}: {name} out of range [0, {size})")

    @property
    def n_obs(self) -> int:
        return len(self.y)

    def with_response(self, y, **overrides) -> "ModelInput":
        """Copy with a new response vector (and optionally other arrays)."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(y=np.asarray(y), **overrides)
        data["meta"] = dict(self.meta)
        return ModelInput(**data)


def _select(dataset, filters) -> list[RunRecord]:
    rows = apply_filters(dataset, filters)
    if not rows:
        raise SchemaError(f"filters {dict(filters or {})} select no rows")
    return rows


def _levels(rows, attr) -> list[str]:
    return sorted({getattr(r, attr) for r in rows})


def _index(values, levels) -> np.ndarray:
    lookup = {v: i for i, v in enumerate(levels)}
    return np.array([lookup[v] for v in values], dtype=np.int64)


def prepare_binomial(dataset, eps: float, filters=None) -> ModelInput:
    """Successes out of repetitions per (algorithm, benchmark, noise, budget)."""
    rows = _select(dataset, filters)
    groups: dict[tuple, list[bool]] = {}
    for r in rows:
        groups.setdefault((r.algorithm, r.benchmark, r.noise, r.budget_per_dim), []).append(r.solved_at(eps))
    keys = sorted(groups)
    algs, bms = _levels(rows, "algorithm"), _levels(rows, "benchmark")
    return ModelInput(
        kind="binomial",
        y=np.array([sum(groups[k]) for k in keys], dtype=np.int64),
        n_trials=np.array([len(groups[k]) for k in keys], dtype=np.int64),
        alg_idx=_index([k[0] for k in keys], algs),
        bm_idx=_index([k[1] for k in keys], bms),
        x=np.array([k[2] for k in keys], dtype=float),
        algorithms=algs,
        benchmarks=bms,
        meta={"epsilon": eps, "budget_per_dim": [k[3] for k in keys]},
    )


def prepare_relative_improvement(dataset, filters=None, baseline: str = "RandomSearch1") -> ModelInput:
    """Improvement in distance-to-optimum over the mean baseline distance,
    clamped to [-1, 1], on noiseless rows."""
    rows = [r for r in _select(dataset, filters) if r.noise == 0]
    if not rows:
        raise SchemaError("relative improvement needs noiseless rows")
    base: dict[tuple, list[float]] = {}
    for r in rows:
        if r.algorithm == baseline:
            base.setdefault((r.benchmark, r.budget_per_dim), []).append(r.euclid)
    cells = {(r.benchmark, r.budget_per_dim) for r in rows}
    missing = sorted(cells - set(base))
    if missing:
        raise SchemaError(f"no {baseline} baseline for (benchmark, budget) cell {missing[0]}")
    mean_base = {k: float(np.mean(v)) for k, v in base.items()}
    dropped = sorted(k for k, v in mean_base.items() if v == 0)
    if dropped:
        warnings.warn(f"dropping cells with zero baseline distance: {dropped}", RuntimeWarning, stacklevel=2)
    keep = [
        r for r in rows
        if not r.algorithm.startswith("RandomSearch") and mean_base[(r.benchmark, r.budget_per_dim)] != 0
    ]
    if not keep:
        raise SchemaError("relative improvement: no non-baseline rows left")
    d_base = np.array([mean_base[(r.benchmark, r.budget_per_dim)] for r in keep])
    d_alg = np.array([r.euclid for r in keep])
    algs, bms = _levels(keep, "algorithm"), _levels(keep, "benchmark")
    return ModelInput(
        kind="relative_improvement",
        y=np.clip((d_base - d_alg) / d_base, -1.0, 1.0),
        alg_idx=_index([r.algorithm for r in keep], algs),
        bm_idx=_index([r.benchmark for r in keep], bms),
        algorithms=algs,
        benchmarks=bms,
        meta={"baseline": baseline},
    )


def prepare_pairs(dataset, filters=None, tie_mode: str = "random_winner", seed=0) -> ModelInput:
    """All unordered algorithm pairs within each (benchmark, noise, budget, repetition).

    The lower delta_f wins. Exact ties get a uniformly random winner
    (``random_winner``) or are kept as ties (``keep_ties``).
    """
    if tie_mode not in ("random_winner", "keep_ties"):
        raise ValueError("tie_mode must be 'random_winner' or 'keep_ties'")
    rows = _select(dataset, filters)
    algs, bms = _levels(rows, "algorithm"), _levels(rows, "benchmark")
    if len(algs) < 2:
        raise SchemaError("pairwise comparison needs at least two algorithms")
    rng = np.random.default_rng(seed)
    groups: dict[tuple, dict[str, float]] = {}
    for r in rows:
        groups.setdefault((r.benchmark, r.noise, r.budget_per_dim, r.repetition), {})[r.algorithm] = r.delta_f
    a0, a1, bm, y, tie = [], [], [], [], []
    alg_pos = {a: i for i, a in enumerate(algs)}
    bm_pos = {b: j for j, b in enumerate(bms)}
    for key in sorted(groups):
        res = groups[key]
        for p, q in itertools.combinations(sorted(res), 2):
            a0.append(alg_pos[p])
            a1.append(alg_pos[q])
            bm.append(bm_pos[key[0]])
            tied = res[p] == res[q]
            if not tied:
                y.append(int(res[q] < res[p]))
            elif tie_mode == "keep_ties":
                y.append(0)
            else:
                y.append(int(rng.integers(2)))
            tie.append(tied and tie_mode == "keep_ties")
    return ModelInput(
        kind="pairs",
        y=np.array(y, dtype=np.int64),
        algo0=np.array(a0, dtype=np.int64),
        algo1=np.array(a1, dtype=np.int64),
        bm_idx=np.array(bm, dtype=np.int64),
        tie=np.array(tie, dtype=bool),
        algorithms=algs,
        benchmarks=bms,
        meta={"tie_mode": tie_mode},
    )


def prepare_survival(dataset, eps: float, filters=None) -> ModelInput:
    """Evaluations-per-dimension to first reach ``eps``; right censored at the budget."""
    rows = _select(dataset, filters)
    y, event = [], []
    for r in rows:
        hit = r.solve_feval(eps)
        if hit is None:
            y.append(float(r.budget_per_dim))
            event.append(0)
        else:
            y.append(hit / r.dimension)
            event.append(1)
    algs, bms = _levels(rows, "algorithm"), _levels(rows, "benchmark")
    return ModelInput(
        kind="survival",
        y=np.array(y, dtype=float),
        event=np.array(event, dtype=np.int64),
        x=np.array([r.noise for r in rows], dtype=float),
        alg_idx=_index([r.algorithm for r in rows], algs),
        bm_idx=_index([r.benchmark for r in rows], bms),
        algorithms=algs,
        benchmarks=bms,
        meta={
            "epsilon": eps,
            "budget_per_dim": sorted({r.budget_per_dim for r in rows}),
            "censor_at": [float(r.budget_per_dim) for r in rows],
        },
    )


def prepare_cpu(dataset, filters=None) -> ModelInput:
    """CPU seconds per evaluation, scaled by 10,000."""
    rows = _select(dataset, filters)
    y = []
    for r in rows:
        if r.cpu_seconds is None:
            raise SchemaError(f"row {r.key} has no cpu_seconds (experiment ran with timing off)")
        evals = r.budget_per_dim * r.dimension
        if evals <= 0:
            raise SchemaError(f"row {r.key} used zero evaluations")
        y.append(10_000 * r.cpu_seconds / evals)
    algs, bms = _levels(rows, "algorithm"), _levels(rows, "benchmark")
    return ModelInput(
        kind="cpu",
        y=np.array(y, dtype=float),
        alg_idx=_index([r.algorithm for r in rows], algs),
        bm_idx=_index([r.benchmark for r in rows], bms),
        algorithms=algs,
        benchmarks=bms,
    )


def prepare_linear(dataset, filters=None, response: str = "log_delta_f") -> ModelInput:
    """Generic view for the multilevel linear model: log10(delta_f + 1e-12)
    against the noise level."""
    rows = _select(dataset, filters)
    if response != "log_delta_f":
        raise ValueError("only response='log_delta_f' is supported")
    algs, bms = _levels(rows, "algorithm"), _levels(rows, "benchmark")
    return ModelInput(
        kind="linear",
        y=np.log10(np.maximum(np.array([r.delta_f for r in rows]), 0) + 1e-12),
        x=np.array([r.noise for r in rows], dtype=float),
        alg_idx=_index([r.algorithm for r in rows], algs),
        bm_idx=_index([r.benchmark for r in rows], bms),
        algorithms=algs,
        benchmarks=bms,
    )
