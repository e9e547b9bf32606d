"""Posterior summaries: intervals, odds and hazard ratios, rankings, group
differences, ROPE decisions, and the tables that present them."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .sampler import PosteriorDraws

__all__ = [
    "MIN_SAMPLES",
    "IntervalSummary",
    "HazardRow",
    "RankSummary",
    "RopeResult",
    "hpd_interval",
    "equal_tail_interval",
    "interval_summary",
    "odds_ratio_summary",
    "hazard_summary",
    "rank_posterior",
    "group_difference",
    "rope_fraction",
    "rope_decision",
    "parameter_table",
    "table_csv",
    "table_markdown",
]

MIN_SAMPLES = 100


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise ValueError(f"interval needs at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    return x


def _check_mass(mass: float) -> None:
    if not 0 < mass < 1:
        raise ValueError(f"mass must lie in (0, 1), got {mass}")


def hpd_interval(samples, mass: float = 0.95) -> tuple[float, float]:
    """Narrowest window holding ``ceil(mass * n)`` of the sorted samples.

    Among windows of equal width the leftmost is returned.
    """
    _check_mass(mass)
    x = np.sort(_as_samples(samples))
    n = x.size
    k = min(n, math.ceil(mass * n))
    widths = x[k - 1:] - x[: n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def equal_tail_interval(samples, mass: float = 0.95) -> tuple[float, float]:
    """Quantiles at ``(1 - mass) / 2`` and ``1 - (1 - mass) / 2``."""
    _check_mass(mass)
    x = _as_samples(samples)
    tail = (1.0 - mass) / 2.0
    lo, hi = np.quantile(x, [tail, 1.0 - tail])
    return float(lo), float(hi)


@dataclass(frozen=True)
class IntervalSummary:
    """Mean and HPD of one parameter, optionally with an exp transform
    (``"OR"`` for odds ratios, ``"HR"`` for hazard ratios) summarized
    draw-wise."""

    name: str
    mean: float
    hpd_low: float
    hpd_high: float
    mass: float = 0.95
    transform: str | None = None
    t_mean: float | None = None
    t_low: float | None = None
    t_high: float | None = None

    def row(self) -> dict:
        out = {"Parameter": self.name, "Mean": self.mean, "HPD low": self.hpd_low, "HPD high": self.hpd_high}
        if self.transform:
            out[self.transform] = self.t_mean
            out[f"{self.transform} HPD low"] = self.t_low
            out[f"{self.transform} HPD high"] = self.t_high
        return out


def interval_summary(samples, name: str = "x", mass: float = 0.95, transform: str | None = None) -> IntervalSummary:
    """Mean and HPD of ``samples``; with ``transform`` also of ``exp(samples)``."""
    x = _as_samples(samples)
    lo, hi = hpd_interval(x, mass)
    extra = {}
    if transform is not None:
        ex = np.exp(x)
        tlo, thi = hpd_interval(ex, mass)
        extra = {"transform": transform, "t_mean": float(ex.mean()), "t_low": tlo, "t_high": thi}
    return IntervalSummary(name, float(x.mean()), lo, hi, mass, **extra)


def _param(draws, param: str | None) -> np.ndarray:
    if isinstance(draws, PosteriorDraws):
        if param is None:
            raise ValueError("param is required when passing PosteriorDraws")
        return draws.flat(param)
    return np.asarray(draws, dtype=float).ravel()


def odds_ratio_summary(draws, param: str | None = None, mass: float = 0.95) -> IntervalSummary:
    """Logit-scale parameter with its odds ratio ``exp(x)`` summarized draw-wise."""
    return interval_summary(_param(draws, param), param or "x", mass, transform="OR")


# -- survival ----------------------------------------------------------------


@dataclass(frozen=True)
class HazardRow:
    """Per-algorithm survival summary: baseline hazard ``exp(a)``, hazard
    ratio ``exp(b)`` per unit noise, and expected evaluations-per-dimension
    to solve, ``1 / lambda``, at the requested noise level."""

    algorithm: str
    baseline: IntervalSummary
    hazard_ratio: IntervalSummary
    expected_feval: IntervalSummary

    def row(self) -> dict:
        return {
            "Algorithm": self.algorithm,
            "Baseline hazard": self.baseline.mean,
            "Avg FEval": self.expected_feval.mean,
            "Avg FEval HPD low": self.expected_feval.hpd_low,
            "Avg FEval HPD high": self.expected_feval.hpd_high,
            "Hazard Ratio": self.hazard_ratio.mean,
            "HR HPD low": self.hazard_ratio.hpd_low,
            "HR HPD high": self.hazard_ratio.hpd_high,
        }


def _labels(names: list[str], block: str) -> list[str]:
    pre = block + "["
    return [n[len(pre):-1] for n in names if n.startswith(pre)]


def hazard_summary(draws: PosteriorDraws, noise: float = 0.0, mass: float = 0.95) -> list[HazardRow]:
    """Hazard summaries for every algorithm of a survival fit.

    All transforms are applied draw-wise before averaging, so the reported
    expected FEval is the mean of ``exp(-(a + b * noise))`` over draws.
    """
    rows = []
    for alg in _labels(draws.names, "a_alg"):
        a = draws.flat(f"a_alg[{alg}]")
        b = draws.flat(f"b_noise[{alg}]")
        base = np.exp(a)
        lam = np.exp(a + b * noise)
        rows.append(HazardRow(
            algorithm=alg,
            baseline=_exp_summary(base, f"h0[{alg}]", mass),
            hazard_ratio=_exp_summary(np.exp(b), f"HR[{alg}]", mass),
            expected_feval=_exp_summary(1.0 / lam, f"FEval[{alg}]", mass),
        ))
    return rows


def _exp_summary(values: np.ndarray, name: str, mass: float) -> IntervalSummary:
    lo, hi = hpd_interval(values, mass)
    return IntervalSummary(name, float(np.mean(values)), lo, hi, mass)


# -- rankings ----------------------------------------------------------------


@dataclass
class RankSummary:
    """Posterior rank distribution; ``distribution[i, r]`` is the probability
    that algorithm i takes rank r + 1 (rank 1 is the strongest)."""

    algorithms: list[str]
    distribution: np.ndarray
    median: np.ndarray
    variance: np.ndarray
    ranks: np.ndarray = field(repr=False)

    def rows(self) -> list[dict]:
        order = np.lexsort((self.variance, self.median))
        return [
            {"Algorithm": self.algorithms[i], "Median Rank": float(self.median[i]),
             "Rank Variance": float(self.variance[i])}
            for i in order
        ]


def rank_posterior(
    draws: PosteriorDraws,
    n_samples: int = 1000,
    seed=0,
    average_benchmarks: bool = False,
) -> RankSummary:
    """Rank algorithms by sampled strength from a paired-comparison fit.

    Each of ``n_samples`` posterior draws (picked uniformly, without
    replacement when enough draws exist) is paired with one uniformly chosen
    benchmark, and the strengths ``a_alg[i] + a_bm[i, j]`` are ranked in
    descending order. With ``average_benchmarks`` the benchmark effects are
    averaged instead of sampled.
    """
    rng = np.random.default_rng(seed)
    algs = _labels(draws.names, "a_alg")
    a = draws.block("a_alg")
    abm = draws.block("a_bm")
    S, K = a.shape
    J = abm.shape[1] // K
    abm = abm.reshape(S, K, J)
    idx = rng.choice(S, size=n_samples, replace=n_samples > S)
    if average_benchmarks:
        strength = a[idx] + abm[idx].mean(axis=2)
    else:
        j = rng.integers(J, size=n_samples)
        strength = a[idx] + abm[idx, :, j]
    order = np.argsort(-strength, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(n_samples)[:, None]
    ranks[rows, order] = np.arange(1, K + 1)
    dist = np.stack([np.bincount(ranks[:, i] - 1, minlength=K) for i in range(K)]) / n_samples
    return RankSummary(
        algorithms=algs,
        distribution=dist,
        median=np.median(ranks, axis=0),
        variance=ranks.var(axis=0),
        ranks=ranks,
    )


def group_difference(draws_a, draws_b, n: int = 10_000, seed=0, mass: float = 0.95,
                     name: str = "difference") -> IntervalSummary:
    """Draw-wise difference ``a - b`` resampled (paired, with replacement)
    to ``n`` values, then summarized."""
    a = np.asarray(draws_a, dtype=float).ravel()
    b = np.asarray(draws_b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("draw vectors must come from the same fit and have equal length")
    rng = np.random.default_rng(seed)
    idx = rng.integers(a.size, size=n)
    return interval_summary(a[idx] - b[idx], name, mass)


# -- ROPE --------------------------------------------------------------------

ROPE_ACCEPT = 0.95


@dataclass(frozen=True)
class RopeResult:
    fraction: float
    decision: str
    hpd: tuple[float, float]


def rope_fraction(samples, rope_low: float, rope_high: float, hpd_mass: float = 0.95) -> RopeResult:
    """Share of the HPD interval's length lying inside the ROPE, with a decision.

    ``accept-negligible`` when at least 95% of the HPD lies in the ROPE,
    ``reject-above``/``reject-below`` when the HPD misses the ROPE entirely,
    otherwise ``undecided``.
    """
    if not rope_low < rope_high:
        raise ValueError("rope_low must be below rope_high")
    lo, hi = hpd_interval(samples, hpd_mass)
    return rope_decision(lo, hi, rope_low, rope_high)


def rope_decision(lo: float, hi: float, rope_low: float, rope_high: float) -> RopeResult:
    """ROPE verdict for a given HPD interval ``(lo, hi)``."""
    if not rope_low < rope_high:
        raise ValueError("rope_low must be below rope_high")
    width = hi - lo
    overlap = max(0.0, min(hi, rope_high) - max(lo, rope_low))
    if width > 0:
        frac = overlap / width
    else:
        frac = 1.0 if rope_low <= lo <= rope_high else 0.0
    if lo > rope_high:
        decision = "reject-above"
    elif hi < rope_low:
        decision = "reject-below"
    elif frac >= ROPE_ACCEPT:
        decision = "accept-negligible"
    else:
        decision = "undecided"
    return RopeResult(float(frac), decision, (lo, hi))


# -- tables ------------------------------------------------------------------


def parameter_table(draws: PosteriorDraws, transform: str | None = None, mass: float = 0.95,
                    params: list[str] | None = None) -> list[dict]:
    """One summary row per parameter (Parameter, Mean, HPD low, HPD high,
    plus transform columns)."""
    names = params or draws.names
    return [interval_summary(draws.flat(n), n, mass, transform).row() for n in names]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _columns(rows: list[dict]) -> list[str]:
    """Ordered union of the row keys; rows lacking a column leave it blank."""
    return list(dict.fromkeys(k for r in rows for k in r))


def table_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_columns(rows), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def table_markdown(rows: list[dict], digits: int = 2) -> str:
    if not rows:
        return ""
    cols = _columns(rows)

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.{digits}f}"
        return str(v)

    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    lines += ["| " + " | ".join(cell(r.get(c)) for c in cols) + " |" for r in rows]
    return "\n".join(lines) + "\n"
