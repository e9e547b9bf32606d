"""Model checking: WAIC, posterior predictive checks, prior sensitivity and
prior informativeness."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import multiprocessing
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .harness import ModelInput
from .models import HierarchicalModel, build_model
from .posterior import hpd_interval
from .sampler import PosteriorDraws, SamplerConfig, nuts_sample, summary_diagnostics

__all__ = [
    "WaicReport",
    "PpcStat",
    "PpcReport",
    "SensitivityReport",
    "waic",
    "posterior_predictive_check",
    "sensitivity_analysis",
    "prior_informativeness",
    "DEFAULT_PPC_STATS",
]


# -- WAIC --------------------------------------------------------------------


@dataclass
class WaicReport:
    lppd: float
    p_waic: float
    waic: float
    lppd_i: np.ndarray = field(repr=False)
    p_waic_i: np.ndarray = field(repr=False)
    waic_i: np.ndarray = field(repr=False)
    n_draws: int = 0

    def row(self) -> dict:
        return {"lppd": self.lppd, "p_waic": self.p_waic, "waic": self.waic,
                "n_obs": len(self.lppd_i), "n_draws": self.n_draws}


def waic(loglik: np.ndarray) -> WaicReport:
    """WAIC from a (draws, observations) log-likelihood matrix.

    ``lppd`` is the log of the draw-averaged likelihood (computed with
    log-sum-exp), ``p_waic`` the sample variance (n - 1 denominator) of the
    log-likelihood over draws, and ``waic = -2 (lppd - p_waic)``.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim == 1:
        ll = ll[:, None]
    if ll.ndim != 2:
        raise ValueError("loglik must be a (draws, observations) matrix")
    S = ll.shape[0]
    if S < 2:
        raise ValueError("WAIC needs at least 2 draws (the variance term is undefined for one)")
    if not np.all(np.isfinite(ll)):
        raise ValueError("loglik contains non-finite values")
    lppd_i = logsumexp(ll, axis=0) - np.log(S)
    p_i = ll.var(axis=0, ddof=1)
    waic_i = -2.0 * (lppd_i - p_i)
    return WaicReport(
        lppd=float(lppd_i.sum()),
        p_waic=float(p_i.sum()),
        waic=float(waic_i.sum()),
        lppd_i=lppd_i,
        p_waic_i=p_i,
        waic_i=waic_i,
        n_draws=S,
    )


# -- posterior predictive checks ---------------------------------------------

DEFAULT_PPC_STATS = ("mean", "sd", "max", "min")

_STATS = {
    "mean": lambda y, d: float(np.mean(y)),
    "sd": lambda y, d: float(np.std(y, ddof=1)) if len(y) > 1 else 0.0,
    "max": lambda y, d: float(np.max(y)),
    "min": lambda y, d: float(np.min(y)),
    "success_rate": lambda y, d: float(np.sum(y) / np.sum(d.n_trials)),
    "win_rate": lambda y, d: float(np.mean(y)),
    "event_rate": lambda y, d: float(np.mean(d.event)),
}

_MODEL_STATS = {"binomial": ("success_rate",), "bradley_terry": ("win_rate",), "cox": ("event_rate",)}


@dataclass
class PpcStat:
    name: str
    observed: float
    replicated: np.ndarray = field(repr=False)
    tail_prob: float


@dataclass
class PpcReport:
    stats: list[PpcStat]
    replicated: np.ndarray = field(repr=False)  # (n_rep, n_obs)

    def rows(self) -> list[dict]:
        return [
            {"Statistic": s.name, "Observed": s.observed, "Replicated mean": float(s.replicated.mean()),
             "Tail probability": s.tail_prob}
            for s in self.stats
        ]


def posterior_predictive_check(
    model: HierarchicalModel,
    draws,
    stats: Sequence[str] | None = None,
    n_rep: int = 200,
    seed=0,
) -> PpcReport:
    """Compare statistics of the observed responses with replications
    simulated at ``n_rep`` posterior draws.

    The tail probability is the mid-p value ``P(T_rep > T_obs) + P(T_rep =
    T_obs) / 2``, so discrete statistics that always coincide give 0.5 rather
    than 1.
    """
    if stats is None:
        stats = DEFAULT_PPC_STATS + _MODEL_STATS.get(model.kind, ())
    unknown = [s for s in stats if s not in _STATS]
    if unknown:
        raise ValueError(f"unknown statistic(s) {unknown}; choose from {sorted(_STATS)}")
    mat = draws.flat() if isinstance(draws, PosteriorDraws) else np.atleast_2d(np.asarray(draws, dtype=float))
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(mat), size=n_rep, replace=n_rep > len(mat))
    children = np.random.SeedSequence(rng.integers(2**63)).spawn(n_rep)
    params = model.unpack(mat[idx])
    obs = model.data
    reps, rep_data = [], []
    for r in range(n_rep):
        sim = model.simulate({k: v[r] for k, v in params.items()}, np.random.default_rng(children[r]))
        reps.append(np.asarray(sim.y, dtype=float))
        rep_data.append(sim)
    out = []
    for name in stats:
        fn = _STATS[name]
        t_obs = fn(np.asarray(obs.y, dtype=float), obs)
        t_rep = np.array([fn(y, d) for y, d in zip(reps, rep_data)])
        tail = float(np.mean(t_rep > t_obs) + 0.5 * np.mean(t_rep == t_obs))
        out.append(PpcStat(name, t_obs, t_rep, tail))
    return PpcReport(out, np.stack(reps))


# -- prior informativeness ----------------------------------------------------

INFORMATIVE_RATIO = 0.1


def _block(name: str) -> str:
    return name.split("[", 1)[0]


def prior_informativeness(draws, prior_sds: Mapping[str, float]) -> dict[str, dict]:
    """Flag parameters whose posterior sd exceeds 0.1 times the prior sd.

    ``draws`` is a PosteriorDraws or a mapping of parameter name to samples;
    ``prior_sds`` is keyed by parameter or block name (``a_alg`` covers
    ``a_alg[DE]``). Parameters without a fixed prior are skipped.
    """
    for k, v in prior_sds.items():
        if not v > 0:
            raise ValueError(f"prior sd for {k} must be positive (degenerate prior)")
    if isinstance(draws, PosteriorDraws):
        samples = {n: draws.flat(n) for n in draws.names}
    else:
        samples = {k: np.asarray(v, dtype=float).ravel() for k, v in draws.items()}
    out = {}
    for name, x in samples.items():
        sd0 = prior_sds.get(name, prior_sds.get(_block(name)))
        if sd0 is None:
            continue
        post = float(np.std(x, ddof=1))
        out[name] = {
            "posterior_sd": post,
            "prior_sd": float(sd0),
            "ratio": post / sd0,
            "informative": post > INFORMATIVE_RATIO * sd0,
        }
    return out


# -- sensitivity -------------------------------------------------------------


@dataclass
class SensitivityReport:
    """Posterior summaries under each prior-scale variant.

    ``variants[m]`` maps parameter name to (mean, sd, hpd_low, hpd_high) for
    multiplier ``m``. ``max_shift`` is the largest absolute change of a
    posterior mean relative to the baseline (multiplier 1) and
    ``max_shift_sd`` the same in units of the baseline posterior sd.
    """

    multipliers: list[float]
    variants: dict[float, dict[str, tuple[float, float, float, float]]]
    converged: dict[float, bool]
    max_shift: dict[str, float]
    max_shift_sd: dict[str, float]
    informative: dict[str, bool]
    draws: dict[float, PosteriorDraws] = field(repr=False, default_factory=dict)

    @property
    def flagged(self) -> list[float]:
        """Variants that failed convergence checks."""
        return [m for m in self.multipliers if not self.converged[m]]

    @property
    def robust(self) -> bool:
        return not self.flagged and all(v < INFORMATIVE_RATIO for v in self.max_shift_sd.values())

    def rows(self) -> list[dict]:
        out = []
        base = self.variants[1.0]
        for name in base:
            row = {"Parameter": name}
            for m in self.multipliers:
                mark = "" if self.converged[m] else " (not converged)"
                row[f"Mean x{m:g}{mark}"] = self.variants[m][name][0]
            row["Max shift"] = self.max_shift[name]
            row["Max shift / sd"] = self.max_shift_sd[name]
            row["Informative"] = "yes" if self.informative.get(name) else "no"
            out.append(row)
        return out


def _fit_variant(args):
    name, data, scale, config = args
    model = build_model(name, data, scale)
    draws = nuts_sample(model, config)
    return draws, model.prior_sds()


def sensitivity_analysis(
    model_name: str,
    data: ModelInput,
    multipliers: Sequence[float] = (0.5, 1.0, 2.0),
    config: SamplerConfig | None = None,
    parameters: Sequence[str] | None = None,
    jobs: int = 1,
    mass: float = 0.95,
) -> SensitivityReport:
    """Refit ``model_name`` with every prior sd multiplied by each multiplier
    (exponential rates are divided by it) and report how the posterior moves.

    ``parameters`` restricts the scaling to the named prior blocks, leaving
    the others at their defaults. The baseline multiplier 1 is always fitted.
    Variants that fail convergence (R-hat >= 1.05 or any divergence) are
    listed in ``flagged``, marked in ``rows()``, and make ``robust`` false;
    their shifts are still reported so a sensitive posterior stays visible.
    """
    mults = sorted({float(m) for m in multipliers} | {1.0})
    if any(m <= 0 for m in mults):
        raise ValueError("prior scale multipliers must be positive")
    config = config or SamplerConfig()
    inner = replace(config, jobs=1)

    def scale(m):
        return {p: m for p in parameters} if parameters else m

    tasks = [(model_name, data, scale(m), inner) for m in mults]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(jobs, len(tasks)), mp_context=multiprocessing.get_context("fork")) as ex:
            results = list(ex.map(_fit_variant, tasks))
    else:
        results = [_fit_variant(t) for t in tasks]

    variants, converged, all_draws = {}, {}, {}
    base_prior = None
    for m, (draws, prior_sds) in zip(mults, results):
        diag = summary_diagnostics(draws)
        converged[m] = diag["converged"]
        all_draws[m] = draws
        summ = {}
        for n in draws.names:
            x = draws.flat(n)
            lo, hi = hpd_interval(x, mass)
            summ[n] = (float(x.mean()), float(x.std(ddof=1)), lo, hi)
        variants[m] = summ
        if m == 1.0:
            base_prior = prior_sds
    base = variants[1.0]
    others = [m for m in mults if m != 1.0]
    max_shift, max_shift_sd = {}, {}
    for n, (mu, sd, _, _) in base.items():
        shifts = [abs(variants[m][n][0] - mu) for m in others]
        max_shift[n] = max(shifts, default=0.0)
        max_shift_sd[n] = max_shift[n] / sd if sd > 0 else float("inf")
    flags = prior_informativeness(all_draws[1.0], base_prior)
    informative = {n: f["informative"] for n, f in flags.items()}
    return SensitivityReport(mults, variants, converged, max_shift, max_shift_sd, informative, all_draws)
