"""Convergence diagnostics: split R-hat, effective sample size, divergences."""

from __future__ import annotations

import warnings

import numpy as np

from .nuts import PosteriorDraws

__all__ = ["split_rhat", "ess", "divergence_count", "summary_diagnostics", "RHAT_MAX", "ESS_MIN"]

RHAT_MAX = 1.05
RHAT_PREFERRED = 1.01
ESS_MIN = 200


def _chains(draws, param) -> np.ndarray:
    if isinstance(draws, PosteriorDraws):
        if param is None:
            raise ValueError("param is required when passing PosteriorDraws")
        return draws.param(param)
    x = np.asarray(draws, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a (chains, iterations) array")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n:]], axis=0)


def split_rhat(draws, param: str | None = None) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is cut in half (dropping the middle draw of odd-length
    chains) and the classic Gelman-Rubin statistic is computed over the
    halves. Returns NaN with a warning when every draw is identical.
    """
    x = _chains(draws, param)
    if x.shape[0] < 2:
        raise ValueError("split R-hat needs at least 2 chains")
    if x.shape[1] < 4:
        raise ValueError("split R-hat needs at least 4 iterations per chain")
    s = _split(x)
    n = s.shape[1]
    W = s.var(axis=1, ddof=1).mean()
    if W == 0:
        warnings.warn(
            "R-hat is undefined: within-chain variance is zero (constant chains)",
            RuntimeWarning,
            stacklevel=2,
        )
        return float("nan")
    B = n * s.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def ess(draws, param: str | None = None) -> float:
    """Multi-chain effective sample size with Geyer's initial positive
    (monotone) sequence truncation, computed on split chains and capped at
    the total number of draws."""
    x = _chains(draws, param)
    if x.shape[1] < 4:
        raise ValueError("ESS needs at least 4 iterations per chain")
    s = _split(x) if x.shape[0] >= 1 else x
    m, n = s.shape
    acov = _autocov(s)
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = chain_var.mean()
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += s.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        warnings.warn("ESS is zero: chains are constant", RuntimeWarning, stacklevel=2)
        return 0.0
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2 * pair
        prev = pair
    total = m * n
    return float(min(total / tau, total)) if tau > 0 else float(total)


def divergence_count(draws: PosteriorDraws) -> int:
    """Number of post-warmup divergent transitions; any > 0 invalidates a fit."""
    return int(np.sum(draws.divergent))


def summary_diagnostics(draws: PosteriorDraws) -> dict:
    """R-hat and ESS per parameter plus the fit-level validity verdict."""
    rhat, neff = {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name in draws.names:
            rhat[name] = split_rhat(draws, name) if draws.n_chains >= 2 else float("nan")
            neff[name] = ess(draws, name)
    finite_rhat = [v for v in rhat.values() if np.isfinite(v)]
    n_div = divergence_count(draws)
    max_rhat = max(finite_rhat) if finite_rhat else float("nan")
    return {
        "rhat": rhat,
        "ess": neff,
        "max_rhat": max_rhat,
        "min_ess": min(neff.values()),
        "divergences": n_div,
        "max_treedepth_hits": draws.n_max_depth,
        "step_size": draws.step_size.tolist(),
        "converged": bool(n_div == 0 and finite_rhat and max_rhat < RHAT_MAX),
    }
