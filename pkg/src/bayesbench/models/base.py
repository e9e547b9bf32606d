"""Shared machinery for the hierarchical models.

A model owns its design data, maps an unconstrained parameter vector to named
constrained parameters, and exposes ``log_density_grad`` so it can be handed
straight to :func:`bayesbench.sampler.nuts_sample`. Benchmark random effects
use the non-centred form ``a_bm = s * z`` with ``z ~ Normal(0, 1)``; positive
parameters are sampled as logs with the Jacobian term included.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..harness import ModelInput

LOG_2PI = math.log(2 * math.pi)


def normal_lp(x: np.ndarray, sd: float) -> tuple[float, np.ndarray]:
    """Sum of Normal(0, sd) log densities and the gradient."""
    lp = -0.5 * float(np.sum((x / sd) ** 2)) - x.size * (math.log(sd) + 0.5 * LOG_2PI)
    return lp, -x / sd**2


def softplus_expit(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``log(1 + exp(eta))`` and ``inv_logit(eta)``, sharing one exponential."""
    e = np.exp(-np.abs(eta))
    inv = 1.0 / (1.0 + e)
    return np.maximum(eta, 0.0) + np.log1p(e), np.where(eta >= 0, inv, e * inv)


class HierarchicalModel:
    """Base class. Subclasses declare their parameter blocks and likelihood.

    ``u_blocks`` lists unconstrained blocks as (name, size); ``c_blocks``
    lists reported blocks as (name, shape). Both are set in ``__init__``.
    """

    kind = "base"
    default_warmup = 200
    default_iterations = 2800
    default_target_accept = 0.8

    def __init__(self, data: ModelInput, prior_scale: float | Mapping[str, float] = 1.0):
        self.data = data
        self.prior_scale = prior_scale
        self.K = len(data.algorithms)
        self.J = len(data.benchmarks)
        self._validate()
        self.u_blocks: list[tuple[str, int]] = []
        self.c_blocks: list[tuple[str, tuple[int, ...]]] = []
        self._layout()
        self._u_slices = {}
        start = 0
        for name, size in self.u_blocks:
            self._u_slices[name] = slice(start, start + size)
            start += size
        self.dimension = start
        self._c_slices = {}
        start = 0
        for name, shape in self.c_blocks:
            size = int(np.prod(shape)) if shape else 1
            self._c_slices[name] = (slice(start, start + size), shape)
            start += size
        self.names = self._names()
        self._build_prior()

    # -- hooks ---------------------------------------------------------------

    def _validate(self) -> None:
        pass

    def _layout(self) -> None:
        raise NotImplementedError

    def log_density_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def constrain(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loglik(self, p: Mapping[str, np.ndarray]) -> np.ndarray:
        """Pointwise log-likelihood; ``p`` holds blocks with a leading draw axis."""
        raise NotImplementedError

    def simulate(self, params: Mapping[str, np.ndarray], seed=None) -> ModelInput:
        raise NotImplementedError

    def _priors(self) -> list[tuple[str, str, float, str]]:
        """Prior per unconstrained block as (block, family, value, name).

        ``family`` is ``"normal"`` (value is the sd) or ``"exponential"``
        (value is the rate, applied to ``exp`` of the block with the log
        Jacobian). ``name`` is the constrained parameter the prior belongs
        to and the key used for prior scaling; the standardized benchmark
        effects use the name ``"z"`` and are never scaled.
        """
        raise NotImplementedError

    def _build_prior(self) -> None:
        norm_idx, norm_sd, exp_idx, exp_rate = [], [], [], []
        self._prior_table = []
        for block, family, value, name in self._priors():
            m = 1.0 if name == "z" else self.scale(name)
            idx = np.arange(self.dimension)[self._u_slices[block]]
            if family == "normal":
                norm_idx.append(idx)
                norm_sd.append(np.full(len(idx), value * m))
                self._prior_table.append((name, value * m))
            elif family == "exponential":
                exp_idx.append(idx)
                exp_rate.append(np.full(len(idx), value / m))
                self._prior_table.append((name, m / value))
            else:
                raise ValueError(f"unknown prior family {family}")
        self._norm_idx = np.concatenate(norm_idx) if norm_idx else np.zeros(0, dtype=np.int64)
        sd = np.concatenate(norm_sd) if norm_sd else np.zeros(0)
        self._norm_prec = 1.0 / sd**2
        self._exp_idx = np.concatenate(exp_idx) if exp_idx else np.zeros(0, dtype=np.int64)
        self._exp_rate = np.concatenate(exp_rate) if exp_rate else np.zeros(0)
        self._prior_const = float(-np.sum(np.log(sd)) - 0.5 * LOG_2PI * len(sd) + np.sum(np.log(self._exp_rate)))

    def log_prior(self, theta: np.ndarray, grad: np.ndarray) -> float:
        """Log prior density on the unconstrained scale; adds its gradient to ``grad``."""
        x = theta[self._norm_idx]
        px = self._norm_prec * x
        grad[self._norm_idx] -= px
        u = theta[self._exp_idx]
        ev = self._exp_rate * np.exp(u)
        grad[self._exp_idx] += 1.0 - ev
        return self._prior_const - 0.5 * float(px @ x) + float(u.sum() - ev.sum())

    def prior_sds(self) -> dict[str, float]:
        """Prior standard deviation of each fixed-prior parameter (after scaling)."""
        return {name: sd for name, sd in self._prior_table if name != "z"}

    # -- shared helpers ------------------------------------------------------

    def scale(self, block: str) -> float:
        if isinstance(self.prior_scale, Mapping):
            m = float(self.prior_scale.get(block, 1.0))
        else:
            m = float(self.prior_scale)
        if m <= 0:
            raise ValueError(f"prior scale multiplier for {block} must be positive")
        return m

    def u(self, theta: np.ndarray, name: str) -> np.ndarray:
        return theta[self._u_slices[name]]

    def uslice(self, name: str) -> slice:
        return self._u_slices[name]

    def scalar(self, theta: np.ndarray, name: str) -> float:
        return float(theta[self._u_slices[name].start])

    def _label(self, block: str, shape: tuple[int, ...]) -> list[str]:
        algs, bms = self.data.algorithms, self.data.benchmarks
        if not shape:
            return [block]
        if block in ("a_bm",) and shape == (self.J,):
            return [f"{block}[{b}]" for b in bms]
        if shape == (self.K, self.J):
            return [f"{block}[{a},{b}]" for a in algs for b in bms]
        if shape == (self.K,):
            return [f"{block}[{a}]" for a in algs]
        return [f"{block}[{i}]" for i in range(int(np.prod(shape)))]

    def _names(self) -> list[str]:
        out = []
        for name, shape in self.c_blocks:
            out.extend(self._label(name, shape))
        return out

    def unpack(self, draws: np.ndarray) -> dict[str, np.ndarray]:
        """Split a (S, n_params) constrained draw matrix into named blocks."""
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        out = {}
        for name, (sl, shape) in self._c_slices.items():
            out[name] = draws[:, sl].reshape((draws.shape[0],) + tuple(shape))
        return out

    def pack(self, params: Mapping[str, np.ndarray]) -> np.ndarray:
        """Inverse of ``unpack`` for a single draw."""
        vec = np.empty(len(self.names))
        for name, (sl, shape) in self._c_slices.items():
            vec[sl] = np.asarray(params[name], dtype=float).reshape(-1)
        return vec

    def unconstrain(self, params: Mapping[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def pointwise_loglik(self, draws: np.ndarray) -> np.ndarray:
        """(S, n_obs) log-likelihood matrix from a constrained draw matrix."""
        return self.loglik(self.unpack(draws))

    def _rng(self, seed) -> np.random.Generator:
        return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    @staticmethod
    def _single(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Promote a single draw to a batch of one."""
        return {k: np.asarray(v, dtype=float)[None, ...] for k, v in params.items()}

    @staticmethod
    def _positive(params, *names):
        for name in names:
            if name in params and np.any(np.asarray(params[name]) <= 0):
                raise ValueError(f"parameter {name} must be positive")
