"""Paired-comparison models: Bradley-Terry and its Davidson tie extension.

Each algorithm has a global strength ``a_alg`` plus a per-benchmark deviation
``a_bm[k, j] = s * z[k, j]``. For a comparison on benchmark j the contestant
strength is ``a_alg[k] + a_bm[k, j]``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, logsumexp

from ..harness import SchemaError
from .base import HierarchicalModel, softplus_expit

__all__ = ["BradleyTerryModel", "DavidsonModel", "bt_win_probability", "davidson_probabilities"]


def bt_win_probability(a_i, a_j):
    """Probability that a contestant of strength ``a_i`` beats one of strength ``a_j``."""
    return expit(np.subtract(a_i, a_j))


def davidson_probabilities(a_i, a_j, nu):
    """``(P[i wins], P[j wins], P[tie])`` under the Davidson tie model.

    The tie weight is ``exp(nu + (a_i + a_j) / 2)``; all three share one
    normaliser, so they sum to one for any finite inputs.
    """
    a_i, a_j, nu = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a_i, a_j, nu)))
    logits = np.stack([a_i, a_j, nu + 0.5 * (a_i + a_j)], axis=-1)
    prob = np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
    return prob[..., 0], prob[..., 1], prob[..., 2]


class _PairBase(HierarchicalModel):
    default_iterations = 3800

    def _validate(self):
        d = self.data
        if d.algo0 is None or d.algo1 is None:
            raise SchemaError(f"{self.kind} model needs pair data (algo0, algo1)")
        # The likelihood only depends on the (algo0, algo1, benchmark) cell, so
        # the log density works on per-cell outcome counts.
        keys = np.stack([d.algo0, d.algo1, d.bm_idx], axis=1)
        cells, self._cell_of_row = np.unique(keys, axis=0, return_inverse=True)
        self._cell_of_row = self._cell_of_row.ravel()
        self._c0, self._c1 = cells[:, 0], cells[:, 1]
        J = self.J
        self._i1 = self._c1 * J + cells[:, 2]
        self._i0 = self._c0 * J + cells[:, 2]
        self._n_cells = len(cells)

    def _cell_counts(self, mask) -> np.ndarray:
        return np.bincount(self._cell_of_row, np.asarray(mask, dtype=float), self._n_cells)

    def _strengths(self, theta):
        """Per-cell strengths of algo1 and algo0."""
        a, z = self.u(theta, "a_alg"), self.u(theta, "z_bm")
        s = math.exp(self.scalar(theta, "log_s"))
        return a[self._c1] + s * z[self._i1], a[self._c0] + s * z[self._i0], s, z

    def _strength_grad(self, grad, g1, g0, s, z):
        """Accumulate per-cell d/d(alpha1), d/d(alpha0) into the a_alg, z_bm and log_s slots."""
        K = self.K
        KJ = K * self.J
        grad[self.uslice("a_alg")] = np.bincount(self._c1, g1, K) + np.bincount(self._c0, g0, K)
        grad[self.uslice("z_bm")] = s * (np.bincount(self._i1, g1, KJ) + np.bincount(self._i0, g0, KJ))
        grad[self.uslice("log_s")] = s * float(g1 @ z[self._i1] + g0 @ z[self._i0])

    def _alpha(self, p):
        d = self.data
        a, abm = p["a_alg"], p["a_bm"]
        alpha1 = a[:, d.algo1] + abm[:, d.algo1, d.bm_idx]
        alpha0 = a[:, d.algo0] + abm[:, d.algo0, d.bm_idx]
        return alpha1, alpha0

    def _priors(self):
        return [("a_alg", "normal", 2.0, "a_alg"), ("z_bm", "normal", 1.0, "z"), ("log_s", "exponential", 0.1, "s")]


class BradleyTerryModel(_PairBase):
    """P(algo1 beats algo0) = inv_logit(alpha1 - alpha0). Ties are rejected."""

    kind = "bradley_terry"

    def _validate(self):
        super()._validate()
        if self.data.tie is not None and np.any(self.data.tie):
            raise SchemaError(
                "bradley_terry model cannot take tied comparisons; "
                "use tie_mode='random_winner' or the davidson model"
            )
        self._wins = self._cell_counts(self.data.y == 1)
        self._n = self._cell_counts(np.ones(self.data.n_obs))

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("z_bm", K * J), ("log_s", 1)]
        self.c_blocks = [("a_alg", (K,)), ("s", ()), ("a_bm", (K, J))]

    def log_density_grad(self, theta):
        a1, a0, s, z = self._strengths(theta)
        eta = a1 - a0
        sp, prob = softplus_expit(eta)
        lp = float(self._wins @ eta - self._n @ sp)
        r = self._wins - self._n * prob
        grad = np.empty_like(theta)
        self._strength_grad(grad, r, -r, s, z)
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        s = math.exp(self.u(theta, "log_s")[0])
        return np.concatenate([self.u(theta, "a_alg"), [s], s * self.u(theta, "z_bm")])

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([np.ravel(p["a_alg"]), np.ravel(p["a_bm"]) / s, [math.log(s)]])

    def loglik(self, p):
        a1, a0 = self._alpha(p)
        eta = a1 - a0
        return self.data.y * eta - np.logaddexp(0, eta)

    def simulate(self, params, seed=None):
        self._positive(params, "s")
        rng = self._rng(seed)
        a1, a0 = self._alpha(self._single(params))
        y = (rng.random(self.data.n_obs) < expit(a1[0] - a0[0])).astype(np.int64)
        return self.data.with_response(y, tie=np.zeros(self.data.n_obs, dtype=bool))


class DavidsonModel(_PairBase):
    """Three outcomes with log-weights alpha1 (algo1 wins), alpha0 (algo0
    wins) and nu_tie + (alpha1 + alpha0) / 2 (tie)."""

    kind = "davidson"

    def _validate(self):
        super()._validate()
        d = self.data
        tie = d.tie if d.tie is not None else np.zeros(d.n_obs, dtype=bool)
        # Outcome column: 0 -> algo1 wins, 1 -> algo0 wins, 2 -> tie.
        self._outcome = np.where(tie, 2, np.where(d.y == 1, 0, 1))
        self._counts = np.stack([self._cell_counts(self._outcome == k) for k in range(3)], axis=1)
        self._n = self._counts.sum(axis=1)

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("z_bm", K * J), ("log_s", 1), ("nu_tie", 1)]
        self.c_blocks = [("a_alg", (K,)), ("s", ()), ("nu_tie", ()), ("a_bm", (K, J))]

    def _priors(self):
        return super()._priors() + [("nu_tie", "normal", 2.0, "nu_tie")]

    def log_density_grad(self, theta):
        a1, a0, s, z = self._strengths(theta)
        nu = self.scalar(theta, "nu_tie")
        logits = np.stack([a1, a0, nu + 0.5 * (a1 + a0)], axis=1)
        top = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - top)
        tot = e.sum(axis=1, keepdims=True)
        lse = (top + np.log(tot))[:, 0]
        lp = float(np.sum(self._counts * logits) - self._n @ lse)
        g = self._counts - self._n[:, None] * (e / tot)
        grad = np.empty_like(theta)
        self._strength_grad(grad, g[:, 0] + 0.5 * g[:, 2], g[:, 1] + 0.5 * g[:, 2], s, z)
        grad[self.uslice("nu_tie")] = float(g[:, 2].sum())
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        s = math.exp(self.u(theta, "log_s")[0])
        return np.concatenate([self.u(theta, "a_alg"), [s], self.u(theta, "nu_tie"), s * self.u(theta, "z_bm")])

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([np.ravel(p["a_alg"]), np.ravel(p["a_bm"]) / s, [math.log(s)], [float(p["nu_tie"])]])

    def _logits(self, p):
        a1, a0 = self._alpha(p)
        tie = p["nu_tie"][:, None] + 0.5 * (a1 + a0)
        return np.stack([a1, a0, tie], axis=-1)

    def loglik(self, p):
        logits = self._logits(p)
        lse = logsumexp(logits, axis=-1)
        picked = np.take_along_axis(logits, np.broadcast_to(self._outcome[None, :, None], lse.shape + (1,)), axis=-1)
        return picked[..., 0] - lse

    def simulate(self, params, seed=None):
        self._positive(params, "s")
        rng = self._rng(seed)
        logits = self._logits(self._single(params))[0]
        prob = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        u = rng.random(len(prob))[:, None]
        outcome = (u > np.cumsum(prob, axis=1)).sum(axis=1)
        outcome = np.minimum(outcome, 2)
        return self.data.with_response((outcome == 0).astype(np.int64), tie=outcome == 2)
