"""Per-algorithm regression models with a benchmark random intercept."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import digamma, expit, gammaln

from ..harness import SchemaError
from .base import LOG_2PI, HierarchicalModel, softplus_expit


class _InterceptModel(HierarchicalModel):
    """Shared plumbing for models with ``a_alg[i] + s * z[j]`` in the predictor."""

    def _offset(self, theta):
        """Returns (z, s, linear predictor without slope terms)."""
        d = self.data
        a, z = self.u(theta, "a_alg"), self.u(theta, "z_bm")
        s = math.exp(self.scalar(theta, "log_s"))
        return z, s, a[d.alg_idx] + s * z[d.bm_idx]

    def _offset_grad(self, grad, dmu, s, z):
        d = self.data
        grad[self.uslice("a_alg")] = np.bincount(d.alg_idx, dmu, self.K)
        grad[self.uslice("z_bm")] = s * np.bincount(d.bm_idx, dmu, self.J)
        grad[self.uslice("log_s")] = s * float(dmu @ z[d.bm_idx])

    def _offset_draws(self, p):
        d = self.data
        return p["a_alg"][:, d.alg_idx] + p["a_bm"][:, d.bm_idx]

    def _with_s(self, theta, *head):
        s = math.exp(self.scalar(theta, "log_s"))
        return np.concatenate([*head, [s], s * self.u(theta, "z_bm")])


class LinearModel(_InterceptModel):
    """y ~ Normal(a_alg[i] + a_bm[j] + b * x, sigma)."""

    kind = "linear"
    default_iterations = 1800

    def _validate(self):
        if self.data.x is None:
            raise SchemaError("linear model needs a covariate x")

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("b", 1), ("z_bm", J), ("log_s", 1), ("log_sigma", 1)]
        self.c_blocks = [("a_alg", (K,)), ("b", ()), ("sigma", ()), ("s", ()), ("a_bm", (J,))]

    def _priors(self):
        return [("a_alg", "normal", 10.0, "a_alg"), ("b", "normal", 10.0, "b"), ("z_bm", "normal", 1.0, "z"),
                ("log_s", "exponential", 1.0, "s"), ("log_sigma", "exponential", 1.0, "sigma")]

    def log_density_grad(self, theta):
        d = self.data
        z, s, mu = self._offset(theta)
        b = self.scalar(theta, "b")
        log_sigma = self.scalar(theta, "log_sigma")
        sigma = math.exp(log_sigma)
        r = (d.y - mu - b * d.x) / sigma
        rr = float(r @ r)
        lp = -0.5 * rr - d.n_obs * (log_sigma + 0.5 * LOG_2PI)
        dmu = r / sigma
        grad = np.empty_like(theta)
        self._offset_grad(grad, dmu, s, z)
        grad[self.uslice("b")] = float(dmu @ d.x)
        grad[self.uslice("log_sigma")] = rr - d.n_obs
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        return np.concatenate([
            self.u(theta, "a_alg"), self.u(theta, "b"), np.exp(self.u(theta, "log_sigma")),
            self._with_s(theta),
        ])

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([
            np.ravel(p["a_alg"]), [float(p["b"])], np.ravel(p["a_bm"]) / s, [math.log(s)],
            [math.log(float(p["sigma"]))],
        ])

    def _mean(self, p):
        return self._offset_draws(p) + p["b"][:, None] * self.data.x

    def loglik(self, p):
        sigma = p["sigma"][:, None]
        r = (self.data.y - self._mean(p)) / sigma
        return -0.5 * r**2 - np.log(sigma) - 0.5 * LOG_2PI

    def simulate(self, params, seed=None):
        self._positive(params, "sigma", "s")
        p = self._single(params)
        rng = self._rng(seed)
        mu = self._mean(p)[0]
        return self.data.with_response(mu + p["sigma"][0] * rng.standard_normal(self.data.n_obs))


class BinomialModel(_InterceptModel):
    """y ~ Binomial(N, inv_logit(a_alg[i] + a_bm[j] + b_noise[i] * x_noise))."""

    kind = "binomial"
    default_iterations = 2800
    default_target_accept = 0.95

    def _validate(self):
        d = self.data
        if d.n_trials is None or d.x is None:
            raise SchemaError("binomial model needs n_trials and the noise covariate")
        if np.any(d.y > d.n_trials) or np.any(d.y < 0):
            raise SchemaError("binomial model: successes must satisfy 0 <= y <= N")
        self._log_choose = gammaln(d.n_trials + 1) - gammaln(d.y + 1) - gammaln(d.n_trials - d.y + 1)
        self._log_choose_sum = float(self._log_choose.sum())

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("b_noise", K), ("z_bm", J), ("log_s", 1)]
        self.c_blocks = [("a_alg", (K,)), ("b_noise", (K,)), ("s", ()), ("a_bm", (J,))]

    def _priors(self):
        return [("a_alg", "normal", 5.0, "a_alg"), ("b_noise", "normal", 5.0, "b_noise"),
                ("z_bm", "normal", 1.0, "z"), ("log_s", "exponential", 0.1, "s")]

    def log_density_grad(self, theta):
        d = self.data
        z, s, eta = self._offset(theta)
        b = self.u(theta, "b_noise")
        eta = eta + b[d.alg_idx] * d.x
        sp, prob = softplus_expit(eta)
        lp = self._log_choose_sum + float(d.y @ eta - d.n_trials @ sp)
        r = d.y - d.n_trials * prob
        grad = np.empty_like(theta)
        self._offset_grad(grad, r, s, z)
        grad[self.uslice("b_noise")] = np.bincount(d.alg_idx, r * d.x, self.K)
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        return self._with_s(theta, self.u(theta, "a_alg"), self.u(theta, "b_noise"))

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([np.ravel(p["a_alg"]), np.ravel(p["b_noise"]), np.ravel(p["a_bm"]) / s, [math.log(s)]])

    def _eta(self, p):
        d = self.data
        return self._offset_draws(p) + p["b_noise"][:, d.alg_idx] * d.x

    def loglik(self, p):
        d = self.data
        eta = self._eta(p)
        return self._log_choose + d.y * eta - d.n_trials * np.logaddexp(0, eta)

    def simulate(self, params, seed=None):
        self._positive(params, "s")
        rng = self._rng(seed)
        prob = expit(self._eta(self._single(params))[0])
        return self.data.with_response(rng.binomial(self.data.n_trials, prob))


class RelativeImprovementModel(_InterceptModel):
    """y ~ Normal(a_alg[i] + a_bm[j], sigma)."""

    kind = "relative_improvement"
    default_iterations = 1800

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("z_bm", J), ("log_s", 1), ("log_sigma", 1)]
        self.c_blocks = [("sigma", ()), ("a_alg", (K,)), ("s", ()), ("a_bm", (J,))]

    def _priors(self):
        return [("a_alg", "normal", 1.0, "a_alg"), ("z_bm", "normal", 1.0, "z"),
                ("log_s", "exponential", 0.1, "s"), ("log_sigma", "exponential", 1.0, "sigma")]

    def log_density_grad(self, theta):
        d = self.data
        z, s, mu = self._offset(theta)
        log_sigma = self.scalar(theta, "log_sigma")
        sigma = math.exp(log_sigma)
        r = (d.y - mu) / sigma
        rr = float(r @ r)
        lp = -0.5 * rr - d.n_obs * (log_sigma + 0.5 * LOG_2PI)
        grad = np.empty_like(theta)
        self._offset_grad(grad, r / sigma, s, z)
        grad[self.uslice("log_sigma")] = rr - d.n_obs
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        return np.concatenate([np.exp(self.u(theta, "log_sigma")), self._with_s(theta, self.u(theta, "a_alg"))])

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([
            np.ravel(p["a_alg"]), np.ravel(p["a_bm"]) / s, [math.log(s)], [math.log(float(p["sigma"]))],
        ])

    def loglik(self, p):
        sigma = p["sigma"][:, None]
        r = (self.data.y - self._offset_draws(p)) / sigma
        return -0.5 * r**2 - np.log(sigma) - 0.5 * LOG_2PI

    def simulate(self, params, seed=None):
        self._positive(params, "sigma", "s")
        p = self._single(params)
        rng = self._rng(seed)
        mu = self._offset_draws(p)[0]
        return self.data.with_response(mu + p["sigma"][0] * rng.standard_normal(self.data.n_obs))


class CoxModel(_InterceptModel):
    """Exponential survival with right censoring.

    log hazard = a_alg[i] + a_bm[j] + b_noise[i] * x_noise. Events contribute
    the exponential log density, censored rows the log survival function.
    """

    kind = "cox"
    default_iterations = 2800
    default_target_accept = 0.95

    def _validate(self):
        d = self.data
        if d.event is None or d.x is None:
            raise SchemaError("cox model needs event flags and the noise covariate")
        if np.any(d.y <= 0):
            raise SchemaError("cox model: survival times must be positive")

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("b_noise", K), ("z_bm", J), ("log_s", 1)]
        self.c_blocks = [("a_alg", (K,)), ("b_noise", (K,)), ("s", ()), ("a_bm", (J,))]

    def _priors(self):
        return [("a_alg", "normal", 10.0, "a_alg"), ("b_noise", "normal", 2.0, "b_noise"),
                ("z_bm", "normal", 1.0, "z"), ("log_s", "exponential", 0.1, "s")]

    def log_density_grad(self, theta):
        d = self.data
        z, s, log_rate = self._offset(theta)
        b = self.u(theta, "b_noise")
        log_rate = log_rate + b[d.alg_idx] * d.x
        ly = np.exp(log_rate) * d.y
        lp = float(d.event @ log_rate - ly.sum())
        r = d.event - ly
        grad = np.empty_like(theta)
        self._offset_grad(grad, r, s, z)
        grad[self.uslice("b_noise")] = np.bincount(d.alg_idx, r * d.x, self.K)
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        return self._with_s(theta, self.u(theta, "a_alg"), self.u(theta, "b_noise"))

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([np.ravel(p["a_alg"]), np.ravel(p["b_noise"]), np.ravel(p["a_bm"]) / s, [math.log(s)]])

    def _log_rate(self, p):
        d = self.data
        return self._offset_draws(p) + p["b_noise"][:, d.alg_idx] * d.x

    def loglik(self, p):
        d = self.data
        log_rate = self._log_rate(p)
        return d.event * log_rate - np.exp(log_rate) * d.y

    def simulate(self, params, seed=None, censor_at=None):
        """Exponential event times, right censored at ``censor_at`` (defaults
        to the per-row budget recorded in the input, if any)."""
        self._positive(params, "s")
        rng = self._rng(seed)
        rate = np.exp(self._log_rate(self._single(params))[0])
        t = rng.exponential(1.0 / rate)
        if censor_at is None:
            censor_at = self.data.meta.get("censor_at")
        if censor_at is None:
            return self.data.with_response(t, event=np.ones(len(t), dtype=np.int64))
        c = np.broadcast_to(np.asarray(censor_at, dtype=float), t.shape)
        event = (t <= c).astype(np.int64)
        return self.data.with_response(np.minimum(t, c), event=event)


class StudentTModel(_InterceptModel):
    """y ~ Student-T(nu, a_alg[i] + a_bm[j], sigma[i]) with one shared nu."""

    kind = "student_t"
    default_iterations = 2800

    def _validate(self):
        counts = np.bincount(self.data.alg_idx, minlength=len(self.data.algorithms))
        if np.any(counts < 2):
            bad = self.data.algorithms[int(np.argmin(counts))]
            raise SchemaError(
                f"student_t model needs at least 2 observations per algorithm ({bad} has {counts.min()})"
            )
        self._counts = counts.astype(float)

    def _layout(self):
        K, J = self.K, self.J
        self.u_blocks = [("a_alg", K), ("z_bm", J), ("log_s", 1), ("log_sigma", K), ("log_nu", 1)]
        self.c_blocks = [("a_alg", (K,)), ("sigma", (K,)), ("nu", ()), ("s", ()), ("a_bm", (J,))]

    def _priors(self):
        return [("a_alg", "normal", 1.0, "a_alg"), ("z_bm", "normal", 1.0, "z"),
                ("log_s", "exponential", 1.0, "s"), ("log_sigma", "exponential", 1.0, "sigma"),
                ("log_nu", "exponential", 1 / 30, "nu")]

    def log_density_grad(self, theta):
        d = self.data
        z, s, mu = self._offset(theta)
        log_sig = self.u(theta, "log_sigma")
        nu = math.exp(self.scalar(theta, "log_nu"))
        sig = np.exp(log_sig)[d.alg_idx]
        r = (d.y - mu) / sig
        r2 = r * r
        q = np.log1p(r2 / nu)
        n = d.n_obs
        lp = (
            n * (gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(nu * math.pi))
            - float(self._counts @ log_sig)
            - 0.5 * (nu + 1) * float(q.sum())
        )
        w = (nu + 1) / (nu + r2)
        dmu = w * r / sig
        dlsig = w * r2 - 1.0
        dnu = (
            n * (0.5 * digamma((nu + 1) / 2) - 0.5 * digamma(nu / 2) - 0.5 / nu)
            - 0.5 * float(q.sum())
            + 0.5 * float((w * r2).sum()) / nu
        )
        grad = np.empty_like(theta)
        self._offset_grad(grad, dmu, s, z)
        grad[self.uslice("log_sigma")] = np.bincount(d.alg_idx, dlsig, self.K)
        grad[self.uslice("log_nu")] = nu * dnu
        return lp + self.log_prior(theta, grad), grad

    def constrain(self, theta):
        return self._with_s(
            theta, self.u(theta, "a_alg"), np.exp(self.u(theta, "log_sigma")), np.exp(self.u(theta, "log_nu"))
        )

    def unconstrain(self, p):
        s = float(p["s"])
        return np.concatenate([
            np.ravel(p["a_alg"]), np.ravel(p["a_bm"]) / s, [math.log(s)],
            np.log(np.ravel(p["sigma"])), [math.log(float(p["nu"]))],
        ])

    def loglik(self, p):
        d = self.data
        nu = p["nu"][:, None]
        sig = p["sigma"][:, d.alg_idx]
        r = (d.y - self._offset_draws(p)) / sig
        return (
            gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * np.log(nu * np.pi)
            - np.log(sig) - 0.5 * (nu + 1) * np.log1p(r**2 / nu)
        )

    def simulate(self, params, seed=None):
        self._positive(params, "sigma", "s", "nu")
        p = self._single(params)
        d = self.data
        rng = self._rng(seed)
        mu = self._offset_draws(p)[0]
        return d.with_response(mu + p["sigma"][0, d.alg_idx] * rng.standard_t(float(p["nu"][0]), size=d.n_obs))
