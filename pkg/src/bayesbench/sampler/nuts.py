"""Multinomial No-U-Turn sampler with Stan-style warmup.

The sampler works on an unconstrained parameter vector. Each chain uses a
diagonal inverse metric estimated in doubling windows during warmup and a
step size tuned by dual averaging toward the target acceptance statistic.
Draws are stored after mapping through ``Target.constrain``.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Target",
    "SamplerConfig",
    "PosteriorDraws",
    "nuts_sample",
    "check_gradient",
    "DIVERGENCE_THRESHOLD",
]

DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class Target:
    """Log density over R^dimension with its gradient.

    ``constrain`` maps an unconstrained vector to the reported parameter
    vector whose entries are named by ``names``; by default it is the
    identity.
    """

    dimension: int
    log_density_grad: Callable[[np.ndarray], tuple[float, np.ndarray]]
    names: Sequence[str] | None = None
    constrain: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.names is None:
            self.names = [f"theta[{i}]" for i in range(self.dimension)]
        self.names = list(self.names)
        if self.constrain is None and len(self.names) != self.dimension:
            raise ValueError("names must match dimension when constrain is the identity")


@dataclass
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    iterations: int = 1000
    target_accept: float = 0.8
    max_depth: int = 10
    seed: int = 0
    init_radius: float = 2.0
    step_size: float | None = None  # fixed step size; disables step-size adaptation
    adapt_metric: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.warmup < 0 or (self.warmup < 1 and self.step_size is None):
            raise ValueError("warmup must be >= 1 unless a fixed step_size is given")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass
class PosteriorDraws:
    """Post-warmup draws, shape (chains, iterations, n_params)."""

    draws: np.ndarray
    names: list[str]
    divergent: np.ndarray
    step_size: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tree_depth: np.ndarray | None = None
    accept_stat: np.ndarray | None = None
    n_leapfrog: np.ndarray | None = None
    inv_metric: np.ndarray | None = None
    max_depth: int = 10

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_iterations(self) -> int:
        return self.draws.shape[1]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def param(self, name: str) -> np.ndarray:
        """(chains, iterations) array for one parameter."""
        return self.draws[:, :, self.index(name)]

    def flat(self, name: str | None = None) -> np.ndarray:
        """Draws with chains concatenated; all parameters if ``name`` is None."""
        if name is None:
            return self.draws.reshape(-1, self.draws.shape[2])
        return self.param(name).reshape(-1)

    def block(self, prefix: str) -> np.ndarray:
        """Flattened draws of every parameter named ``prefix[...]``, in order."""
        cols = [i for i, n in enumerate(self.names) if n == prefix or n.startswith(prefix + "[")]
        if not cols:
            raise KeyError(f"no parameters in block {prefix!r}")
        return self.flat()[:, cols]

    @property
    def n_max_depth(self) -> int:
        if self.tree_depth is None:
            return 0
        return int(np.sum(self.tree_depth >= self.max_depth))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", "divergent", *self.names])
            for c in range(self.n_chains):
                for t in range(self.n_iterations):
                    w.writerow([c, t, int(self.divergent[c, t]), *map(repr, self.draws[c, t].tolist())])

    @classmethod
    def from_csv(cls, path) -> "PosteriorDraws":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["chain", "iteration", "divergent"]:
                raise ValueError(f"{path}: not a draws file (header starts {header[:3]})")
            rows = [r for r in reader]
        chain = np.array([int(r[0]) for r in rows])
        n_chains = int(chain.max()) + 1
        n_iter = len(rows) // n_chains
        values = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(n_chains, n_iter, -1)
        div = np.array([r[2] == "1" for r in rows]).reshape(n_chains, n_iter)
        return cls(draws=values, names=header[3:], divergent=div)


def check_gradient(target: Target, theta: np.ndarray, rel_tol: float = 1e-4, h: float = 1e-6):
    """Central finite-difference check; returns the worst relative error."""
    theta = np.asarray(theta, dtype=float)
    _, g = target.log_density_grad(theta)
    fd = np.empty_like(theta)
    for i in range(theta.size):
        step = h * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        fd[i] = (target.log_density_grad(up)[0] - target.log_density_grad(dn)[0]) / (2 * step)
    err = np.abs(fd - g) / np.maximum(1.0, np.abs(fd))
    return float(err.max())


# -- chain machinery ---------------------------------------------------------


class _DualAveraging:
    def __init__(self, step_size: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * step_size)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept: float) -> float:
        self.counter += 1
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1 - eta) * self.s_bar + eta * (self.target - accept)
        x = self.mu - math.sqrt(self.counter) / self.gamma * self.s_bar
        w = self.counter ** -self.kappa
        self.x_bar = w * x + (1 - w) * self.x_bar
        return math.exp(x)

    @property
    def final(self) -> float:
        return math.exp(self.x_bar)


class _Tree:
    __slots__ = (
        "q_minus", "p_minus", "g_minus", "ps_minus",
        "q_plus", "p_plus", "g_plus", "ps_plus",
        "q_prop", "lp_prop", "g_prop",
        "log_w", "rho", "valid", "divergent", "n", "sum_accept",
    )


def _log_add(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


def _no_uturn(rho, ps_minus, ps_plus) -> bool:
    return float(rho @ ps_minus) > 0 and float(rho @ ps_plus) > 0


def _warmup_windows(warmup: int) -> list[int]:
    """Ends of the metric-adaptation windows (15% initial, 10% final buffer)."""
    init = int(0.15 * warmup)
    term = int(0.10 * warmup)
    slow_end = warmup - term
    if slow_end - init < 20:
        return []
    ends, start, window = [], init, 25
    while start < slow_end:
        end = start + window
        if end + 2 * window > slow_end:
            end = slow_end
        ends.append(end)
        start, window = end, 2 * window
    return ends


class _Chain:
    def __init__(self, target: Target, config: SamplerConfig, rng: np.random.Generator):
        self._f = target.log_density_grad
        self.cfg = config
        self.rng = rng
        self.d = target.dimension
        self.inv_m = np.ones(self.d)

    def f(self, q):
        # A density that overflows far out in the tails counts as zero
        # density, which the tree builder then reports as a divergence.
        try:
            lp, g = self._f(q)
        except (OverflowError, FloatingPointError):
            return -math.inf, np.zeros(self.d)
        if not math.isfinite(lp) or not np.all(np.isfinite(g)):
            return -math.inf, np.zeros(self.d)
        return lp, g

    def leapfrog(self, q, p, g, eps):
        p = p + 0.5 * eps * g
        q = q + eps * self.inv_m * p
        lp, g = self.f(q)
        p = p + 0.5 * eps * g
        return q, p, g, lp

    def kinetic(self, p):
        return 0.5 * float(p @ (self.inv_m * p))

    def sample_momentum(self):
        return self.rng.standard_normal(self.d) / np.sqrt(self.inv_m)

    def build(self, q, p, g, depth, direction, eps, H0) -> _Tree:
        if depth == 0:
            q, p, g, lp = self.leapfrog(q, p, g, direction * eps)
            ps = self.inv_m * p
            H = -lp + 0.5 * float(p @ ps)
            if not math.isfinite(H):
                H = math.inf
            dH = H - H0
            t = _Tree()
            t.q_minus = t.q_plus = t.q_prop = q
            t.p_minus = t.p_plus = p
            t.g_minus = t.g_plus = t.g_prop = g
            t.ps_minus = t.ps_plus = ps
            t.lp_prop = lp
            t.log_w = -dH
            t.rho = p
            t.divergent = not abs(dH) <= DIVERGENCE_THRESHOLD
            t.valid = not t.divergent
            t.n = 1
            t.sum_accept = math.exp(min(0.0, -dH)) if math.isfinite(dH) else 0.0
            return t

        t1 = self.build(q, p, g, depth - 1, direction, eps, H0)
        if not t1.valid:
            return t1
        if direction > 0:
            t2 = self.build(t1.q_plus, t1.p_plus, t1.g_plus, depth - 1, direction, eps, H0)
        else:
            t2 = self.build(t1.q_minus, t1.p_minus, t1.g_minus, depth - 1, direction, eps, H0)
        t1.n += t2.n
        t1.sum_accept += t2.sum_accept
        t1.divergent = t1.divergent or t2.divergent
        if not t2.valid:
            t1.valid = False
            return t1

        log_w = _log_add(t1.log_w, t2.log_w)
        if math.log(self.rng.random()) < t2.log_w - log_w:
            t1.q_prop, t1.lp_prop, t1.g_prop = t2.q_prop, t2.lp_prop, t2.g_prop
        t1.log_w = log_w

        left, right = (t1, t2) if direction > 0 else (t2, t1)
        rho = left.rho + right.rho
        valid = (
            _no_uturn(rho, left.ps_minus, right.ps_plus)
            and _no_uturn(left.rho + right.p_minus, left.ps_minus, right.ps_minus)
            and _no_uturn(right.rho + left.p_plus, left.ps_plus, right.ps_plus)
        )
        if direction > 0:
            t1.q_plus, t1.p_plus, t1.g_plus, t1.ps_plus = t2.q_plus, t2.p_plus, t2.g_plus, t2.ps_plus
        else:
            t1.q_minus, t1.p_minus, t1.g_minus, t1.ps_minus = t2.q_minus, t2.p_minus, t2.g_minus, t2.ps_minus
        t1.rho = rho
        t1.valid = valid
        return t1

    def transition(self, q, lp, g, eps):
        """One NUTS iteration. Returns (q, lp, g, accept_stat, depth, n_leapfrog, divergent)."""
        p = self.sample_momentum()
        H0 = -lp + self.kinetic(p)
        ps = self.inv_m * p
        q_minus = q_plus = q
        p_minus = p_plus = p
        g_minus = g_plus = g
        ps_minus = ps_plus = ps
        rho = p.copy()
        log_w = 0.0
        q_new, lp_new, g_new = q, lp, g
        n_leap, sum_acc, divergent, depth = 0, 0.0, False, 0

        while depth < self.cfg.max_depth:
            direction = 1 if self.rng.random() < 0.5 else -1
            if direction > 0:
                t = self.build(q_plus, p_plus, g_plus, depth, 1, eps, H0)
            else:
                t = self.build(q_minus, p_minus, g_minus, depth, -1, eps, H0)
            depth += 1
            n_leap += t.n
            sum_acc += t.sum_accept
            if t.divergent:
                divergent = True
            if not t.valid:
                break
            if math.log(self.rng.random()) < t.log_w - log_w:
                q_new, lp_new, g_new = t.q_prop, t.lp_prop, t.g_prop
            log_w = _log_add(log_w, t.log_w)

            if direction > 0:
                left_rho, right_rho = rho, t.rho
                l_ps_minus, l_ps_plus, l_p_plus = ps_minus, ps_plus, p_plus
                r_ps_minus, r_ps_plus, r_p_minus = t.ps_minus, t.ps_plus, t.p_minus
                q_plus, p_plus, g_plus, ps_plus = t.q_plus, t.p_plus, t.g_plus, t.ps_plus
            else:
                left_rho, right_rho = t.rho, rho
                l_ps_minus, l_ps_plus, l_p_plus = t.ps_minus, t.ps_plus, t.p_plus
                r_ps_minus, r_ps_plus, r_p_minus = ps_minus, ps_plus, p_minus
                q_minus, p_minus, g_minus, ps_minus = t.q_minus, t.p_minus, t.g_minus, t.ps_minus
            rho = left_rho + right_rho
            if not (
                _no_uturn(rho, ps_minus, ps_plus)
                and _no_uturn(left_rho + r_p_minus, l_ps_minus, r_ps_minus)
                and _no_uturn(right_rho + l_p_plus, l_ps_plus, r_ps_plus)
            ):
                break
        accept = sum_acc / max(n_leap, 1)
        return q_new, lp_new, g_new, accept, depth, n_leap, divergent

    def reasonable_step_size(self, q, lp, g, eps):
        log_target = math.log(0.8)

        def delta_h(e):
            p = self.sample_momentum()
            H0 = -lp + self.kinetic(p)
            _, p1, _, lp1 = self.leapfrog(q, p, g, e)
            h = H0 - (-lp1 + self.kinetic(p1))
            return h if math.isfinite(h) else -math.inf

        direction = 1 if delta_h(eps) > log_target else -1
        for _ in range(100):
            eps = eps * 2.0 if direction > 0 else eps / 2.0
            if eps > 1e7 or eps < 1e-10:
                break
            h = delta_h(eps)
            if direction > 0 and not h > log_target:
                break
            if direction < 0 and h > log_target:
                break
        return eps

    def initial_point(self):
        r = self.cfg.init_radius
        for _ in range(100):
            q = self.rng.uniform(-r, r, size=self.d)
            lp, g = self.f(q)
            if math.isfinite(lp) and np.all(np.isfinite(g)):
                return q, lp, np.asarray(g, dtype=float)
        raise RuntimeError("could not find a finite initial point after 100 attempts")

    def run(self, target: Target):
        cfg = self.cfg
        constrain = target.constrain or (lambda q: q.copy())
        q, lp, g = self.initial_point()
        err = check_gradient(target, q)
        if err > 1e-3:
            raise ValueError(f"gradient check failed at the initial point (relative error {err:.2g})")
        n_out = len(constrain(q))
        draws = np.empty((cfg.iterations, n_out))
        div = np.zeros(cfg.iterations, dtype=bool)
        depth = np.zeros(cfg.iterations, dtype=np.int64)
        acc = np.zeros(cfg.iterations)
        nleap = np.zeros(cfg.iterations, dtype=np.int64)

        if cfg.step_size is not None:
            eps = cfg.step_size
        else:
            eps = self.reasonable_step_size(q, lp, g, 1.0)
            dual = _DualAveraging(eps, cfg.target_accept)
            windows = _warmup_windows(cfg.warmup) if cfg.adapt_metric else []
            win_start = int(0.15 * cfg.warmup)
            samples: list[np.ndarray] = []
            for it in range(cfg.warmup):
                q, lp, g, a, *_ = self.transition(q, lp, g, eps)
                eps = dual.update(a)
                if windows and win_start <= it < windows[-1]:
                    samples.append(q)
                    if it + 1 == windows[0]:
                        x = np.asarray(samples)
                        n = len(x)
                        var = x.var(axis=0, ddof=1) if n > 1 else np.ones(self.d)
                        self.inv_m = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                        samples = []
                        windows.pop(0)
                        eps = self.reasonable_step_size(q, lp, g, eps)
                        dual = _DualAveraging(eps, cfg.target_accept)
            eps = dual.final

        for it in range(cfg.iterations):
            q, lp, g, a, dpt, nl, dv = self.transition(q, lp, g, eps)
            draws[it] = constrain(q)
            div[it], depth[it], acc[it], nleap[it] = dv, dpt, a, nl
        return draws, div, eps, depth, acc, nleap, self.inv_m.copy()


_POOL_TARGET: Target | None = None


def _run_chain(args):
    target, config, seed_seq = args
    if target is None:
        target = _POOL_TARGET
    chain = _Chain(target, config, np.random.default_rng(seed_seq))
    # Trajectories that fly off into the tails overflow; the tree builder
    # already turns non-finite energies into divergences.
    with np.errstate(over="ignore", invalid="ignore"):
        return chain.run(target)


def nuts_sample(target: Target, config: SamplerConfig | None = None) -> PosteriorDraws:
    """Draw ``config.chains`` independent NUTS chains from ``target``.

    Chain ``c`` uses the ``c``-th child of ``SeedSequence(config.seed)``, so
    results do not depend on ``config.jobs``.
    """
    global _POOL_TARGET
    config = config or SamplerConfig()
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    if config.jobs > 1 and config.chains > 1:
        _POOL_TARGET = target
        try:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(min(config.jobs, config.chains)) as pool:
                results = pool.map(_run_chain, [(None, config, s) for s in seeds])
        finally:
            _POOL_TARGET = None
    else:
        results = [_run_chain((target, config, s)) for s in seeds]

    draws = np.stack([r[0] for r in results])
    out = PosteriorDraws(
        draws=draws,
        names=list(target.names),
        divergent=np.stack([r[1] for r in results]),
        step_size=np.array([r[2] for r in results]),
        tree_depth=np.stack([r[3] for r in results]),
        accept_stat=np.stack([r[4] for r in results]),
        n_leapfrog=np.stack([r[5] for r in results]),
        inv_metric=np.stack([r[6] for r in results]),
        max_depth=config.max_depth,
    )
    if not np.all(np.isfinite(draws)):
        raise FloatingPointError("sampler produced non-finite draws")
    if out.n_max_depth:
        warnings.warn(
            f"{out.n_max_depth} iterations hit the maximum tree depth {config.max_depth}",
            RuntimeWarning,
            stacklevel=2,
        )
    return out
