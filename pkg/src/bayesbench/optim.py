"""Black-box optimizers with fixed default parameters.

All algorithms share one evaluation wrapper that enforces the budget, adds
output noise, and keeps a noiseless running-best trace for metric logging.
Candidates that leave the search box are clamped to the bounds before they are
evaluated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .benchfns import BenchmarkFunction, NoiseSpec

__all__ = [
    "ALGORITHMS",
    "AlgorithmSpec",
    "OptRun",
    "default_params",
    "min_budget",
    "optimize",
]

ALGORITHMS = (
    "CMAES",
    "CuckooSearch",
    "DifferentialEvolution",
    "NelderMead",
    "PSO",
    "RandomSearch1",
    "RandomSearch2",
    "SimulatedAnnealing",
)

_DEFAULTS: dict[str, dict[str, float]] = {
    "PSO": {"C1": 2.0, "C2": 2.0, "w": 0.7, "vmin": -1.5, "vmax": 1.5, "population": 30},
    "CuckooSearch": {"pa": 0.2, "alpha": 0.5, "population": 30},
    "SimulatedAnnealing": {"delta": 0.5, "T": 2000.0, "deltaT": 0.8, "epsilon": 1e-23},
    "DifferentialEvolution": {"F": 1.0, "CR": 0.8, "population": 30},
    "NelderMead": {"alpha": 0.1, "gamma": 0.3, "rho": -0.2, "sigma": -0.2},
    "CMAES": {"sigma0": 0.5},
    "RandomSearch1": {},
    "RandomSearch2": {"repeats": 2},
}


@dataclass(frozen=True)
class AlgorithmSpec:
    id: str
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in _DEFAULTS:
            raise KeyError(f"unknown algorithm {self.id!r}; known: {', '.join(ALGORITHMS)}")
        p = self.params
        if "population" in p and p["population"] < 1:
            raise ValueError("population must be >= 1")
        for key in ("CR", "pa"):
            if key in p and not 0 <= p[key] <= 1:
                raise ValueError(f"{key} must lie in [0, 1]")


@dataclass
class OptRun:
    best_x: np.ndarray
    best_f_true: float
    trace_evals: np.ndarray  # 1-based evaluation index at which the running best improved
    trace_delta: np.ndarray  # noiseless running-best f - f_min at that index
    evaluations_used: int
    cpu_seconds: float

    @property
    def trace(self) -> list[tuple[int, float]]:
        return list(zip(self.trace_evals.tolist(), self.trace_delta.tolist()))


def default_params(alg_id: str) -> AlgorithmSpec:
    if alg_id not in _DEFAULTS:
        raise KeyError(f"unknown algorithm {alg_id!r}; known: {', '.join(ALGORITHMS)}")
    return AlgorithmSpec(alg_id, dict(_DEFAULTS[alg_id]))


def _cmaes_lambda(d: int) -> int:
    return 4 + int(3 * math.log(d))


def min_budget(alg: AlgorithmSpec, dimension: int) -> int:
    """Smallest total budget that lets ``alg`` finish its initialisation."""
    p = alg.params
    if alg.id == "DifferentialEvolution":
        return max(4, int(p["population"]))
    if alg.id in ("PSO", "CuckooSearch"):
        return int(p["population"])
    if alg.id == "NelderMead":
        return dimension + 1
    if alg.id == "CMAES":
        return _cmaes_lambda(dimension)
    if alg.id == "RandomSearch2":
        return int(p.get("repeats", 2))
    return 1


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Budgeted noisy objective. Tracks the best point by *observed* value."""

    def __init__(self, fn: BenchmarkFunction, noise: NoiseSpec, budget: int, rng: np.random.Generator):
        self.fn = fn
        self.sd = noise.sd
        self.budget = budget
        self.rng = rng
        self.count = 0
        self.best_seen = math.inf
        self.best_x: np.ndarray | None = None
        self.best_f_true = math.inf
        self.running = math.inf
        self.trace_evals: list[int] = []
        self.trace_delta: list[float] = []

    @property
    def remaining(self) -> int:
        return self.budget - self.count

    def __call__(self, x: np.ndarray) -> float:
        if self.count >= self.budget:
            raise _BudgetExhausted
        fn = self.fn
        if np.any(x < fn.lower) or np.any(x > fn.upper):
            raise ValueError(f"optimizer proposed an out-of-bounds point for {fn.id}")
        f = float(fn.func(x))
        self.count += 1
        delta = f - fn.f_min
        if delta < self.running:
            self.running = delta
            self.trace_evals.append(self.count)
            self.trace_delta.append(delta)
        y = f + self.sd * float(self.rng.standard_normal()) if self.sd else f
        if y < self.best_seen:
            self.best_seen = y
            self.best_x = x.copy()
            self.best_f_true = f
        return y


# -- algorithms --------------------------------------------------------------
# Each takes (obj, fn, params, rng) and runs until the budget raises.


def _random_search(obj, fn, p, rng):
    repeats = int(p.get("repeats", 1))
    d = fn.dimension
    while obj.remaining >= repeats:
        x = rng.uniform(fn.lower, fn.upper, size=d)
        for _ in range(repeats):
            obj(x)


def _pso(obj, fn, p, rng):
    n, d = int(p["population"]), fn.dimension
    lo, hi = fn.lower, fn.upper
    w, c1, c2 = p["w"], p["C1"], p["C2"]
    vmin, vmax = p["vmin"], p["vmax"]
    X = rng.uniform(lo, hi, size=(n, d))
    V = np.zeros((n, d))
    P = X.copy()
    Pf = np.array([obj(x) for x in X])
    g = int(np.argmin(Pf))
    G, Gf = P[g].copy(), Pf[g]
    while True:
        for i in range(n):
            r1, r2 = rng.random(d), rng.random(d)
            V[i] = np.clip(w * V[i] + c1 * r1 * (P[i] - X[i]) + c2 * r2 * (G - X[i]), vmin, vmax)
            X[i] = np.clip(X[i] + V[i], lo, hi)
            f = obj(X[i])
            if f < Pf[i]:
                P[i], Pf[i] = X[i], f
                if f < Gf:
                    G, Gf = X[i].copy(), f


def _differential_evolution(obj, fn, p, rng):
    n, d = int(p["population"]), fn.dimension
    F, CR = p["F"], p["CR"]
    lo, hi = fn.lower, fn.upper
    X = rng.uniform(lo, hi, size=(n, d))
    Xf = np.array([obj(x) for x in X])
    idx = np.arange(n)
    while True:
        trials = np.empty_like(X)
        for i in range(n):
            r1, r2, r3 = rng.choice(idx[idx != i], size=3, replace=False)
            mutant = X[r1] + F * (X[r2] - X[r3])
            cross = rng.random(d) < CR
            cross[rng.integers(d)] = True
            trials[i] = np.clip(np.where(cross, mutant, X[i]), lo, hi)
        tf = np.array([obj(t) for t in trials])
        better = tf < Xf
        X[better], Xf[better] = trials[better], tf[better]


def _simulated_annealing(obj, fn, p, rng):
    d = fn.dimension
    lo, hi = fn.lower, fn.upper
    delta, T0, dT = p["delta"], p["T"], p["deltaT"]
    steps = max(obj.remaining - 1, 1)
    cool = dT * T0 / steps  # linear schedule: T_k = T0 - k * deltaT * T0 / steps
    x = rng.uniform(lo, hi, size=d)
    fx = obj(x)
    T = T0
    while True:
        c = np.clip(x - delta / 2 + rng.random(d) * delta, lo, hi)
        fc = obj(c)
        diff = fc - fx
        if diff < 0 or rng.random() < math.exp(-diff / max(T, p["epsilon"])):
            x, fx = c, fc
        T -= cool


def _initial_simplex(fn, rng):
    d = fn.dimension
    lo, hi = fn.lower, fn.upper
    x0 = rng.uniform(lo, hi, size=d)
    step = 0.1 * (hi - lo)
    S = np.tile(x0, (d + 1, 1))
    for i in range(d):
        # step inwards if the forward step would leave the box
        S[i + 1, i] += step[i] if x0[i] + step[i] <= hi[i] else -step[i]
    return S


def _nelder_mead(obj, fn, p, rng):
    alpha, gamma, rho, sigma = p["alpha"], p["gamma"], p["rho"], p["sigma"]
    lo, hi = fn.lower, fn.upper
    S = _initial_simplex(fn, rng)
    Sf = np.array([obj(x) for x in S])
    while True:
        order = np.argsort(Sf, kind="stable")
        S, Sf = S[order], Sf[order]
        centroid = S[:-1].mean(axis=0)
        away = centroid - S[-1]
        xr = np.clip(centroid + alpha * away, lo, hi)
        fr = obj(xr)
        if Sf[0] <= fr < Sf[-2]:
            S[-1], Sf[-1] = xr, fr
            continue
        if fr < Sf[0]:
            xe = np.clip(centroid + gamma * away, lo, hi)
            fe = obj(xe)
            if fe < fr:
                S[-1], Sf[-1] = xe, fe
            else:
                S[-1], Sf[-1] = xr, fr
            continue
        xc = np.clip(centroid + rho * away, lo, hi)
        fc = obj(xc)
        if fc < Sf[-1]:
            S[-1], Sf[-1] = xc, fc
            continue
        for i in range(1, len(S)):
            S[i] = np.clip(S[0] + sigma * (S[i] - S[0]), lo, hi)
            Sf[i] = obj(S[i])


def _cmaes(obj, fn, p, rng):
    """(mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
    rank-one plus rank-mu covariance updates (Hansen's tutorial settings)."""
    d = fn.dimension
    lo, hi = fn.lower, fn.upper
    lam = _cmaes_lambda(d)
    mu = lam // 2
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w**2)
    cc = (4 + mueff / d) / (d + 4 + 2 * mueff / d)
    cs = (mueff + 2) / (d + mueff + 5)
    c1 = 2 / ((d + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((d + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (d + 1)) - 1) + cs
    chi_n = math.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d**2))

    m = rng.uniform(lo, hi, size=d)
    sigma = p["sigma0"]
    C = np.eye(d)
    pc = np.zeros(d)
    ps = np.zeros(d)
    B, D = np.eye(d), np.ones(d)
    gen = 0
    while True:
        gen += 1
        Z = rng.standard_normal((lam, d))
        Y = (Z * D) @ B.T
        X = np.clip(m + sigma * Y, lo, hi)
        fx = np.empty(lam)
        for k in range(lam):
            fx[k] = obj(X[k])
        order = np.argsort(fx, kind="stable")[:mu]
        Ysel = (X[order] - m) / sigma  # clamped points drive the update
        y_w = w @ Ysel
        m = m + sigma * y_w
        C_inv_sqrt = (B / D) @ B.T
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (C_inv_sqrt @ y_w)
        hsig = np.linalg.norm(ps) / math.sqrt(1 - (1 - cs) ** (2 * gen)) / chi_n < 1.4 + 2 / (d + 1)
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * y_w
        rank_mu = (Ysel.T * w) @ Ysel
        C = (
            (1 - c1 - cmu) * C
            + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * C)
            + cmu * rank_mu
        )
        sigma *= math.exp((cs / damps) * (np.linalg.norm(ps) / chi_n - 1))
        sigma = min(sigma, 1e3 * float(np.max(hi - lo)))
        C = np.triu(C) + np.triu(C, 1).T
        evals, B = np.linalg.eigh(C)
        D = np.sqrt(np.maximum(evals, 1e-300))


def _cuckoo_search(obj, fn, p, rng):
    n, d = int(p["population"]), fn.dimension
    pa, alpha = p["pa"], p["alpha"]
    lo, hi = fn.lower, fn.upper
    beta = 1.5
    sig_u = (
        math.gamma(1 + beta) * math.sin(math.pi * beta / 2)
        / (math.gamma((1 + beta) / 2) * beta * 2 ** ((beta - 1) / 2))
    ) ** (1 / beta)
    X = rng.uniform(lo, hi, size=(n, d))
    Xf = np.array([obj(x) for x in X])
    while True:
        best = X[np.argmin(Xf)].copy()
        # Levy flights (Mantegna's algorithm)
        u = rng.standard_normal((n, d)) * sig_u
        v = rng.standard_normal((n, d))
        step = u / np.abs(v) ** (1 / beta)
        new = np.clip(X + alpha * step * (X - best) * rng.standard_normal((n, d)), lo, hi)
        for i in range(n):
            f = obj(new[i])
            if f < Xf[i]:
                X[i], Xf[i] = new[i], f
        # abandon a fraction pa of nests by biased random walks
        K = rng.random((n, d)) < pa
        walk = rng.random((n, 1)) * (X[rng.permutation(n)] - X[rng.permutation(n)])
        new = np.clip(X + walk * K, lo, hi)
        for i in np.flatnonzero(K.any(axis=1)):
            f = obj(new[i])
            if f < Xf[i]:
                X[i], Xf[i] = new[i], f


_RUNNERS = {
    "PSO": _pso,
    "CuckooSearch": _cuckoo_search,
    "SimulatedAnnealing": _simulated_annealing,
    "DifferentialEvolution": _differential_evolution,
    "NelderMead": _nelder_mead,
    "CMAES": _cmaes,
    "RandomSearch1": _random_search,
    "RandomSearch2": _random_search,
}


def optimize(
    alg: AlgorithmSpec,
    fn: BenchmarkFunction,
    noise: NoiseSpec,
    budget: int,
    seed,
) -> OptRun:
    """Run ``alg`` on ``fn`` for at most ``budget`` total evaluations.

    ``seed`` may be an int, a ``SeedSequence`` or anything accepted by
    ``np.random.SeedSequence``. Algorithm randomness and output noise are drawn
    from independent child streams so the noise sequence does not depend on
    how many random numbers an algorithm consumes.
    """
    budget = int(budget)
    need = min_budget(alg, fn.dimension)
    if budget < need:
        raise ValueError(
            f"budget {budget} is below the minimum of {need} evaluations {alg.id} needs on {fn.id}"
        )
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    alg_ss, noise_ss = ss.spawn(2)
    rng = np.random.default_rng(alg_ss)
    obj = _Objective(fn, noise, budget, np.random.default_rng(noise_ss))
    params = {**_DEFAULTS[alg.id], **alg.params}

    start = time.process_time()
    try:
        _RUNNERS[alg.id](obj, fn, params, rng)
    except _BudgetExhausted:
        pass
    cpu = time.process_time() - start

    return OptRun(
        best_x=obj.best_x,
        best_f_true=obj.best_f_true,
        trace_evals=np.asarray(obj.trace_evals, dtype=np.int64),
        trace_delta=np.asarray(obj.trace_delta, dtype=float),
        evaluations_used=obj.count,
        cpu_seconds=cpu,
    )
