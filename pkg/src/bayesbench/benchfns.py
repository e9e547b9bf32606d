"""Continuous benchmark functions with known global minima.

Definitions follow Jamil & Yang, "A literature survey of benchmark functions
for global optimization problems" (2013). Every function is written to accept
either a single point of shape ``(d,)`` or a batch of shape ``(n, d)`` so the
minima can be validated by dense random probing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "BenchmarkFunction",
    "NoiseSpec",
    "evaluate",
    "evaluate_noisy",
    "distance_to_nearest_minimum",
    "registry_list",
    "get_function",
    "catalog",
    "catalog_json",
]


@dataclass(frozen=True)
class BenchmarkFunction:
    """A box-bounded objective with a stored list of global minimisers."""

    id: str
    dimension: int
    bounds: np.ndarray  # shape (d, 2)
    minima: np.ndarray  # shape (m, d)
    f_min: float
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float)
        minima = np.atleast_2d(np.asarray(self.minima, dtype=float))
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if bounds.shape != (self.dimension, 2) or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError(f"{self.id}: bounds must have shape ({self.dimension}, 2) with low < high")
        if minima.shape[1] != self.dimension or minima.shape[0] == 0:
            raise ValueError(f"{self.id}: minima must be a nonempty (m, {self.dimension}) array")
        bounds.setflags(write=False)
        minima.setflags(write=False)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "minima", minima)

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    def __call__(self, x) -> float:
        return evaluate(self, x)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian output noise; ``sd == 0`` disables it."""

    sd: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.sd) or self.sd < 0:
            raise ValueError(f"noise sd must be a finite nonnegative number, got {self.sd}")


def _check_point(fn: BenchmarkFunction, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (fn.dimension,):
        raise ValueError(f"{fn.id} expects a vector of length {fn.dimension}, got shape {x.shape}")
    bad = np.flatnonzero((x < fn.lower) | (x > fn.upper) | ~np.isfinite(x))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"{fn.id}: coordinate {i} = {x[i]!r} outside bounds [{fn.lower[i]}, {fn.upper[i]}]"
        )
    return x


def evaluate(fn: BenchmarkFunction, x) -> float:
    """Noiseless objective value of ``fn`` at ``x``."""
    return float(fn.func(_check_point(fn, x)))


def evaluate_noisy(fn: BenchmarkFunction, x, noise: NoiseSpec, rng: np.random.Generator) -> float:
    """Objective value plus a ``N(0, noise.sd**2)`` draw from ``rng``."""
    value = evaluate(fn, x)
    if noise.sd == 0:
        return value
    return value + noise.sd * float(rng.standard_normal())


def distance_to_nearest_minimum(fn: BenchmarkFunction, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (fn.dimension,):
        raise ValueError(f"{fn.id} expects a vector of length {fn.dimension}, got shape {x.shape}")
    return float(np.min(np.linalg.norm(fn.minima - x, axis=1)))


# -- function definitions (vectorised over leading axes) ---------------------


def _sphere(x):
    return np.sum(x**2, axis=-1)


def _zakharov(x):
    i = np.arange(1, x.shape[-1] + 1)
    s = np.sum(0.5 * i * x, axis=-1)
    return np.sum(x**2, axis=-1) + s**2 + s**4


def _three_hump_camel(x):
    x1, x2 = x[..., 0], x[..., 1]
    return 2 * x1**2 - 1.05 * x1**4 + x1**6 / 6 + x1 * x2 + x2**2


def _bent_cigar(x):
    return x[..., 0] ** 2 + 1e6 * np.sum(x[..., 1:] ** 2, axis=-1)


def _discus(x):
    return 1e6 * x[..., 0] ** 2 + np.sum(x[..., 1:] ** 2, axis=-1)


def _chung_reynolds(x):
    return np.sum(x**2, axis=-1) ** 2


def _schwefel_2_20(x):
    return np.sum(np.abs(x), axis=-1)


def _schwefel_2_21(x):
    return np.max(np.abs(x), axis=-1)


def _exponential(x):
    return -np.exp(-0.5 * np.sum(x**2, axis=-1))


def _salomon(x):
    r = np.sqrt(np.sum(x**2, axis=-1))
    return 1 - np.cos(2 * np.pi * r) + 0.1 * r


def _qing(x):
    i = np.arange(1, x.shape[-1] + 1)
    return np.sum((x**2 - i) ** 2, axis=-1)


def _whitley(x):
    xi = x[..., :, None]
    xj = x[..., None, :]
    y = 100 * (xi**2 - xj) ** 2 + (1 - xj) ** 2
    return np.sum(y**2 / 4000 - np.cos(y) + 1, axis=(-2, -1))


def _box(d: int, low: float, high: float) -> np.ndarray:
    return np.tile([low, high], (d, 1)).astype(float)


def _qing_minima(d: int) -> np.ndarray:
    roots = np.sqrt(np.arange(1, d + 1))
    signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij")).reshape(d, -1).T
    return signs * roots


_REGISTRY: dict[str, BenchmarkFunction] = {
    f.id: f
    for f in [
        BenchmarkFunction("sphere6d", 6, _box(6, -5.12, 5.12), np.zeros((1, 6)), 0.0, _sphere,
                          ("unimodal", "separable")),
        BenchmarkFunction("zakharov2d", 2, _box(2, -5, 10), np.zeros((1, 2)), 0.0, _zakharov,
                          ("unimodal",)),
        BenchmarkFunction("threehumpcamel2d", 2, _box(2, -5, 5), np.zeros((1, 2)), 0.0,
                          _three_hump_camel, ("multimodal",)),
        BenchmarkFunction("bentcigar6d", 6, _box(6, -5, 5), np.zeros((1, 6)), 0.0, _bent_cigar,
                          ("unimodal", "ill-conditioned")),
        BenchmarkFunction("discus2d", 2, _box(2, -5, 5), np.zeros((1, 2)), 0.0, _discus,
                          ("unimodal", "ill-conditioned", "separable")),
        BenchmarkFunction("chungreynolds2d", 2, _box(2, -100, 100), np.zeros((1, 2)), 0.0,
                          _chung_reynolds, ("unimodal",)),
        BenchmarkFunction("schwefel220_2d", 2, _box(2, -100, 100), np.zeros((1, 2)), 0.0,
                          _schwefel_2_20, ("unimodal", "separable", "nonsmooth")),
        BenchmarkFunction("schwefel221_6d", 6, _box(6, -100, 100), np.zeros((1, 6)), 0.0,
                          _schwefel_2_21, ("unimodal", "nonsmooth")),
        BenchmarkFunction("exponential2d", 2, _box(2, -1, 1), np.zeros((1, 2)), -1.0,
                          _exponential, ("unimodal",)),
        BenchmarkFunction("salomon2d", 2, _box(2, -100, 100), np.zeros((1, 2)), 0.0, _salomon,
                          ("multimodal",)),
        BenchmarkFunction("qing2d", 2, _box(2, -500, 500), _qing_minima(2), 0.0, _qing,
                          ("multimodal", "separable")),
        BenchmarkFunction("whitley6d", 6, _box(6, -10.24, 10.24), np.ones((1, 6)), 0.0, _whitley,
                          ("multimodal",)),
    ]
}


def registry_list() -> list[str]:
    """Sorted ids of all bundled functions."""
    return sorted(_REGISTRY)


def get_function(fn_id: str) -> BenchmarkFunction:
    try:
        return _REGISTRY[fn_id]
    except KeyError:
        raise KeyError(f"unknown benchmark function {fn_id!r}; known: {', '.join(registry_list())}") from None


def catalog() -> list[dict]:
    return [
        {
            "id": fn.id,
            "dimension": fn.dimension,
            "bounds": fn.bounds.tolist(),
            "minima": fn.minima.tolist(),
            "f_min": fn.f_min,
        }
        for fn in (_REGISTRY[k] for k in registry_list())
    ]


def catalog_json(indent: int | None = 2) -> str:
    return json.dumps(catalog(), indent=indent)
