"""Fit orchestration: request -> model input -> model -> draws -> artifacts."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import harness
from .harness import ModelInput, SchemaError
from .models import INPUT_KIND, MODELS, HierarchicalModel, build_model
from .posterior import hazard_summary, parameter_table, table_csv, table_markdown
from .sampler import PosteriorDraws, SamplerConfig, nuts_sample, summary_diagnostics

__all__ = [
    "FitRequest",
    "FitResult",
    "prepare_model_input",
    "sampler_config",
    "fit",
    "write_fit",
    "load_fit",
    "summary_rows",
]

_SAMPLER_KEYS = {"chains", "warmup", "iterations", "target_accept", "max_depth", "jobs", "init_radius"}
NEEDS_EPSILON = {"binomial", "cox"}


@dataclass
class FitRequest:
    """Everything needed to reproduce one model fit."""

    model: str
    dataset: str | None = None
    filters: dict = field(default_factory=dict)
    epsilon: float | None = None
    sampler: dict = field(default_factory=dict)
    prior_scale: float | dict = 1.0
    tie_mode: str = "random_winner"
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise SchemaError(f"request.model: unknown model {self.model!r}; choose from {sorted(MODELS)}")
        if self.model in NEEDS_EPSILON and self.epsilon is None:
            raise SchemaError(f"request.epsilon: model {self.model} needs a success threshold")
        bad = set(self.sampler) - _SAMPLER_KEYS
        if bad:
            raise SchemaError(f"request.sampler: unknown key(s) {sorted(bad)}")
        if self.sampler.get("chains", 4) < 2:
            raise SchemaError("request.sampler.chains: at least 2 chains are required for R-hat")
        if isinstance(self.prior_scale, dict):
            for k, v in self.prior_scale.items():
                if not isinstance(v, (int, float)) or v <= 0:
                    raise SchemaError(f"request.prior_scale.{k}: must be a positive number")
        elif not self.prior_scale > 0:
            raise SchemaError("request.prior_scale: must be positive")
        if self.tie_mode not in ("random_winner", "keep_ties"):
            raise SchemaError("request.tie_mode: must be 'random_winner' or 'keep_ties'")

    @classmethod
    def from_dict(cls, data: dict) -> "FitRequest":
        if not isinstance(data, dict):
            raise SchemaError("request: expected a JSON object")
        known = {f.name for f in fields(cls)}
        bad = set(data) - known
        if bad:
            raise SchemaError(f"request: unknown key(s) {sorted(bad)}")
        if "model" not in data:
            raise SchemaError("request.model: required")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "FitRequest":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def prepare_model_input(name: str, dataset, epsilon=None, filters=None, tie_mode="random_winner", seed=0) -> ModelInput:
    """Build the input ``name`` consumes from harness records."""
    kind = INPUT_KIND[name]
    if kind == "binomial":
        return harness.prepare_binomial(dataset, epsilon, filters)
    if kind == "survival":
        return harness.prepare_survival(dataset, epsilon, filters)
    if kind == "pairs":
        return harness.prepare_pairs(dataset, filters, tie_mode=tie_mode, seed=seed)
    if kind == "relative_improvement":
        return harness.prepare_relative_improvement(dataset, filters)
    if kind == "cpu":
        return harness.prepare_cpu(dataset, filters)
    return harness.prepare_linear(dataset, filters)


def sampler_config(model: HierarchicalModel | type, overrides: dict | None = None, seed: int = 0) -> SamplerConfig:
    """Per-model default sampler settings with ``overrides`` applied."""
    base = {
        "chains": 4,
        "warmup": model.default_warmup,
        "iterations": model.default_iterations,
        "target_accept": model.default_target_accept,
    }
    base.update(overrides or {})
    if base["chains"] < 2:
        raise SchemaError("chains: at least 2 chains are required for R-hat")
    return SamplerConfig(seed=seed, **base)


@dataclass
class FitResult:
    request: FitRequest
    model: HierarchicalModel
    draws: PosteriorDraws
    diagnostics: dict

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics["converged"])


def fit(request: FitRequest, dataset=None, jobs: int | None = None) -> FitResult:
    """Run one fit. ``dataset`` defaults to reading ``request.dataset``;
    ``jobs`` sets how many chains run in parallel (results do not depend on it)."""
    if dataset is None:
        if request.dataset is None:
            raise SchemaError("request.dataset: required when no records are passed")
        dataset = harness.read_csv(request.dataset)
    data = prepare_model_input(request.model, dataset, request.epsilon, request.filters, request.tie_mode, request.seed)
    model = build_model(request.model, data, request.prior_scale)
    overrides = dict(request.sampler)
    if jobs is not None:
        overrides["jobs"] = jobs
    draws = nuts_sample(model, sampler_config(model, overrides, request.seed))
    return FitResult(request, model, draws, summary_diagnostics(draws))


def summary_rows(model_name: str, draws: PosteriorDraws) -> dict[str, list[dict]]:
    """Named summary tables for a fit, laid out per model family."""
    if model_name == "binomial":
        return {"summary": parameter_table(draws, transform="OR")}
    if model_name == "cox":
        hr = [n for n in draws.names if n.startswith("b_noise[")]
        rest = [n for n in draws.names if n not in hr]
        return {
            "summary": parameter_table(draws, params=rest) + parameter_table(draws, transform="HR", params=hr),
            "hazard": [r.row() for r in hazard_summary(draws)],
        }
    return {"summary": parameter_table(draws)}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_fit(result: FitResult, out_dir) -> dict[str, Path]:
    """Write draws, diagnostics, request and summary tables into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "draws": out / "draws.csv",
        "diagnostics": out / "diagnostics.json",
        "request": out / "request.json",
    }
    result.draws.to_csv(paths["draws"])
    write_json(paths["diagnostics"], result.diagnostics)
    req = result.request.to_dict()
    if req["dataset"] is not None:
        req["dataset"] = os.path.abspath(req["dataset"])
    write_json(paths["request"], req)
    for name, rows in summary_rows(result.request.model, result.draws).items():
        paths[f"{name}_csv"] = out / f"{name}.csv"
        paths[f"{name}_md"] = out / f"{name}.md"
        paths[f"{name}_csv"].write_text(table_csv(rows))
        paths[f"{name}_md"].write_text(table_markdown(rows))
    return paths


def load_fit(fit_dir, need_model: bool = True) -> tuple[FitRequest, PosteriorDraws, HierarchicalModel | None]:
    """Read a fit directory back. The model is rebuilt from the recorded
    request so predictive checks can simulate from it."""
    d = Path(fit_dir)
    for name in ("request.json", "draws.csv"):
        if not (d / name).exists():
            raise FileNotFoundError(f"fit artifact missing: {d / name}")
    request = FitRequest.from_json(d / "request.json")
    draws = PosteriorDraws.from_csv(d / "draws.csv")
    model = None
    if need_model:
        dataset = harness.read_csv(request.dataset)
        data = prepare_model_input(request.model, dataset, request.epsilon, request.filters, request.tie_mode,
                                   request.seed)
        model = build_model(request.model, data, request.prior_scale)
        if list(model.names) != list(draws.names):
            raise SchemaError(f"{d / 'draws.csv'}: parameter columns do not match the {request.model} model")
    return request, draws, model
