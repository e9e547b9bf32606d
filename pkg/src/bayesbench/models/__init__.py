"""Bayesian models of benchmark outcomes.

Every model object doubles as a sampler target: it has ``dimension``,
``log_density_grad``, ``names`` and ``constrain``.
"""

from __future__ import annotations

import numpy as np

from ..harness import ModelInput, SchemaError
from ..sampler import PosteriorDraws
from .base import HierarchicalModel
from .glm import BinomialModel, CoxModel, LinearModel, RelativeImprovementModel, StudentTModel
from .pairs import BradleyTerryModel, DavidsonModel, bt_win_probability, davidson_probabilities

MODELS: dict[str, type[HierarchicalModel]] = {
    "linear": LinearModel,
    "binomial": BinomialModel,
    "relative_improvement": RelativeImprovementModel,
    "bradley_terry": BradleyTerryModel,
    "davidson": DavidsonModel,
    "cox": CoxModel,
    "student_t": StudentTModel,
}

# Which prepared input each model consumes.
INPUT_KIND = {
    "linear": "linear",
    "binomial": "binomial",
    "relative_improvement": "relative_improvement",
    "bradley_terry": "pairs",
    "davidson": "pairs",
    "cox": "survival",
    "student_t": "cpu",
}

__all__ = [
    "MODELS",
    "INPUT_KIND",
    "HierarchicalModel",
    "LinearModel",
    "BinomialModel",
    "RelativeImprovementModel",
    "BradleyTerryModel",
    "DavidsonModel",
    "CoxModel",
    "StudentTModel",
    "build_model",
    "linear_model",
    "binomial_model",
    "relative_improvement_model",
    "bradley_terry_model",
    "davidson_model",
    "cox_model",
    "student_t_model",
    "pointwise_loglik",
    "simulate",
    "bt_win_probability",
    "davidson_probabilities",
]


def build_model(name: str, data: ModelInput, prior_scale=1.0) -> HierarchicalModel:
    """Instantiate model ``name`` on ``data``; checks the input kind matches."""
    if name not in MODELS:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    if data.kind != INPUT_KIND[name]:
        raise SchemaError(f"model {name} expects {INPUT_KIND[name]} input, got {data.kind}")
    return MODELS[name](data, prior_scale)


def linear_model(data: ModelInput, prior_scale=1.0) -> LinearModel:
    return build_model("linear", data, prior_scale)


def binomial_model(data: ModelInput, prior_scale=1.0) -> BinomialModel:
    return build_model("binomial", data, prior_scale)


def relative_improvement_model(data: ModelInput, prior_scale=1.0) -> RelativeImprovementModel:
    return build_model("relative_improvement", data, prior_scale)


def bradley_terry_model(data: ModelInput, prior_scale=1.0) -> BradleyTerryModel:
    return build_model("bradley_terry", data, prior_scale)


def davidson_model(data: ModelInput, prior_scale=1.0) -> DavidsonModel:
    return build_model("davidson", data, prior_scale)


def cox_model(data: ModelInput, prior_scale=1.0) -> CoxModel:
    return build_model("cox", data, prior_scale)


def student_t_model(data: ModelInput, prior_scale=1.0) -> StudentTModel:
    return build_model("student_t", data, prior_scale)


def pointwise_loglik(model: HierarchicalModel, draws) -> np.ndarray:
    """(total draws, observations) log-likelihood matrix.

    ``draws`` is a :class:`~bayesbench.sampler.PosteriorDraws` or a
    constrained draw matrix with columns in ``model.names`` order.
    """
    mat = draws.flat() if isinstance(draws, PosteriorDraws) else np.asarray(draws, dtype=float)
    return model.pointwise_loglik(mat)


def simulate(model: HierarchicalModel, params, seed=None) -> ModelInput:
    """Synthetic responses from ``model`` at constrained ``params`` (a dict of
    blocks or a vector in ``model.names`` order), on the model's own design."""
    if not isinstance(params, dict):
        params = {k: v[0] for k, v in model.unpack(np.asarray(params, dtype=float)).items()}
    return model.simulate(params, seed)
