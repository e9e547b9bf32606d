from .nuts import DIVERGENCE_THRESHOLD, PosteriorDraws, SamplerConfig, Target, check_gradient, nuts_sample
from .diagnostics import divergence_count, ess, split_rhat, summary_diagnostics

__all__ = [
    "DIVERGENCE_THRESHOLD",
    "PosteriorDraws",
    "SamplerConfig",
    "Target",
    "check_gradient",
    "nuts_sample",
    "divergence_count",
    "ess",
    "split_rhat",
    "summary_diagnostics",
]
