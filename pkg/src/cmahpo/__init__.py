"""CMA-ES hyperparameter search over a unit-cube genotype space."""
from .cma import (Candidate, CmaState, PriorSampler, StrategyParams, ask, default_strategy_params,
                  init_cma, sample_prior, tell)
from .space import (ParamSpec, SearchSpace, builtin_space, dump_space, inverse_transform,
                    parse_space, transform)

__version__ = "0.1.0"

__all__ = [
    "Candidate", "CmaState", "PriorSampler", "StrategyParams", "ask", "default_strategy_params",
    "init_cma", "sample_prior", "tell", "ParamSpec", "SearchSpace", "builtin_space",
    "dump_space", "inverse_transform", "parse_space", "transform",
]
