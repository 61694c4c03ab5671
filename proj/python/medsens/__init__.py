"""Probit causal mediation effects with correlation sensitivity analysis."""

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    Dataset,
    DomainError,
    MedsensError,
    ModelSpec,
    NotConvergedError,
    RankError,
    ScanError,
    SeparationError,
    binorm_cdf,
    effect,
    effect_closed_form,
    fit_constrained,
    fit_models,
    load_csv,
    norm_cdf,
    norm_quantile,
    sensitivity_scan,
    simulate_scenario,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "Dataset",
    "DomainError",
    "MedsensError",
    "ModelSpec",
    "NotConvergedError",
    "RankError",
    "ScanError",
    "SeparationError",
    "binorm_cdf",
    "effect",
    "effect_closed_form",
    "fit_constrained",
    "fit_models",
    "load_csv",
    "norm_cdf",
    "norm_quantile",
    "sensitivity_scan",
    "simulate_scenario",
]
