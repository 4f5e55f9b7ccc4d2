"""
Multiplier models, aggregation, error metrics and logic synthesis
"""

from typing import List

from multipliers.aggregate import AGGREGATED_PLAN_BUILDERS, AggregationPlan, plan_for_name
from multipliers.mulcore import LOW_WIDTH_MODELS, MultiplierModel
from utils.errors import DomainError


def available_models() -> List[str]:
    """Every registered model name, low-width models first"""
    return list(LOW_WIDTH_MODELS) + list(AGGREGATED_PLAN_BUILDERS)


def get_model(name: str) -> MultiplierModel:
    """
    Look up a model by name

    Aggregated 8x8 designs are returned as models built from their default plan.
    """
    if name in LOW_WIDTH_MODELS:
        return LOW_WIDTH_MODELS[name]
    if name in AGGREGATED_PLAN_BUILDERS:
        return plan_for_name(name).to_model()
    raise DomainError(f"unknown multiplier {name!r}; valid names: {', '.join(available_models())}")


def get_subject(name: str):
    """Plan for aggregated designs, model otherwise; sweeps and LUT export take either"""
    if name in AGGREGATED_PLAN_BUILDERS:
        return plan_for_name(name)
    return get_model(name)


__all__ = ["AggregationPlan", "MultiplierModel", "available_models", "get_model", "get_subject"]
