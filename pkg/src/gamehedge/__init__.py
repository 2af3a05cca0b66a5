"""Shortfall-risk hedging for game and American options in binomial markets.

The engine computes the minimal shortfall risk and optimal partial hedge by
an exact piecewise-linear backward recursion, prices the option as a
discrete Dynkin game, replays hedges along sign paths, and verifies the
discrete/continuous correspondence by Skorokhod-embedding Monte Carlo.
"""

from ._backend import BACKEND
from .embed import (
    BudgetError,
    EmbeddedPath,
    McResult,
    embedding_statistics,
    mc_continuous_diagnostic,
    mc_discrete_shortfall,
    simulate_embedding,
)
from .hedge import HedgeTrajectory, replay, shortfall_expectation
from .market import CrrModel, MarketParams, ParameterError, PathNode, build_crr, discount_factor, stock_price
from .payoff import DiscretePayoffs, PayoffSpec, PayoffSpecError, StepPath, builtin, discretize
from .pwl import AffinePolicyPiece, PwlError, PwlFn, bellman_compose, hinge, pointwise_max, pointwise_min
from .risk import (
    AdmissibilityError,
    PolicyTable,
    RiskReport,
    ValueTable,
    american_price,
    american_value_table,
    evaluate_hedge,
    game_price,
    game_value_table,
    policy_strategy,
    shortfall_risk,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AdmissibilityError",
    "AffinePolicyPiece",
    "BudgetError",
    "CrrModel",
    "DiscretePayoffs",
    "EmbeddedPath",
    "HedgeTrajectory",
    "MarketParams",
    "McResult",
    "ParameterError",
    "PathNode",
    "PayoffSpec",
    "PayoffSpecError",
    "PolicyTable",
    "PwlError",
    "PwlFn",
    "RiskReport",
    "StepPath",
    "ValueTable",
    "american_price",
    "american_value_table",
    "bellman_compose",
    "build_crr",
    "builtin",
    "discount_factor",
    "discretize",
    "embedding_statistics",
    "evaluate_hedge",
    "game_price",
    "game_value_table",
    "hinge",
    "mc_continuous_diagnostic",
    "mc_discrete_shortfall",
    "pointwise_max",
    "pointwise_min",
    "policy_strategy",
    "replay",
    "shortfall_expectation",
    "shortfall_risk",
    "simulate_embedding",
    "stock_price",
]
