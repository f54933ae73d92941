"""Simulation, moment analytics and GMM estimation for supOU processes and supOU stochastic volatility."""

from .levy import (
    ExponentialJumps,
    GammaJumps,
    GammaMeanReversion,
    LevyCumulants,
    SubordinatorSpec,
    ThetaParams,
    levy_cumulants,
    matched_levy,
    theta_from_specs,
)

__version__ = "0.1.0"

__all__ = [
    "ExponentialJumps",
    "GammaJumps",
    "GammaMeanReversion",
    "LevyCumulants",
    "SubordinatorSpec",
    "ThetaParams",
    "levy_cumulants",
    "matched_levy",
    "theta_from_specs",
    "__version__",
]
