"""Closed-form and quadrature moment structure of supOU processes and supOU-SV returns."""

from .aterms import QuadratureError, a_term, a_term_shape
from .covariance import LagCovMatrix, NumericalError, h_sigma, lag_covariance_matrix, sigma_matrix, w_sigma
from .cumulants import IntegratedCumulants, PoleError, cum3, cum4, integrated_cum, point_cumulant
from .moments import (
    MomentSet,
    jacobian,
    jacobian_returns,
    jacobian_supou,
    model_vector,
    returns_moments,
    supou_autocov,
    supou_moments,
    volatility_autocov,
    volatility_variance,
)

__all__ = [
    "IntegratedCumulants",
    "LagCovMatrix",
    "MomentSet",
    "NumericalError",
    "PoleError",
    "QuadratureError",
    "a_term",
    "a_term_shape",
    "cum3",
    "cum4",
    "h_sigma",
    "integrated_cum",
    "jacobian",
    "jacobian_returns",
    "jacobian_supou",
    "lag_covariance_matrix",
    "model_vector",
    "point_cumulant",
    "returns_moments",
    "sigma_matrix",
    "supou_autocov",
    "supou_moments",
    "volatility_autocov",
    "volatility_variance",
    "w_sigma",
]
