"""Closed-form second-order structure of supOU and fourth-order structure of supOU-SV returns,
the deterministic parts of both moment functions, and their Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..levy import LevyCumulants, ThetaParams
from .cumulants import IntegratedCumulants, PoleError, near_pole

# second differences of f_k cancel; past this factor the quadrature path takes over
SECOND_DIFF_MAX_CONDITION = 1e6


@dataclass(frozen=True)
class MomentSet:
    """Mean, variance and autocovariances of X (kind ``supou``) or of Y^2 (kind ``returns``).

    For returns, ``autocov[0]`` is Var(Y^2) and ``autocov[k]`` = Cov(Y_1^2, Y_{1+k}^2);
    ``volatility_variance`` keeps Var(V_1), which W_Sigma needs separately.
    """

    kind: str
    delta: float
    mean: float
    variance: float
    autocov: np.ndarray
    volatility_variance: Optional[float] = field(default=None)


def _gamma_factor(theta: ThetaParams) -> float:
    return theta.B * (theta.alpha_pi - 1.0)


def supou_autocov(theta: ThetaParams, delta: float, lags) -> np.ndarray:
    """D(k) = -sigma2 (1 - B k delta)^(1 - alpha) / (2 B (alpha - 1)), for real k >= 0."""
    k = np.abs(np.asarray(lags, dtype=float))
    return -theta.sigma2 * (1.0 - theta.B * delta * k) ** (1.0 - theta.alpha_pi) / (2.0 * _gamma_factor(theta))


def supou_moments(theta: ThetaParams, delta: float, k_max: int) -> MomentSet:
    mean = -theta.mu / _gamma_factor(theta)
    acov = supou_autocov(theta, delta, np.arange(k_max + 1))
    return MomentSet("supou", float(delta), mean, float(acov[0]), acov)


def _cubic_denominator(theta: ThetaParams) -> float:
    a = theta.alpha_pi
    return theta.B**3 * (a - 1.0) * (a - 2.0) * (a - 3.0)


def _f(theta: ThetaParams, delta: float, k) -> np.ndarray:
    return (1.0 - theta.B * delta * np.asarray(k, dtype=float)) ** (3.0 - theta.alpha_pi)


def _order_two(theta: ThetaParams, delta: float) -> IntegratedCumulants:
    return IntegratedCumulants(theta, LevyCumulants(theta.mu, theta.sigma2, 0.0, 0.0), delta, "quadrature")


def volatility_variance(theta: ThetaParams, delta: float, at_pole: str = "raise") -> float:
    """Var(V_1) for the integrated volatility over one interval."""
    a, B = theta.alpha_pi, theta.B
    if near_pole(a, (2, 3)):
        if at_pole != "quadrature":
            raise PoleError(
                f"alpha_pi={a} sits on a removable pole of the closed form; pass at_pole='quadrature'"
            )
        return float(_order_two(theta, delta).quadrature(2, 2, 0.0))
    bracket = (1.0 - B * delta) ** (3.0 - a) - 1.0 - delta * B * (a - 3.0)
    cond = ((1.0 - B * delta) ** (3.0 - a) + 1.0 + abs(delta * B * (a - 3.0))) / abs(bracket)
    if cond > SECOND_DIFF_MAX_CONDITION:
        return float(_order_two(theta, delta).quadrature(2, 2, 0.0))
    return -theta.sigma2 * bracket / _cubic_denominator(theta)


def volatility_autocov(theta: ThetaParams, delta: float, lags, at_pole: str = "raise") -> np.ndarray:
    """Cov(V_1, V_{1+k}) for lags k >= 1 (real lags allowed)."""
    k = np.asarray(lags, dtype=float)
    if np.any(k < 1):
        raise ValueError("volatility_autocov takes lags >= 1; use volatility_variance for lag 0")
    if near_pole(theta.alpha_pi, (2, 3)):
        if at_pole != "quadrature":
            raise PoleError(
                f"alpha_pi={theta.alpha_pi} sits on a removable pole of the closed form; pass at_pole='quadrature'"
            )
        return np.atleast_1d(_order_two(theta, delta).quadrature(2, 1, k - 1.0)).reshape(k.shape)
    fp, f0, fm = _f(theta, delta, k + 1), _f(theta, delta, k), _f(theta, delta, k - 1)
    diff = fp - 2 * f0 + fm
    out = -theta.sigma2 * diff / (2.0 * _cubic_denominator(theta))
    bad = (np.abs(fp) + 2 * np.abs(f0) + np.abs(fm)) > SECOND_DIFF_MAX_CONDITION * np.abs(diff)
    if np.any(bad):
        out = np.array(out, dtype=float)
        out[bad] = _order_two(theta, delta).quadrature(2, 1, k[bad] - 1.0)
    return out


def returns_moments(theta: ThetaParams, delta: float, k_max: int, at_pole: str = "raise") -> MomentSet:
    if at_pole not in ("raise", "quadrature"):
        raise ValueError(f"at_pole must be 'raise' or 'quadrature', got {at_pole!r}")
    mean = -delta * theta.mu / _gamma_factor(theta)
    var_v = volatility_variance(theta, delta, at_pole)
    acov = np.empty(k_max + 1)
    acov[0] = 3.0 * var_v + 2.0 * mean**2
    if k_max >= 1:
        acov[1:] = volatility_autocov(theta, delta, np.arange(1, k_max + 1), at_pole)
    return MomentSet("returns", float(delta), mean, float(acov[0]), acov, var_v)


# moment-function targets -------------------------------------------------------------------


def model_vector(theta: ThetaParams, kind: str, delta: float, m: int, at_pole: str = "raise") -> np.ndarray:
    """Expected value of the data part of the moment function, length m + 2.

    supou:   (E X, E X_0^2, E X_0 X_1, ..., E X_0 X_m)
    returns: (E Y^2, E Y^4, E Y_1^2 Y_2^2, ..., E Y_1^2 Y_{1+m}^2)
    """
    if kind == "supou":
        ms = supou_moments(theta, delta, m)
        return np.concatenate([[ms.mean], ms.mean**2 + ms.autocov])
    if kind == "returns":
        ms = returns_moments(theta, delta, m, at_pole)
        fourth = 3.0 * (ms.volatility_variance + ms.mean**2)
        return np.concatenate([[ms.mean, fourth], ms.mean**2 + ms.autocov[1:]])
    raise ValueError(f"unknown kind {kind!r}")


def _log_base(theta: ThetaParams, delta: float, k) -> np.ndarray:
    return np.log1p(-theta.B * delta * np.asarray(k, dtype=float))


def jacobian_supou(theta: ThetaParams, delta: float, m: int) -> np.ndarray:
    """Derivative of the moment function h(X, theta) with respect to (mu, sigma2, alpha_pi, B).

    h is data minus model, so this is minus the gradient of ``model_vector``.
    """
    mu, s2, a, B = theta.mu, theta.sigma2, theta.alpha_pi, theta.B
    C = -mu / (B * (a - 1))
    dC = np.array([-1 / (B * (a - 1)), 0.0, mu / (B * (a - 1) ** 2), mu / (B**2 * (a - 1))])
    k = np.arange(m + 1, dtype=float)
    base = 1.0 - B * delta * k
    e = base ** (1.0 - a)
    D = -s2 * e / (2 * B * (a - 1))
    dD = np.empty((m + 1, 4))
    dD[:, 0] = 0.0
    dD[:, 1] = D / s2
    # d/d alpha of e / (a - 1) and d/d B of e / B
    dD[:, 2] = D * (-_log_base(theta, delta, k) - 1.0 / (a - 1))
    de_dB = (1.0 - a) * (-delta * k) * base ** (-a)
    dD[:, 3] = -s2 / (2 * (a - 1)) * (de_dB / B - e / B**2)
    grad = np.vstack([dC, 2 * C * dC + dD])
    return -grad


def jacobian_returns(theta: ThetaParams, delta: float, m: int, at_pole: str = "raise") -> np.ndarray:
    """Derivative of the returns moment function with respect to (mu, sigma2, alpha_pi, B).

    Near the removable poles alpha_pi in {2, 3} the closed form is unusable; with
    ``at_pole='numeric'`` a central difference of the quadrature-based model vector is used.
    """
    mu, s2, a, B = theta.mu, theta.sigma2, theta.alpha_pi, theta.B
    if near_pole(a, (2, 3)):
        if at_pole != "numeric":
            raise PoleError(f"alpha_pi={a} sits on a removable pole of the returns Jacobian; pass at_pole='numeric'")
        return _numeric_jacobian(theta, delta, m)
    d = delta
    Cs = -d * mu / (B * (a - 1))
    dCs = np.array([-d / (B * (a - 1)), 0.0, d * mu / (B * (a - 1) ** 2), d * mu / (B**2 * (a - 1))])

    P = (a - 1) * (a - 2) * (a - 3)
    dP = (a - 2) * (a - 3) + (a - 1) * (a - 3) + (a - 1) * (a - 2)

    def f(k):
        return (1.0 - B * d * k) ** (3.0 - a)

    def df_da(k):
        return -_log_base(theta, d, k) * f(k)

    def df_dB(k):
        return -(3.0 - a) * d * k * (1.0 - B * d * k) ** (2.0 - a)

    def second_order(num, dnum_da, dnum_dB, scale):
        # value and gradient of -sigma2 * num / (scale * B^3 * P)
        val = -s2 * num / (scale * B**3 * P)
        g = np.zeros(4)
        g[1] = val / s2
        g[2] = -s2 / (scale * B**3) * (dnum_da / P - num * dP / P**2)
        g[3] = -s2 / (scale * P) * (dnum_dB / B**3 - 3 * num / B**4)
        return val, g

    num_v = f(1) - 1 - d * B * (a - 3)
    var_v, dvar_v = second_order(num_v, df_da(1) - d * B, df_dB(1) - d * (a - 3), 1.0)
    rows = [dCs, 6 * Cs * dCs + 3 * dvar_v]
    for k in range(1, m + 1):
        num = f(k + 1) - 2 * f(k) + f(k - 1)
        dna = df_da(k + 1) - 2 * df_da(k) + df_da(k - 1)
        dnb = df_dB(k + 1) - 2 * df_dB(k) + df_dB(k - 1)
        _, g = second_order(num, dna, dnb, 2.0)
        rows.append(2 * Cs * dCs + g)
    return -np.vstack(rows)


def _numeric_jacobian(theta: ThetaParams, delta: float, m: int) -> np.ndarray:
    x = theta.as_array()
    out = np.empty((m + 2, 4))
    for j in range(4):
        h = 1e-5 * max(abs(x[j]), 1e-3)
        up, dn = x.copy(), x.copy()
        up[j] += h
        dn[j] -= h
        fu = model_vector(ThetaParams.from_array(up), "returns", delta, m, "quadrature")
        fd = model_vector(ThetaParams.from_array(dn), "returns", delta, m, "quadrature")
        out[:, j] = -(fu - fd) / (2 * h)
    return out


def jacobian(theta: ThetaParams, kind: str, delta: float, m: int) -> np.ndarray:
    if kind == "supou":
        return jacobian_supou(theta, delta, m)
    if kind == "returns":
        return jacobian_returns(theta, delta, m, at_pole="numeric")
    raise ValueError(f"unknown kind {kind!r}")
