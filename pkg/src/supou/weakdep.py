"""Weak-dependence coefficients for supOU, supOU-SV returns and scalar MMA kernels,
and the decay-rate gates that the limit theorems require."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

from .analytics.moments import supou_autocov
from .levy import ThetaParams

SUPOU_VARIANTS = ("zero_mean", "general", "subordinator_linf", "subordinator_l2")


class ContractError(ValueError):
    """Inputs violate the moment conditions a coefficient formula is stated under."""


class QuadratureError(ArithmeticError):
    pass


# closed forms ------------------------------------------------------------------------------


def _cov(theta: ThetaParams, r) -> np.ndarray:
    return supou_autocov(theta, 1.0, r)


def theta_coeff_supou(theta: ThetaParams, r, variant: str):
    """Closed-form coefficient of the supOU process at time distance r >= 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    if variant == "zero_mean":
        if theta.mu != 0:
            raise ContractError(f"zero_mean needs a centred driving process, got mu={theta.mu}")
        out = np.sqrt(_cov(theta, 2 * r))
    elif variant == "general":
        out = np.sqrt(_cov(theta, 2 * r) + 4 * theta.mu**2 / theta.sigma2**2 * _cov(theta, r) ** 2)
    elif variant == "subordinator_linf":
        a, B = theta.alpha_pi, theta.B
        out = -theta.mu * (1.0 - B * r) ** (1.0 - a) / (B * (a - 1.0))
    elif variant == "subordinator_l2":
        out = 2 * theta.mu / theta.sigma2 * _cov(theta, r)
    else:
        raise ValueError(f"unknown variant {variant!r}; choose from {SUPOU_VARIANTS}")
    return float(out) if out.ndim == 0 else out


def theta_coeff_returns(theta: ThetaParams, delta: float, r):
    """sqrt(delta * theta_X((r - 1) delta)) with the subordinator (L1) volatility coefficient."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 1):
        raise ValueError("returns coefficients are defined for r >= 1")
    vol = theta_coeff_supou(theta, (r - 1.0) * delta, "subordinator_linf")
    out = np.sqrt(delta * np.asarray(vol))
    return float(out) if out.ndim == 0 else out


def predicted_decay(theta: ThetaParams, variant: str) -> float:
    """Power-law exponent of the coefficient in r."""
    a = theta.alpha_pi
    if variant in ("zero_mean", "general", "returns"):
        return (a - 1.0) / 2.0
    if variant in ("subordinator_linf", "subordinator_l2"):
        return a - 1.0
    raise ValueError(f"unknown variant {variant!r}")


# generic scalar kernels --------------------------------------------------------------------

CASES = ("zero_mean", "general", "finite_variation")


@dataclass(frozen=True)
class KernelSpec:
    """Scalar MMA kernel with its mixing law and driving-process summaries.

    ``evaluator(A, s)`` is the kernel at lag s; a causal kernel is read only on s >= 0.
    ``pi_density`` lives on ``pi_support``. ``case`` picks the coefficient formula.
    """

    evaluator: Callable[[float, float], float]
    pi_density: Callable[[float], float]
    pi_support: tuple[float, float]
    sigma_L: float
    mu_L: float = 0.0
    nu_abs: float = 0.0
    gamma0: float = 0.0
    causal: bool = True
    case: str = "zero_mean"
    pi_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {CASES}")
        if self.sigma_L < 0 or self.nu_abs < 0:
            raise ContractError("second moment and jump mass summaries must be non-negative")
        if self.case == "zero_mean" and self.mu_L != 0:
            raise ContractError(f"zero_mean case declared with mu_L={self.mu_L}")
        lo, hi = self.pi_support
        if not lo < hi:
            raise ValueError("pi_support must be an increasing interval")


def supou_kernel(theta: ThetaParams, case: str = "zero_mean", gamma0: float = 0.0) -> KernelSpec:
    """exp(A s) with A = B * Gamma(alpha_pi, 1); in the finite-variation case mu = gamma0 + int |x| nu."""
    a, B = theta.alpha_pi, theta.B
    gamma_law = stats.gamma(a)
    mu = 0.0 if case == "zero_mean" else theta.mu
    return KernelSpec(
        evaluator=lambda A, s: math.exp(A * s),
        pi_density=lambda A: gamma_law.pdf(A / B) / (-B),
        pi_support=(-math.inf, 0.0),
        sigma_L=theta.sigma2,
        mu_L=mu,
        nu_abs=max(theta.mu - gamma0, 0.0) if case == "finite_variation" else 0.0,
        gamma0=gamma0,
        causal=True,
        case=case,
        pi_sampler=lambda rng, n: B * rng.gamma(a, 1.0, n),
    )


def _pieces(lo: float, hi: float) -> list[tuple[float, float]]:
    """Split an interval at decade points so that quad resolves mass piled near an end."""
    cuts = [c for c in np.concatenate([-np.logspace(15, -8, 24), np.logspace(-8, 15, 24)]) if lo < c < hi]
    edges = [lo, *cuts, hi]
    return list(zip(edges[:-1], edges[1:]))


# inner integrals can be of size 1/|A|; their absolute tolerance is scaled to a coarse first pass
_INNER_RTOL = 1e-11


def _quad(fn, lo, hi, tol=None):
    """Adaptive quadrature over decade pieces; ``tol`` is an absolute bound on the total.

    Without ``tol`` (inner integrals) the request is relative and is not policed: the
    outer integral's error estimate absorbs inner noise.
    """
    if tol is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            coarse = abs(integrate.quad(fn, lo, hi, limit=200)[0])
        opts = {"epsabs": _INNER_RTOL * coarse / 50, "epsrel": _INNER_RTOL}
    else:
        opts = {"epsabs": tol / 50, "epsrel": 1e-10}
    total, err_total = 0.0, 0.0
    for a, b in _pieces(lo, hi):
        # pieces at the round-off floor warn; the summed error bound is what gets judged
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fn, a, b, limit=200, **opts)
        total += val
        err_total += err
    if not math.isfinite(total):
        raise QuadratureError("quadrature returned a non-finite value")
    if tol is not None and err_total > tol:
        raise QuadratureError(f"quadrature error bound {err_total:.3g} exceeds tolerance {tol:.3g}")
    return total


def _window_integral(kernel: KernelSpec, power: int, lo: float, hi: float, tol: float) -> float:
    """int pi(dA) int_lo^hi |f(A, u)|^power du, with u the lag argument of the kernel."""
    if kernel.causal:
        lo = max(lo, 0.0)
    if not lo < hi:
        return 0.0

    def inner(A):
        return _quad(lambda u: abs(kernel.evaluator(A, u)) ** power, lo, hi)

    return _quad(lambda A: kernel.pi_density(A) * inner(A), *kernel.pi_support, tol)


def _signed_integral(kernel: KernelSpec, lo: float, hi: float, tol: float) -> float:
    if kernel.causal:
        lo = max(lo, 0.0)
    if not lo < hi:
        return 0.0

    def inner(A):
        return _quad(lambda u: kernel.evaluator(A, u), lo, hi)

    return _quad(lambda A: kernel.pi_density(A) * inner(A), *kernel.pi_support, tol)


def _one_side(kernel: KernelSpec, lo: float, hi: float, tol: float) -> float:
    if kernel.case == "finite_variation":
        return (kernel.nu_abs + abs(kernel.gamma0)) * _window_integral(kernel, 1, lo, hi, tol)
    var = kernel.sigma_L * _window_integral(kernel, 2, lo, hi, tol)
    if kernel.case == "general":
        var += (kernel.mu_L * _signed_integral(kernel, lo, hi, tol)) ** 2
    if var < -tol:
        raise ContractError(f"negative variance term {var:.3g}; the kernel specification is inconsistent")
    return math.sqrt(max(var, 0.0))


def coeff_generic_mma(kernel: KernelSpec, r: float, kind: str = "theta", quad_tol: float = 1e-10) -> float:
    """Coefficient at radius r >= 0 by nested adaptive quadrature.

    theta: the tail of the kernel past lag r. eta: the two tails past lag r/2 in either
    direction; for causal kernels the truncation argument with window r applies to
    both kinds, so eta equals theta there.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    if kind == "theta" or (kind == "eta" and kernel.causal):
        if not kernel.causal:
            raise ContractError("theta coefficients are defined for causal kernels")
        return _one_side(kernel, r, math.inf, quad_tol)
    if kind == "eta":
        return _one_side(kernel, r / 2.0, math.inf, quad_tol) + _one_side(kernel, -math.inf, -r / 2.0, quad_tol)
    raise ValueError(f"kind must be 'eta' or 'theta', got {kind!r}")


# curves ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientCurve:
    variant: str
    r: np.ndarray
    values: np.ndarray
    quad_tol: float = math.nan

    def violations(self, slack: float = 1e-12) -> list[str]:
        problems = []
        if np.any(self.values < 0):
            problems.append("negative coefficient")
        if np.any(np.diff(self.values) > slack * np.maximum(1.0, np.abs(self.values[:-1]))):
            problems.append("increase in r")
        if self.values.size > 1 and not self.values[-1] < self.values[0]:
            problems.append("no decay over the computed range")
        return problems

    def decay_slope(self, lo: float = 10.0, hi: float = 100.0) -> float:
        """Least-squares slope of -log(value) against log(r) on [lo, hi]."""
        sel = (self.r >= lo) & (self.r <= hi) & (self.values > 0)
        if sel.sum() < 2:
            raise ValueError(f"fewer than two radii with positive values in [{lo}, {hi}]")
        slope = np.polyfit(np.log(self.r[sel]), np.log(self.values[sel]), 1)[0]
        return float(-slope)


def supou_curve(theta: ThetaParams, r, variant: str) -> CoefficientCurve:
    r = np.asarray(r, dtype=float)
    return CoefficientCurve(variant, r, np.atleast_1d(theta_coeff_supou(theta, r, variant)))


def returns_curve(theta: ThetaParams, delta: float, r) -> CoefficientCurve:
    r = np.asarray(r, dtype=float)
    return CoefficientCurve("returns", r, np.atleast_1d(theta_coeff_returns(theta, delta, r)))


def generic_curve(kernel: KernelSpec, r, kind: str = "theta", quad_tol: float = 1e-10) -> CoefficientCurve:
    r = np.asarray(r, dtype=float)
    vals = np.array([coeff_generic_mma(kernel, float(x), kind, quad_tol) for x in r])
    return CoefficientCurve(f"{kind}:{kernel.case}", r, vals, quad_tol)


# theorem gates -----------------------------------------------------------------------------


@dataclass(frozen=True)
class GateSpec:
    """A decay requirement ``subject > threshold(delta)``.

    ``offset`` converts the caller's exponent into the subject: the moment-function
    theorems are stated for alpha_pi - 1, so they take alpha_pi and subtract one.
    """

    theorem: str
    coefficient: str
    subject: str
    threshold: Callable[[float], float]
    offset: float = 0.0


def _eta_cov(d):
    return (4 + 2 / d) * (3 + d) / (2 + d)


def _theta_cov(d):
    return (1 + 1 / d) * (3 + d) / (2 + d)


GATE_CATALOG: dict[str, GateSpec] = {
    g.theorem: g
    for g in [
        GateSpec("clt_mean", "eta", "beta", lambda d: 4 + 2 / d),
        GateSpec("clt_mean2", "theta", "alpha", lambda d: 1 + 1 / d),
        GateSpec("clt_cova_eta", "eta", "beta", _eta_cov),
        GateSpec("clt_cova_theta", "theta", "alpha", _theta_cov),
        GateSpec("clt_multi_acf_eta", "eta", "beta", _eta_cov),
        GateSpec("clt_multi_acf_theta", "theta", "alpha", _theta_cov),
        GateSpec("clt_mean_ret", "theta", "alpha", lambda d: 2 * (1 + 1 / d)),
        GateSpec("clt_multi_acf_ret", "theta", "alpha", lambda d: (1 + 1 / d) * (2 + 2 * d) / d),
        GateSpec("clt_multi_4_ret", "theta", "alpha", lambda d: (1 + 1 / d) * (6 + 2 * d) / d),
        GateSpec("asy_mom1", "theta", "alpha_pi - 1", lambda d: (1 + 1 / d) * (6 + 2 * d) / (2 + d), 1.0),
        GateSpec("asy_mom2", "theta", "alpha_pi - 1", _theta_cov, 1.0),
        GateSpec("asy_mom3", "theta", "alpha_pi - 1", lambda d: (1 + 1 / d) * (6 + 2 * d) / d, 1.0),
    ]
}


@dataclass(frozen=True)
class GateResult:
    theorem: str
    subject: str
    threshold: float
    required: float
    value: float
    passed: bool


def clt_gate(theorem: str, delta_moment: float, decay_exponent: float) -> GateResult:
    """Check ``decay_exponent - offset > threshold(delta_moment)`` for a catalogued theorem.

    ``required`` is the bound on the caller's exponent itself (threshold + offset).
    """
    try:
        spec = GATE_CATALOG[theorem]
    except KeyError:
        raise KeyError(f"unknown theorem {theorem!r}; catalogued: {sorted(GATE_CATALOG)}") from None
    if not delta_moment > 0:
        raise ValueError("the moment surplus delta must be positive")
    thr = float(spec.threshold(float(delta_moment)))
    return GateResult(
        theorem, spec.subject, thr, thr + spec.offset, float(decay_exponent), decay_exponent - spec.offset > thr
    )


def gate_report(theta: ThetaParams, delta_moment: float) -> list[GateResult]:
    """Every catalogued gate at the exponents implied by theta's Gamma mixing law.

    eta and centred theta coefficients of X decay like r^-((alpha_pi-1)/2); the returns
    theorems use the subordinator volatility coefficients, r^-(alpha_pi-1); the
    moment-function theorems take alpha_pi directly.
    """
    a = theta.alpha_pi
    out = []
    for name, spec in GATE_CATALOG.items():
        if spec.offset:
            exponent = a
        elif name.endswith("_ret"):
            exponent = a - 1.0
        else:
            exponent = (a - 1.0) / 2.0
        out.append(clt_gate(name, delta_moment, exponent))
    return out
