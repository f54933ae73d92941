"""Point cumulants of the supOU process and box-integrated cumulants of the integrated volatility.

Point cumulants use the gap-sum form: for sorted times t_1 <= ... <= t_n,

    kappa_n = -m_n (1 - B delta g)^(1 - alpha) / (n B (alpha - 1)),   g = sum_j (t_j - t_1),

with m_n the n-th cumulant of L_1 (m_1 = mu, m_2 = sigma2).

Box-integrated cumulants K integrate kappa_n over unit boxes [o_j, o_j + 1] (in units of
delta). Two paths are available:

closed
    When the lowest box is occupied once and every other box sits at least one step
    above it, K is a finite difference of (1 - B delta x)^(n + 1 - alpha). This has
    removable poles at alpha in {2, ..., n + 1}.
quadrature
    For a fixed reversion A the box integral of e^{A g} / (-n A) is elementary:
    G(A) = e^{A delta (S - (n - r))} psi_{n,r}(A), where S is the integer gap sum, r
    the multiplicity of the lowest box and psi depends on (n, r) only. K is then a
    one-dimensional integral of G(B xi) against the Gamma(alpha) density, done with
    composite Gauss-Legendre on geometric panels. No poles, and stable for any gap.
"""

from __future__ import annotations

from collections import Counter
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy import special

from ..levy import LevyCumulants, ThetaParams

POLE_EPS = 1e-6
# finite differences lose about log10(c^n) digits, so the closed path is capped
CLOSED_MAX_GAP = 40.0
# auto mode drops the closed form when the stencil sum cancels by more than this factor
CLOSED_MAX_CONDITION = 1e3

_S_NODES, _S_WEIGHTS = np.polynomial.legendre.leggauss(24)


class PoleError(ArithmeticError):
    pass


def near_pole(alpha: float, poles) -> bool:
    return any(abs(alpha - p) < POLE_EPS for p in poles)


def _gap_sum(times) -> float:
    t = np.sort(np.asarray(times, dtype=float))
    return float(np.sum(t - t[0]))


def point_cumulant(alpha: float, B: float, m_n: float, delta: float, times) -> float:
    """Joint cumulant of X at the given times (in units of delta)."""
    n = len(times)
    g = _gap_sum(times)
    return -m_n * (1.0 - B * delta * g) ** (1.0 - alpha) / (n * B * (alpha - 1.0))


def point_cumulant_gap(alpha: float, B: float, m_n: float, delta: float, n: int, gap):
    """Vectorised point cumulant as a function of the gap sum."""
    gap = np.asarray(gap, dtype=float)
    return -m_n * (1.0 - B * delta * gap) ** (1.0 - alpha) / (n * B * (alpha - 1.0))


def cum3(theta: ThetaParams, m3: float, delta: float, times) -> float:
    if len(times) != 3:
        raise ValueError("cum3 takes three times")
    return point_cumulant(theta.alpha_pi, theta.B, m3, delta, times)


def cum4(theta: ThetaParams, m4: float, delta: float, times) -> float:
    if len(times) != 4:
        raise ValueError("cum4 takes four times")
    return point_cumulant(theta.alpha_pi, theta.B, m4, delta, times)


@lru_cache(maxsize=None)
def _difference_stencil(n: int):
    """Shifts and weights of (E - 1)^(n-1) (1 - E^-(n-1)) / (n - 1) acting on the n-fold antiderivative."""
    poly = Counter({0: 1.0})
    for _ in range(n - 1):
        nxt: Counter = Counter()
        for k, c in poly.items():
            nxt[k + 1] += c
            nxt[k] -= c
        poly = nxt
    out: Counter = Counter()
    for k, c in poly.items():
        out[k] += c / (n - 1)
        out[k - (n - 1)] -= c / (n - 1)
    shifts = np.array(sorted(k for k, c in out.items() if c != 0), dtype=float)
    weights = np.array([out[int(k)] for k in shifts])
    return shifts, weights


_PANEL_NODES, _PANEL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_ZETA_LO = 1e-10
_PANELS_PER_DECADE = 5
# bound on (rows x nodes) per quadrature batch
_QUAD_BATCH = 2_000_000


@lru_cache(maxsize=64)
def _zeta_grid(alpha: float, lo_exp: int):
    """Composite Gauss-Legendre nodes and Gamma(alpha) density weights on [10^lo_exp, hi].

    Geometric panels resolve both the Gamma bulk and the fast decay of
    e^{B xi delta S} for large gap sums; the lower end is a whole decade so that
    grids are shared between calls.
    """
    hi = alpha + 40.0 * np.sqrt(alpha) + 60.0
    lo = 10.0**lo_exp
    count = int(np.ceil(np.log10(hi / lo) * _PANELS_PER_DECADE))
    edges = np.geomspace(lo, hi, count + 1)
    a, b = edges[:-1, None], edges[1:, None]
    z = (a + (b - a) * (_PANEL_NODES + 1) / 2).ravel()
    wz = ((b - a) / 2 * _PANEL_WEIGHTS).ravel()
    return z, wz * np.exp((alpha - 1) * np.log(z) - z - special.gammaln(alpha))


def _psi(n: int, r: int, A: np.ndarray, delta: float) -> np.ndarray:
    """Box integral of e^{A g}/(-nA) with the gap-sum factor e^{A delta (S - (n - r))} removed.

    Valid when r boxes sit at the lowest offset and all others at least one step higher.
    """
    A = np.asarray(A, dtype=float)
    e1 = np.expm1(A * delta) / A
    first = np.exp(A * delta * (n - r)) * e1**n / (-n * A)
    if r == 0:
        return first
    small = np.abs(A) * delta < 2.0
    J = np.empty_like(A)
    if np.any(small):
        As = A[small][..., None]
        v = (_S_NODES + 1) / 2 * delta
        f = np.exp((n - r) * As * v) * (np.expm1(As * v) / As) ** r
        J[small] = (f * (_S_WEIGHTS / 2 * delta)).sum(-1)
    if np.any(~small):
        Al = A[~small]
        acc = np.zeros_like(Al)
        for j in range(r + 1):
            k = n - r + j
            piece = delta if k == 0 else np.expm1(k * Al * delta) / (k * Al)
            acc += comb(r, j) * (-1.0) ** (r - j) * piece
        J[~small] = acc / Al**r
    return first + e1 ** (n - r) * J


def normalise_offsets(offsets):
    o = sorted(offsets)
    base = o[0]
    return tuple(x - base for x in o)


class IntegratedCumulants:
    """Joint cumulants of the integrated volatility V over unit boxes, cached per offset pattern."""

    def __init__(self, theta: ThetaParams, levy: LevyCumulants, delta: float, method: str = "auto"):
        if method not in ("auto", "closed", "quadrature"):
            raise ValueError(f"unknown method {method!r}")
        self.theta = theta
        self.delta = float(delta)
        self.method = method
        self.m = {1: theta.mu, 2: theta.sigma2, 3: levy.m3, 4: levy.m4}
        self._cache: dict = {}
        self._psi_cache: dict = {}

    # pieces --------------------------------------------------------------
    def _prefactor(self, n: int) -> float:
        a, B = self.theta.alpha_pi, self.theta.B
        return -self.m[n] * self.delta**n / (n * B * (a - 1.0))

    def _closed_terms(self, n: int, gap):
        a, B = self.theta.alpha_pi, self.theta.B
        Bp = B * self.delta
        shifts, weights = _difference_stencil(n)
        gap = np.asarray(gap, dtype=float)
        terms = (1.0 - Bp * (gap[..., None] + shifts)) ** (n + 1.0 - a) * weights
        denom = (-Bp) ** n * np.prod([j - a for j in range(2, n + 2)])
        return terms, self._prefactor(n) / denom

    def closed(self, n: int, gap):
        """Unique-lowest-box closed form; ``gap`` is the integer gap sum (scalar or array)."""
        if near_pole(self.theta.alpha_pi, range(2, n + 2)):
            raise PoleError(
                f"alpha_pi={self.theta.alpha_pi} is within {POLE_EPS} of a pole of the order-{n} closed form"
            )
        terms, factor = self._closed_terms(n, gap)
        return factor * terms.sum(-1)

    def closed_condition(self, n: int, gap) -> float:
        """Cancellation factor of the stencil sum; the closed form loses log10 of it in digits."""
        terms, _ = self._closed_terms(n, gap)
        return float(np.abs(terms).sum() / abs(terms.sum()))

    def variance(self) -> float:
        """Var V_1, the order-2 cumulant over a single box."""
        a, B, d = self.theta.alpha_pi, self.theta.B, self.delta
        if near_pole(a, (2, 3)):
            return float(self.quadrature(2, 2, 0.0))
        return -self.theta.sigma2 * ((1 - B * d) ** (3 - a) - 1 - d * B * (a - 3)) / (
            B**3 * (a - 1) * (a - 2) * (a - 3)
        )

    def quadrature(self, n: int, r: int, excess):
        """K for n boxes, r of them at the lowest offset, as a function of S - (n - r) >= 0."""
        a, B, d = self.theta.alpha_pi, self.theta.B, self.delta
        excess = np.atleast_1d(np.asarray(excess, dtype=float))
        # the grid must reach down to where e^{B xi delta S} is still ~1 for the largest S
        widest = 1.0 + (-B) * d * (excess.max() + n - r)
        lo_exp = int(np.floor(np.log10(_ZETA_LO / widest)))
        xi, w = _zeta_grid(a, lo_exp)
        key = (n, r, lo_exp)
        weighted = self._psi_cache.get(key)
        if weighted is None:
            weighted = w * _psi(n, r, B * xi, d)
            self._psi_cache[key] = weighted
        rate = B * d * xi
        vals = np.empty_like(excess)
        step = max(1, _QUAD_BATCH // xi.size)
        for lo in range(0, excess.size, step):
            sl = slice(lo, lo + step)
            vals[sl] = np.exp(np.multiply.outer(excess[sl], rate)) @ weighted
        # [0, 10^lo_exp]: density ~ xi^(a-1)/Gamma(a), box integral ~ delta^n / (-n B xi)
        head = 10.0 ** (lo_exp * (a - 1)) / ((a - 1) * special.gamma(a)) * d**n / (-n * B)
        out = self.m[n] * (vals + head)
        return out if out.size > 1 else float(out[0])

    # main entry ----------------------------------------------------------
    def value(self, offsets) -> float:
        key = normalise_offsets(offsets)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._evaluate(key)
            self._cache[key] = hit
        return hit

    def _evaluate(self, o) -> float:
        n = len(o)
        if n == 1:
            return -self.theta.mu * self.delta / (self.theta.B * (self.theta.alpha_pi - 1.0))
        if n > 4:
            raise ValueError("cumulants above order four are not available")
        if any(0 < x < 1 for x in o):
            raise ValueError(f"offsets {o} overlap partially; only whole-box offsets are supported")
        r = o.count(0)
        gap = float(sum(o))
        closed_ok = (
            self.method != "quadrature"
            and r == 1
            and gap <= CLOSED_MAX_GAP
            and not near_pole(self.theta.alpha_pi, range(2, n + 2))
            and (self.method == "closed" or self.closed_condition(n, gap) < CLOSED_MAX_CONDITION)
        )
        if self.method == "closed" and not closed_ok:
            if r == n == 2:
                return self.variance()
            raise PoleError(f"no closed form for offsets {o} at alpha_pi={self.theta.alpha_pi}")
        if closed_ok:
            return float(self.closed(n, gap))
        if n == 2 and r == 2 and self.method != "quadrature" and not near_pole(self.theta.alpha_pi, (2, 3)):
            return self.variance()
        return self.quadrature(n, r, gap - (n - r))


def integrated_cum(
    theta: ThetaParams,
    levy: LevyCumulants,
    delta: float,
    indices,
    method: str = "auto",
) -> float:
    """K(i, j, k) or K(i, j, k, l): the cumulant of (V_i, V_j, ...) over delta-boxes."""
    if len(indices) not in (2, 3, 4):
        raise ValueError("indices must have length 2, 3 or 4")
    return IntegratedCumulants(theta, levy, delta, method).value(tuple(indices))


def double_factorial_odd(k: int) -> int:
    """(2k - 1)!!, the Gaussian moment E[Z^{2k}]."""
    return factorial(2 * k) // (2**k * factorial(k))
