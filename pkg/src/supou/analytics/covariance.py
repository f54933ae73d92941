"""Long-run covariance matrices of the supOU and returns moment functions.

Each moment-function component is a product over an offset pattern: X_0 is (0,),
X_0 X_p is (0, p); for returns Y_0^2 is (0,) and Y_0^2 Y_p^2 is (0, p), with (0, 0)
giving Y_0^4. The covariance of two components at lag l expands over set partitions
of the pooled points into joint cumulants, keeping only partitions with a block that
mixes both sides.

For returns, Y_t^2 = V_t Z_t^2 with Z independent of V, so
    Cov(a_0, b_l) = w_U * [mixed-partition sum of V cumulants] + (w_U - w_a w_b) E[V_a] E[V_b]
where w is the product of Gaussian even moments (2k - 1)!! over repeated offsets.

Lag sums run exactly up to a cutoff and add an Euler-Maclaurin tail whose integral
is mapped onto [0, 1] so that the leading power law becomes a constant.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from ..levy import LevyCumulants, ThetaParams
from .cumulants import IntegratedCumulants, double_factorial_odd, point_cumulant, point_cumulant_gap

DEFAULT_LAG_CUTOFF = 64
MAX_LAG_CUTOFF = 4096
PSD_WARN = 1e-10
PSD_FAIL = 1e-6

_TAIL_Y, _TAIL_W = np.polynomial.legendre.leggauss(64)
_TAIL_Y = (_TAIL_Y + 1) / 2
_TAIL_W = _TAIL_W / 2


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LagCovMatrix:
    kind: str
    matrix: np.ndarray
    lag_cutoff: int
    tail_tol: float
    tail_error: float
    clipped: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def components(m: int) -> list[tuple[int, ...]]:
    """Offset patterns of the m + 2 moment-function components."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return [(0,)] + [(0, k) for k in range(m + 1)]


@lru_cache(maxsize=None)
def set_partitions(n: int) -> tuple:
    """All set partitions of range(n), each a tuple of index tuples."""
    if n == 0:
        return ((),)
    out = []
    for part in set_partitions(n - 1):
        for i in range(len(part)):
            out.append(part[:i] + (part[i] + (n - 1,),) + part[i + 1 :])
        out.append(part + ((n - 1,),))
    return tuple(out)


def gaussian_weight(offsets) -> float:
    """E[prod Z_o^2] over a multiset of offsets for i.i.d. standard normals Z."""
    return float(np.prod([double_factorial_odd(k) for k in Counter(offsets).values()]))


class _PointBlocks:
    """Joint cumulants of X at grid times."""

    def __init__(self, theta: ThetaParams, levy: LevyCumulants, delta: float):
        self.theta, self.delta = theta, delta
        self.m = {2: theta.sigma2, 3: levy.m3, 4: levy.m4}
        self.mean = -theta.mu / (theta.B * (theta.alpha_pi - 1.0))

    def scalar(self, offsets) -> float:
        if len(offsets) == 1:
            return self.mean
        n = len(offsets)
        return point_cumulant(self.theta.alpha_pi, self.theta.B, self.m[n], self.delta, offsets)

    def mixed(self, a_offs, b_offs, x: np.ndarray) -> np.ndarray:
        n = len(a_offs) + len(b_offs)
        lo = min(a_offs)
        gap = sum(o - lo for o in a_offs) + sum(o - lo for o in b_offs) + len(b_offs) * x
        return point_cumulant_gap(self.theta.alpha_pi, self.theta.B, self.m[n], self.delta, n, gap)


class _BoxBlocks:
    """Joint cumulants of the integrated volatility over delta-intervals."""

    def __init__(self, theta: ThetaParams, levy: LevyCumulants, delta: float):
        self.ic = IntegratedCumulants(theta, levy, delta)

    def scalar(self, offsets) -> float:
        return self.ic.value(tuple(offsets))

    def mixed(self, a_offs, b_offs, x: np.ndarray) -> np.ndarray:
        n = len(a_offs) + len(b_offs)
        lo = min(a_offs)
        r = a_offs.count(lo)
        total = sum(o - lo for o in a_offs) + sum(o - lo for o in b_offs) + len(b_offs) * x
        return np.atleast_1d(self.ic.quadrature(n, r, total - (n - r)))


def _labelled(a, b, lag):
    return [("a", o) for o in a] + [("b", o + lag) for o in b]


def _block_product(points, partition, blocks) -> float:
    val = 1.0
    for blk in partition:
        val *= blocks.scalar(tuple(points[i][1] for i in blk))
    return val


def _moment(offsets, blocks) -> float:
    pts = [("", o) for o in offsets]
    return sum(_block_product(pts, p, blocks) for p in set_partitions(len(pts)))


def _is_mixed(points, partition) -> bool:
    return any(len({points[i][0] for i in blk}) == 2 for blk in partition)


def lag_covariance(a, b, lag: int, blocks, weight: Callable = None) -> float:
    """Cov(a_0, b_lag) for offset patterns a and b at an integer lag >= 0."""
    pts = _labelled(a, b, lag)
    mixed = sum(
        _block_product(pts, p, blocks) for p in set_partitions(len(pts)) if _is_mixed(pts, p)
    )
    if weight is None:
        return mixed
    union = [o for _, o in pts]
    w_u, w_a, w_b = weight(union), weight(a), weight(b)
    extra = 0.0
    if w_u != w_a * w_b:
        extra = (w_u - w_a * w_b) * _moment(a, blocks) * _moment(b, blocks)
    return w_u * mixed + extra


def far_covariance(a, b, x: np.ndarray, blocks, weight: Callable = None, cache=None) -> np.ndarray:
    """Cov(a_0, b_x) for real x beyond every offset of a, vectorised over x."""
    x = np.asarray(x, dtype=float)
    cache = {} if cache is None else cache
    pts = _labelled(a, b, 0)
    out = np.zeros_like(x)
    for part in set_partitions(len(pts)):
        if not _is_mixed(pts, part):
            continue
        term = np.ones_like(x)
        for blk in part:
            sides = [pts[i] for i in blk]
            a_offs = tuple(sorted(o for s, o in sides if s == "a"))
            b_offs = tuple(sorted(o for s, o in sides if s == "b"))
            if a_offs and b_offs:
                lo = a_offs[0]
                key = (len(sides), a_offs.count(lo), sum(o - lo for o in a_offs) + sum(o - lo for o in b_offs), len(b_offs))
                val = cache.get(key)
                if val is None:
                    val = blocks.mixed(a_offs, b_offs, x)
                    cache[key] = val
                term = term * val
            else:
                term = term * blocks.scalar(a_offs or b_offs)
        out += term
    if weight is not None:
        out *= weight(a) * weight(b)
    return out


def _tail_nodes(theta: ThetaParams, delta: float, x0: float):
    """Nodes and weights for the integral of F over [x0, inf) when F ~ (1 - B delta x)^(1 - alpha)."""
    a = theta.alpha_pi
    if a - 2.0 < 0.02:
        raise NumericalError(f"alpha_pi={a} is too close to 2 for the lag sums to be evaluated reliably")
    bd = -theta.B * delta
    c = (1.0 + bd * x0) / bd
    log_y = np.log(_TAIL_Y)
    x = x0 + c * np.expm1(-log_y / (a - 2.0))
    w = _TAIL_W * c / (a - 2.0) * np.exp(-(a - 1.0) / (a - 2.0) * log_y)
    return x, w


def _psd_repair(S: np.ndarray, kind: str) -> tuple[np.ndarray, float]:
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    neg = vals < 0
    clipped = float(-vals[neg].sum())
    trace = float(np.abs(vals).sum())
    if clipped > PSD_FAIL * trace:
        raise NumericalError(
            f"{kind}: eigenvalue floor removed {clipped:.3g}, more than {PSD_FAIL:g} of the trace {trace:.3g}"
        )
    if clipped > PSD_WARN * trace:
        warnings.warn(f"{kind}: negative eigenvalues clipped, mass {clipped:.3g} (trace {trace:.3g})")
    if np.any(neg):
        vals = np.where(neg, 0.0, vals)
        S = (vecs * vals) @ vecs.T
        S = 0.5 * (S + S.T)
    return S, clipped


def _assemble(theta, delta, m, blocks, weight, tail_tol, lag_cutoff, kind):
    comps = components(m)
    n = len(comps)
    L = max(lag_cutoff, 4 * m + 8)
    while True:
        T = np.zeros((n, n))
        C0 = np.zeros((n, n))
        err = 0.0
        x0 = L + 1.0
        near = np.arange(m + 1, L + 1, dtype=float)
        stencil = x0 + np.arange(-2.0, 3.0)
        xt, wt = _tail_nodes(theta, delta, x0)
        grid = np.concatenate([near, stencil, xt])
        cache: dict = {}
        k1, k2 = len(near), len(near) + 5
        for i, a in enumerate(comps):
            for j, b in enumerate(comps):
                direct = [lag_covariance(a, b, l, blocks, weight) for l in range(m + 1)]
                C0[i, j] = direct[0]
                F = far_covariance(a, b, grid, blocks, weight, cache)
                s = F[k1 + 2]  # F(x0)
                f = F[k1:k2]
                d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / 12.0
                d3 = (-f[0] + 2 * f[1] - 2 * f[3] + f[4]) / 2.0
                tail = float(F[k2:] @ wt) + s / 2.0 - d1 / 12.0 + d3 / 720.0
                err = max(err, abs(d3) / 720.0)
                T[i, j] = sum(direct) + F[:k1].sum() + tail
        S = T + T.T - C0
        scale = max(np.max(np.abs(np.diag(S))), 1e-300)
        if err <= tail_tol * scale or L >= MAX_LAG_CUTOFF:
            break
        L *= 2
    S, clipped = _psd_repair(S, kind)
    return LagCovMatrix(kind, S, L, tail_tol, err, clipped)


def h_sigma(
    theta: ThetaParams,
    levy: LevyCumulants,
    delta: float,
    m: int,
    tail_tol: float = 1e-8,
    lag_cutoff: int = DEFAULT_LAG_CUTOFF,
) -> LagCovMatrix:
    """Sum over all lags of Cov(h(X_0), h(X_l)) for the supOU moment function."""
    if not theta.alpha_pi > 2:
        raise ValueError("lag sums diverge for alpha_pi <= 2")
    blocks = _PointBlocks(theta, levy, delta)
    return _assemble(theta, delta, m, blocks, None, tail_tol, lag_cutoff, "H_sigma")


def w_sigma(
    theta: ThetaParams,
    levy: LevyCumulants,
    delta: float,
    m: int,
    tail_tol: float = 1e-8,
    lag_cutoff: int = DEFAULT_LAG_CUTOFF,
    gaussian_excess: bool = True,
) -> LagCovMatrix:
    """Sum over all lags of Cov(h~(Y_0), h~(Y_l)) for the returns moment function.

    ``gaussian_excess=False`` is a diagnostic that drops the Gaussian even-moment
    weights, leaving only the integrated-volatility cumulant structure.
    """
    if not theta.alpha_pi > 2:
        raise ValueError("lag sums diverge for alpha_pi <= 2")
    blocks = _BoxBlocks(theta, levy, delta)
    weight = gaussian_weight if gaussian_excess else None
    return _assemble(theta, delta, m, blocks, weight, tail_tol, lag_cutoff, "W_sigma")


def lag_covariance_matrix(theta, levy, delta, m, lag: int, kind: str, gaussian_excess: bool = True) -> np.ndarray:
    """Cov(h(.)_0, h(.)_lag) as an (m+2) x (m+2) matrix, for diagnostics and tests."""
    comps = components(m)
    if kind == "supou":
        blocks, weight = _PointBlocks(theta, levy, delta), None
    elif kind == "returns":
        blocks = _BoxBlocks(theta, levy, delta)
        weight = gaussian_weight if gaussian_excess else None
    else:
        raise ValueError(f"unknown kind {kind!r}")
    out = np.empty((len(comps), len(comps)))
    for i, a in enumerate(comps):
        for j, b in enumerate(comps):
            if lag >= 0:
                out[i, j] = lag_covariance(a, b, lag, blocks, weight)
            else:
                out[i, j] = lag_covariance(b, a, -lag, blocks, weight)
    return out


def sigma_matrix(theta, levy, kind: str, delta: float, m: int, **kw) -> LagCovMatrix:
    if kind == "supou":
        return h_sigma(theta, levy, delta, m, **kw)
    if kind == "returns":
        return w_sigma(theta, levy, delta, m, **kw)
    raise ValueError(f"unknown kind {kind!r}")
