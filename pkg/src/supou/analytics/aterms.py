"""Nested ordered integrals of third and fourth moments of X over delta-boxes (the A-terms).

Every row is an integral of E[X X X] or E[X X X X] over products of boxes, with one
coordinate per repeated box restricted to lie below another. Since
    int_box int_{box start}^s X_s X_u du ds = (int_box X)^2 / 2,
each row is a moment of box integrals V, which the ``reduction`` path evaluates from
the box cumulants. The ``quadrature`` path integrates the row expression directly
with nested adaptive quadrature, using the point cumulants for the integrand.

Rows, keyed by the multiplicity shape of the index multiset:
    (1, 1, 1), (1, 1, 1, 1)  0
    (2, 1)   4  int_i int_j int_j^s E[X_t X_s X_u]           = 2 E[V_i V_j^2]
    (3,)     12 int_i int_i int_i^s E[X_t X_s X_u]           = 6 E[V^3]
    (3, 1)   12 int_i int_j int_j int_j^s E[X_t X_z X_s X_u] = 6 E[V_i V_j^3]
    (2, 1, 1) 4 int_i int_j int_k int_k^s E[...]             = 2 E[V_i V_j V_k^2]
    (2, 2)   three ordered integrals                          = 8 E[V_i^2 V_k^2]
    (4,)     24 E[V^2 int X_s int^s X_u] + 96 E[int int^s X_u int^u X_z]
             = 12 E[V^4] + 48 int_0^delta E[(int_0^s X)^2] ds
The (4,) row's second part carries only two factors of X; it is implemented as written.
"""

from __future__ import annotations

from collections import Counter
from itertools import combinations

import numpy as np
from scipy import integrate

from ..levy import LevyCumulants, ThetaParams
from .covariance import _BoxBlocks, _moment
from .cumulants import IntegratedCumulants, point_cumulant


class QuadratureError(ArithmeticError):
    pass


def a_term_shape(indices) -> tuple[int, ...]:
    return tuple(sorted(Counter(indices).values(), reverse=True))


def _groups(indices):
    """Distinct offsets ordered by descending multiplicity, ties by offset."""
    cnt = Counter(indices)
    return sorted(cnt, key=lambda o: (-cnt[o], o)), cnt


def a_term(
    theta: ThetaParams,
    levy: LevyCumulants,
    delta: float,
    indices,
    method: str = "reduction",
    quad_tol: float = 1e-8,
) -> float:
    indices = tuple(int(i) for i in indices)
    if len(indices) not in (3, 4):
        raise ValueError("a_term takes three or four indices")
    shape = a_term_shape(indices)
    if shape in ((1, 1, 1), (1, 1, 1, 1)):
        return 0.0
    if method == "reduction":
        return _reduction(theta, levy, delta, indices, shape)
    if method == "quadrature":
        return _quadrature(theta, levy, delta, indices, shape, quad_tol)
    raise ValueError(f"unknown method {method!r}")


def _reduction(theta, levy, delta, indices, shape) -> float:
    blocks = _BoxBlocks(theta, levy, delta)
    order, _ = _groups(indices)

    def moment(*offs):
        return _moment(offs, blocks)

    if shape == (2, 1):
        j, i = order
        return 2.0 * moment(i, j, j)
    if shape == (3,):
        (i,) = order
        return 6.0 * moment(i, i, i)
    if shape == (3, 1):
        j, i = order
        return 6.0 * moment(i, j, j, j)
    if shape == (2, 1, 1):
        k, i, j = order
        return 2.0 * moment(i, j, k, k)
    if shape == (2, 2):
        i, k = order
        return 8.0 * moment(i, i, k, k)
    if shape == (4,):
        (i,) = order

        def second_moment(s):
            if s <= 0:
                return 0.0
            ic = IntegratedCumulants(theta, LevyCumulants(theta.mu, theta.sigma2, 0.0, 0.0), s)
            mean = -theta.mu * s / (theta.B * (theta.alpha_pi - 1.0))
            return ic.variance() + mean**2

        extra, _ = integrate.quad(second_moment, 0.0, delta, epsabs=0.0, epsrel=1e-12)
        return 12.0 * moment(i, i, i, i) + 48.0 * extra
    raise ValueError(f"no A-term row for index shape {shape}")


# direct quadrature of the row integrals ----------------------------------------------------


class _RawMoments:
    def __init__(self, theta: ThetaParams, levy: LevyCumulants, delta: float):
        self.t, self.d = theta, delta
        self.m = {2: theta.sigma2, 3: levy.m3, 4: levy.m4}
        self.C = -theta.mu / (theta.B * (theta.alpha_pi - 1.0))

    def cum(self, times):
        return point_cumulant(self.t.alpha_pi, self.t.B, self.m[len(times)], 1.0, [x / self.d for x in times])

    def third(self, t, s, u):
        C = self.C
        pairs = self.cum((t, s)) + self.cum((t, u)) + self.cum((s, u))
        return self.cum((t, s, u)) + C * pairs + C**3

    def fourth(self, *x):
        C = self.C
        k3 = sum(self.cum(tr) for tr in combinations(x, 3))
        k2 = sum(self.cum(pr) for pr in combinations(x, 2))
        k22 = (
            self.cum((x[0], x[1])) * self.cum((x[2], x[3]))
            + self.cum((x[0], x[2])) * self.cum((x[1], x[3]))
            + self.cum((x[0], x[3])) * self.cum((x[1], x[2]))
        )
        return self.cum(x) + C * k3 + k22 + C**2 * k2 + C**4


def _nested(fn, variables, delta: float, tol: float) -> float:
    """Nested adaptive quadrature; ``variables`` lists (name, box, upper) innermost first.

    A variable spans its box, or runs from the box start up to the outer variable named
    ``upper``. Wherever an outer variable shares the box, the point cumulants have a kink,
    so it is passed to the integrator as a breakpoint.
    """
    names = [v[0] for v in variables]

    def bounds(i, outer):
        _, box, upper = variables[i]
        hi = (box + 1) * delta if upper is None else outer[names.index(upper) - i - 1]
        return box * delta, hi

    def make_range(i):
        return lambda *outer: bounds(i, outer)

    def make_opts(i):
        def opts(*outer):
            lo, hi = bounds(i, outer)
            pts = [v for v, (_, box, _) in zip(outer, variables[i + 1 :]) if box == variables[i][1] and lo < v < hi]
            out = {"epsabs": tol, "epsrel": tol, "limit": 200}
            if pts:
                out["points"] = pts
            return out

        return opts

    n = len(variables)
    value, err = integrate.nquad(
        lambda *x: fn(dict(zip(names, x))),
        [make_range(i) for i in range(n)],
        opts=[make_opts(i) for i in range(n)],
    )
    if not np.isfinite(value) or err > max(10 * tol * abs(value), 1e-14):
        raise QuadratureError(f"nested quadrature did not converge: estimate {value:.6g}, error bound {err:.3g}")
    return value


def _quadrature(theta, levy, delta, indices, shape, tol) -> float:
    raw = _RawMoments(theta, levy, delta)
    order, _ = _groups(indices)

    def third(v):
        return raw.third(v["t"], v["s"], v["u"])

    def fourth(v):
        return raw.fourth(v["t"], v["z"], v["s"], v["u"])

    def run(fn, variables):
        return _nested(fn, variables, delta, tol)

    if shape == (2, 1):
        j, i = order
        return 4.0 * run(third, [("u", j, "s"), ("s", j, None), ("t", i, None)])
    if shape == (3,):
        (i,) = order
        return 12.0 * run(third, [("u", i, "s"), ("s", i, None), ("t", i, None)])
    if shape == (3, 1):
        j, i = order
        return 12.0 * run(fourth, [("u", j, "s"), ("s", j, None), ("z", j, None), ("t", i, None)])
    if shape == (2, 1, 1):
        k, i, j = order
        return 4.0 * run(fourth, [("u", k, "s"), ("s", k, None), ("z", j, None), ("t", i, None)])
    if shape == (2, 2):
        i, k = order
        first = run(fourth, [("u", k, "s"), ("s", k, None), ("z", i, None), ("t", i, None)])
        second = run(fourth, [("u", k, None), ("s", k, None), ("z", i, "t"), ("t", i, None)])
        third_ = run(fourth, [("u", k, "s"), ("z", i, "t"), ("s", k, None), ("t", i, None)])
        return 4.0 * first + 4.0 * second + 16.0 * third_
    if shape == (4,):
        raise ValueError("the (4,) row has no quadrature path; use method='reduction'")
    raise ValueError(f"no A-term row for index shape {shape}")
