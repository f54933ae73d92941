"""Sample moments, empirical moment functions and Bartlett long-run covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .analytics.covariance import LagCovMatrix
from .analytics.moments import model_vector
from .levy import ThetaParams

KINDS = ("supou", "returns")


@dataclass(frozen=True)
class MomentVector:
    kind: str
    m: int
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if len(self.values) != self.m + 2:
            raise ValueError(f"expected {self.m + 2} entries, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moment vector has non-finite entries")


def _series(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("a series must be one-dimensional")
    return x


def sample_mean(series) -> float:
    x = _series(series)
    if x.size == 0:
        raise ValueError("empty series")
    return float(x.mean())


def sample_autocov(series, k: int) -> float:
    """Mean-subtracted lag-k products summed over the N - k available pairs, divided by N."""
    x = _series(series)
    n = x.size
    if not 0 <= k < n:
        raise ValueError(f"lag {k} needs 0 <= k < N = {n}")
    c = x - x.mean()
    return float(np.dot(c[: n - k], c[k:]) / n)


def data_panel(series, kind: str, m: int) -> np.ndarray:
    """Data part of the moment function at t = 1..N-m, shape (N-m, m+2).

    supou columns: X_t, X_t^2, X_t X_{t+1}, ..., X_t X_{t+m}.
    returns columns: Y_t^2, Y_t^4, Y_t^2 Y_{t+1}^2, ..., Y_t^2 Y_{t+m}^2.
    """
    x = _series(series)
    n = x.size
    if m < 0:
        raise ValueError("m must be non-negative")
    if n <= m:
        raise ValueError(f"need N > m, got N={n}, m={m}")
    rows = n - m
    out = np.empty((rows, m + 2))
    if kind == "supou":
        out[:, 0] = x[:rows]
        for k in range(m + 1):
            out[:, k + 1] = x[:rows] * x[k : k + rows]
    elif kind == "returns":
        sq = x * x
        out[:, 0] = sq[:rows]
        out[:, 1] = sq[:rows] ** 2
        for k in range(1, m + 1):
            out[:, k + 1] = sq[:rows] * sq[k : k + rows]
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return out


def moment_panel(series, theta: ThetaParams, kind: str, m: int, delta: float) -> np.ndarray:
    """h(X_t, theta) (or h~(Y_t, theta)) for t = 1..N-m, one row per t."""
    return data_panel(series, kind, m) - model_vector(theta, kind, delta, m, at_pole="quadrature")


def g_supou(series, theta: ThetaParams, m: int, delta: float) -> MomentVector:
    return MomentVector("supou", m, moment_panel(series, theta, "supou", m, delta).mean(axis=0))


def g_returns(series, theta: ThetaParams, m: int, delta: float) -> MomentVector:
    return MomentVector("returns", m, moment_panel(series, theta, "returns", m, delta).mean(axis=0))


def auto_bandwidth(n: int) -> int:
    # integer cube root without float round-off at perfect cubes
    b = int(round(n ** (1.0 / 3.0)))
    while b**3 > n:
        b -= 1
    while (b + 1) ** 3 <= n:
        b += 1
    return b


def hac(panel, bandwidth: Union[int, str, None] = "auto", kind: Optional[str] = None) -> LagCovMatrix:
    """Bartlett-weighted long-run covariance of the rows of ``panel``.

    Weights 1 - l / (b + 1) for l = 0..b, divisor n at every lag; bandwidth 0 is the
    sample covariance. The Bartlett window has a nonnegative spectral window, so the
    result is PSD for any input.
    """
    h = np.asarray(panel, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    n = h.shape[0]
    b = auto_bandwidth(n) if bandwidth in ("auto", None) else int(bandwidth)
    if b < 0:
        raise ValueError("bandwidth must be non-negative")
    if n <= max(b, 1):
        raise ValueError(f"panel of length {n} is too short for bandwidth {b}")
    c = h - h.mean(axis=0)
    S = c.T @ c / n
    for lag in range(1, b + 1):
        gamma = c[:-lag].T @ c[lag:] / n
        S += (1.0 - lag / (b + 1.0)) * (gamma + gamma.T)
    S = 0.5 * (S + S.T)
    return LagCovMatrix(kind or "hac", S, b, math.nan, math.nan, 0.0)
