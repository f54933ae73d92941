"""Exact simulation of supOU paths and supOU stochastic-volatility returns."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .levy import EventSet, GammaMeanReversion, SubordinatorSpec, sample_levy_events

# contributions below exp(-CUTOFF) times the jump size are dropped (about 4e-18 relative)
CUTOFF = 40.0
# largest number of (event, grid point) pairs materialised at once
CHUNK_PAIRS = 4_000_000
MAX_EVENTS = 50_000_000


class ResourceError(RuntimeError):
    pass


class DegenerateVolatilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SupOUPath:
    delta: float
    values: np.ndarray
    events: EventSet
    horizon: float
    tol: float


@dataclass(frozen=True)
class ReturnSeries:
    delta: float
    values: np.ndarray
    volatility: Optional[np.ndarray]
    horizon: float
    tol: float


def truncation_horizon(pi: GammaMeanReversion, tol: float) -> float:
    """Smallest M with (1 - B M)^(1 - alpha_pi) <= tol."""
    if not 0 < tol <= 1:
        raise ValueError(f"tol must lie in (0, 1], got {tol}")
    return (tol ** (1.0 / (1.0 - pi.alpha_pi)) - 1.0) / (-pi.B)


def drift_floor(spec: SubordinatorSpec, pi: GammaMeanReversion) -> float:
    return -spec.gamma0 / (pi.B * (pi.alpha_pi - 1.0))


def _pairs(events: EventSet, delta: float, n: int, first_step: np.ndarray):
    """Yield chunks of (event index, step index) for the grid steps each event still affects.

    Steps run from ``first_step`` (per event) to the point where exp(A * elapsed)
    drops below exp(-CUTOFF), capped at step n.
    """
    rate = -events.reversions
    span = np.minimum(np.ceil(CUTOFF / (rate * delta)), n)
    last = np.minimum(n, first_step + span.astype(np.int64))
    lengths = np.maximum(last - first_step + 1, 0)
    bounds = np.concatenate([[0], np.cumsum(lengths)])
    start = 0
    while start < len(lengths):
        stop = int(np.searchsorted(bounds, bounds[start] + CHUNK_PAIRS, side="right")) - 1
        stop = max(stop, start + 1)
        ev = np.repeat(np.arange(start, stop), lengths[start:stop])
        offs = np.arange(len(ev)) - np.repeat(bounds[start:stop] - bounds[start], lengths[start:stop])
        steps = first_step[ev] + offs
        yield ev, steps
        start = stop


def path_from_events(events: EventSet, gamma0: float, pi: GammaMeanReversion, n: int, delta: float) -> np.ndarray:
    """X at t = delta, ..., n*delta from a fixed event set."""
    values = np.full(n + 1, -gamma0 / (pi.B * (pi.alpha_pi - 1.0)))
    if len(events):
        first = np.maximum(np.ceil(events.times / delta).astype(np.int64), 1)
        for ev, steps in _pairs(events, delta, n, first):
            contrib = events.sizes[ev] * np.exp(events.reversions[ev] * (steps * delta - events.times[ev]))
            values += np.bincount(steps, contrib, minlength=n + 1)
    return values[1:]


def volatility_from_events(events: EventSet, gamma0: float, pi: GammaMeanReversion, n: int, delta: float) -> np.ndarray:
    """Integrated volatility over ((t-1) delta, t delta] for t = 1..n, event by event in closed form."""
    floor = -gamma0 / (pi.B * (pi.alpha_pi - 1.0))
    values = np.full(n + 1, floor * delta)
    if len(events):
        # first interval touched by the event is the one containing its time
        first = np.maximum(np.floor(events.times / delta).astype(np.int64) + 1, 1)
        for ev, steps in _pairs(events, delta, n, first):
            a = events.reversions[ev]
            s = events.times[ev]
            lo = np.maximum((steps - 1) * delta, s)
            hi = steps * delta
            # x (e^{A(hi-s)} - e^{A(lo-s)}) / A, written to stay accurate for small |A| delta
            contrib = events.sizes[ev] * np.exp(a * (lo - s)) * np.expm1(a * (hi - lo)) / a
            values += np.bincount(steps, contrib, minlength=n + 1)
    return values[1:]


def integrated_volatility(events: EventSet, gamma0: float, pi: GammaMeanReversion, a: float, b: float) -> float:
    """Integral of X over [a, b] from the events, exact."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if events.t1 < b or events.t0 > a:
        raise ValueError(f"events cover [{events.t0}, {events.t1}], which does not contain [{a}, {b}]")
    live = events.times <= b
    s = events.times[live]
    x = events.sizes[live]
    rev = events.reversions[live]
    lo = np.maximum(a, s)
    total = -gamma0 / (pi.B * (pi.alpha_pi - 1.0)) * (b - a)
    return float(total + np.sum(x * np.exp(rev * (lo - s)) * np.expm1(rev * (b - lo)) / rev))


def _events(spec, pi, n, delta, tol, rng):
    if n < 1:
        raise ValueError(f"N must be at least 1, got {n}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    horizon = truncation_horizon(pi, tol)
    expected = spec.jump_rate * (horizon + n * delta)
    if expected > MAX_EVENTS:
        raise ResourceError(
            f"about {expected:.3g} events needed on [-{horizon:.4g}, {n * delta:.4g}], budget is {MAX_EVENTS}"
        )
    return sample_levy_events(spec, pi, -horizon, n * delta, rng), horizon


def simulate_supou_path(
    spec: SubordinatorSpec,
    pi: GammaMeanReversion,
    n: int,
    delta: float,
    tol: float,
    rng: np.random.Generator,
) -> SupOUPath:
    events, horizon = _events(spec, pi, n, delta, tol, rng)
    values = path_from_events(events, spec.gamma0, pi, n, delta)
    return SupOUPath(delta, values, events, horizon, tol)


def simulate_returns(
    spec: SubordinatorSpec,
    pi: GammaMeanReversion,
    n: int,
    delta: float,
    tol: float,
    rng: np.random.Generator,
    keep_volatility: bool = True,
) -> ReturnSeries:
    """Returns Y_t = sqrt(V_t) Z_t, exact in law given the simulated volatility."""
    events, horizon = _events(spec, pi, n, delta, tol, rng)
    vol = volatility_from_events(events, spec.gamma0, pi, n, delta)
    if np.any(vol <= 0):
        raise DegenerateVolatilityError(
            f"{int(np.sum(vol <= 0))} intervals with zero integrated volatility; use gamma0 > 0 or a longer horizon"
        )
    y = np.sqrt(vol) * rng.standard_normal(n)
    return ReturnSeries(delta, y, vol if keep_volatility else None, horizon, tol)


def write_series_csv(path: Path, values: np.ndarray, volatility: Optional[np.ndarray] = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if volatility is None:
            w.writerow(["t", "value"])
            for t, v in enumerate(values, start=1):
                w.writerow([t, repr(float(v))])
        else:
            w.writerow(["t", "Y", "V"])
            for t, (y, v) in enumerate(zip(values, volatility), start=1):
                w.writerow([t, repr(float(y)), repr(float(v))])


def read_series_csv(path: Path) -> np.ndarray:
    """Read the value column (``value`` or ``Y``) of a series CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no observations")
    key = "value" if "value" in rows[0] else "Y"
    if key not in rows[0]:
        raise ValueError(f"{path} has neither a 'value' nor a 'Y' column")
    return np.array([float(r[key]) for r in rows])
