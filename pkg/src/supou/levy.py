"""Driving subordinator, Gamma mean-reversion law and the GMM parameter vector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np


class JumpLaw(Protocol):
    """Interface for a positive jump-size distribution.

    Any law exposing its first four raw moments and a sampler can drive the
    simulator and the cumulant analytics.
    """

    def raw_moment(self, n: int) -> float: ...

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...


@dataclass(frozen=True)
class ExponentialJumps:
    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError(f"exponential jump mean must be positive, got {self.mean}")

    def raw_moment(self, n: int) -> float:
        return math.factorial(n) * self.mean**n

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(self.mean, size)


@dataclass(frozen=True)
class GammaJumps:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"gamma jump parameters must be positive, got {self.shape}, {self.scale}")

    def raw_moment(self, n: int) -> float:
        rising = math.prod(self.shape + j for j in range(n))
        return self.scale**n * rising

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size)


Jumps = Union[ExponentialJumps, GammaJumps]


@dataclass(frozen=True)
class SubordinatorSpec:
    """Drift plus compound-Poisson jumps with positive sizes."""

    gamma0: float
    jump_rate: float
    jump_law: Jumps

    def __post_init__(self):
        if self.gamma0 < 0:
            raise ValueError(f"gamma0 must be non-negative, got {self.gamma0}")
        if not self.jump_rate > 0:
            raise ValueError(f"jump_rate must be positive, got {self.jump_rate}")


@dataclass(frozen=True)
class LevyCumulants:
    mu: float
    sigma2: float
    m3: float
    m4: float

    @property
    def skew(self) -> float:
        return self.m3 / self.sigma2**1.5

    @property
    def kurt(self) -> float:
        return self.m4 / self.sigma2**2 + 3.0

    def order(self, n: int) -> float:
        """Cumulant of L_1 of order n (1 to 4)."""
        return {1: self.mu, 2: self.sigma2, 3: self.m3, 4: self.m4}[n]


@dataclass(frozen=True)
class GammaMeanReversion:
    """Law of A = B * xi with xi ~ Gamma(alpha_pi, 1)."""

    B: float
    alpha_pi: float

    def __post_init__(self):
        if not self.B < 0:
            raise ValueError(f"B must be negative, got {self.B}")
        if not self.alpha_pi > 2:
            raise ValueError(f"alpha_pi must exceed 2, got {self.alpha_pi}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.B * rng.gamma(self.alpha_pi, 1.0, size)


@dataclass(frozen=True)
class ThetaParams:
    mu: float
    sigma2: float
    alpha_pi: float
    B: float

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.alpha_pi > 2:
            raise ValueError(f"alpha_pi must exceed 2, got {self.alpha_pi}")
        if not self.B < 0:
            raise ValueError(f"B must be negative, got {self.B}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma2, self.alpha_pi, self.B])

    @classmethod
    def from_array(cls, x) -> "ThetaParams":
        return cls(*(float(v) for v in x))


def levy_cumulants(spec: SubordinatorSpec) -> LevyCumulants:
    lam = spec.jump_rate
    raw = [spec.jump_law.raw_moment(n) for n in range(1, 5)]
    return LevyCumulants(
        mu=spec.gamma0 + lam * raw[0],
        sigma2=lam * raw[1],
        m3=lam * raw[2],
        m4=lam * raw[3],
    )


def theta_from_specs(spec: SubordinatorSpec, pi: GammaMeanReversion) -> ThetaParams:
    cum = levy_cumulants(spec)
    return ThetaParams(cum.mu, cum.sigma2, pi.alpha_pi, pi.B)


def matched_levy(theta: ThetaParams, family: SubordinatorSpec) -> LevyCumulants:
    """Cumulants of the member of ``family``'s jump family that has theta's mean and variance.

    The drift gamma0 is held fixed; the jump rate and jump scale are solved from
    (mu, sigma2). For Gamma jumps the shape is held fixed. This supplies the third
    and fourth cumulants, which theta does not carry, when covariance matrices
    are evaluated at an estimate.
    """
    jump_mean = theta.mu - family.gamma0
    if jump_mean <= 0:
        raise ValueError("mu must exceed the fixed drift gamma0 to match a jump law")
    law = family.jump_law
    if isinstance(law, ExponentialJumps):
        scale = theta.sigma2 / (2.0 * jump_mean)
        matched: Jumps = ExponentialJumps(scale)
    elif isinstance(law, GammaJumps):
        scale = theta.sigma2 / (jump_mean * (law.shape + 1.0))
        matched = GammaJumps(law.shape, scale)
    else:
        raise TypeError(f"no moment matching rule for {type(law).__name__}")
    rate = jump_mean / matched.raw_moment(1)
    return levy_cumulants(SubordinatorSpec(family.gamma0, rate, matched))


@dataclass(frozen=True)
class EventSet:
    """Poisson events (time, size, reversion) on the window [t0, t1], sorted by time."""

    times: np.ndarray
    sizes: np.ndarray
    reversions: np.ndarray
    t0: float
    t1: float

    def __len__(self) -> int:
        return len(self.times)


def sample_levy_events(
    spec: SubordinatorSpec,
    pi: GammaMeanReversion,
    t0: float,
    t1: float,
    rng: np.random.Generator,
) -> EventSet:
    if t1 < t0:
        raise ValueError(f"empty event window [{t0}, {t1}]")
    count = rng.poisson(spec.jump_rate * (t1 - t0))
    times = np.sort(rng.uniform(t0, t1, count))
    sizes = spec.jump_law.sample(rng, count)
    reversions = pi.sample(rng, count)
    return EventSet(times, sizes, reversions, float(t0), float(t1))


def replication_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for replication ``index``; reproducible from (seed, index) alone."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))
