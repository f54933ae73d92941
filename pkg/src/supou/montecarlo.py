"""Replication harness: simulate, estimate, and compare against the asymptotic law."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analytics.covariance import sigma_matrix
from .analytics.moments import jacobian
from .gmm import GmmConfig, asymptotic_cov, estimate, floored_inverse
from .levy import GammaMeanReversion, SubordinatorSpec, levy_cumulants, replication_rng, theta_from_specs
from .simulate import simulate_returns, simulate_supou_path

PARAMS = ("mu", "sigma2", "alpha_pi", "B")


@dataclass(frozen=True)
class Replication:
    index: int
    theta_hat: np.ndarray
    std_errors: np.ndarray
    objective: float
    converged: bool
    error: str = ""


@dataclass(frozen=True)
class _Job:
    spec: SubordinatorSpec
    pi: GammaMeanReversion
    n: int
    tol: float
    config: GmmConfig
    seed: int


def _one(job: _Job, index: int) -> Replication:
    rng = replication_rng(job.seed, index)
    cfg = replace(job.config, seed=job.seed + index)
    try:
        if cfg.kind == "supou":
            x = simulate_supou_path(job.spec, job.pi, job.n, cfg.delta, job.tol, rng).values
        else:
            x = simulate_returns(job.spec, job.pi, job.n, cfg.delta, job.tol, rng, keep_volatility=False).values
        res = estimate(x, cfg)
    except Exception as exc:  # recorded per replication; the caller decides whether to abort
        nan = np.full(4, np.nan)
        return Replication(index, nan, nan, math.nan, False, f"{type(exc).__name__}: {exc}")
    return Replication(index, res.theta_hat.as_array(), res.std_errors, res.objective, res.converged)


def _star(args):
    return _one(*args)


def run_replications(
    spec: SubordinatorSpec,
    pi: GammaMeanReversion,
    n: int,
    replications: int,
    config: GmmConfig,
    seed: int,
    tol: float = 1e-6,
    workers: int | None = None,
) -> list[Replication]:
    """Replication i draws from stream (seed, i) only, so results do not depend on scheduling."""
    if replications < 2:
        raise ValueError("need at least two replications")
    job = _Job(spec, pi, n, tol, config, seed)
    workers = workers or min(os.cpu_count() or 1, replications)
    tasks = [(job, i) for i in range(replications)]
    if workers == 1:
        out = [_star(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_star, tasks, chunksize=max(1, replications // (4 * workers))))
    return sorted(out, key=lambda r: r.index)


def theoretical_sd(spec: SubordinatorSpec, pi: GammaMeanReversion, config: GmmConfig) -> np.ndarray:
    """sqrt(diag(M Sigma M')) at the true parameters, the scale of sqrt(N) (theta_hat - theta_0)."""
    theta0 = theta_from_specs(spec, pi)
    levy = levy_cumulants(spec)
    S = sigma_matrix(theta0, levy, config.kind, config.delta, config.m)
    G = jacobian(theta0, config.kind, config.delta, config.m)
    W = np.eye(config.m + 2) if config.weighting == "identity" else floored_inverse(S.matrix)[0]
    return np.sqrt(np.diag(asymptotic_cov(theta0, W, S, G, 1)))


@dataclass(frozen=True)
class Summary:
    theta0: np.ndarray
    n: int
    replications: int
    failures: int
    median: np.ndarray
    median_bias: np.ndarray
    mean_bias: np.ndarray
    median_mc_se: np.ndarray
    empirical_sd: np.ndarray
    theoretical_sd: np.ndarray
    sd_ratio: np.ndarray
    coverage: np.ndarray


def summarize(reps: list[Replication], theta0: np.ndarray, n: int, theory_sd: np.ndarray) -> Summary:
    ok = [r for r in reps if not r.error]
    est = np.array([r.theta_hat for r in ok]).reshape(-1, 4)
    se = np.array([r.std_errors for r in ok]).reshape(-1, 4)
    med = np.median(est, axis=0)
    sd = est.std(axis=0, ddof=1) if len(ok) > 1 else np.full(4, np.nan)
    # large-sample standard error of a sample median, sqrt(pi/2) sd / sqrt(R)
    mc_se = math.sqrt(math.pi / 2) * sd / math.sqrt(max(len(ok), 1))
    emp = math.sqrt(n) * sd
    with np.errstate(invalid="ignore"):
        covered = np.abs(est - theta0) <= 1.959963984540054 * se
    coverage = np.nanmean(np.where(np.isfinite(se), covered, np.nan), axis=0)
    return Summary(
        theta0=np.asarray(theta0, dtype=float),
        n=n,
        replications=len(reps),
        failures=len(reps) - len(ok),
        median=med,
        median_bias=med - theta0,
        mean_bias=est.mean(axis=0) - theta0,
        median_mc_se=mc_se,
        empirical_sd=emp,
        theoretical_sd=theory_sd,
        sd_ratio=emp / theory_sd,
        coverage=coverage,
    )
