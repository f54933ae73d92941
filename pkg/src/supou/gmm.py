"""GMM estimation of (mu, sigma2, alpha_pi, B) from a supOU series or supOU-SV returns."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .analytics.covariance import LagCovMatrix, sigma_matrix
from .analytics.moments import jacobian, model_vector
from .empirics import KINDS, MomentVector, data_panel, hac
from .levy import ExponentialJumps, LevyCumulants, SubordinatorSpec, ThetaParams, matched_levy

WEIGHTINGS = ("identity", "two_step_hac", "two_step_theory")
WEIGHT_FLOOR = 1e-10
ALPHA_MARGIN = 0.05
DEFAULT_BOX = ((0.0, 100.0), (1e-6, 100.0), (2.0 + ALPHA_MARGIN, 50.0), (-100.0, -1e-4))
# alpha_pi values tried when building the moment-matching start
_ALPHA_GRID = (2.3, 2.6, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0, 12.0, 20.0)


class EstimationError(RuntimeError):
    pass


class RankError(np.linalg.LinAlgError):
    def __init__(self, smallest: float):
        super().__init__(f"Jacobian is rank deficient: smallest singular value {smallest:.3g}")
        self.smallest = smallest


@dataclass(frozen=True)
class OptimizerConfig:
    max_iter: int = 20000
    x_tol: float = 1e-8
    f_tol: float = 1e-14
    restarts: int = 8
    jitter: float = 0.5
    # a best value that improves by less than stall_rtol (relative) over stall_window iterations
    # counts as converged; this ends crawls along flat valleys, e.g. towards the single-OU limit
    stall_window: int = 300
    stall_rtol: float = 1e-9


@dataclass(frozen=True)
class GmmConfig:
    kind: str = "supou"
    m: int = 6
    delta: float = 1.0
    weighting: str = "identity"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    box: tuple = DEFAULT_BOX
    seed: int = 0
    bandwidth: object = "auto"
    # jump family whose third and fourth cumulants complete theta for theory covariances
    levy_family: SubordinatorSpec = field(default_factory=lambda: SubordinatorSpec(0.0, 1.0, ExponentialJumps(1.0)))
    sandwich: str = "theory"
    start: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting {self.weighting!r}; choose from {WEIGHTINGS}")
        if self.sandwich not in ("theory", "hac"):
            raise ValueError("sandwich must be 'theory' or 'hac'")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if len(self.box) != 4:
            raise ValueError("box needs bounds for all four parameters")
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError(f"empty box interval [{lo}, {hi}]")
        (_, _), (s_lo, _), (a_lo, _), (_, b_hi) = self.box
        if s_lo <= 0 or b_hi >= 0:
            raise ValueError("the box must keep sigma2 > 0 and B < 0")
        if a_lo < 2.0 + ALPHA_MARGIN - 1e-12:
            raise ValueError(f"alpha_pi lower bound must be at least {2.0 + ALPHA_MARGIN}")
        if self.box[0][0] < 0:
            raise ValueError("mu lower bound must be non-negative")


@dataclass(frozen=True)
class GmmResult:
    theta_hat: ThetaParams
    objective: float
    weight_used: np.ndarray
    sandwich_cov: np.ndarray
    std_errors: np.ndarray
    iterations: int
    converged: bool
    restart_winner: int
    j_statistic: float
    n_obs: int
    weight_floored: bool
    stage_one: ThetaParams
    jacobian_min_singular: float
    # parameters within 1e-6 of the box span from a face; their sandwich errors are not meaningful
    on_boundary: tuple = ()


# objective and weights ---------------------------------------------------------------------


def objective(g, W) -> float:
    """g' W g."""
    v = g.values if isinstance(g, MomentVector) else np.asarray(g, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != (v.size, v.size):
        raise ValueError(f"weight matrix of shape {W.shape} does not match a moment vector of length {v.size}")
    return float(max(v @ W @ v, 0.0))


def floored_inverse(S: np.ndarray, floor: float = WEIGHT_FLOOR) -> tuple[np.ndarray, bool]:
    """Inverse of a symmetric matrix with eigenvalues floored at floor * (largest eigenvalue)."""
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    top = vals.max()
    if not top > 0:
        raise EstimationError("long-run covariance has no positive eigenvalue")
    lim = floor * top
    floored = bool(np.any(vals < lim))
    vals = np.maximum(vals, lim)
    W = (vecs / vals) @ vecs.T
    return 0.5 * (W + W.T), floored


# box transform and optimiser ---------------------------------------------------------------

# sigma2, alpha_pi - 2 and -B span orders of magnitude, so they are mapped on a log scale
_LOG_SCALE = (False, True, True, True)


def _scaled_bounds(box):
    out = []
    for i, (lo, hi) in enumerate(box):
        if i == 2:
            lo, hi = lo - 2.0, hi - 2.0
        elif i == 3:
            lo, hi = -hi, -lo
        out.append((math.log(lo), math.log(hi)) if _LOG_SCALE[i] else (lo, hi))
    return out


class BoxTransform:
    """Bijection between R^4 and the open parameter box (logistic per coordinate)."""

    def __init__(self, box):
        self.bounds = _scaled_bounds(box)

    def to_theta(self, z) -> np.ndarray:
        out = np.empty(4)
        for i, ((lo, hi), zi) in enumerate(zip(self.bounds, z)):
            s = lo + (hi - lo) * _expit(min(max(zi, -_ZMAX), _ZMAX))
            if _LOG_SCALE[i]:
                s = math.exp(s)
            out[i] = s
        out[2] += 2.0
        out[3] = -out[3]
        return out

    def from_theta(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[2] -= 2.0
        x[3] = -x[3]
        z = np.empty(4)
        for i, ((lo, hi), xi) in enumerate(zip(self.bounds, x)):
            s = math.log(xi) if _LOG_SCALE[i] else xi
            p = (s - lo) / (hi - lo)
            p = min(max(p, _EDGE), 1 - _EDGE)
            z[i] = math.log(p / (1 - p))
        return z


# starts on a face are pulled this fraction of the span inside, where the logistic map is not flat
_EDGE = 1e-4
# past this the map is constant, so a simplex drifting along a flat direction still collapses
_ZMAX = 25.0


def _expit(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def minimize(fn: Callable, start, box, cfg: OptimizerConfig = OptimizerConfig(), transform=None) -> MinimizeResult:
    """Nelder-Mead on logistic coordinates of the box, so every iterate is feasible.

    ``box`` holds (lo, hi) per coordinate. ``transform`` defaults to a linear logistic
    map per coordinate; estimation passes ``BoxTransform``, which is log-scaled.
    """
    box = tuple(tuple(b) for b in box)
    start = np.asarray(start, dtype=float)
    for (lo, hi), s in zip(box, start):
        if not lo <= s <= hi:
            raise ValueError(f"start {start} lies outside the box")
    tr = transform if transform is not None else _PlainLogistic(box)
    best = {"x": start.copy(), "value": math.inf}

    def wrapped(z):
        x = tr.to_theta(z)
        try:
            v = float(fn(x))
        except (ValueError, ArithmeticError):
            v = math.inf
        if not math.isfinite(v):
            v = 1e300
        if v < best["value"]:
            best["x"], best["value"] = x, v
        return v

    history: list[float] = []
    stalled = {"flag": False}

    def watch(intermediate_result):
        history.append(best["value"])
        w = cfg.stall_window
        if w and len(history) > w:
            old = history[-w - 1]
            if old - history[-1] <= cfg.stall_rtol * max(abs(old), 1e-300):
                stalled["flag"] = True
                raise StopIteration

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        z0 = tr.from_theta(start)
        # unit steps towards the centre of the box
        simplex = np.vstack([z0, z0 - np.sign(z0 + 1e-300) * np.eye(z0.size)])
        res = optimize.minimize(
            wrapped,
            z0,
            method="Nelder-Mead",
            callback=watch,
            options={
                "maxiter": cfg.max_iter,
                "xatol": cfg.x_tol,
                "fatol": cfg.f_tol,
                "initial_simplex": simplex,
            },
        )
    return MinimizeResult(np.asarray(best["x"]), best["value"], int(res.nit), bool(res.success or stalled["flag"]))


class _PlainLogistic:
    def __init__(self, box):
        self.box = box

    def to_theta(self, z):
        return np.array([lo + (hi - lo) * _expit(min(max(zi, -_ZMAX), _ZMAX)) for (lo, hi), zi in zip(self.box, z)])

    def from_theta(self, x):
        out = []
        for (lo, hi), xi in zip(self.box, x):
            p = min(max((xi - lo) / (hi - lo), _EDGE), 1 - _EDGE)
            out.append(math.log(p / (1 - p)))
        return np.array(out)


# starting values ---------------------------------------------------------------------------


def _clip_to_box(x, box) -> np.ndarray:
    out = np.array(x, dtype=float)
    for i, (lo, hi) in enumerate(box):
        span = hi - lo
        out[i] = min(max(out[i], lo + 1e-6 * span), hi - 1e-6 * span)
    return out


def _moment_start(mean_data: np.ndarray, kind: str, delta: float, alpha: float, box) -> Optional[np.ndarray]:
    """Invert mean, variance and lag-one correlation at a fixed alpha_pi (supOU scaling).

    For returns the squared-return moments are read as integrated-volatility moments:
    E Y^2 = delta E X and Cov(Y_1^2, Y_2^2) is roughly delta^2 Cov(X_0, X_delta).
    """
    if kind == "supou":
        c = mean_data[0]
        var = mean_data[1] - c**2
        cov1 = mean_data[2] - c**2
    else:
        c = mean_data[0] / delta
        cov1 = (mean_data[2] - mean_data[0] ** 2) / delta**2
        cov2 = (mean_data[3] - mean_data[0] ** 2) / delta**2 if mean_data.size > 3 else cov1 / 2
        rho = cov2 / cov1 if cov1 > 0 else 0.5
        var = cov1 / rho if 0 < rho < 1 else cov1
    rho = cov1 / var if var > 0 else 0.5
    if not (c > 0 and var > 0 and 0 < rho < 1):
        return None
    B = (1.0 - rho ** (1.0 / (1.0 - alpha))) / delta
    if not B < 0:
        return None
    s2 = -2.0 * B * (alpha - 1.0) * var
    mu = -c * B * (alpha - 1.0)
    return _clip_to_box([mu, s2, alpha, B], box)


def starting_points(mean_data, kind, delta, m, W, box, cfg: OptimizerConfig, seed: int, start=None):
    """Best moment-matching start over an alpha grid, then jittered copies in logistic coordinates."""
    box = tuple(tuple(b) for b in box)
    if start is not None:
        base = _clip_to_box(start, box)
    else:
        cands = [_moment_start(mean_data, kind, delta, a, box) for a in _ALPHA_GRID]
        cands = [c for c in cands if c is not None]
        if not cands:
            mids = [(lo + hi) / 2 if not _LOG_SCALE[i] else None for i, (lo, hi) in enumerate(box)]
            cands = [_clip_to_box([mids[0], 1.0, 4.0, -1.0], box)]

        def score(x):
            try:
                g = mean_data - model_vector(ThetaParams.from_array(x), kind, delta, m, "quadrature")
                return objective(g, W)
            except (ValueError, ArithmeticError):
                return math.inf

        base = min(cands, key=score)
    tr = BoxTransform(box)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    z0 = tr.from_theta(base)
    points = [base]
    for _ in range(cfg.restarts - 1):
        points.append(tr.to_theta(z0 + cfg.jitter * rng.standard_normal(4)))
    return points


# estimation --------------------------------------------------------------------------------


def _stage(mean_data, kind, delta, m, W, config: GmmConfig, start=None):
    # the simplex tolerances are absolute, so the search runs on W scaled to unit mean eigenvalue
    scale = np.trace(W) / W.shape[0]

    def fn(x):
        g = mean_data - model_vector(ThetaParams.from_array(x), kind, delta, m, "quadrature")
        return objective(g, W) / scale

    starts = starting_points(mean_data, kind, delta, m, W, config.box, config.optimizer, config.seed, start)
    tr = BoxTransform(config.box)
    runs = [minimize(fn, s, config.box, config.optimizer, tr) for s in starts]
    finite = [(r.value, i) for i, r in enumerate(runs) if math.isfinite(r.value) and r.value < 1e300]
    if not any(runs[i].converged for _, i in finite):
        raise EstimationError(f"none of {len(runs)} restarts converged")
    _, winner = min(finite)
    return runs[winner], winner


def _sigma(theta: ThetaParams, panel: np.ndarray, config: GmmConfig, source: str) -> LagCovMatrix:
    if source == "hac":
        return hac(panel, config.bandwidth, kind=config.kind)
    levy = matched_levy(theta, config.levy_family) if theta.mu > config.levy_family.gamma0 else None
    if levy is None:
        raise EstimationError(f"cannot match the jump family to mu={theta.mu}; use sandwich='hac'")
    return sigma_matrix(theta, levy, config.kind, config.delta, config.m)


def asymptotic_cov(theta_hat: ThetaParams, A_weight, Sigma, G, N: int) -> np.ndarray:
    """M Sigma M' / N with M = (G'AG)^-1 G'A, symmetrised."""
    S = Sigma.matrix if isinstance(Sigma, LagCovMatrix) else np.asarray(Sigma, dtype=float)
    G = np.asarray(G, dtype=float)
    A = np.asarray(A_weight, dtype=float)
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise RankError(float(sv[-1]))
    GA = G.T @ A
    M = np.linalg.solve(GA @ G, GA)
    cov = M @ S @ M.T / N
    return 0.5 * (cov + cov.T)


def estimate(data, config: GmmConfig) -> GmmResult:
    data = np.asarray(data, dtype=float)
    n = data.size
    if n <= 10 * (config.m + 2):
        raise ValueError(f"N = {n} is too small for m = {config.m}; need N > {10 * (config.m + 2)}")
    kind, m, delta = config.kind, config.m, config.delta
    raw = data_panel(data, kind, m)
    mean_data = raw.mean(axis=0)
    k = m + 2

    W = np.eye(k)
    run, winner = _stage(mean_data, kind, delta, m, W, config, config.start)
    stage_one = ThetaParams.from_array(run.x)
    floored = False
    if config.weighting != "identity":
        panel = raw - model_vector(stage_one, kind, delta, m, "quadrature")
        source = "hac" if config.weighting == "two_step_hac" else "theory"
        W, floored = floored_inverse(_sigma(stage_one, panel, config, source).matrix)
        run, winner = _stage(mean_data, kind, delta, m, W, config, run.x)

    theta_hat = ThetaParams.from_array(run.x)
    g = mean_data - model_vector(theta_hat, kind, delta, m, "quadrature")
    panel = raw - model_vector(theta_hat, kind, delta, m, "quadrature")
    G = jacobian(theta_hat, kind, delta, m)
    sv = np.linalg.svd(G, compute_uv=False)
    try:
        Sigma = _sigma(theta_hat, panel, config, config.sandwich)
        cov = asymptotic_cov(theta_hat, W, Sigma, G, n - m)
    except (EstimationError, RankError, ArithmeticError, ValueError):
        cov = np.full((4, 4), np.nan)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(cov)) else np.full(4, np.nan)
    return GmmResult(
        theta_hat=theta_hat,
        objective=objective(g, W),
        weight_used=W,
        sandwich_cov=cov,
        std_errors=se,
        iterations=run.iterations,
        converged=run.converged,
        restart_winner=winner,
        j_statistic=(n - m) * objective(g, W),
        n_obs=n,
        weight_floored=floored,
        stage_one=stage_one,
        jacobian_min_singular=float(sv[-1]),
        on_boundary=_on_boundary(run.x, config.box),
    )


def _on_boundary(x, box) -> tuple:
    names = ("mu", "sigma2", "alpha_pi", "B")
    return tuple(n for n, v, (lo, hi) in zip(names, x, box) if min(v - lo, hi - v) <= 1e-6 * (hi - lo))
