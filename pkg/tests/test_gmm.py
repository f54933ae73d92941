import math
from dataclasses import replace

import numpy as np
import pytest

from supou.analytics.covariance import sigma_matrix
from supou.analytics.moments import jacobian
from supou.empirics import MomentVector
from supou.gmm import (
    DEFAULT_BOX,
    BoxTransform,
    GmmConfig,
    OptimizerConfig,
    RankError,
    asymptotic_cov,
    estimate,
    floored_inverse,
    minimize,
    objective,
)
from supou.levy import ExponentialJumps, GammaMeanReversion, SubordinatorSpec, ThetaParams, levy_cumulants
from supou.simulate import simulate_returns, simulate_supou_path

SPEC = SubordinatorSpec(0.0, 1.0, ExponentialJumps(1.0))
PI = GammaMeanReversion(-0.2, 5.0)
THETA0 = ThetaParams(1.0, 2.0, 5.0, -0.2)


@pytest.fixture(scope="module")
def path():
    return simulate_supou_path(SPEC, PI, 20000, 1.0, 1e-6, np.random.default_rng(77)).values


def test_objective():
    assert objective(np.zeros(3), np.eye(3)) == 0.0
    g = np.array([1.0, -2.0, 0.5])
    assert objective(g, np.eye(3)) == pytest.approx(5.25)
    assert objective(np.array([1.0, 2.0]), np.diag([2.0, 1.0])) == 6.0
    assert objective(MomentVector("supou", 0, np.array([1.0, 2.0])), np.diag([2.0, 1.0])) == 6.0
    with pytest.raises(ValueError):
        objective(g, np.eye(2))


def test_floored_inverse():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    W, flag = floored_inverse(S)
    assert np.allclose(W, np.linalg.inv(S)) and not flag
    W, flag = floored_inverse(np.diag([1.0, 0.0]))
    assert flag and W[1, 1] == pytest.approx(1e10)


def test_box_transform_round_trip():
    tr = BoxTransform(DEFAULT_BOX)
    x = np.array([1.3, 0.02, 7.0, -0.3])
    assert np.allclose(tr.to_theta(tr.from_theta(x)), x, rtol=1e-12)
    for z in (np.full(4, -1e3), np.full(4, 1e3)):
        y = tr.to_theta(z)
        assert all(lo <= v <= hi for v, (lo, hi) in zip(y, DEFAULT_BOX))


def test_quadratic_bowl():
    a = np.array([0.3, -0.7, 1.1, 2.0])
    box = [(-5.0, 5.0)] * 4
    r = minimize(lambda x: float((x - a) @ (x - a)), np.zeros(4), box, OptimizerConfig(x_tol=1e-10, f_tol=1e-20))
    assert np.allclose(r.x, a, atol=1e-6) and r.converged


def test_rosenbrock():
    def fn(x):
        return 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2 + (x[2] - 0.5) ** 2 + (x[3] + 0.5) ** 2

    box = [(-3.0, 3.0)] * 4
    cfg = OptimizerConfig(x_tol=1e-12, f_tol=1e-24, stall_window=0)
    best = min((minimize(fn, s, box, cfg) for s in ([-1.5, 2.0, 0, 0], [2.0, -1.0, 1.0, 1.0])), key=lambda r: r.value)
    assert np.allclose(best.x, [1.0, 1.0, 0.5, -0.5], atol=1e-4)


def test_corner_start_stays_feasible():
    box = DEFAULT_BOX
    seen = []

    def fn(x):
        seen.append(x.copy())
        return float(np.sum((x - np.array([1.0, 2.0, 5.0, -0.2])) ** 2))

    corner = [lo for lo, _ in box]
    minimize(fn, corner, box, OptimizerConfig(max_iter=500), BoxTransform(box))
    pts = np.array(seen)
    assert pts[:, 0].min() >= 0 and pts[:, 1].min() > 0 and pts[:, 2].min() > 2 and pts[:, 3].max() < 0
    with pytest.raises(ValueError):
        minimize(fn, [-1.0, 1.0, 3.0, -1.0], box)


def test_efficient_weighting_identity(theta_ref, levy_ref):
    S = sigma_matrix(theta_ref, levy_ref, "supou", 1.0, 4).matrix
    G = jacobian(theta_ref, "supou", 1.0, 4)
    Si = np.linalg.inv(S)
    a = asymptotic_cov(theta_ref, Si, S, G, 1000)
    b = np.linalg.inv(G.T @ Si @ G) / 1000
    assert np.allclose(a, b, rtol=1e-10, atol=0)
    assert np.allclose(asymptotic_cov(theta_ref, np.eye(6), 3 * S, G, 10), 3 * asymptotic_cov(theta_ref, np.eye(6), S, G, 10))
    I_cov = asymptotic_cov(theta_ref, np.eye(6), S, G, 1000)
    assert np.trace(a) <= np.trace(I_cov)
    with pytest.raises(RankError):
        asymptotic_cov(theta_ref, np.eye(6), S, np.zeros((6, 4)), 10)


def test_config_validation():
    with pytest.raises(ValueError):
        GmmConfig(kind="x")
    with pytest.raises(ValueError):
        GmmConfig(weighting="optimal")
    with pytest.raises(ValueError):
        GmmConfig(box=((0, 1), (1, 0), (3, 4), (-1, -0.5)))
    with pytest.raises(ValueError):
        GmmConfig(m=0)


def test_too_short():
    with pytest.raises(ValueError):
        estimate(np.ones(50), GmmConfig())


def test_estimate_deterministic_and_sane(path):
    cfg = GmmConfig(seed=3)
    a = estimate(path, cfg)
    b = estimate(path, cfg)
    assert np.array_equal(a.theta_hat.as_array(), b.theta_hat.as_array())
    assert a.converged and a.objective >= 0
    assert np.allclose(a.sandwich_cov, a.sandwich_cov.T)
    assert np.linalg.eigvalsh(a.sandwich_cov).min() >= -1e-12 * np.abs(a.sandwich_cov).max()
    assert np.allclose(a.std_errors, np.sqrt(np.diag(a.sandwich_cov)))
    assert a.j_statistic == pytest.approx((path.size - 6) * a.objective)
    # the truth is inside a few standard errors
    assert np.all(np.abs(a.theta_hat.as_array() - THETA0.as_array()) < 4 * a.std_errors)


def test_start_at_truth_is_no_worse(path):
    cfg = GmmConfig(seed=5)
    at = estimate(path, replace(cfg, start=(1.0, 2.0, 5.0, -0.2)))
    off = estimate(path, replace(cfg, start=(2.0, 5.0, 3.0, -1.0)))
    assert at.objective <= off.objective + 1e-12 * max(off.objective, 1e-300) + cfg.optimizer.f_tol


def test_two_step_is_no_less_efficient(path):
    ident = estimate(path, GmmConfig(seed=1))
    eff = estimate(path, GmmConfig(seed=1, weighting="two_step_theory"))
    assert np.trace(eff.sandwich_cov) <= 1.05 * np.trace(ident.sandwich_cov)
    hac = estimate(path, GmmConfig(seed=1, weighting="two_step_hac", sandwich="hac"))
    assert hac.converged and np.all(np.isfinite(hac.std_errors))


def test_returns_estimate_runs():
    y = simulate_returns(SPEC, PI, 20000, 1.0, 1e-6, np.random.default_rng(78)).values
    res = estimate(y, GmmConfig(kind="returns", seed=2))
    assert res.converged and res.theta_hat.alpha_pi > 2
    assert len(res.weight_used) == 8
