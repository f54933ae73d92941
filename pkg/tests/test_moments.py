import numpy as np
import pytest

from oracles import brute_box_cumulant, mp_jacobian
from supou.analytics.cumulants import PoleError
from supou.analytics.moments import (
    jacobian,
    jacobian_returns,
    jacobian_supou,
    model_vector,
    returns_moments,
    supou_autocov,
    supou_moments,
    volatility_autocov,
    volatility_variance,
)
from supou.levy import ThetaParams


def test_supou_reference(theta_ref):
    ms = supou_moments(theta_ref, 1.0, 5)
    assert ms.mean == pytest.approx(1 / 3, rel=1e-15)
    assert ms.variance == pytest.approx(1 / 3, rel=1e-15)
    assert ms.autocov[1] == pytest.approx(1 / 24, rel=1e-15)
    assert ms.autocov[0] == ms.variance
    assert np.all(np.diff(np.abs(ms.autocov)) < 0)


def test_vanishing_noise():
    ms = supou_moments(ThetaParams(1.0, 1e-300, 4.0, -1.0), 1.0, 4)
    assert np.all(np.abs(ms.autocov) < 1e-299)


def test_returns_reference(theta_ref):
    ms = returns_moments(theta_ref, 1.0, 3)
    assert ms.mean == pytest.approx(1 / 3, rel=1e-15)
    assert ms.autocov[0] == pytest.approx(0.5 + 2 / 9, rel=1e-14)
    assert ms.autocov[1] == pytest.approx(1 / 18, rel=1e-14)
    assert ms.volatility_variance == pytest.approx(1 / 6, rel=1e-14)


def test_returns_mean_scaling(theta_ref):
    a = returns_moments(theta_ref, 1.0, 0)
    b = returns_moments(ThetaParams(2.0, 2.0, 4.0, -1.0), 1.0, 0)
    assert b.mean == pytest.approx(2 * a.mean)
    assert b.autocov[0] - a.autocov[0] == pytest.approx(2 * (2 * a.mean) ** 2 - 2 * a.mean**2)


def test_returns_decay():
    ms = returns_moments(ThetaParams(1.0, 2.0, 3.5, -0.4), 1.0, 200)
    assert np.all(np.diff(ms.autocov[1:]) < 0) and ms.autocov[-1] < 1e-2 * ms.autocov[1]


@pytest.mark.parametrize("k", [0, 1, 2, 5, 17])
def test_second_difference_identity(k):
    # Cov(V_0, V_k) as the double box integral of the point autocovariance
    th = ThetaParams(0.8, 1.7, 4.6, -0.7)
    d = 1.3
    ref = brute_box_cumulant((0, k), th.alpha_pi, th.B, th.sigma2, d, nodes=60)
    got = volatility_variance(th, d) if k == 0 else float(volatility_autocov(th, d, [k])[0])
    assert got == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("alpha", [3.0, 2.0 + 1e-7 + 1.0])
def test_returns_pole(alpha):
    th = ThetaParams(1.0, 2.0, alpha, -1.0)
    with pytest.raises(PoleError):
        returns_moments(th, 1.0, 3)
    at = returns_moments(th, 1.0, 3, at_pole="quadrature").autocov
    lo = returns_moments(ThetaParams(1.0, 2.0, alpha - 1e-4, -1.0), 1.0, 3).autocov
    hi = returns_moments(ThetaParams(1.0, 2.0, alpha + 1e-4, -1.0), 1.0, 3).autocov
    assert at == pytest.approx(0.5 * (lo + hi), rel=1e-7)


def test_jacobian_reference_entries(theta_ref):
    G = jacobian_supou(theta_ref, 1.0, 3)
    Gs = jacobian_returns(theta_ref, 1.0, 3)
    assert G[0, 0] == pytest.approx(-1 / 3) and Gs[0, 0] == pytest.approx(-1 / 3)
    assert G[0, 1] == 0.0 and Gs[0, 1] == 0.0
    assert G.shape == Gs.shape == (5, 4)


@pytest.mark.parametrize("kind", ["supou", "returns"])
@pytest.mark.parametrize("theta", [(1.0, 2.0, 4.0, -1.0), (0.3, 0.7, 6.5, -0.2), (2.5, 4.0, 3.4, -2.2)])
def test_jacobian_against_mp_differences(kind, theta):
    G = jacobian(ThetaParams(*theta), kind, 0.8, 5)
    ref = mp_jacobian(kind, theta, 0.8, 5)
    assert np.allclose(G, ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())


def test_float_step_sweep(theta_ref):
    # central differences in double precision: error falls quadratically, then roundoff takes over
    G = jacobian_supou(theta_ref, 1.0, 2)
    x = theta_ref.as_array()
    errs = []
    for h in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        up, dn = x.copy(), x.copy()
        up[2] += h
        dn[2] -= h
        fd = -(model_vector(ThetaParams.from_array(up), "supou", 1.0, 2)
               - model_vector(ThetaParams.from_array(dn), "supou", 1.0, 2)) / (2 * h)
        errs.append(np.max(np.abs(fd - G[:, 2])))
    assert errs[1] < errs[0] / 50 and errs[2] < errs[1] / 50
    assert min(errs) < 1e-9


def test_returns_jacobian_near_pole_is_numeric():
    th = ThetaParams(1.0, 2.0, 3.0, -1.0)
    with pytest.raises(PoleError):
        jacobian_returns(th, 1.0, 2)
    G = jacobian(th, "returns", 1.0, 2)
    lo = jacobian_returns(ThetaParams(1.0, 2.0, 3.0 - 1e-3, -1.0), 1.0, 2)
    hi = jacobian_returns(ThetaParams(1.0, 2.0, 3.0 + 1e-3, -1.0), 1.0, 2)
    assert np.allclose(G, 0.5 * (lo + hi), rtol=1e-4)


def test_model_vector_layout(theta_ref):
    v = model_vector(theta_ref, "supou", 1.0, 2)
    assert v == pytest.approx([1 / 3, 1 / 9 + 1 / 3, 1 / 9 + 1 / 24, 1 / 9 + supou_autocov(theta_ref, 1.0, 2)])
    w = model_vector(theta_ref, "returns", 1.0, 1)
    assert w == pytest.approx([1 / 3, 0.8333333333333334, 1 / 9 + 1 / 18])
    with pytest.raises(ValueError):
        model_vector(theta_ref, "levy", 1.0, 1)
