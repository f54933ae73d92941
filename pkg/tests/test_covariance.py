import math
import warnings

import numpy as np
import pytest
from scipy import special

from supou.analytics.covariance import (
    NumericalError,
    _psd_repair,
    components,
    gaussian_weight,
    h_sigma,
    lag_covariance_matrix,
    set_partitions,
    sigma_matrix,
    w_sigma,
)
from supou.analytics.moments import returns_moments, volatility_autocov, volatility_variance
from supou.levy import LevyCumulants, ThetaParams


def test_partitions_are_bell_numbers():
    assert [len(set_partitions(n)) for n in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]


def test_gaussian_weight():
    assert gaussian_weight((0,)) == 1
    assert gaussian_weight((0, 0)) == 3
    assert gaussian_weight((0, 0, 1, 1)) == 9
    assert gaussian_weight((2, 2, 2, 2)) == 105


def test_components():
    assert components(2) == [(0,), (0, 0), (0, 1), (0, 2)]


def test_mean_entry_is_zeta_series():
    th = ThetaParams(1.0, 2.0, 5.0, -1.0)
    S = h_sigma(th, LevyCumulants(1.0, 2.0, 6.0, 24.0), 1.0, 0).matrix
    var = -2.0 / (2 * -1.0 * 4.0)
    # sum over l >= 1 of (1 + l)^(-4) = zeta(4) - 1
    assert S[0, 0] == pytest.approx(var * (1 + 2 * (special.zeta(4.0) - 1)), rel=1e-10)


def test_returns_mean_entry_telescopes():
    th = ThetaParams(0.7, 1.5, 4.4, -0.6)
    d = 1.0
    S = w_sigma(th, LevyCumulants(0.7, 1.5, 3.0, 9.0), d, 1).matrix
    a, B = th.alpha_pi, th.B
    f1 = (1 - B * d) ** (3 - a)
    # the second differences telescope: sum_{l >= 1} D*(l) = -sigma2 (1 - f_1) / (2 B^3 (a-1)(a-2)(a-3))
    tail = -th.sigma2 * (1 - f1) / (2 * B**3 * (a - 1) * (a - 2) * (a - 3))
    var_y2 = returns_moments(th, d, 0).autocov[0]
    assert S[0, 0] == pytest.approx(var_y2 + 2 * tail, rel=1e-9)


@pytest.mark.parametrize("kind", ["supou", "returns"])
def test_symmetric_psd_and_cutoff_stable(kind, theta_ref, levy_ref):
    a = sigma_matrix(theta_ref, levy_ref, kind, 1.0, 3)
    b = sigma_matrix(theta_ref, levy_ref, kind, 1.0, 3, lag_cutoff=512)
    assert np.array_equal(a.matrix, a.matrix.T)
    ev = np.linalg.eigvalsh(a.matrix)
    assert ev.min() >= -1e-8 * ev.max()
    scale = np.abs(np.diag(a.matrix)).max()
    assert np.abs(a.matrix - b.matrix).max() <= 1e-8 * scale


def test_direct_lag_sum_agrees_with_tail_correction(theta_ref, levy_ref):
    # plain partial sum to lag 3000; at alpha = 6 the neglected tail is below 1e-13 relative
    th = ThetaParams(1.0, 2.0, 6.0, -1.0)
    S = h_sigma(th, levy_ref, 1.0, 1).matrix
    direct = lag_covariance_matrix(th, levy_ref, 1.0, 1, 0, "supou")
    for l in range(1, 3000):
        c = lag_covariance_matrix(th, levy_ref, 1.0, 1, l, "supou")
        direct = direct + c + c.T
    assert np.allclose(S, direct, rtol=1e-7)


def test_gaussian_like_reduction():
    # with m3 = m4 = 0 and no normal weights, Cov(V_0 V_p, V_l V_{l+q}) is Isserlis plus mean terms
    th = ThetaParams(0.9, 1.4, 4.8, -0.5)
    lv = LevyCumulants(0.9, 1.4, 0.0, 0.0)
    d, m = 1.0, 3
    mean = -d * th.mu / (th.B * (th.alpha_pi - 1))
    var = volatility_variance(th, d)

    def c(i, j):
        return var if i == j else float(volatility_autocov(th, d, [abs(i - j)])[0])

    comps = components(m)
    for lag in (0, 1, 4, 9):
        M = lag_covariance_matrix(th, lv, d, m, lag, "returns", gaussian_excess=False)
        for i, a in enumerate(comps):
            for j, b in enumerate(comps):
                b = tuple(o + lag for o in b)
                if len(a) == 1 and len(b) == 1:
                    want = c(a[0], b[0])
                elif len(a) == 1:
                    want = mean * (c(a[0], b[0]) + c(a[0], b[1]))
                elif len(b) == 1:
                    want = mean * (c(a[0], b[0]) + c(a[1], b[0]))
                else:
                    (p0, p1), (q0, q1) = a, b
                    want = c(p0, q0) * c(p1, q1) + c(p0, q1) * c(p1, q0) + mean**2 * (
                        c(p0, q0) + c(p0, q1) + c(p1, q0) + c(p1, q1)
                    )
                assert M[i, j] == pytest.approx(want, rel=1e-10, abs=1e-15)


def test_psd_repair_thresholds():
    S = np.diag([1.0, 1.0, -1e-12])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out, clipped = _psd_repair(S, "x")
    assert clipped == pytest.approx(1e-12) and np.linalg.eigvalsh(out).min() >= 0
    with pytest.warns(UserWarning):
        _psd_repair(np.diag([1.0, -1e-8]), "x")
    with pytest.raises(NumericalError):
        _psd_repair(np.diag([1.0, -1e-3]), "x")


def test_alpha_near_two_rejected(levy_ref):
    with pytest.raises(NumericalError):
        h_sigma(ThetaParams(1.0, 2.0, 2.01, -1.0), levy_ref, 1.0, 1)
    with pytest.raises(ValueError):
        sigma_matrix(ThetaParams(1.0, 2.0, 4.0, -1.0), levy_ref, "other", 1.0, 1)
