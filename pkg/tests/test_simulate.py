import math

import numpy as np
import pytest

from supou.analytics.moments import returns_moments, supou_moments
from supou.levy import EventSet, ExponentialJumps, GammaMeanReversion, SubordinatorSpec, ThetaParams
from supou.simulate import (
    DegenerateVolatilityError,
    integrated_volatility,
    path_from_events,
    read_series_csv,
    simulate_returns,
    simulate_supou_path,
    truncation_horizon,
    volatility_from_events,
    write_series_csv,
)


def _one_event(t1=10.0):
    return EventSet(np.array([0.0]), np.array([1.0]), np.array([-1.0]), -1.0, t1)


def test_truncation_horizon():
    assert truncation_horizon(GammaMeanReversion(-1.0, 4.0), 1e-6) == pytest.approx(99.0, rel=1e-12)
    assert truncation_horizon(GammaMeanReversion(-1.0, 4.0), 1.0) == 0.0
    assert truncation_horizon(GammaMeanReversion(-0.5, 3.0), 1e-4) == pytest.approx(198.0, rel=1e-12)
    with pytest.raises(ValueError):
        truncation_horizon(GammaMeanReversion(-1.0, 4.0), 0.0)


def test_single_event_kernel():
    pi = GammaMeanReversion(-1.0, 4.0)
    x = path_from_events(_one_event(), 0.0, pi, 3, 1.0)
    assert x[1] == pytest.approx(math.exp(-2.0), rel=1e-14)


def test_single_event_integrals():
    pi = GammaMeanReversion(-1.0, 4.0)
    ev = _one_event()
    assert integrated_volatility(ev, 0.0, pi, 0.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert integrated_volatility(ev, 0.0, pi, 1.0, 2.0) == pytest.approx(math.exp(-1) - math.exp(-2), rel=1e-14)
    v = volatility_from_events(ev, 0.0, pi, 2, 1.0)
    assert v == pytest.approx([1 - math.exp(-1), math.exp(-1) - math.exp(-2)], rel=1e-14)


def test_no_events_gives_drift():
    pi = GammaMeanReversion(-1.0, 4.0)
    empty = EventSet(np.array([]), np.array([]), np.array([]), -1.0, 10.0)
    assert integrated_volatility(empty, 0.6, pi, 0.0, 2.0) == pytest.approx(0.6 / 3 * 2)
    assert np.all(path_from_events(empty, 0.6, pi, 5, 1.0) == pytest.approx(0.2))


def test_drift_only_limit():
    spec = SubordinatorSpec(0.9, 1e-12, ExponentialJumps(1.0))
    pi = GammaMeanReversion(-1.5, 4.0)
    x = simulate_supou_path(spec, pi, 50, 1.0, 1e-6, np.random.default_rng(0)).values
    assert np.allclose(x, -0.9 / (-1.5 * 3.0))


def test_determinism(spec_ref, pi_ref):
    a = simulate_returns(spec_ref, pi_ref, 500, 1.0, 1e-6, np.random.default_rng(5))
    b = simulate_returns(spec_ref, pi_ref, 500, 1.0, 1e-6, np.random.default_rng(5))
    assert np.array_equal(a.values, b.values) and np.array_equal(a.volatility, b.volatility)


def test_path_floor():
    spec = SubordinatorSpec(0.5, 1.0, ExponentialJumps(1.0))
    pi = GammaMeanReversion(-1.0, 4.0)
    x = simulate_supou_path(spec, pi, 2000, 0.5, 1e-6, np.random.default_rng(1)).values
    assert np.all(x >= 0.5 / 3.0)


def _long_run_se(x, acov_theory):
    # sqrt of sum over |k| < N of gamma(k), using the theory autocovariances
    return math.sqrt((acov_theory[0] + 2 * acov_theory[1:].sum()) / x.size)


def test_path_moments(spec_ref, pi_ref, theta_ref):
    n = 10**5
    x = simulate_supou_path(spec_ref, pi_ref, n, 1.0, 1e-6, np.random.default_rng(11)).values
    ms = supou_moments(theta_ref, 1.0, 5000)
    assert abs(x.mean() - 1 / 3) < 4 * _long_run_se(x, ms.autocov)


def test_return_moments(spec_ref, pi_ref, theta_ref):
    n = 10**5
    r = simulate_returns(spec_ref, pi_ref, n, 1.0, 1e-6, np.random.default_rng(12))
    y = r.values
    ms = returns_moments(theta_ref, 1.0, 5000)
    assert abs(y.mean()) < 4 * math.sqrt(1 / 3 / n)
    assert abs(np.mean(y**2) - 1 / 3) < 4 * _long_run_se(y**2, ms.autocov)
    # fourth moment: heavy tails, so the band uses the sample long-run variance of Y^4
    y4 = y**4
    c = y4 - y4.mean()
    lrv = c @ c / n + 2 * sum((1 - k / 51) * (c[:-k] @ c[k:]) / n for k in range(1, 51))
    assert abs(y4.mean() - 0.8333333333333334) < 4 * math.sqrt(lrv / n)


def test_conditional_gaussianity(spec_ref, pi_ref):
    r = simulate_returns(spec_ref, pi_ref, 10**5, 1.0, 1e-6, np.random.default_rng(2))
    u = r.values / np.sqrt(r.volatility)
    n = u.size
    skew = np.mean((u - u.mean()) ** 3) / u.std() ** 3
    kurt = np.mean((u - u.mean()) ** 4) / u.std() ** 4 - 3
    assert abs(skew) < 4 * math.sqrt(6 / n) and abs(kurt) < 4 * math.sqrt(24 / n)
    assert abs(u.mean()) < 4 / math.sqrt(n)


def test_degenerate_volatility():
    spec = SubordinatorSpec(0.0, 1e-9, ExponentialJumps(1.0))
    with pytest.raises(DegenerateVolatilityError):
        simulate_returns(spec, GammaMeanReversion(-1.0, 4.0), 10, 1.0, 1e-6, np.random.default_rng(0))


def test_bad_sizes(spec_ref, pi_ref):
    with pytest.raises(ValueError):
        simulate_supou_path(spec_ref, pi_ref, 0, 1.0, 1e-6, np.random.default_rng(0))
    with pytest.raises(ValueError):
        simulate_supou_path(spec_ref, pi_ref, 10, -1.0, 1e-6, np.random.default_rng(0))


def test_csv_round_trip(tmp_path):
    y = np.array([0.1, -2.5e-7, 3.0])
    v = np.array([1.0, 2.0, 3.0])
    write_series_csv(tmp_path / "a.csv", y)
    write_series_csv(tmp_path / "b.csv", y, v)
    assert np.array_equal(read_series_csv(tmp_path / "a.csv"), y)
    assert np.array_equal(read_series_csv(tmp_path / "b.csv"), y)
