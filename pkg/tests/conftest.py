import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from supou.levy import ExponentialJumps, GammaMeanReversion, LevyCumulants, SubordinatorSpec, ThetaParams

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def theta_ref():
    return ThetaParams(1.0, 2.0, 4.0, -1.0)


@pytest.fixture
def levy_ref():
    # Exp(1) jumps at unit rate: raw moments n!
    return LevyCumulants(1.0, 2.0, 6.0, 24.0)


@pytest.fixture
def spec_ref():
    return SubordinatorSpec(0.0, 1.0, ExponentialJumps(1.0))


@pytest.fixture
def pi_ref():
    return GammaMeanReversion(-1.0, 4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
