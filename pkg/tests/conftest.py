import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from volterra_rough import driver, kernel
from volterra_rough.signature import VolterraSignature

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def frac_trig_sig():
    """Fractional kernel gamma=0.25 above x_t = (sin t, cos 2t)."""
    k = kernel.make_kernel("fractional", 0.25)
    x = driver.trig(1.0, [1.0, 0.0], [0.0, 1.0], [1.0, 2.0])
    return VolterraSignature(k, x)


@pytest.fixture(scope="session")
def flat_linear_sig():
    """Constant kernel above x_t = t."""
    return VolterraSignature(kernel.make_kernel("constant", 0.0), driver.linear(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
