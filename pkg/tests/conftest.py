import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vfe import isoflux, profile  # noqa: E402


@pytest.fixture(scope="session")
def ctx_01():
    return isoflux.ball_context(0.1)


@pytest.fixture(scope="session")
def ctx_005():
    return isoflux.ball_context(0.05)


@pytest.fixture(scope="session")
def f0():
    return profile.solve_f0(100.0, 8001)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
