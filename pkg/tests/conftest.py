import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pairscope.modes import ApertureConfig, build_basis

DELTA = 2.0 * math.pi  # sigma = 1 in these units
SIGMA = 1.0


@pytest.fixture(scope="session")
def ap_r0():
    return ApertureConfig.from_ratio(DELTA, 0.0)


@pytest.fixture(scope="session")
def ap_r2():
    return ApertureConfig.from_ratio(DELTA, 2.0)


@pytest.fixture(scope="session")
def basis_k1(ap_r0):
    return build_basis(ap_r0, 1)


@pytest.fixture(scope="session")
def basis_k2(ap_r0):
    return build_basis(ap_r0, 2)


@pytest.fixture(scope="session")
def basis_k3(ap_r0):
    return build_basis(ap_r0, 3)
