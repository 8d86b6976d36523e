import math

import pytest

from dcwitness.pam_core import PhaseConfig

PI = math.pi


@pytest.fixture
def idw_config():
    return PhaseConfig((7 * PI / 4, 5 * PI / 4, PI / 2), (PI / 2, 0.0))


@pytest.fixture
def w2_config():
    return PhaseConfig((0.0, PI, -PI / 2, PI / 2), (PI / 2, 0.0))
