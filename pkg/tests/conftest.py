import os

import pytest
from hypothesis import settings

from wignerct.gaussian import GaussianParams

settings.register_profile("default", max_examples=60, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# state used throughout the reconstruction tests
CT_STATE = GaussianParams.create(0.71, 0.16 - 0.13j, 0.55 + 0.25j)
THERMAL_STATE = GaussianParams.create(0.45)
COHERENT_STATE = GaussianParams.create(0.22, 0j, -0.06 - 0.36j)
SQUEEZED_STATE = GaussianParams.create(0.73, 0.19, 0.04)


@pytest.fixture
def ct_state():
    return CT_STATE
