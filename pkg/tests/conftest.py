import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("pfrg", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("pfrg")


@pytest.fixture
def radio():
    from pfrg.channel import RadioConfig

    return RadioConfig()


@pytest.fixture
def two_ue_fading(radio):
    from pfrg.channel import FadingChannelModel

    return FadingChannelModel(radio, [100.0, 200.0])


@pytest.fixture
def fig6_right():
    from pfrg.channel import MarkovChannelModel

    return MarkovChannelModel.iid([[400.0, 100.0], [300.0, 200.0]], [0.5, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
