import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfrg.channel import (ChannelState, FadingChannelModel, MarkovChannelModel, RadioConfig, UeProfile,
                          dbm_from_mw, exp_db_attenuation, mean_rss_dbm, rayleigh_attenuation,
                          sample_fading_db, sample_slot, shannon_rate_mbps)


class FixedUniform:
    """Stand-in generator returning a fixed uniform."""

    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return self.u if size is None else np.full(size, self.u)


# --- link budget -----------------------------------------------------------

@pytest.mark.parametrize("p_dbm,d,expected", [(20, 100, -82.0), (20, 1, -22.0), (30, 200, -81.0309)])
def test_mean_rss(p_dbm, d, expected):
    assert mean_rss_dbm(RadioConfig(tx_power_dbm=p_dbm), d) == pytest.approx(expected, abs=5e-5)


@pytest.mark.parametrize("d", [0.0, -5.0])
def test_mean_rss_rejects_nonpositive_distance(d):
    with pytest.raises(ValueError):
        mean_rss_dbm(RadioConfig(), d)


def test_power_conversion():
    assert dbm_from_mw(100) == pytest.approx(20.0)
    assert dbm_from_mw(1000) == pytest.approx(30.0)
    with pytest.raises(ValueError):
        dbm_from_mw(0)


def test_shannon_examples(radio):
    assert shannon_rate_mbps(radio, -97.0) == pytest.approx(40.0)
    assert shannon_rate_mbps(radio, -82.0) == pytest.approx(40 * math.log2(1 + 10 ** 1.5))
    assert shannon_rate_mbps(radio, -82.0) == pytest.approx(201.11, abs=0.01)
    assert shannon_rate_mbps(radio, -1e6) == 0.0


@given(st.floats(-200, 50), st.floats(0, 30))
def test_shannon_monotone(rss, delta):
    r = RadioConfig()
    assert shannon_rate_mbps(r, rss + delta) >= shannon_rate_mbps(r, rss)


@pytest.mark.parametrize("field,value", [("bandwidth_hz", 0.0), ("slot_duration_s", -1.0),
                                          ("pathloss_exponent", 0.0), ("fading_truncation_db", 0.0),
                                          ("fading", "lognormal")])
def test_radio_config_validation(field, value):
    with pytest.raises(ValueError):
        RadioConfig(**{field: value})


def test_profile_validation():
    with pytest.raises(ValueError):
        UeProfile(distance_m=0.0)
    with pytest.raises(ValueError):
        UeProfile(distance_m=10.0, theta_min_mbps=-1.0)
    with pytest.raises(ValueError):
        ChannelState([1.0, -2.0])


# --- fading ----------------------------------------------------------------

def test_fading_inverse_cdf():
    assert sample_fading_db(FixedUniform(0.5)) == pytest.approx(math.log(2), abs=1e-4)
    assert sample_fading_db(FixedUniform(1 - 1e-30), truncation_db=40.0) == 40.0
    assert exp_db_attenuation(1.0, 40.0) == 40.0


def test_fading_mean():
    x = sample_fading_db(np.random.default_rng(7), 40.0, size=10**6)
    assert x.min() >= 0 and x.max() <= 40
    assert x.mean() == pytest.approx(1.0, abs=0.01)


def test_rayleigh_attenuation_median():
    # median power gain ln 2 -> attenuation -10 log10(ln 2)
    assert rayleigh_attenuation(0.5) == pytest.approx(-10 * math.log10(math.log(2)))
    assert rayleigh_attenuation(0.0, 40.0) == 40.0


# zero fading at 100/200 m, 20 dBm: RSS -82 and -91.0309 dBm
ZERO_FADE_RATES = [40 * math.log2(1 + 10 ** 1.5), 40 * math.log2(1 + 10 ** ((97 - 91.0309) / 10))]


def test_zero_fading_reference_values():
    assert ZERO_FADE_RATES == pytest.approx([201.11, 92.33], abs=0.01)


@pytest.mark.parametrize("kind,u", [("exp-db", 0.0), ("rayleigh", 1 - math.exp(-1))])
def test_zero_fading_rates(kind, u):
    # exp-db: u = 0 is zero attenuation; rayleigh: power gain 1 at u = 1 - 1/e
    model = FadingChannelModel(RadioConfig(fading=kind), [100, 200])
    r = model.rates_from_uniforms(np.full((1, 2), u))[0]
    assert r == pytest.approx(ZERO_FADE_RATES, abs=1e-3)


@pytest.mark.parametrize("kind", ["exp-db", "rayleigh"])
def test_fading_determinism_and_cap(kind):
    model = FadingChannelModel(RadioConfig(fading=kind), [100, 200, 300])
    a = model.process(5).block(20000)
    b = model.process(5).block(7000)
    p = model.process(5)
    c = np.vstack([p.block(7000), p.block(13000)])
    assert np.array_equal(a[:7000], b)
    assert np.array_equal(a, c)
    assert a.min() >= 0 and a.max() <= model.rate_cap


def test_adding_ue_keeps_other_streams(radio):
    a = FadingChannelModel(radio, [100, 200]).process(3).block(1000)
    b = FadingChannelModel(radio, [100, 200, 50]).process(3).block(1000)
    assert np.array_equal(a, b[:, :2])


def test_sample_slot_fading(two_ue_fading):
    from pfrg.channel import ue_generator

    rngs = [ue_generator(1, i) for i in range(2)]
    s = sample_slot(two_ue_fading, rngs)
    assert isinstance(s, ChannelState) and s.n_ues == 2


# --- finite-state ----------------------------------------------------------

def test_single_state_constant():
    m = MarkovChannelModel.iid([[300.0, 200.0]], [1.0])
    assert np.all(m.process(0).block(1000) == [300.0, 200.0])
    idx, s = sample_slot(m, None, np.random.default_rng(0))
    assert idx == 0 and np.array_equal(s.rates_mbps, [300.0, 200.0])


def test_iid_frequencies(fig6_right):
    idx = fig6_right.process(11).block_indices(10**5)
    assert np.mean(idx == 0) == pytest.approx(0.5, abs=0.01)


def test_markov_stationary_tv():
    P = np.array([[0.9, 0.1], [0.3, 0.7]])
    m = MarkovChannelModel([[1.0, 2.0], [2.0, 1.0]], P)
    pi = m.stationary_distribution()
    assert pi @ P == pytest.approx(pi)
    idx = m.process(2).block_indices(10**6)
    emp = np.bincount(idx, minlength=2) / idx.size
    assert 0.5 * np.abs(emp - pi).sum() < 0.01


def test_markov_sampling_follows_rows():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    m = MarkovChannelModel([[1.0, 0.0], [0.0, 1.0]], P, initial_distribution=[1.0, 0.0])
    idx = m.process(0).block_indices(10)
    assert list(idx) == [0, 1] * 5
    nxt, _ = m.sample_slot(0, np.random.default_rng(0))
    assert nxt == 1


@pytest.mark.parametrize("P", [[[0.5, 0.4], [0.5, 0.5]], [[1.1, -0.1], [0.5, 0.5]], [[1.0, 0.0], [0.0, 1.0]]])
def test_markov_validation(P):
    with pytest.raises(ValueError):
        MarkovChannelModel([[1.0, 2.0], [2.0, 1.0]], P)


def test_markov_determinism(fig6_right):
    a = fig6_right.process(9).block(5000)
    p = fig6_right.process(9)
    b = np.vstack([p.block(1234), p.block(3766)])
    assert np.array_equal(a, b)
