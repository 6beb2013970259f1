"""Channel-state processes for a single-cell downlink.

Two families are provided:

* :class:`FadingChannelModel` -- log-distance path loss plus per-slot fading,
  mapped to a rate with the Shannon formula.  Every UE draws from its own
  random stream derived from ``(seed, ue_index)``.
* :class:`MarkovChannelModel` -- a finite set of joint rate vectors with a
  Markov (or i.i.d.) kernel.

All rates are in Mbps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from pfrg import _kernels

FADING_MODELS = ("rayleigh", "exp-db")

# spawn key reserved for the state sequence of finite-state models
_MARKOV_STREAM = 2**31 - 1


def dbm_from_mw(power_mw: float) -> float:
    if power_mw <= 0:
        raise ValueError(f"power must be positive, got {power_mw} mW")
    return 10.0 * math.log10(power_mw)


@dataclass(frozen=True)
class RadioConfig:
    """Link-budget parameters shared by every UE in the cell.

    ``fading`` selects how the per-slot attenuation is drawn:

    ``"rayleigh"``
        power gain ``g ~ Exp(1)`` in linear scale, attenuation ``-10 log10 g`` dB.
    ``"exp-db"``
        attenuation itself ``~ Exp(1)`` in dB.

    Both are clamped to ``fading_truncation_db`` so the rate process stays in a
    compact set.
    """

    bandwidth_hz: float = 40e6
    noise_floor_dbm: float = -97.0
    tx_power_dbm: float = 20.0
    attenuation_at_1m_db: float = 42.0
    pathloss_exponent: float = 3.0
    slot_duration_s: float = 1e-3
    fading_truncation_db: float = 40.0
    fading: str = "rayleigh"

    def __post_init__(self):
        for name in ("bandwidth_hz", "slot_duration_s", "pathloss_exponent", "fading_truncation_db"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.fading not in FADING_MODELS:
            raise ValueError(f"fading must be one of {FADING_MODELS}, got {self.fading!r}")


@dataclass(frozen=True)
class UeProfile:
    distance_m: float
    theta_min_mbps: float = 0.0
    index: int = 0

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"UE {self.index}: distance_m must be positive, got {self.distance_m!r}")
        if not self.theta_min_mbps >= 0:
            raise ValueError(f"UE {self.index}: theta_min_mbps must be >= 0, got {self.theta_min_mbps!r}")


@dataclass(frozen=True)
class ChannelState:
    """Per-slot rates (Mbps) each UE would get if scheduled alone."""

    rates_mbps: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.rates_mbps, dtype=float)
        if rates.ndim != 1 or np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError(f"rates must be a finite nonnegative vector, got {self.rates_mbps!r}")
        object.__setattr__(self, "rates_mbps", rates)

    @property
    def n_ues(self) -> int:
        return self.rates_mbps.shape[0]


# ---------------------------------------------------------------------------
# link budget
# ---------------------------------------------------------------------------

def mean_rss_dbm(config: RadioConfig, distance_m) -> float | np.ndarray:
    """Mean received power at ``distance_m`` metres."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"distance must be positive, got {distance_m!r}")
    rss = config.tx_power_dbm - config.attenuation_at_1m_db - 10.0 * config.pathloss_exponent * np.log10(d)
    return float(rss) if rss.ndim == 0 else rss


def shannon_rate_mbps(config: RadioConfig, rss_dbm) -> float | np.ndarray:
    snr = np.power(10.0, (np.asarray(rss_dbm, dtype=float) - config.noise_floor_dbm) / 10.0)
    rate = config.bandwidth_hz / 1e6 * np.log2(1.0 + snr)
    return float(rate) if rate.ndim == 0 else rate


def exp_db_attenuation(u, truncation_db: float = 40.0):
    """Inverse-CDF map from uniforms to Exp(1) attenuation in dB, clamped to [0, truncation_db]."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        att = -np.log1p(-u)
    return np.minimum(att, truncation_db)


def rayleigh_attenuation(u, truncation_db: float = 40.0):
    """Attenuation in dB of an Exp(1) linear power gain, clamped to +-truncation_db."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        gain = -np.log1p(-u)
        att = -10.0 * np.log10(gain)
    return np.clip(att, -truncation_db, truncation_db)


_ATTENUATION = {"exp-db": exp_db_attenuation, "rayleigh": rayleigh_attenuation}


def sample_fading_db(rng: np.random.Generator, truncation_db: float = 40.0, size=None):
    """Draw Exp(1) attenuation in dB (truncated).  Consumes one uniform per value."""
    att = exp_db_attenuation(rng.random(size), truncation_db)
    return float(att) if size is None else att


def sample_rayleigh_fading_db(rng: np.random.Generator, truncation_db: float = 40.0, size=None):
    att = rayleigh_attenuation(rng.random(size), truncation_db)
    return float(att) if size is None else att


def ue_generator(seed: int, ue_index: int) -> np.random.Generator:
    """Independent stream for one UE; adding UEs never perturbs the others."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(ue_index,))))


# ---------------------------------------------------------------------------
# fading model
# ---------------------------------------------------------------------------

class FadingChannelModel:
    """Path loss + i.i.d. fading, independent across UEs and slots."""

    kind = "fading"

    def __init__(self, radio: RadioConfig, distances_m: Sequence[float]):
        self.radio = radio
        self.distances_m = np.asarray(distances_m, dtype=float)
        if self.distances_m.ndim != 1 or self.distances_m.size == 0:
            raise ValueError("need at least one UE distance")
        self.mean_rss = np.atleast_1d(mean_rss_dbm(radio, self.distances_m))
        self._attenuation = _ATTENUATION[radio.fading]

    @classmethod
    def from_profiles(cls, radio: RadioConfig, profiles: Sequence[UeProfile]):
        return cls(radio, [p.distance_m for p in profiles])

    @property
    def n_ues(self) -> int:
        return self.distances_m.size

    @property
    def rate_cap(self) -> float:
        """Largest rate any UE can ever be offered (the most favourable fading draw)."""
        best_att = 0.0 if self.radio.fading == "exp-db" else -self.radio.fading_truncation_db
        return float(shannon_rate_mbps(self.radio, self.mean_rss.max() - best_att))

    def rates_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        att = self._attenuation(u, self.radio.fading_truncation_db)
        return shannon_rate_mbps(self.radio, self.mean_rss - att)

    def sample_slot(self, rngs: Sequence[np.random.Generator]) -> ChannelState:
        u = np.array([g.random() for g in rngs])
        return ChannelState(self.rates_from_uniforms(u))

    def process(self, seed: int) -> "FadingProcess":
        return FadingProcess(self, seed)

    def describe(self) -> dict:
        return {"kind": self.kind, "distances_m": self.distances_m.tolist(), "radio": vars(self.radio).copy()}


class FadingProcess:
    def __init__(self, model: FadingChannelModel, seed: int):
        self.model = model
        self.rngs = [ue_generator(seed, i) for i in range(model.n_ues)]

    def block(self, n: int) -> np.ndarray:
        """Next ``n`` slots as an ``(n, M)`` rate array."""
        u = np.empty((n, self.model.n_ues))
        for i, g in enumerate(self.rngs):
            u[:, i] = g.random(n)
        return self.model.rates_from_uniforms(u)

    def next_state(self) -> ChannelState:
        return self.model.sample_slot(self.rngs)


# ---------------------------------------------------------------------------
# finite-state model
# ---------------------------------------------------------------------------

class MarkovChannelModel:
    """Finite joint channel states with a row-stochastic transition matrix."""

    kind = "finite-state"

    def __init__(self, states, transition_matrix, initial_distribution=None):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        P = np.atleast_2d(np.asarray(transition_matrix, dtype=float))
        n = states.shape[0]
        if np.any(states < 0) or not np.all(np.isfinite(states)):
            raise ValueError("state rates must be finite and nonnegative")
        if P.shape != (n, n):
            raise ValueError(f"transition matrix must be {n}x{n}, got {P.shape}")
        if np.any(P < 0):
            raise ValueError("transition probabilities must be nonnegative")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError(f"transition rows must sum to 1, got {P.sum(axis=1)}")
        n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
        if n_comp != 1:
            raise ValueError("transition matrix is not irreducible")
        self.states = states
        self.transition_matrix = P
        self.stationary = self.stationary_distribution()
        if initial_distribution is None:
            self.initial_distribution = self.stationary
        else:
            p0 = np.asarray(initial_distribution, dtype=float)
            if p0.shape != (n,) or np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
                raise ValueError("initial distribution must be a probability vector over the states")
            self.initial_distribution = p0
        self._iid = bool(np.all(P == P[0]))
        self._cum = np.cumsum(P, axis=1)
        self._cum[:, -1] = 1.0

    @classmethod
    def iid(cls, states, probabilities):
        p = np.asarray(probabilities, dtype=float)
        return cls(states, np.tile(p, (p.size, 1)), p)

    @property
    def n_ues(self) -> int:
        return self.states.shape[1]

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def rate_cap(self) -> float:
        return float(self.states.max())

    def stationary_distribution(self) -> np.ndarray:
        """Left Perron eigenvector of the transition matrix, normalised to sum 1."""
        n = self.states.shape[0]
        A = np.vstack([self.transition_matrix.T - np.eye(n), np.ones(n)])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    def _next_index(self, prev_index: int | None, u: float) -> int:
        cum = np.cumsum(self.initial_distribution) if prev_index is None else self._cum[prev_index]
        return int(min(np.searchsorted(cum, u, side="right"), self.n_states - 1))

    def sample_slot(self, prev_index: int | None, rng: np.random.Generator) -> tuple[int, ChannelState]:
        nxt = self._next_index(prev_index, rng.random())
        return nxt, ChannelState(self.states[nxt])

    def process(self, seed: int) -> "MarkovProcess":
        return MarkovProcess(self, seed)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "states_mbps": self.states.tolist(),
            "transition_matrix": self.transition_matrix.tolist(),
        }


class MarkovProcess:
    def __init__(self, model: MarkovChannelModel, seed: int):
        self.model = model
        self.rng = ue_generator(seed, _MARKOV_STREAM)
        self.index: int | None = None

    def block_indices(self, n: int) -> np.ndarray:
        m = self.model
        u = self.rng.random(n)
        if n == 0:
            return np.empty(0, dtype=np.int64)
        first = m._next_index(self.index, u[0])
        if m._iid:
            idx = np.empty(n, dtype=np.int64)
            idx[0] = first
            idx[1:] = np.minimum(np.searchsorted(m._cum[0], u[1:], side="right"), m.n_states - 1)
        else:
            idx = _kernels.markov_chain(first, u, m._cum)
        self.index = int(idx[-1])
        return idx

    def block(self, n: int) -> np.ndarray:
        return self.model.states[self.block_indices(n)]

    def next_state(self) -> ChannelState:
        self.index, state = self.model.sample_slot(self.index, self.rng)
        return state


def sample_slot(model, rng_or_prev_state, rng: np.random.Generator | None = None):
    """Draw one slot.

    Fading model: ``sample_slot(model, [rng_ue0, rng_ue1, ...])`` -> ChannelState.
    Finite-state model: ``sample_slot(model, prev_index, rng)`` -> (index, ChannelState).
    """
    if isinstance(model, FadingChannelModel):
        return model.sample_slot(rng_or_prev_state)
    if isinstance(model, MarkovChannelModel):
        if rng is None:
            raise ValueError("finite-state sampling needs an rng")
        return model.sample_slot(rng_or_prev_state, rng)
    raise TypeError(f"unsupported channel model {type(model).__name__}")
