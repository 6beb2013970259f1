"""Slot-by-slot gradient scheduling with and without rate guarantees.

Three algorithms share the same inner step (schedule the UE with the largest
biased index ``(U'(theta_i) + bias_i) * r_i``, then update the EWMA
throughputs) and differ in how the bias evolves:

``pf``
    no bias.
``pf-rg-lm``
    projected stochastic-approximation update driven by the EWMA throughput,
    step ``b`` (slower than ``a``).
``pf-rg-tc``
    token counter driven by the rate allotted in the slot, used with weight
    ``a``.

The step functions are pure; :func:`run` executes the same arithmetic in a
compiled loop.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from pfrg import _kernels
from pfrg.channel import ChannelState, UeProfile

ALGORITHMS = ("pf", "pf-rg-lm", "pf-rg-tc")


@dataclass(frozen=True)
class Log1pUtility:
    """``U_i(r) = c_i * ln(1 + r)`` with ``c_i = 1`` unless ``scale`` is given."""

    scale: tuple | None = None
    kind: str = "log1p"

    def _c(self, n):
        return np.ones(n) if self.scale is None else np.asarray(self.scale, dtype=float)

    def value(self, r) -> float:
        r = np.asarray(r, dtype=float)
        return float(np.sum(self._c(r.size) * np.log1p(r)))

    def derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self._c(r.size) / (1.0 + r)


@dataclass(frozen=True)
class SchedulerState:
    theta_mbps: np.ndarray
    nu: np.ndarray
    step_a: float
    step_b: float
    nu_max: float = 1.0

    @classmethod
    def initial(cls, n_ues: int, step_a: float, step_b: float, nu_max: float = 1.0) -> "SchedulerState":
        return cls(np.zeros(n_ues), np.zeros(n_ues), step_a, step_b, nu_max)


@dataclass(frozen=True)
class TokenCounterState:
    theta_mbps: np.ndarray
    tau: np.ndarray
    step_a: float
    tau_max: float = 1e6

    @classmethod
    def initial(cls, n_ues: int, step_a: float, tau_max: float = 1e6) -> "TokenCounterState":
        return cls(np.zeros(n_ues), np.zeros(n_ues), step_a, tau_max)


def _rates(s) -> np.ndarray:
    return s.rates_mbps if isinstance(s, ChannelState) else np.asarray(s, dtype=float)


def _schedule(theta, bias, rates, utility):
    w = utility.derivative(theta) + bias
    ue = int(np.argmax(w * rates))
    r = np.zeros_like(rates)
    r[ue] = rates[ue]
    return ue, r


def pf_rg_lm_step(state: SchedulerState, s, theta_min, utility=Log1pUtility()):
    """One PF-RG-LM slot.  The bias update uses the pre-update throughput."""
    rates = _rates(s)
    theta = state.theta_mbps
    ue, r = _schedule(theta, state.nu, rates, utility)
    nu = np.minimum(np.maximum(state.nu + state.step_b * (np.asarray(theta_min, dtype=float) - theta), 0.0),
                    state.nu_max)
    theta_new = theta + state.step_a * (r - theta)
    return replace(state, theta_mbps=theta_new, nu=nu), ue, r


def pf_step(state: SchedulerState, s, utility=Log1pUtility()):
    return pf_rg_lm_step(state, s, np.zeros_like(state.theta_mbps), utility)


def pf_rg_tc_step(state: TokenCounterState, s, theta_min, utility=Log1pUtility()):
    """One PF-RG-TC slot: bias ``a * tau``, token counter fed by the allotted rate."""
    rates = _rates(s)
    theta = state.theta_mbps
    ue, r = _schedule(theta, state.step_a * state.tau, rates, utility)
    tau = np.minimum(np.maximum(state.tau + (np.asarray(theta_min, dtype=float) - r), 0.0), state.tau_max)
    theta_new = theta + state.step_a * (r - theta)
    return replace(state, theta_mbps=theta_new, tau=tau), ue, r


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchedulerConfig:
    algorithm: str = "pf-rg-lm"
    step_a: float = 5e-4
    step_b: float | None = 5e-6
    nu_max: float = 1.0
    tau_max: float = 1e6
    tail_fraction: float = 0.2
    decimate: int | None = None
    violation_tol_mbps: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.step_a > 0:
            raise ValueError(f"step_a must be positive, got {self.step_a!r}")
        if self.algorithm == "pf-rg-lm":
            if self.step_b is None or not self.step_b > 0:
                raise ValueError("pf-rg-lm needs a positive step_b")
            if self.step_b > self.step_a:
                raise ValueError(f"step_b ({self.step_b}) must not exceed step_a ({self.step_a})")
        if not self.nu_max > 0 or not self.tau_max > 0:
            raise ValueError("nu_max and tau_max must be positive")
        if not 0 < self.tail_fraction <= 1:
            raise ValueError("tail_fraction must lie in (0, 1]")
        if self.decimate is not None and self.decimate < 1:
            raise ValueError("decimate must be >= 1")


@dataclass
class RunRecord:
    """Decimated time series plus tail-window statistics.

    ``bias`` is the additive index bias actually used by the scheduler:
    ``nu`` for PF/PF-RG-LM and ``a * tau`` for PF-RG-TC.  Series entries are the
    state after the slot's update.
    """

    algorithm: str
    slots: np.ndarray
    theta: np.ndarray
    bias: np.ndarray
    chosen_ue: np.ndarray
    rate: np.ndarray
    n_slots: int
    tail_start: int
    tail_mean_theta: np.ndarray
    tail_std_theta: np.ndarray
    tail_mean_bias: np.ndarray
    tail_std_bias: np.ndarray
    tail_delivered: np.ndarray
    violation_counts: np.ndarray
    final_theta: np.ndarray
    final_bias: np.ndarray
    final_tau: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def tail_slots(self) -> int:
        return self.n_slots - self.tail_start

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "n_slots": self.n_slots,
            "tail_start": self.tail_start,
            "tail_mean_theta": self.tail_mean_theta.tolist(),
            "tail_std_theta": self.tail_std_theta.tolist(),
            "tail_mean_bias": self.tail_mean_bias.tolist(),
            "tail_std_bias": self.tail_std_bias.tolist(),
            "tail_delivered_rate": self.tail_delivered.tolist(),
            "violation_counts": self.violation_counts.astype(int).tolist(),
            "final_theta": self.final_theta.tolist(),
            "final_bias": self.final_bias.tolist(),
            "seed": self.seed,
            "config": self.config,
        }

    def to_csv(self, path) -> None:
        M = self.theta.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["slot"] + [f"theta_{i}" for i in range(M)] + [f"bias_{i}" for i in range(M)]
                        + ["chosen_ue", "rate"])
            for k, th, bi, ue, r in zip(self.slots, self.theta, self.bias, self.chosen_ue, self.rate):
                wr.writerow([int(k)] + [f"{v:.17g}" for v in th] + [f"{v:.17g}" for v in bi]
                            + [int(ue), f"{r:.17g}"])

    def summary_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _theta_min(ue_profiles, n_ues) -> np.ndarray:
    if ue_profiles is None:
        return np.zeros(n_ues)
    if len(ue_profiles) and isinstance(ue_profiles[0], UeProfile):
        thmin = np.array([p.theta_min_mbps for p in ue_profiles], dtype=float)
    else:
        thmin = np.asarray(ue_profiles, dtype=float)
    if thmin.shape != (n_ues,):
        raise ValueError(f"expected {n_ues} UE guarantees, got {thmin.shape}")
    if np.any(thmin < 0):
        raise ValueError("guarantees must be nonnegative")
    return thmin


def run(algorithm, channel_model, ue_profiles, config: SchedulerConfig | None = None, n_slots: int = 10**6,
        seed: int = 0, utility: Log1pUtility = Log1pUtility(), chunk: int = 1 << 16) -> RunRecord:
    """Simulate ``n_slots`` slots of ``algorithm`` on a seeded channel realisation.

    ``ue_profiles`` is a sequence of :class:`UeProfile` or just the guarantee vector.
    """
    config = SchedulerConfig() if config is None else config
    if algorithm != config.algorithm:
        config = replace(config, algorithm=algorithm)
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    M = channel_model.n_ues
    thmin = _theta_min(ue_profiles, M)
    if algorithm == "pf":
        thmin_eff = np.zeros(M)
    else:
        thmin_eff = thmin
    scale = utility._c(M).astype(float)
    decim = config.decimate or max(1, math.ceil(n_slots / 10**5))
    n_rec = (n_slots - 1) // decim + 1
    tail_start = n_slots - max(1, int(round(config.tail_fraction * n_slots)))

    rec_slot = np.empty(n_rec, dtype=np.int64)
    rec_theta = np.empty((n_rec, M))
    rec_bias = np.empty((n_rec, M))
    rec_ue = np.empty(n_rec, dtype=np.int64)
    rec_rate = np.empty(n_rec)
    acc = np.zeros((6, M))
    theta = np.zeros(M)
    aux = np.zeros(M)  # nu or tau
    step_b = 0.0 if config.step_b is None else float(config.step_b)

    proc = channel_model.process(seed)
    pos = 0
    k0 = 0
    while k0 < n_slots:
        n = min(chunk, n_slots - k0)
        R = np.ascontiguousarray(proc.block(n))
        if algorithm == "pf-rg-tc":
            pos = _kernels.tc_chunk(R, theta, aux, thmin_eff, scale, float(config.step_a), float(config.tau_max),
                                    k0, decim, tail_start, float(config.violation_tol_mbps),
                                    rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc)
        else:
            pos = _kernels.lm_chunk(R, theta, aux, thmin_eff, scale, float(config.step_a),
                                    step_b if algorithm == "pf-rg-lm" else 0.0, float(config.nu_max),
                                    k0, decim, tail_start, float(config.violation_tol_mbps),
                                    rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc)
        k0 += n

    nt = n_slots - tail_start
    mean_th = acc[0] / nt
    mean_b = acc[2] / nt
    std_th = np.sqrt(np.maximum(acc[1] / nt - mean_th ** 2, 0.0))
    std_b = np.sqrt(np.maximum(acc[3] / nt - mean_b ** 2, 0.0))
    if algorithm == "pf-rg-tc":
        final_bias, final_tau = config.step_a * aux, aux.copy()
    else:
        final_bias, final_tau = aux.copy(), None
    cfg = {k: v for k, v in vars(config).items()}
    cfg.update(decimate=decim, theta_min_mbps=thmin.tolist(), n_slots=n_slots,
               channel=channel_model.describe(), utility={"kind": utility.kind, "scale": utility.scale})
    return RunRecord(
        algorithm=algorithm, slots=rec_slot[:pos], theta=rec_theta[:pos], bias=rec_bias[:pos],
        chosen_ue=rec_ue[:pos], rate=rec_rate[:pos], n_slots=n_slots, tail_start=tail_start,
        tail_mean_theta=mean_th, tail_std_theta=std_th, tail_mean_bias=mean_b, tail_std_bias=std_b,
        tail_delivered=acc[5] / nt, violation_counts=acc[4].copy(), final_theta=theta.copy(),
        final_bias=final_bias, final_tau=final_tau, config=cfg, seed=seed,
    )
