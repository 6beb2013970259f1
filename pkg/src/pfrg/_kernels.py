"""Compiled slot loops.

These mirror the pure-Python step functions in :mod:`pfrg.scheduler` operation
for operation, so both paths produce identical floating-point results.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def markov_chain(first, u, cum):
    n = u.shape[0]
    n_states = cum.shape[0]
    out = np.empty(n, dtype=np.int64)
    out[0] = first
    s = first
    for k in range(1, n):
        row = cum[s]
        j = 0
        while j < n_states - 1 and row[j] <= u[k]:
            j += 1
        s = j
        out[k] = s
    return out


@njit(cache=True)
def _choose(rates, theta, bias, scale):
    best = -1.0
    ue = 0
    for i in range(rates.shape[0]):
        w = scale[i] / (1.0 + theta[i]) + bias[i]
        sc = w * rates[i]
        if sc > best:
            best = sc
            ue = i
    return ue


@njit(cache=True)
def _record(k, j, ue, rate, theta, bias, thmin, k0, decim, tail_start, viol_tol,
            rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc):
    M = theta.shape[0]
    if k % decim == 0:
        rec_slot[pos] = k
        rec_ue[pos] = ue
        rec_rate[pos] = rate
        for i in range(M):
            rec_theta[pos, i] = theta[i]
            rec_bias[pos, i] = bias[i]
        pos += 1
    if k >= tail_start:
        # acc rows: sum theta, sum theta^2, sum bias, sum bias^2, violations, delivered rate
        for i in range(M):
            acc[0, i] += theta[i]
            acc[1, i] += theta[i] * theta[i]
            acc[2, i] += bias[i]
            acc[3, i] += bias[i] * bias[i]
            if theta[i] < thmin[i] - viol_tol:
                acc[4, i] += 1.0
        acc[5, ue] += rate
    return pos


@njit(cache=True)
def lm_chunk(R, theta, nu, thmin, scale, a, b, nu_max, k0, decim, tail_start, viol_tol,
             rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc):
    """PF-RG-LM over a block of slots; ``theta``/``nu`` are updated in place."""
    n, M = R.shape
    for j in range(n):
        rates = R[j]
        ue = _choose(rates, theta, nu, scale)
        for i in range(M):
            v = nu[i] + b * (thmin[i] - theta[i])
            if v < 0.0:
                v = 0.0
            if v > nu_max:
                v = nu_max
            nu[i] = v
        for i in range(M):
            r = rates[i] if i == ue else 0.0
            theta[i] = theta[i] + a * (r - theta[i])
        pos = _record(k0 + j, j, ue, rates[ue], theta, nu, thmin, k0, decim, tail_start, viol_tol,
                      rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc)
    return pos


@njit(cache=True)
def tc_chunk(R, theta, tau, thmin, scale, a, tau_max, k0, decim, tail_start, viol_tol,
             rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc):
    """PF-RG-TC over a block of slots; records the effective bias ``a * tau``."""
    n, M = R.shape
    bias = np.empty(M)
    for j in range(n):
        rates = R[j]
        for i in range(M):
            bias[i] = a * tau[i]
        ue = _choose(rates, theta, bias, scale)
        for i in range(M):
            r = rates[i] if i == ue else 0.0
            v = tau[i] + (thmin[i] - r)
            if v < 0.0:
                v = 0.0
            if v > tau_max:
                v = tau_max
            tau[i] = v
            theta[i] = theta[i] + a * (r - theta[i])
        for i in range(M):
            bias[i] = a * tau[i]
        pos = _record(k0 + j, j, ue, rates[ue], theta, bias, thmin, k0, decim, tail_start, viol_tol,
                      rec_slot, rec_theta, rec_bias, rec_ue, rec_rate, pos, acc)
    return pos


@njit(cache=True)
def weighted_choice(states, weighted, w, choice):
    """Per-state argmax of ``w_i r_si`` (lowest index on ties); returns the averaged vertex."""
    S, M = states.shape
    vertex = np.zeros(M)
    for s in range(S):
        best = 0
        bv = w[0] * states[s, 0]
        for i in range(1, M):
            v = w[i] * states[s, i]
            if v > bv:
                bv = v
                best = i
        choice[s] = best
        vertex[best] += weighted[s, best]
    return vertex
