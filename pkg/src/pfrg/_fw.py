"""Pairwise Frank-Wolfe over the convex hull of a (possibly implicit) atom set.

Maximises a concave function given its gradient, a linear maximisation
oracle and an exact line search.  Linear convergence on polytopes for strongly
concave objectives makes it accurate enough to serve as a ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np
from scipy.optimize import brentq


@dataclass
class ActiveSet:
    weights: dict = field(default_factory=dict)
    atoms: dict = field(default_factory=dict)

    def point(self) -> np.ndarray:
        return sum(w * self.atoms[k] for k, w in self.weights.items())


@dataclass
class FWResult:
    x: np.ndarray
    active: ActiveSet
    gap: float
    iterations: int


def concave_line_search(dphi: Callable[[float], float], gamma_max: float) -> float:
    """Maximiser of a concave 1-D function on [0, gamma_max] from its derivative."""
    if gamma_max <= 0:
        return 0.0
    d0 = dphi(0.0)
    if d0 <= 0:
        return 0.0
    d1 = dphi(gamma_max)
    if d1 >= 0:
        return gamma_max
    return brentq(dphi, 0.0, gamma_max, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def pairwise_fw(
    grad: Callable[[np.ndarray], np.ndarray],
    lmo: Callable[[np.ndarray], tuple[Hashable, np.ndarray]],
    dphi: Callable[[np.ndarray, np.ndarray, float], float],
    start: ActiveSet,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> FWResult:
    active = ActiveSet(dict(start.weights), dict(start.atoms))
    x = active.point()
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(x)
        key, s = lmo(g)
        gap = float(g @ s - g @ x)
        if gap <= tol:
            break
        active.atoms.setdefault(key, s)
        # away atom: worst active vertex along the gradient
        away = min(active.weights, key=lambda k: float(g @ active.atoms[k]))
        if away == key:
            # only happens when the FW atom is already the sole support; fall back to a FW step
            d = s - x
            gmax = 1.0
        else:
            d = s - active.atoms[away]
            gmax = active.weights[away]
        gamma = concave_line_search(lambda t: dphi(x, d, t), gmax)
        if gamma <= 0.0:
            break
        if away == key:
            for k in active.weights:
                active.weights[k] *= 1.0 - gamma
            active.weights[key] = active.weights.get(key, 0.0) + gamma
        else:
            active.weights[key] = active.weights.get(key, 0.0) + gamma
            remaining = active.weights[away] - gamma
            if gamma >= gmax or remaining <= 1e-15:
                del active.weights[away]
            else:
                active.weights[away] = remaining
        for k in [k for k, w in active.weights.items() if w <= 0.0]:
            del active.weights[k]
        active.atoms = {k: active.atoms[k] for k in active.weights}
        x = active.point()
    return FWResult(x=x, active=active, gap=gap, iterations=it)
