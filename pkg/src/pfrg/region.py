"""Slot rate regions, weighted linear maximisation, and average-region estimates.

Only the one-UE-per-slot family is modelled: in state ``s`` the slot region is
the convex hull of the origin and the axis points ``r_{s,i} e_i``.  Averaging
such regions over the stationary law gives the long-run region; it is
represented either exactly (:class:`FiniteStateRegion`, a weighted list of
states) or through boundary samples (:class:`VertexRegion`).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from pfrg import _kernels
from pfrg._fw import ActiveSet, pairwise_fw
from pfrg.channel import ChannelState


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError(f"weights must be a finite nonnegative vector, got {weights!r}")
    if not np.any(w > 0):
        raise ValueError("all-zero weight vector has no argmax direction")
    return w


@dataclass(frozen=True)
class SlotRateRegion:
    """One slot's feasible set: time-share a single UE at a time."""

    rates_mbps: np.ndarray
    kind: str = "one-ue-per-slot"

    def __post_init__(self):
        rates = self.rates_mbps.rates_mbps if isinstance(self.rates_mbps, ChannelState) else self.rates_mbps
        object.__setattr__(self, "rates_mbps", ChannelState(rates).rates_mbps)

    @classmethod
    def from_state(cls, state: ChannelState) -> "SlotRateRegion":
        return cls(state.rates_mbps)

    @property
    def vertices(self) -> np.ndarray:
        return np.diag(self.rates_mbps)


def argmax_linear(region, weights) -> tuple[np.ndarray, int]:
    """Maximise ``weights . r`` over a slot region; ties go to the lowest UE index."""
    if not isinstance(region, SlotRateRegion):
        region = SlotRateRegion(region)
    w = _check_weights(weights)
    if w.shape != region.rates_mbps.shape:
        raise ValueError(f"expected {region.rates_mbps.size} weights, got {w.size}")
    ue = int(np.argmax(w * region.rates_mbps))
    out = np.zeros_like(region.rates_mbps)
    out[ue] = region.rates_mbps[ue]
    return out, ue


# ---------------------------------------------------------------------------
# average regions
# ---------------------------------------------------------------------------

class FiniteStateRegion:
    """Average region ``sum_s p_s R_s`` over a finite list of joint states.

    ``argmax`` returns the average of the per-state winners, which is a vertex
    of the average region.  For two UEs the states are pre-sorted by rate ratio
    so each query costs a binary search instead of a pass over every state.
    """

    def __init__(self, states, probs=None):
        self.states = np.ascontiguousarray(np.atleast_2d(np.asarray(states, dtype=float)))
        n = self.states.shape[0]
        self.probs = np.full(n, 1.0 / n) if probs is None else np.asarray(probs, dtype=float)
        if self.probs.shape != (n,) or np.any(self.probs < 0):
            raise ValueError("probs must be a nonnegative vector with one entry per state")
        self.probs = self.probs / self.probs.sum()
        self.n_ues = self.states.shape[1]
        self._weighted = np.ascontiguousarray(self.states * self.probs[:, None])
        if self.n_ues == 2:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = self.states[:, 0] / self.states[:, 1]
            ratio[self.states[:, 1] == 0] = np.inf
            order = np.argsort(-ratio, kind="stable")
            self._order = order
            self._ratio_desc = ratio[order]
            self._neg_ratio = -self._ratio_desc
            # cum0[c]: UE0 mass when the first c sorted states go to UE0
            self._cum0 = np.concatenate([[0.0], np.cumsum(self._weighted[order, 0])])
            tail1 = np.concatenate([[0.0], np.cumsum(self._weighted[order[::-1], 1])])
            self._suf1 = tail1[::-1]

    @property
    def max_rates(self) -> np.ndarray:
        """Per-UE average rate when that UE is always scheduled."""
        return self._weighted.sum(axis=0)

    def _cut(self, w) -> int:
        if w[0] == 0:
            threshold = np.inf
        else:
            threshold = w[1] / w[0]
        # count of states with ratio >= threshold (UE0 wins w0 r0 >= w1 r1)
        return int(np.searchsorted(self._neg_ratio, -threshold, side="right"))

    def argmax(self, weights) -> np.ndarray:
        w = _check_weights(weights)
        if self.n_ues == 2:
            c = self._cut(w)
            return np.array([self._cum0[c], self._suf1[c]])
        return self._choose(w)[1]

    def _choose(self, w):
        choice = np.empty(self.states.shape[0], dtype=np.int64)
        vertex = _kernels.weighted_choice(self.states, self._weighted, np.ascontiguousarray(w, dtype=float), choice)
        return choice, vertex

    def support(self, weights) -> float:
        return float(np.asarray(weights, dtype=float) @ self.argmax(weights))

    # atoms for Frank-Wolfe: a key identifying the per-state assignment and its vertex
    def lmo(self, weights):
        w = _check_weights(weights)
        if self.n_ues == 2:
            c = self._cut(w)
            return ("cut", c), np.array([self._cum0[c], self._suf1[c]])
        choice, vertex = self._choose(w)
        return ("choice", choice.astype(np.int8 if self.n_ues < 128 else np.int64).tobytes()), vertex

    def choices(self, key) -> np.ndarray:
        """Per-state scheduled UE for an atom key returned by :meth:`lmo`."""
        tag, val = key
        if tag == "cut":
            out = np.ones(self.states.shape[0], dtype=np.int64)
            out[self._order[:val]] = 0
            return out
        dtype = np.int8 if self.n_ues < 128 else np.int64
        return np.frombuffer(val, dtype=dtype).astype(np.int64)

    def fractions(self, active: ActiveSet) -> np.ndarray:
        """Scheduling fractions ``x[s, i]`` implied by a convex combination of atoms."""
        x = np.zeros_like(self.states)
        rows = np.arange(self.states.shape[0])
        for key, lam in active.weights.items():
            x[rows, self.choices(key)] += lam
        return x

    def dominating_margin(self, target) -> float:
        """Largest ``t`` such that ``target + t*1`` is achievable (negative: outside)."""
        return support_margin(self, target)


class VertexRegion:
    """Coordinate-convex hull of a finite point set (sampled boundary)."""

    def __init__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self.n_ues = pts.shape[1]
        self.points = pts
        self.vertices = coordinate_closure(pts)

    @property
    def max_rates(self) -> np.ndarray:
        return self.vertices.max(axis=0)

    def argmax(self, weights) -> np.ndarray:
        w = _check_weights(weights)
        return self.vertices[int(np.argmax(self.vertices @ w))]

    def support(self, weights) -> float:
        return float(np.asarray(weights, dtype=float) @ self.argmax(weights))

    def lmo(self, weights):
        w = _check_weights(weights)
        j = int(np.argmax(self.vertices @ w))
        return ("vertex", j), self.vertices[j]

    def dominating_margin(self, target) -> float:
        from scipy.optimize import linprog

        V = self.vertices
        n_v, M = V.shape
        target = np.asarray(target, dtype=float)
        c = np.zeros(n_v + 1)
        c[-1] = -1.0
        A = np.hstack([-V.T, np.ones((M, 1))])
        res = linprog(c, A_ub=A, b_ub=-target, A_eq=np.concatenate([np.ones(n_v), [0.0]])[None, :], b_eq=[1.0],
                      bounds=[(0, None)] * n_v + [(None, None)], method="highs")
        if res.status != 0:
            raise RuntimeError(f"feasibility LP failed: {res.message}")
        return float(-res.fun)


def support_margin(region, target, tol: float = 1e-12, max_iter: int = 500) -> float:
    """``min_{w >= 0, sum w = 1} h(w) - w.target`` by Kelley cutting planes on the support function.

    For a down-closed convex region this is the largest ``t`` with ``target + t*1`` in the region.
    The objective is piecewise linear with finitely many pieces, so the loop ends exactly.
    """
    from scipy.optimize import linprog

    y = np.asarray(target, dtype=float)
    M = y.size
    cuts = [region.argmax(np.eye(M)[i]) for i in range(M)]
    scale = max(1.0, float(np.max(np.abs(cuts))))
    best = np.inf
    for _ in range(max_iter):
        V = np.array(cuts)
        c = np.concatenate([-y, [1.0]])
        res = linprog(c, A_ub=np.hstack([V, -np.ones((len(V), 1))]), b_ub=np.zeros(len(V)),
                      A_eq=np.concatenate([np.ones(M), [0.0]])[None, :], b_eq=[1.0],
                      bounds=[(0, None)] * M + [(None, None)], method="highs")
        if res.status != 0:
            raise RuntimeError(f"margin LP failed: {res.message}")
        w = np.clip(res.x[:M], 0.0, None)
        lower = float(res.fun)
        v = region.argmax(w)
        best = min(best, float(w @ v - w @ y))
        if best - lower <= tol * scale:
            return best
        cuts.append(v)
    return best


def coordinate_closure(points) -> np.ndarray:
    """Points plus every coordinate projection (zeroing any subset of coordinates), deduplicated."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    M = pts.shape[1]
    out = []
    for mask in itertools.product((0.0, 1.0), repeat=M):
        out.append(pts * np.array(mask))
    return np.unique(np.vstack(out), axis=0)


# ---------------------------------------------------------------------------
# Monte-Carlo boundary estimate
# ---------------------------------------------------------------------------

@dataclass
class RegionBoundaryEstimate:
    weight_samples: np.ndarray
    boundary_points: np.ndarray
    slots_used: int

    @property
    def n_ues(self) -> int:
        return self.boundary_points.shape[1]

    def region(self) -> VertexRegion:
        return VertexRegion(self.boundary_points)

    def to_csv(self, path) -> None:
        M = self.n_ues
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"w_{i}" for i in range(M)] + [f"r_{i}" for i in range(M)])
            for w, r in zip(self.weight_samples, self.boundary_points):
                wr.writerow([f"{v:.17g}" for v in w] + [f"{v:.17g}" for v in r])

    @classmethod
    def from_csv(cls, path, slots_used: int = 0) -> "RegionBoundaryEstimate":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        M = data.shape[1] // 2
        return cls(data[:, :M], data[:, M:], slots_used)


def default_weight_sweep(n_ues: int, n: int | None = None, seed: int = 0) -> np.ndarray:
    """Angles evenly spaced over the quarter circle for two UEs, random simplex points otherwise."""
    if n_ues == 2:
        n = 721 if n is None else n
        ang = np.linspace(0.0, np.pi / 2, n)
        w = np.column_stack([np.cos(ang), np.sin(ang)])
        w[np.abs(w) < 1e-15] = 0.0
        return w
    n = 2000 if n is None else n
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(n_ues), size=n)


def estimate_average_region(channel_model, weight_sweep=None, n_slots: int = 10**6, seed: int = 0,
                            chunk: int = 1 << 18) -> RegionBoundaryEstimate:
    """Slot-average of the weighted argmax for each weight vector.

    All weight vectors see the same ``n_slots`` realisation, so the returned
    points are exact boundary points of that realisation's empirical region.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    M = channel_model.n_ues
    W = default_weight_sweep(M) if weight_sweep is None else np.atleast_2d(np.asarray(weight_sweep, dtype=float))
    for w in W:
        _check_weights(w)
    proc = channel_model.process(seed)
    total = np.zeros((W.shape[0], M))
    done = 0
    while done < n_slots:
        n = min(chunk, n_slots - done)
        reg = FiniteStateRegion(proc.block(n))
        for j, w in enumerate(W):
            total[j] += reg.argmax(w) * n
        done += n
    return RegionBoundaryEstimate(W.copy(), total / n_slots, n_slots)


def empirical_region(channel_model, n_slots: int, seed: int = 0) -> FiniteStateRegion:
    """Exact average region for finite-state models; an ``n_slots`` sample for fading ones."""
    if channel_model.kind == "finite-state":
        return FiniteStateRegion(channel_model.states, channel_model.stationary)
    return FiniteStateRegion(channel_model.process(seed).block(n_slots))


# ---------------------------------------------------------------------------
# distance to the estimated region
# ---------------------------------------------------------------------------

def _segment_distance(p, a, b) -> float:
    d = b - a
    L = d @ d
    t = 0.0 if L == 0 else float(np.clip((p - a) @ d / L, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def distance_to_region(point, estimate: RegionBoundaryEstimate) -> float:
    """Euclidean distance from ``point`` to the coordinate-convex hull of the estimate (0 inside)."""
    p = np.asarray(point, dtype=float)
    pts = np.atleast_2d(estimate.boundary_points)
    M = pts.shape[1]
    if p.shape != (M,):
        raise ValueError(f"point must have {M} coordinates")
    if pts.shape[0] < M + 1:
        raise ValueError(f"need at least {M + 1} boundary points, got {pts.shape[0]}")
    V = coordinate_closure(pts)
    try:
        hull = ConvexHull(V)
    except QhullError as exc:
        raise ValueError("boundary estimate does not span a full-dimensional region") from exc
    if hull.volume <= 0:
        raise ValueError("boundary estimate does not span a full-dimensional region")
    scale = max(1.0, float(np.abs(V).max()))
    if np.all(hull.equations[:, :-1] @ p + hull.equations[:, -1] <= 1e-12 * scale):
        return 0.0
    if M == 2:
        return min(_segment_distance(p, V[i], V[j]) for i, j in hull.simplices)
    return project_onto_hull(p, V[hull.vertices])[1]


def project_onto_hull(p, vertices, tol: float = 1e-14) -> tuple[np.ndarray, float]:
    """Nearest point of ``conv(vertices)`` to ``p`` via pairwise Frank-Wolfe."""
    V = np.asarray(vertices, dtype=float)
    j0 = int(np.argmin(np.linalg.norm(V - p, axis=1)))
    start = ActiveSet({j0: 1.0}, {j0: V[j0]})

    def lmo(g):
        j = int(np.argmax(V @ g))
        return j, V[j]

    res = pairwise_fw(
        grad=lambda x: p - x,
        lmo=lmo,
        dphi=lambda x, d, t: float((p - x - t * d) @ d),
        start=start,
        tol=tol * max(1.0, float(p @ p)),
        max_iter=100000,
    )
    return res.x, float(np.linalg.norm(p - res.x))
