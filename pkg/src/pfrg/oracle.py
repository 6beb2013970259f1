"""Ground-truth solver for utility maximisation under minimum-rate guarantees.

The problem is::

    max sum_i U_i(theta_i)  s.t.  theta in R_avg,  theta >= theta_min

solved through its Lagrange dual.  For a fixed bias ``nu`` the inner problem
``max U(theta) + nu.theta`` over the average region is a strongly concave
program on a polytope, solved to high accuracy by pairwise Frank-Wolfe whose
linear step is the per-state weighted argmax.  The outer problem minimises the
smooth convex dual function over ``nu >= 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from pfrg._fw import ActiveSet, pairwise_fw
from pfrg.region import FiniteStateRegion, RegionBoundaryEstimate, VertexRegion
from pfrg.scheduler import Log1pUtility


class InfeasibleError(ValueError):
    pass


@dataclass
class PrimalDualSolution:
    theta_star: np.ndarray
    nu_star: np.ndarray
    utility_value: float
    active_constraints: np.ndarray
    residuals: dict = field(default_factory=dict)
    fractions: np.ndarray | None = None
    vertex_weights: dict | None = None
    fw_gap: float = 0.0
    outer_iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star.tolist(),
            "nu_star": self.nu_star.tolist(),
            "utility_value": self.utility_value,
            "active_constraints": [bool(a) for a in self.active_constraints],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _check_feasible(region, theta_min, rel_tol):
    cap = region.max_rates
    scale = max(1.0, float(np.max(cap)))
    for i, (t, c) in enumerate(zip(theta_min, cap)):
        if t > c * (1.0 + rel_tol):
            raise InfeasibleError(f"UE {i} guarantee {t:g} Mbps exceeds its maximum average rate {c:.6g} Mbps")
    margin = region.dominating_margin(theta_min)
    if margin < -rel_tol * scale:
        raise InfeasibleError(
            f"guarantees {np.asarray(theta_min).tolist()} are jointly infeasible: "
            f"aggregate shortfall {-margin:.6g} Mbps per UE")
    return margin


class _Inner:
    """Warm-started solver of ``max U(theta) + nu.theta`` over the region."""

    def __init__(self, region, utility, tol):
        self.region = region
        self.utility = utility
        self.tol = tol
        self.active: ActiveSet | None = None
        self.gap = np.inf
        M = region.n_ues
        self.c = utility._c(M)

    def solve(self, nu):
        c = self.c

        def grad(x):
            return c / (1.0 + x) + nu

        def dphi(x, d, t):
            return float((c / (1.0 + x + t * d) + nu) @ d)

        if self.active is None:
            key, v = self.region.lmo(c + nu)
            self.active = ActiveSet({key: 1.0}, {key: v})
        res = pairwise_fw(grad, self.region.lmo, dphi, self.active, tol=self.tol, max_iter=50000)
        self.active = res.active
        self.gap = res.gap
        return res.x


def _solve(region, theta_min, utility, nu0, tol, feas_tol):
    theta_min = np.asarray(theta_min, dtype=float)
    M = region.n_ues
    if theta_min.shape != (M,):
        raise ValueError(f"expected {M} guarantees, got {theta_min.shape}")
    _check_feasible(region, theta_min, feas_tol)
    inner = _Inner(region, utility, tol)
    idx = np.flatnonzero(theta_min > 0)
    nu = np.zeros(M)
    n_outer = 0
    if idx.size:
        start = np.zeros(idx.size) if nu0 is None else np.asarray(nu0, dtype=float)[idx]

        def dual(v):
            nu_full = np.zeros(M)
            nu_full[idx] = v
            th = inner.solve(nu_full)
            val = utility.value(th) + float(nu_full @ (th - theta_min))
            return val, (th - theta_min)[idx]

        res = minimize(dual, start, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] * idx.size,
                       options={"ftol": 1e-15, "gtol": 1e-9, "maxiter": 2000, "maxcor": 20})
        nu[idx] = res.x
        n_outer = int(res.nit)
    theta = inner.solve(nu)
    return theta, nu, inner, n_outer


def _finish(region, theta, nu, inner, theta_min, utility, n_outer, fractions=None, vertex_weights=None, tol=1e-6):
    theta_min = np.asarray(theta_min, dtype=float)
    sol = PrimalDualSolution(
        theta_star=theta, nu_star=nu, utility_value=utility.value(theta),
        active_constraints=(theta_min > 0) & (theta <= theta_min + 1e-6 * max(1.0, float(theta_min.max()))),
        fractions=fractions, vertex_weights=vertex_weights, fw_gap=inner.gap, outer_iterations=n_outer,
    )
    sol.residuals = verify_kkt(sol, region, theta_min, utility, tol=tol).residuals
    return sol


def solve_finite_state(states, pi, theta_min, utility=Log1pUtility(), nu0=None, tol: float = 1e-12,
                       feas_tol: float = 1e-6) -> PrimalDualSolution:
    """Optimal throughputs, multipliers and per-state scheduling fractions for a finite-state channel."""
    pi = np.asarray(pi, dtype=float)
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError("pi must be a probability vector")
    region = FiniteStateRegion(states, pi)
    theta, nu, inner, n_outer = _solve(region, theta_min, utility, nu0, tol, feas_tol)
    return _finish(region, theta, nu, inner, theta_min, utility, n_outer, fractions=region.fractions(inner.active))


def solve_region(region, theta_min, utility=Log1pUtility(), nu0=None, tol: float = 1e-12,
                 feas_tol: float = 1e-6) -> PrimalDualSolution:
    """Same solve on any average-region object exposing ``lmo``/``support``/``dominating_margin``."""
    theta, nu, inner, n_outer = _solve(region, theta_min, utility, nu0, tol, feas_tol)
    fr = region.fractions(inner.active) if isinstance(region, FiniteStateRegion) else None
    return _finish(region, theta, nu, inner, theta_min, utility, n_outer, fractions=fr)


def solve_sampled_region(boundary: RegionBoundaryEstimate, theta_min, utility=Log1pUtility(), nu0=None,
                         tol: float = 1e-12, feas_tol: float = 1e-6) -> PrimalDualSolution:
    """Solve over the coordinate-convex hull of Monte-Carlo boundary points."""
    region = boundary.region() if isinstance(boundary, RegionBoundaryEstimate) else VertexRegion(boundary)
    if region.vertices.shape[0] < region.n_ues + 1:
        raise ValueError("boundary estimate is degenerate")
    theta, nu, inner, n_outer = _solve(region, theta_min, utility, nu0, tol, feas_tol)
    weights = {key[1]: w for key, w in inner.active.weights.items()}
    return _finish(region, theta, nu, inner, theta_min, utility, n_outer, vertex_weights=weights)


# ---------------------------------------------------------------------------
# KKT verification
# ---------------------------------------------------------------------------

@dataclass
class KKTReport:
    residuals: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    def failing(self) -> list[str]:
        return [k for k, v in self.residuals.items() if v > self.tol]


def _as_region(region_access):
    if isinstance(region_access, RegionBoundaryEstimate):
        return region_access.region()
    if isinstance(region_access, (FiniteStateRegion, VertexRegion)):
        return region_access
    states, pi = region_access
    return FiniteStateRegion(states, pi)


def verify_kkt(solution: PrimalDualSolution, region_access, theta_min, utility=Log1pUtility(),
               tol: float = 1e-6) -> KKTReport:
    """Residuals of the optimality conditions at ``solution`` (reports, never raises).

    * ``primal_region`` -- how far the point lies outside the average region;
    * ``primal_guarantee`` -- largest guarantee shortfall;
    * ``dual`` -- largest negative multiplier;
    * ``slackness`` -- ``max_i |nu_i (theta_i - theta_min_i)|``;
    * ``variational`` -- ``max_r (grad U + nu).(r - theta)`` over the region, zero at the optimum;
    * ``equalization`` -- finite-state only: the largest relative index gap between a scheduled
      UE and the best UE in any state where it is scheduled.
    """
    region = _as_region(region_access)
    theta = np.asarray(solution.theta_star, dtype=float)
    nu = np.asarray(solution.nu_star, dtype=float)
    theta_min = np.asarray(theta_min, dtype=float)
    w = utility.derivative(theta) + nu
    res = {
        "primal_region": max(0.0, -region.dominating_margin(theta)),
        "primal_guarantee": float(np.max(np.maximum(theta_min - theta, 0.0))),
        "dual": float(np.max(np.maximum(-nu, 0.0))),
        "slackness": float(np.max(np.abs(nu * (theta - theta_min)))),
        "variational": max(0.0, region.support(w) - float(w @ theta)),
    }
    if solution.fractions is not None and isinstance(region, FiniteStateRegion):
        idx = region.states * w
        best = idx.max(axis=1, keepdims=True)
        gap = np.where(solution.fractions > 1e-9, (best - idx) / np.where(best > 0, best, 1.0), 0.0)
        res["equalization"] = float(gap.max())
    return KKTReport(res, tol)


# ---------------------------------------------------------------------------
# bias bound for two UEs
# ---------------------------------------------------------------------------

def _frontier_two_ue(region) -> np.ndarray:
    """Pareto frontier vertices of a two-UE average region, ordered by increasing theta_1."""
    if isinstance(region, FiniteStateRegion):
        pts = np.column_stack([region._cum0, region._suf1])[::-1]
    else:
        V = region.vertices
        from scipy.spatial import ConvexHull

        hull = ConvexHull(V)
        H = V[hull.vertices]
        keep = [p for p in H if not np.any(np.all(H >= p, axis=1) & np.any(H > p, axis=1))]
        pts = np.array(sorted(keep, key=lambda p: (p[1], -p[0])))
    _, uniq = np.unique(pts.round(12), axis=0, return_index=True)
    pts = pts[np.sort(uniq)]
    return pts[np.argsort(pts[:, 1], kind="stable")]


def boundary_normal_cone_two_ue(region_access, theta, tol: float = 1e-6) -> tuple[np.ndarray, bool]:
    """Outward normals at ``theta`` on the two-UE frontier.

    Returns ``(normals, at_vertex)``: one normal on an edge, the two extreme rays
    of the normal cone at a vertex.
    """
    region = _as_region(region_access)
    if region.n_ues != 2:
        raise ValueError("normal cone helper is two-UE only")
    pts = _frontier_two_ue(region)
    theta = np.asarray(theta, dtype=float)
    scale = max(1.0, float(np.abs(pts).max()))
    edges = []
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        n = np.array([-d[1], d[0]])
        n = -n if n.sum() < 0 else n
        n = n / np.linalg.norm(n)
        t = float(np.clip((theta - a) @ d / (d @ d), 0.0, 1.0))
        dist = float(np.linalg.norm(theta - (a + t * d)))
        edges.append((dist, t, n))
    hits = [(t, n) for dist, t, n in edges if dist <= tol * scale]
    if not hits:
        raise ValueError("theta is not on the frontier of the region")
    interior = [n for t, n in hits if 1e-9 < t < 1 - 1e-9]
    if interior:
        return interior[0][None, :], False
    return np.array([n for _, n in hits]), True


def nu_max_bound_two_ue(solution: PrimalDualSolution, boundary_normal, utility=Log1pUtility()) -> float:
    """Upper bound on the UE1 multiplier: ``U'(theta*_0) * w1 / w0``, maximised over the normal cone.

    From first-order sensitivity along the frontier, ``d theta_0 / d theta_1 = -w1/w0``, so
    ``nu*_1 = U'(theta*_0) w1/w0 - U'(theta*_1)``.
    """
    normals = np.atleast_2d(np.asarray(boundary_normal, dtype=float))
    if normals.shape[1] != 2 or len(solution.theta_star) != 2:
        raise ValueError("two-UE bound needs two-component normals and a two-UE solution")
    if np.any(normals[:, 0] <= 0):
        raise ValueError("degenerate boundary normal: zero UE0 component")
    if np.any(normals[:, 1] < 0):
        raise ValueError("boundary normal must be nonnegative")
    d0 = utility.derivative(solution.theta_star)[0]
    return float(np.max(d0 * normals[:, 1] / normals[:, 0]))
