"""Mean ODE limits of the two-time-scale recursion.

Fast system (bias held fixed)::

    dtheta/dt = hbar(theta, nu) = E[r*(theta, nu, S)] - theta

Slow system (throughput equilibrated)::

    dnu/dt = theta_min - theta_inf(nu) + xi,   nu in [0, nu_max]^M

Expectations are exact over the stationary law for finite-state channels and
use one fixed Monte-Carlo sample (common random numbers) for fading channels,
so ``hbar`` is a deterministic function in both cases.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from pfrg.region import FiniteStateRegion, empirical_region
from pfrg.scheduler import Log1pUtility


class RestPointError(RuntimeError):
    """Integration did not settle; carries the last iterate and residual."""

    def __init__(self, message, theta=None, residual=None):
        super().__init__(message)
        self.theta = theta
        self.residual = residual


class MeanField:
    def __init__(self, channel_model, theta_min=None, utility=Log1pUtility(), mc_samples: int = 50_000,
                 seed: int = 0, nu_max: float = 1.0, region: FiniteStateRegion | None = None):
        if mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        self.channel_model = channel_model
        self.utility = utility
        self.mc_samples = mc_samples
        self.seed = seed
        self.nu_max = nu_max
        self.region = region if region is not None else empirical_region(channel_model, mc_samples, seed)
        M = self.region.n_ues
        self.theta_min = np.zeros(M) if theta_min is None else np.asarray(theta_min, dtype=float)
        if self.theta_min.shape != (M,):
            raise ValueError(f"expected {M} guarantees")

    @property
    def n_ues(self) -> int:
        return self.region.n_ues

    def lyapunov(self, theta, nu) -> float:
        return self.utility.value(theta) + float(np.asarray(nu) @ np.asarray(theta))


def h_bar(theta, nu, field: MeanField) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    if np.any(nu < 0) or np.any(nu > field.nu_max):
        raise ValueError(f"nu must lie in [0, {field.nu_max}]")
    return field.region.argmax(field.utility.derivative(theta) + nu) - theta


@dataclass
class OdeTrajectory:
    times: np.ndarray
    theta_path: np.ndarray
    nu_path: np.ndarray
    xi_flags: np.ndarray
    xi: np.ndarray | None = None
    converged: bool = False

    @property
    def theta_final(self) -> np.ndarray:
        return self.theta_path[-1]

    @property
    def nu_final(self) -> np.ndarray:
        return self.nu_path[-1]

    def to_csv(self, path) -> None:
        M = self.theta_path.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"theta_{i}" for i in range(M)] + [f"nu_{i}" for i in range(M)]
                        + [f"xi_flag_{i}" for i in range(M)])
            for t, th, nu, fl in zip(self.times, self.theta_path, self.nu_path, self.xi_flags):
                wr.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in th] + [f"{v:.17g}" for v in nu]
                            + [int(f) for f in fl])


def integrate_fixed_nu(theta0, nu, field: MeanField, dt: float = 0.01, t_end: float = 20.0,
                       tol_rest: float = 0.1) -> OdeTrajectory:
    """Explicit Euler path of the fast ODE, stopping once ``|hbar|_inf < tol_rest``."""
    if not dt > 0 or t_end < dt:
        raise ValueError("need dt > 0 and t_end >= dt")
    theta = np.asarray(theta0, dtype=float).copy()
    nu = np.asarray(nu, dtype=float)
    n_steps = int(round(t_end / dt))
    path = [theta.copy()]
    converged = False
    for _ in range(n_steps):
        h = h_bar(theta, nu, field)
        if np.max(np.abs(h)) < tol_rest:
            converged = True
            break
        theta = theta + dt * h
        path.append(theta.copy())
    P = np.array(path)
    n = P.shape[0]
    return OdeTrajectory(np.arange(n) * dt, P, np.tile(nu, (n, 1)), np.zeros((n, P.shape[1]), dtype=bool),
                         converged=converged)


def theta_infinity(nu, field: MeanField, tol: float = 0.1, dt: float = 0.01, theta0=None,
                   max_time: float = 200.0, refinements: int = 3) -> np.ndarray:
    """Rest point of the fast ODE for a fixed bias.

    Integrates with Euler until ``|hbar|_inf < tol``.  On polyhedral regions the
    field is discontinuous across the switching surface and Euler chatters; in
    that case convergence is judged on the drift between means of the iterates
    over consecutive windows of one ODE time unit, the window mean is kept, and the step is cut
    by 4 (``refinements`` times) to shrink the chatter band.  A level is left early
    once the drift stalls, since aliasing of the chatter floors it at a dt-dependent value.
    """
    nu = np.asarray(nu, dtype=float)
    theta = np.zeros(field.n_ues) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    budget = int(math.ceil(max_time / dt)) * (refinements + 1)
    level = 0
    window = int(math.ceil(1.0 / dt))
    sum_theta = np.zeros_like(theta)
    prev_mean = None
    prev_resid = np.inf
    windows_here = 0
    count = 0
    last_resid = np.inf
    for _ in range(budget):
        h = h_bar(theta, nu, field)
        if np.max(np.abs(h)) < tol:
            return theta
        theta = theta + dt * h
        sum_theta += theta
        count += 1
        if count == window:
            mean = sum_theta / window
            windows_here += 1
            if prev_mean is not None:
                # drift of the window means, per unit ODE time
                last_resid = float(np.max(np.abs(mean - prev_mean)) / (window * dt))
                if last_resid < tol and level >= refinements:
                    return mean
                # chatter aliasing floors the drift at a level set by dt: refine once it stalls
                stalled = windows_here >= 5 and last_resid > 0.8 * prev_resid
                if level < refinements and (last_resid < tol or stalled):
                    level += 1
                    dt /= 4.0
                    window = int(math.ceil(1.0 / dt))
                    theta = mean
                    mean = None
                    windows_here = 0
                    last_resid = np.inf
                prev_resid = last_resid
            prev_mean = mean
            sum_theta[:] = 0.0
            count = 0
    raise RestPointError(f"fast ODE did not settle (last window residual {last_resid:.3g})", theta, last_resid)


def integrate_coupled(theta0, nu0, field: MeanField, dt_fast: float = 0.01, dt_slow: float = 1e-4,
                      t_end: float = 1.0, tol_rest: float = 0.1, tol_fast: float | None = None) -> OdeTrajectory:
    """Projected Euler on the slow bias ODE with the fast ODE solved to rest at every step.

    Stops early once the projected velocity ``|dnu/dt|_inf`` drops below ``tol_rest`` (Mbps).
    The reflection term is recorded as the clamp correction divided by ``dt_slow``.
    """
    if not dt_slow > 0:
        raise ValueError("dt_slow must be positive")
    tol_fast = tol_rest if tol_fast is None else tol_fast
    nu = np.clip(np.asarray(nu0, dtype=float), 0.0, field.nu_max)
    theta = np.asarray(theta0, dtype=float).copy()
    times, thetas, nus, flags, xis = [], [], [], [], []
    n_steps = int(round(t_end / dt_slow))
    converged = False
    for k in range(n_steps + 1):
        theta = theta_infinity(nu, field, tol=tol_fast, dt=dt_fast, theta0=theta)
        drive = field.theta_min - theta
        raw = nu + dt_slow * drive
        nxt = np.clip(raw, 0.0, field.nu_max)
        xi = (nxt - raw) / dt_slow
        times.append(k * dt_slow)
        thetas.append(theta.copy())
        nus.append(nu.copy())
        flags.append(xi != 0.0)
        xis.append(xi)
        if np.max(np.abs(drive + xi)) < tol_rest:
            converged = True
            break
        nu = nxt
    return OdeTrajectory(np.array(times), np.array(thetas), np.array(nus), np.array(flags), np.array(xis),
                         converged=converged)


def stability_diagnostics(traj: OdeTrajectory, estimate, field: MeanField, rest_theta=None, delta: float = 1.0,
                          eps: float = 0.01) -> dict:
    """Exponential attraction to the region and monotone ``U(theta) + nu.theta`` along a fixed-bias path.

    Monotonicity is only checked at iterates farther than ``delta`` from the rest
    point and within ``eps`` of the region; ``eps`` must be small next to ``delta``
    because an exterior path sliding along the frontier can lose utility.
    """
    from pfrg.region import distance_to_region

    dt = float(traj.times[1] - traj.times[0]) if traj.times.size > 1 else 0.0
    d = np.array([distance_to_region(th, estimate) for th in traj.theta_path])
    bound = d[0] * np.exp(-traj.times) * (1.0 + 5.0 * dt)
    decay_ok = bool(np.all(d <= bound + 1e-9))
    nu = traj.nu_path[0]
    L = np.array([field.lyapunov(th, nu) for th in traj.theta_path])
    rest = traj.theta_final if rest_theta is None else np.asarray(rest_theta)
    far = np.linalg.norm(traj.theta_path - rest, axis=1) > delta
    inside = d <= eps
    check = far[:-1] & inside[:-1]
    diffs = np.diff(L)
    lyap_ok = bool(np.all(diffs[check] >= -1e-12))
    return {"distance": d, "distance_bound": bound, "distance_decay_ok": decay_ok,
            "lyapunov": L, "lyapunov_monotone_ok": lyap_ok}
