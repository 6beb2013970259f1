"""End-to-end acceptance checks: one PASS/FAIL line per criterion.

Tolerances are fixed here and never loosened; a criterion that cannot be met
stays red.
"""

import time
import warnings

import numpy as np
import pytest

from pfrg import harness
from pfrg.ode import integrate_fixed_nu, stability_diagnostics
from pfrg.oracle import solve_finite_state
from pfrg.region import argmax_linear, default_weight_sweep, estimate_average_region, SlotRateRegion
from pfrg.scheduler import SchedulerConfig, run

pytestmark = pytest.mark.slow

# criterion tolerances
C1_THETA1 = (58.0, 62.0)
C1_RUNTIME_S = 30.0
C2_NU1 = (0.012, 0.020)
C2_STD_RATIO = 1 / 3
C3_TC_FAR = 5.0
C3_LM_NEAR = 3.0
C3_SEEDS = (0, 1, 2)
C4_GUARANTEE_TOL = 3.0
C4_THETA0_LEFT = (13.0, 20.0)
C4_THETA01_RIGHT = (36.0, 44.0)
C5_THETA = (75.0, 150.0)
C5_THETA_TOL = 0.5
C5_NU1 = 0.01312
C5_NU_TOL = 5e-4
C5_SCHED_TOL = 3.0
C6_SCHED_ODE = 3.0
C6_ODE_ORACLE_THETA = 1.0
C6_ODE_ORACLE_NU = 5e-4
C7_BRUTE_TOL = 0.5
C7_EPS_NU = 5e-4
C7_EPS_THETA = 2.0


def report(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}  {detail}")


def preset(name, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return harness.load_preset(name).with_overrides(**kw)


def simulate(sc, model=None):
    model = sc.channel.build() if model is None else model
    return run(sc.algorithm, model, sc.theta_min_mbps, sc.scheduler_config, n_slots=sc.n_slots, seed=sc.seed)


@pytest.fixture(scope="module")
def fig3_left():
    sc = preset("fig3-left")
    simulate(preset("fig3-left", n_slots=1000))  # compile kernels outside the timed run
    t0 = time.perf_counter()
    rec = simulate(sc)
    return sc, rec, time.perf_counter() - t0


def test_criterion_1_two_ue_guarantee(fig3_left, capsys):
    sc, rec, secs = fig3_left
    th1 = rec.tail_mean_theta[1]
    ok = C1_THETA1[0] <= th1 <= C1_THETA1[1] and secs < C1_RUNTIME_S
    report(capsys, 1, ok, f"tail theta_1 = {th1:.2f} Mbps in {list(C1_THETA1)}; {sc.n_slots} slots in {secs:.1f} s "
                          f"(< {C1_RUNTIME_S:.0f} s)")
    assert ok


def test_criterion_2_multiplier_tracking(fig3_left, capsys):
    sc, rec, _ = fig3_left
    tc = simulate(preset("fig3-left-tc"))
    nu1, sd_lm, sd_tc = rec.tail_mean_bias[1], rec.tail_std_bias[1], tc.tail_std_bias[1]
    ok = C2_NU1[0] <= nu1 <= C2_NU1[1] and sd_lm <= C2_STD_RATIO * sd_tc
    report(capsys, 2, ok, f"tail nu_1 = {nu1:.4f} in {list(C2_NU1)}; std nu_1 = {sd_lm:.4g} vs "
                          f"std a*tau_1 = {sd_tc:.4g} (ratio {sd_lm / sd_tc:.3f} <= 1/3)")
    assert ok


def test_criterion_3_baseline_degradation(capsys):
    lines, wins = [], 0
    for seed in C3_SEEDS:
        lm, tc = preset("fig3-right", seed=seed), preset("fig3-right-tc", seed=seed)
        rows = harness.compare_algorithms([lm, tc])
        d_lm, d_tc = rows[0]["oracle_deviation_mbps"], rows[1]["oracle_deviation_mbps"]
        win = d_tc > C3_TC_FAR and d_lm <= C3_LM_NEAR
        wins += win
        lines.append(f"seed {seed}: TC {d_tc:.2f}, LM {d_lm:.2f}")
    ok = wins * 2 > len(C3_SEEDS)
    report(capsys, 3, ok, f"{wins}/{len(C3_SEEDS)} seeds with TC deviation > {C3_TC_FAR} and LM <= {C3_LM_NEAR} "
                          f"Mbps ({'; '.join(lines)})")
    assert ok


def test_criterion_4_four_ue_guarantees(capsys):
    left = preset("fig5-left")
    rl = simulate(left)
    thl = rl.tail_mean_theta
    g = np.asarray(left.theta_min_mbps)
    ok_left = bool(np.all(np.abs(thl[1:] - g[1:]) <= C4_GUARANTEE_TOL)) and C4_THETA0_LEFT[0] <= thl[0] <= C4_THETA0_LEFT[1]
    right = preset("fig5-right")
    rr = simulate(right)
    thr = rr.tail_mean_theta
    gr = np.asarray(right.theta_min_mbps)
    nu1_zero = bool(np.all(rr.bias[:, 1] == 0.0) and rr.final_bias[1] == 0.0 and rr.tail_mean_bias[1] == 0.0)
    ok_right = (all(C4_THETA01_RIGHT[0] <= v <= C4_THETA01_RIGHT[1] for v in thr[:2]) and nu1_zero
                and bool(np.all(np.abs(thr[2:] - gr[2:]) <= C4_GUARANTEE_TOL)))
    ok = ok_left and ok_right
    report(capsys, 4, ok, f"left tail theta = {np.round(thl, 2).tolist()}; right tail theta = "
                          f"{np.round(thr, 2).tolist()}, nu_1 identically zero: {nu1_zero}")
    assert ok


def test_criterion_5_oracle_ground_truth(capsys):
    sol = solve_finite_state([[300.0, 200.0]], [1.0], [0, 150])
    ok_oracle = (np.max(np.abs(sol.theta_star - C5_THETA)) <= C5_THETA_TOL
                 and abs(sol.nu_star[1] - C5_NU1) <= C5_NU_TOL)
    left, right = preset("fig6-left"), preset("fig6-right")
    rl, rr = simulate(left), simulate(right)
    ok_sched = np.max(np.abs(rl.tail_mean_theta - sol.theta_star)) <= C5_SCHED_TOL
    met = [bool(np.all(r.tail_mean_theta >= np.asarray(s.theta_min_mbps) - C5_SCHED_TOL))
           for r, s in ((rl, left), (rr, right))]
    ok = ok_oracle and ok_sched and all(met)
    report(capsys, 5, ok, f"oracle theta* = {np.round(sol.theta_star, 4).tolist()}, nu*_1 = {sol.nu_star[1]:.5f}; "
                          f"scheduler {np.round(rl.tail_mean_theta, 2).tolist()}; two-state scheduler "
                          f"{np.round(rr.tail_mean_theta, 2).tolist()}; guarantees met {met}")
    assert ok


def test_criterion_6_three_way_consistency(fig3_left, capsys):
    sc, rec, _ = fig3_left
    field = harness.mean_field(sc)
    orc = harness.solve_oracle(sc, field)
    ode = harness.solve_ode(sc, field)
    d1 = np.max(np.abs(rec.tail_mean_theta - ode.theta_final))
    d2 = np.max(np.abs(ode.theta_final - orc.theta_star))
    d3 = np.max(np.abs(ode.nu_final - orc.nu_star))
    ok = d1 < C6_SCHED_ODE and d2 < C6_ODE_ORACLE_THETA and d3 < C6_ODE_ORACLE_NU and ode.converged
    report(capsys, 6, ok, f"|sched - ODE| = {d1:.3f} Mbps, |ODE - oracle| = {d2:.3f} Mbps, "
                          f"|nu_ODE - nu*| = {d3:.2e}")
    assert ok


def test_criterion_7_property_suites(fig3_left, capsys, rng):
    from test_oracle import assignment_points, brute_force

    sc, rec, _ = fig3_left
    model = sc.channel.build()
    checks = {}
    checks["nu box"] = bool(np.all((rec.bias >= 0) & (rec.bias <= sc.nu_max)))
    checks["EWMA hull bound"] = bool(np.all(rec.theta <= model.rate_cap + 1e-9))

    ok = True
    for _ in range(200):
        rates = rng.uniform(0, 300, 4)
        w = rng.uniform(0.01, 1, 4)
        reg = SlotRateRegion(rates)
        a, b = argmax_linear(reg, w), argmax_linear(reg, rng.uniform(0.1, 100) * w)
        ok &= a[1] == b[1] and np.array_equal(a[0], b[0])
    checks["argmax scale invariance"] = bool(ok)

    cfg = SchedulerConfig("pf-rg-lm", 5e-4, 5e-6)
    pf = run("pf", model, [0, 0], SchedulerConfig("pf", 5e-4, 5e-6), n_slots=200_000, seed=4)
    lm = run("pf-rg-lm", model, [0, 0], cfg, n_slots=200_000, seed=4)
    checks["PF = PF-RG-LM(theta_min=0)"] = bool(np.array_equal(pf.chosen_ue, lm.chosen_ue)
                                               and np.array_equal(pf.theta, lm.theta))

    th, nu, g = rec.tail_mean_theta, rec.tail_mean_bias, np.asarray(sc.theta_min_mbps)
    checks["slackness dichotomy"] = bool(np.all((nu < C7_EPS_NU) | (np.abs(th - g) < C7_EPS_THETA)))

    field = harness.mean_field(sc)
    est = estimate_average_region(model, default_weight_sweep(2), n_slots=field.mc_samples, seed=field.seed)
    decay = lyap = True
    for start in ([400.0, 300.0], [0.0, 0.0], [250.0, 10.0], [20.0, 200.0]):
        tr = integrate_fixed_nu(start, [0, 0.0155], field, dt=0.01, t_end=6.0, tol_rest=0.0)
        d = stability_diagnostics(tr, est, field, delta=1.0, eps=0.01)
        decay &= d["distance_decay_ok"]
        lyap &= d["lyapunov_monotone_ok"]
    checks["ODE distance decay"] = bool(decay)
    checks["Lyapunov monotonicity"] = bool(lyap)

    worst = 0.0
    for _ in range(25):
        S = int(rng.integers(1, 5))
        states = rng.uniform(10, 400, size=(S, 2))
        pi = rng.dirichlet(np.ones(S))
        tm = rng.uniform(0.05, 0.9) * float(pi @ states[:, 1])
        sol = solve_finite_state(states, pi, [0, tm])
        ref, _ = brute_force(assignment_points(states, pi), tm)
        worst = max(worst, float(np.max(np.abs(sol.theta_star - ref))))
    checks["oracle vs brute force"] = worst < C7_BRUTE_TOL

    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(capsys, 7, ok, f"{sum(checks.values())}/{len(checks)} property checks hold"
                          f"{'' if ok else ' (failed: ' + ', '.join(failed) + ')'}; worst oracle gap {worst:.2e} Mbps")
    assert ok


def test_literal_fading_diagnostics(capsys):
    """Literal dB-exponential fading: printed for reference, not asserted."""
    from pfrg.oracle import InfeasibleError

    rec = simulate(preset("fig3-left", fading="exp-db"))
    try:
        harness.solve_oracle(preset("fig5-left", fading="exp-db"))
        four = "feasible"
    except InfeasibleError as exc:
        four = f"infeasible ({exc})"
    with capsys.disabled():
        print(f"\n[diagnostic] exp-db fading: two-UE tail theta = {np.round(rec.tail_mean_theta, 2).tolist()}, "
              f"tail nu_1 = {rec.tail_mean_bias[1]:.4f}; four-UE guarantees {four}")
