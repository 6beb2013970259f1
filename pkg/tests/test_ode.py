import numpy as np
import pytest

from pfrg.channel import FadingChannelModel, MarkovChannelModel, RadioConfig
from pfrg.ode import (MeanField, RestPointError, h_bar, integrate_coupled, integrate_fixed_nu,
                      stability_diagnostics, theta_infinity)
from pfrg.oracle import solve_finite_state, solve_region
from pfrg.region import default_weight_sweep, estimate_average_region


@pytest.fixture(scope="module")
def single():
    return MeanField(MarkovChannelModel.iid([[300.0, 200.0]], [1.0]), [0, 150])


@pytest.fixture(scope="module")
def fig3():
    return MeanField(FadingChannelModel(RadioConfig(), [100, 200]), [0, 60])


@pytest.fixture(scope="module")
def fig3_oracle(fig3):
    return solve_region(fig3.region, [0, 60])


def test_h_bar_single_state(single):
    assert h_bar([300, 0], [0, 0], single) == pytest.approx([-300, 200])


def test_h_bar_two_state(fig6_right):
    f = MeanField(fig6_right)
    assert h_bar([0, 0], [0, 0], f) == pytest.approx([350, 0])


def test_h_bar_domain(single):
    with pytest.raises(ValueError):
        h_bar([-1, 0], [0, 0], single)
    with pytest.raises(ValueError):
        h_bar([0, 0], [0, 2.0], single)
    with pytest.raises(ValueError):
        MeanField(MarkovChannelModel.iid([[1.0, 2.0]], [1.0]), mc_samples=0)


def test_fading_mean_field_is_deterministic(fig3):
    other = MeanField(fig3.channel_model, [0, 60])
    th = np.array([80.0, 55.0])
    assert np.array_equal(h_bar(th, [0, 0.01], fig3), h_bar(th, [0, 0.01], other))


def test_rest_point_is_stationary(fig3):
    nu = np.array([0, 0.0155])
    rest = theta_infinity(nu, fig3, tol=1e-3)
    assert np.max(np.abs(h_bar(rest, nu, fig3))) < 1e-3
    tr = integrate_fixed_nu(rest, nu, fig3, dt=0.01, t_end=1.0, tol_rest=0.0)
    assert np.max(np.abs(np.diff(tr.theta_path, axis=0))) < 1e-3
    # the empirical region is polyhedral, so the path chatters inside a tiny band
    assert np.max(np.abs(tr.theta_path - rest)) < 1e-2


def test_integrate_fixed_nu_guards(single):
    with pytest.raises(ValueError):
        integrate_fixed_nu([0, 0], [0, 0], single, dt=0.0)
    with pytest.raises(ValueError):
        integrate_fixed_nu([0, 0], [0, 0], single, dt=0.1, t_end=0.05)


def test_theta_inf_pf_point(fig3):
    pf = solve_region(fig3.region, [0, 0]).theta_star
    assert np.max(np.abs(theta_infinity([0, 0], fig3) - pf)) < 1.0


def test_theta_inf_single_state(single):
    assert theta_infinity([0, 0.01312], single) == pytest.approx([75, 150], abs=0.5)


def test_theta_inf_continuity(fig3):
    base = np.array([0, 0.0155])
    t0 = theta_infinity(base, fig3, tol=1e-4)
    gaps = [np.linalg.norm(theta_infinity(base + [0, d], fig3, tol=1e-4, theta0=t0) - t0) for d in (1e-3, 1e-4)]
    assert gaps[1] < gaps[0]
    assert 5 < gaps[0] / gaps[1] < 20


def test_theta_inf_error_carries_residual(single):
    with pytest.raises(RestPointError) as ei:
        theta_infinity([0, 0], single, tol=1e-9, max_time=2.0)
    assert ei.value.theta is not None and ei.value.residual is not None


def test_euler_first_order_on_polyhedral_region():
    f = MeanField(MarkovChannelModel.iid([[300.0, 200.0]], [1.0]))
    exact = solve_finite_state([[300.0, 200.0]], [1.0], [0, 0]).theta_star
    errs = []
    for dt in (0.02, 0.01, 0.005):
        tr = integrate_fixed_nu([0, 0], [0, 0], f, dt=dt, t_end=30, tol_rest=0.0)
        errs.append(np.abs(tr.theta_path[-400:] - exact).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.4) & (ratios < 2.6))


# --- coupled system --------------------------------------------------------

def test_coupled_from_joint_rest_point_is_stationary(single):
    sol = solve_finite_state([[300.0, 200.0]], [1.0], [0, 150])
    th = theta_infinity(sol.nu_star, single)
    tr = integrate_coupled(th, sol.nu_star, single, t_end=0.01)
    assert tr.converged and len(tr.times) == 1
    assert tr.nu_final == pytest.approx(sol.nu_star, abs=1e-12)


def test_coupled_matches_oracle(fig3, fig3_oracle):
    tr = integrate_coupled([0, 0], [0, 0], fig3, t_end=2.0, tol_rest=0.01)
    assert tr.converged
    assert np.max(np.abs(tr.theta_final - fig3_oracle.theta_star)) < 1.0
    assert np.max(np.abs(tr.nu_final - fig3_oracle.nu_star)) < 5e-4
    assert abs(tr.nu_final[1] - fig3_oracle.nu_star[1]) < 0.05 * fig3_oracle.nu_star[1]
    # unconstrained UE: bias pinned at zero by the reflection term
    assert np.all(tr.nu_path[:, 0] == 0)
    assert np.all(tr.xi_flags[:, 0])
    # slackness dichotomy at the limit
    for i, tm in enumerate(fig3.theta_min):
        if tr.nu_final[i] > 1e-6:
            assert abs(tr.theta_final[i] - tm) < 0.1
        else:
            assert tr.theta_final[i] >= tm - 0.1
    assert np.all(np.diff(tr.times) > 0)
    assert np.all((tr.nu_path >= 0) & (tr.nu_path <= fig3.nu_max))


def test_coupled_upper_clamp():
    f = MeanField(MarkovChannelModel.iid([[300.0, 200.0]], [1.0]), [0, 150], nu_max=0.005)
    tr = integrate_coupled([0, 0], [0, 0], f, t_end=0.2)
    assert tr.nu_path[:, 1].max() == pytest.approx(0.005)
    assert tr.xi_flags[-1, 1] and tr.xi[-1, 1] < 0


def test_coupled_csv(tmp_path, single):
    tr = integrate_coupled([75, 150], [0, 0.0131], single, t_end=0.001)
    tr.to_csv(tmp_path / "o.csv")
    head = (tmp_path / "o.csv").read_text().splitlines()[0]
    assert head == "t,theta_0,theta_1,nu_0,nu_1,xi_flag_0,xi_flag_1"


# --- stability diagnostics -------------------------------------------------

@pytest.mark.parametrize("start", [[400.0, 300.0], [0.0, 0.0], [250.0, 10.0], [20.0, 200.0]])
def test_distance_decay_and_lyapunov(fig3, start):
    est = estimate_average_region(fig3.channel_model, default_weight_sweep(2), n_slots=fig3.mc_samples,
                                  seed=fig3.seed)
    tr = integrate_fixed_nu(start, [0, 0.0155], fig3, dt=0.01, t_end=6.0, tol_rest=0.0)
    d = stability_diagnostics(tr, est, fig3, delta=1.0, eps=0.01)
    assert d["distance_decay_ok"]
    assert d["lyapunov_monotone_ok"]


def test_distance_decay_polyhedral(fig6_right):
    f = MeanField(fig6_right)
    est = estimate_average_region(fig6_right, default_weight_sweep(2), n_slots=1000)
    # exact region: sweep directions cover both vertices of the two-state frontier
    est.boundary_points[:] = [f.region.argmax(w) for w in est.weight_samples]
    tr = integrate_fixed_nu([500, 500], [0, 0.02], f, dt=0.01, t_end=8.0, tol_rest=0.0)
    d = stability_diagnostics(tr, est, f, delta=2.0, eps=0.01)
    assert d["distance_decay_ok"] and d["lyapunov_monotone_ok"]
