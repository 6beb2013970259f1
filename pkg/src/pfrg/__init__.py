"""Proportional-fair downlink scheduling with minimum-rate guarantees.

Modules:

* :mod:`pfrg.channel` -- fading and finite-state channel processes;
* :mod:`pfrg.region` -- slot and average rate regions, boundary estimation;
* :mod:`pfrg.scheduler` -- PF, PF-RG-LM and PF-RG-TC recursions;
* :mod:`pfrg.ode` -- mean ODE limits and rest points;
* :mod:`pfrg.oracle` -- constrained optimum, multipliers and KKT checks;
* :mod:`pfrg.harness` -- scenario files, presets and experiments.
"""

from pfrg.channel import (ChannelState, FadingChannelModel, MarkovChannelModel, RadioConfig, UeProfile,
                          mean_rss_dbm, sample_fading_db, sample_slot, shannon_rate_mbps)
from pfrg.harness import Scenario, compare_algorithms, load_preset, load_scenario, run_experiment
from pfrg.ode import MeanField, OdeTrajectory, h_bar, integrate_coupled, integrate_fixed_nu, theta_infinity
from pfrg.oracle import (InfeasibleError, PrimalDualSolution, nu_max_bound_two_ue, solve_finite_state,
                         solve_sampled_region, verify_kkt)
from pfrg.region import (FiniteStateRegion, RegionBoundaryEstimate, SlotRateRegion, argmax_linear,
                         distance_to_region, estimate_average_region)
from pfrg.scheduler import (Log1pUtility, RunRecord, SchedulerConfig, SchedulerState, TokenCounterState,
                            pf_rg_lm_step, pf_rg_tc_step, pf_step, run)

__version__ = "0.1.0"
