"""Three views of the same operating point.

1. The scheduler's long-run averages.
2. The rest point of the mean ODE: fast throughput flow inside a slow bias flow.
3. The primal-dual optimum of the utility problem with the guarantees as constraints.

They agree to within a Mbps, and the ODE bias lands on the optimal multiplier.

    python demos/oracle_ode_crosscheck.py [preset]
"""

import sys

import numpy as np

from pfrg import harness

sc = harness.resolve(sys.argv[1] if len(sys.argv) > 1 else "fig3-left")
res = harness.run_experiment(sc, region=False, write=False)

print(f"{sc.name}")
print(f"  scheduler  theta {np.round(res.run.tail_mean_theta, 3)}  bias {np.round(res.run.tail_mean_bias, 5)}")
print(f"  ODE        theta {np.round(res.ode.theta_final, 3)}  nu   {np.round(res.ode.nu_final, 5)}"
      f"  (t = {res.ode.times[-1]:.4f}, converged {res.ode.converged})")
print(f"  oracle     theta {np.round(res.oracle.theta_star, 3)}  nu   {np.round(res.oracle.nu_star, 5)}")
print("  KKT residuals " + ", ".join(f"{k} {v:.1e}" for k, v in res.oracle.residuals.items()))
for k, v in res.flags.items():
    print(f"  {'PASS' if v else 'FAIL'}  {k}")
