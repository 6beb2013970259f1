"""PF-RG-LM with b << a, PF-RG-LM with a = b, and the token-counter baseline.

All three meet the 60 Mbps promise on average.  They differ in how noisy the
index bias is and in how close the other UE gets to its optimal throughput.
Pass ``right`` to use the ten-times smaller steps.

    python demos/compare_algorithms.py [left|right]
"""

import sys
import warnings

from pfrg import harness

side = sys.argv[1] if len(sys.argv) > 1 else "left"
names = [f"fig3-{side}", f"fig3-{side}-lm-equal", f"fig3-{side}-tc"]
with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # a = b is deliberate here
    scenarios = [harness.load_preset(n) for n in names]

sol = harness.solve_oracle(scenarios[0])
print(f"oracle optimum {sol.theta_star.round(2)} Mbps, multiplier {sol.nu_star[1]:.4f}\n")
print(harness.format_table(harness.compare_algorithms(scenarios, sol)))
