"""Finite-state channels give polyhedral (not strictly convex) rate regions.

With one channel state the region is a triangle.  Guaranteeing 150 Mbps to
the 200 Mbps UE puts the optimum on the region's slanted facet, and the exact
multiplier follows from equalising the weighted rates.  The two-state
channel shows the same on a region with a corner.

    python demos/polyhedral_regions.py
"""

import numpy as np

from pfrg.oracle import boundary_normal_cone_two_ue, nu_max_bound_two_ue, solve_finite_state

cases = {
    "single state 300/200, guarantee 150": ([[300.0, 200.0]], [1.0], [0, 150]),
    "two states 400/100 and 300/200, guarantee 120": ([[400.0, 100.0], [300.0, 200.0]], [0.5, 0.5], [0, 120]),
}
for title, (states, pi, tmin) in cases.items():
    sol = solve_finite_state(states, pi, tmin)
    normals, corner = boundary_normal_cone_two_ue((states, pi), sol.theta_star)
    bound = nu_max_bound_two_ue(sol, normals)
    print(title)
    print(f"  theta* = {np.round(sol.theta_star, 4)}  nu* = {np.round(sol.nu_star, 5)}")
    print(f"  time share of UE1 per state: {np.round(sol.fractions[:, 1], 4)}")
    print(f"  optimum at a {'corner' if corner else 'facet'}; multiplier bound {bound:.5f} >= {sol.nu_star[1]:.5f}")
    print(f"  worst KKT residual {max(sol.residuals.values()):.1e}")

# unconstrained optimum of the two-state region sits exactly on its corner
sol = solve_finite_state([[400.0, 100.0], [300.0, 200.0]], [0.5, 0.5], [0, 0])
print(f"two-state PF optimum {np.round(sol.theta_star, 4)}")
