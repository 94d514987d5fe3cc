"""Bound soliton pairs: separation, C12 build-up and the slot correlation matrix.

Run from the repository root:  python3 demos/pair_correlations.py
A few minutes on one core; set Z below to shorten it.
"""

import numpy as np

from cglnoise import ComplexField, FIG1_PARAMS, find_single_soliton, make_grid, make_pair, \
    propagate, relax_pair
from cglnoise.observables import c12, eta_matrix, make_partition
from cglnoise.quantum import initial_coherent_covariance, propagate_covariance

Z = 2.0

grid = make_grid(512, 40.0)
sol = find_single_soliton(FIG1_PARAMS, ComplexField(grid, 1.5 / np.cosh(grid.t)), 10.0)

for name, theta in (("in-phase", 0.0), ("out-of-phase", np.pi)):
    pair = relax_pair(make_pair(sol, 1.23, theta), FIG1_PARAMS, z_relax=1.0)
    print(f"{name}: rho={pair.rho:.6f} theta={pair.theta:.4f} "
          f"stationarity={pair.stationarity:.1e}")
    traj = propagate(pair.field, FIG1_PARAMS, Z, 1e-3, stride=200, rotation=pair.rotation,
                     velocity=pair.velocity)
    states = propagate_covariance(initial_coherent_covariance(grid), traj)
    part = make_partition(pair.field, 0.3)
    for i, st in enumerate(states):
        if i % 2 == 0:
            print(f"  z={st.z:.1f}  C12={c12(st, traj.field(i), part).value:+.4f}")
    eta = eta_matrix(states[2], traj.field(2), part)
    keep = ~eta.flagged
    print(f"  eta at z={eta.z:.1f}: {keep.sum()} active slots, "
          f"cross-block mean {eta.cross_block_mean():+.4f}")
    # a compact view of the active block, one character per entry
    block = eta.values[np.ix_(keep, keep)]
    for row in block:
        print("   " + "".join("+" if x > 0.02 else "-" if x < -0.02 else "." for x in row))
