"""The three routes to a variance agree: forward moments, adjoint, Monte Carlo.

Run from the repository root:  python3 demos/oracles.py
"""

import numpy as np

from cglnoise import ComplexField, FIG1_PARAMS, find_single_soliton, make_grid, propagate
from cglnoise.observables import total_projection
from cglnoise.quantum import (backpropagate_projection, initial_coherent_covariance,
                              monte_carlo_oracle, propagate_covariance)

grid = make_grid(64, 10.0)
sol = find_single_soliton(FIG1_PARAMS, ComplexField(grid, 3 / np.cosh(2 * grid.t)), 5.0)
traj = propagate(sol.field, FIG1_PARAMS, 0.4, 1e-3, stride=100, rotation=sol.drift_rate,
                 velocity=sol.velocity)
phi = total_projection(traj.final).real

forward = propagate_covariance(initial_coherent_covariance(grid), traj)[-1].variance(phi)
back = backpropagate_projection(phi, traj)
mc = monte_carlo_oracle(traj, 10000, seed=1234)
est, err = mc.projection_covariance(phi)

print(f"forward      {forward:.6f}")
print(f"adjoint      {back['total']:.6f}  (input {back['input']:.4f} + noise {back['noise']:.4f})")
print(f"Monte Carlo  {est:.6f} +/- {err:.6f}  ({(est - forward) / err:+.2f} sigma)")
