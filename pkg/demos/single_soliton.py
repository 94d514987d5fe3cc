"""Relax a sech seed to the dissipative soliton and look at its noise budget.

Run from the repository root:  python3 demos/single_soliton.py
"""

import numpy as np

from cglnoise import ComplexField, FIG1_PARAMS, energy, find_single_soliton, make_grid, propagate
from cglnoise.observables import total_photon_noise
from cglnoise.quantum import initial_coherent_covariance, noise_rates, propagate_covariance

grid = make_grid(512, 40.0)
seed = ComplexField(grid, 1.5 / np.cosh(grid.t))
sol = find_single_soliton(FIG1_PARAMS, seed, z_relax=10.0)
print(f"peak |U| = {np.abs(sol.field.samples).max():.4f}")
print(f"energy   = {energy(sol.field):.4f}")
print(f"rotation = {sol.drift_rate:.4f} per unit z, slowest decay {sol.growth_rate:.3e}")

# where the minimum quantum noise enters: gain on the shoulders, loss elsewhere
model = noise_rates(sol.field, FIG1_PARAMS)
n_diag = np.diag(model.normal).real * grid.dt
a_diag = np.diag(model.antinormal).real * grid.dt
for k in range(grid.n_points // 2 - 12, grid.n_points // 2 + 13, 3):
    print(f"t={grid.t[k]:+.3f}  |U|^2={sol.field.intensity[k]:8.3f}  "
          f"gain {n_diag[k]:9.3f}  loss {a_diag[k]:9.3f}")

traj = propagate(sol.field, FIG1_PARAMS, 2.0, 1e-3, stride=500, rotation=sol.drift_rate,
                 velocity=sol.velocity)
states = propagate_covariance(initial_coherent_covariance(grid), traj)
for i, st in enumerate(states):
    _, fano = total_photon_noise(st, traj.field(i))
    print(f"z={st.z:.2f}  Fano={fano:.4f}  K drift={st.commutator_drift():.1e}")
