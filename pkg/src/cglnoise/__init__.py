"""Quantum photon-number correlations of bound dissipative soliton pairs.

Classical fields follow the cubic-quintic complex Ginzburg-Landau equation;
quantum fluctuations are linearized about them, driven by the minimum
commutator-preserving noise, and read out as photon-number statistics.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .grid import ComplexField, TimeGrid, make_grid, energy, shift, to_spectrum, from_spectrum
from .propagator import CgleParams, FIG1_PARAMS, Trajectory, cgle_step, propagate
from .solitons import (BoundPair, PairClass, StationaryProfile, find_single_soliton, make_pair,
                       measure_pair, relax_pair)
from .quantum import (CovarianceState, initial_coherent_covariance, linearized_generator,
                      monte_carlo_oracle, noise_rates, propagate_covariance,
                      backpropagate_projection)
from .observables import (c12, eta_matrix, make_partition, normally_ordered_covariance,
                          slot_projection, total_photon_noise)
