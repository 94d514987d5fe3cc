import numpy as np
import pytest

from cglnoise import CgleParams, ComplexField, FIG1_PARAMS, cgle_step, energy, make_grid, \
    propagate, shift
from cglnoise.errors import ConfigurationError, DivergenceError
from cglnoise.propagator import Trajectory, momentum, step_tangent, nonlinear_rhs

NLSE = CgleParams(D=1.0)


@pytest.fixture(scope="module")
def grid():
    return make_grid(256, 40.0)


def test_params_predicates():
    assert NLSE.conservative()
    assert not FIG1_PARAMS.conservative()
    assert CgleParams(nu=0.3).conservative()
    with pytest.warns(UserWarning):
        p = CgleParams(D=0.5)
    assert p.nonstandard_dispersion
    with pytest.raises(ConfigurationError):
        CgleParams(delta=float("nan"))


def test_nonlinear_term_signs():
    u = np.array([2.0 + 0j])
    p = CgleParams(epsilon=0.1, mu=0.2, nu=0.3)
    assert np.allclose(nonlinear_rhs(u, p), (1j + 0.1) * 4 * u + (0.2 + 0.3j) * 16 * u)


def test_nlse_soliton_one_step(grid):
    f = ComplexField(grid, 1 / np.cosh(grid.t))
    out = cgle_step(f, NLSE, 1e-3)
    assert np.abs(np.abs(out.samples) - np.abs(f.samples)).max() < 1e-8
    # phase advances as exp(i z / 2)
    assert np.isclose(np.angle(out.samples[grid.n_points // 2]), 0.5e-3, atol=1e-8)


def test_zero_field(grid):
    f = ComplexField(grid, np.zeros(grid.n_points))
    assert np.array_equal(cgle_step(f, FIG1_PARAMS, 1e-3).samples, f.samples)


def test_linear_loss_flat(grid):
    f = ComplexField(grid, np.full(grid.n_points, 0.7 + 0.1j))
    out = cgle_step(f, CgleParams(delta=-0.01, epsilon=0, beta=0), 1e-3)
    # the Kerr term only rotates the phase of a flat field
    assert np.abs(np.abs(out.samples) / np.abs(f.samples) - np.exp(-1e-5)).max() < 1e-12


def test_conservative_energy_and_momentum(grid):
    f = ComplexField(grid, 1.2 / np.cosh(1.2 * grid.t) * np.exp(0.3j * grid.t))
    traj = propagate(f, NLSE, 1.0, 1e-3, stride=100)
    e0, p0 = energy(f), momentum(f)
    for i in range(len(traj)):
        assert abs(energy(traj.field(i)) - e0) / e0 < 1e-10
        assert abs(momentum(traj.field(i)) - p0) / abs(p0) < 1e-10


def test_linear_decay_energy():
    g = make_grid(64, 20.0)
    f = ComplexField(g, 0.5 / np.cosh(g.t))
    traj = propagate(f, CgleParams(delta=-0.01), 10.0, 1e-3, stride=10000)
    assert abs(traj.final_energy / energy(f) - np.exp(-0.2)) < 1e-8


def test_second_order_splitting(grid):
    f = ComplexField(grid, 1.5 / np.cosh(grid.t))
    ends = [propagate(f, FIG1_PARAMS, 0.2, dz, stride=int(round(0.2 / dz))).final.samples
            for dz in (4e-3, 2e-3, 1e-3, 5e-4)]
    errs = [np.abs(a - ends[-1]).max() for a in ends[:-1]]
    # against the finest run the expected ratio is (16 - 1/4) / (4 - 1/4) = 4.2
    ratio = errs[0] / errs[1]
    assert 3.5 < ratio < 5.0


def test_translation_commutes(grid):
    f = ComplexField(grid, 2 / np.cosh(1.5 * grid.t) + 0.5 / np.cosh(grid.t - 3))
    tau = 17 * grid.dt  # whole samples, so the pointwise substep commutes exactly
    a = shift(propagate(f, FIG1_PARAMS, 0.1, 1e-3, stride=100).final, tau)
    b = propagate(shift(f, tau), FIG1_PARAMS, 0.1, 1e-3, stride=100).final
    assert np.abs(a.samples - b.samples).max() < 1e-10


def test_gauge_covariance(grid):
    f = ComplexField(grid, 2 / np.cosh(1.5 * grid.t))
    phase = np.exp(0.7j)
    a = propagate(f, FIG1_PARAMS, 0.1, 1e-3, stride=10)
    b = propagate(f * phase, FIG1_PARAMS, 0.1, 1e-3, stride=10)
    assert np.abs(a.samples * phase - b.samples).max() < 1e-12


def test_divergence_reports_z():
    g = make_grid(32, 10.0)
    f = ComplexField(g, 3 / np.cosh(g.t))
    with pytest.raises(DivergenceError) as info:
        propagate(f, CgleParams(delta=0.0, epsilon=5.0, mu=5.0), 5.0, 1e-2)
    assert 0 < info.value.z <= 5.0


def test_step_count_contract(grid):
    f = ComplexField(grid, np.zeros(grid.n_points))
    with pytest.raises(ConfigurationError):
        propagate(f, NLSE, 1.0, 0.3)
    with pytest.raises(ConfigurationError):
        propagate(f, NLSE, 1.0, 1e-2, stride=7)
    with pytest.raises(ConfigurationError):
        cgle_step(f, NLSE, 0.0)
    assert len(propagate(f, NLSE, 0.0, 1e-3)) == 1


def test_trajectory_replay_and_storage(tmp_path, grid):
    f = ComplexField(grid, 1.5 / np.cosh(grid.t))
    full = propagate(f, FIG1_PARAMS, 0.02, 1e-3)
    strided = propagate(f, FIG1_PARAMS, 0.02, 1e-3, stride=5)
    assert np.allclose(np.diff(strided.z), 5e-3)
    replayed = strided.replay(1)
    for k, fld in enumerate(replayed):
        assert np.array_equal(fld.samples, full.samples[5 + k])
    strided.save(tmp_path / "traj.npz")
    back = Trajectory.load(tmp_path / "traj.npz")
    assert np.array_equal(back.samples, strided.samples)
    assert back.manifest() == strided.manifest()


def test_step_tangent_matches_finite_difference(grid):
    f = ComplexField(grid, 2 / np.cosh(1.3 * grid.t) * np.exp(0.2j * grid.t))
    phi1, phi2 = step_tangent(f, FIG1_PARAMS, 1e-3, rotation=3.0, velocity=0.1)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
    h = 1e-6
    fd = (cgle_step(f + ComplexField(grid, h * v), FIG1_PARAMS, 1e-3, 3.0, 0.1).samples
          - cgle_step(f + ComplexField(grid, -h * v), FIG1_PARAMS, 1e-3, 3.0, 0.1).samples) / (2 * h)
    assert np.abs(phi1 @ v + phi2 @ np.conj(v) - fd).max() < 1e-8


def test_stationarity_metric_reported(soliton):
    traj = propagate(soliton.field, FIG1_PARAMS, 1.0, 1e-3, stride=1000,
                     rotation=soliton.drift_rate)
    assert traj.stationarity < 1e-6
