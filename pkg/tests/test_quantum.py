from dataclasses import replace

import numpy as np
import pytest

from cglnoise import CgleParams, ComplexField, FIG1_PARAMS, make_grid, propagate
from cglnoise.errors import FidelityError
from cglnoise.observables import c12, make_partition, total_photon_noise, total_projection
from cglnoise.propagator import nonlinear_rhs
from cglnoise.quantum import (CovarianceState, backpropagate_projection, canonical_commutator,
                              initial_coherent_covariance, linearized_generator,
                              monte_carlo_oracle, noise_rates, propagate_covariance, step_map)

NLSE = CgleParams(D=1.0)
LOSS = CgleParams(delta=-0.01)


def random_field(grid, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    n = grid.n_points
    return ComplexField(grid, scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))


def full_rhs(u, params):
    grid = u.grid
    lin = np.fft.ifft(params.linear_symbol(grid.omega) * np.fft.fft(u.samples))
    return lin + nonlinear_rhs(u.samples, params)


def total_map(traj):
    s = np.eye(2 * traj.grid.n_points)
    for i in range(len(traj) - 1):
        m = step_map(traj.field(i), traj.params, traj.dz, traj.rotation, traj.velocity,
                     check=False)
        s = m.power(traj.stride).S @ s
    return s


@pytest.fixture(scope="module")
def grid():
    return make_grid(32, 8.0)


@pytest.fixture(scope="module")
def single_traj(small_soliton):
    return propagate(small_soliton.field, FIG1_PARAMS, 0.4, 1e-3, stride=100,
                     rotation=small_soliton.drift_rate, velocity=small_soliton.velocity)


# generator

def test_generator_on_vacuum_is_linear_symbol(grid):
    gen = linearized_generator(ComplexField(grid, np.zeros(grid.n_points)), FIG1_PARAMS)
    for k in (0, 3, grid.n_points // 2, grid.n_points - 5):
        wave = np.exp(1j * grid.omega[k] * grid.t)
        expect = (-0.5j * grid.omega[k] ** 2 + FIG1_PARAMS.delta
                  - FIG1_PARAMS.beta * grid.omega[k] ** 2) * wave
        assert np.abs(gen.apply_field(wave) - expect).max() < 1e-12


@pytest.mark.parametrize("params", [NLSE, CgleParams(D=-1.0, nu=0.3)])
def test_conservative_generator_preserves_commutator(grid, params):
    gen = linearized_generator(random_field(grid, 1), params)
    assert np.abs(gen.commutator_defect()).max() * grid.dt < 1e-12


def test_dissipative_generator_breaks_commutator(grid):
    gen = linearized_generator(random_field(grid, 1), FIG1_PARAMS)
    assert np.abs(gen.commutator_defect()).max() * grid.dt > 1e-3


def test_generator_slope(grid):
    u0 = random_field(grid, 2)
    v = random_field(grid, 3)
    mv = linearized_generator(u0, FIG1_PARAMS).apply_field(v.samples)
    base = full_rhs(u0, FIG1_PARAMS)
    defects = []
    for eps in (1e-6, 2e-6):
        fd = (full_rhs(u0 + eps * v, FIG1_PARAMS) - base) / eps
        defects.append(np.abs(fd - mv).max() / np.abs(mv).max())
    assert defects[0] < 1e-5
    # first-order consistency: the defect is linear in the step
    assert 1.8 < defects[1] / defects[0] < 2.2


# noise

def test_conservative_noise_vanishes(grid):
    model = noise_rates(random_field(grid, 4), NLSE)
    assert not np.any(model.normal) and not np.any(model.antinormal)
    m = step_map(random_field(grid, 4), NLSE, 1e-3)
    assert not np.any(m.W)


def test_homogeneous_loss_is_vacuum_in_coupling(grid):
    model = noise_rates(ComplexField(grid, np.zeros(grid.n_points)), LOSS)
    assert np.abs(model.normal).max() < 1e-12 / grid.dt
    assert np.allclose(model.antinormal, 0.02 * np.eye(grid.n_points) / grid.dt,
                       rtol=0, atol=1e-12 / grid.dt)


def test_noise_support_follows_local_gain(small_soliton):
    # with no filtering the net-gain operator is diagonal in time
    params = replace(FIG1_PARAMS, beta=0.0)
    field = small_soliton.field
    i0 = field.intensity
    local = 2 * (params.delta + 2 * params.epsilon * i0 + 3 * params.mu * i0 ** 2)
    model = noise_rates(field, params)
    dt = field.grid.dt
    assert np.allclose(model.normal, np.diag(np.clip(local, 0, None)) / dt, atol=1e-10 / dt)
    assert np.allclose(model.antinormal, np.diag(np.clip(-local, 0, None)) / dt, atol=1e-10 / dt)
    # quintic saturation makes the peak itself lossy: gain lives on the shoulders
    gain = local > 0
    assert gain.any() and local[np.argmax(i0)] < 0 and local[0] < 0
    assert not gain[np.argmax(i0)] and i0[gain].max() < i0.max()


def test_noise_is_minimal_and_consistent(small_soliton):
    model = noise_rates(small_soliton.field, FIG1_PARAMS)
    dt = small_soliton.field.grid.dt
    g = model.gain
    assert np.allclose(g, g.conj().T)
    for m in (model.normal, model.antinormal):
        assert np.linalg.eigvalsh(m)[0] > -1e-10 * np.abs(g).max() / dt
    assert np.allclose(model.antinormal - model.normal.T, model.commutator_injection,
                       atol=1e-10 / dt)
    trace_abs = np.abs(np.linalg.eigvalsh(g)).sum() / dt
    assert np.isclose(np.trace(model.normal + model.antinormal).real, trace_abs, rtol=1e-10)
    # the gain channel lives on the pulse, not in the wings
    n_diag = np.diag(model.normal).real
    assert n_diag.max() > 10 * n_diag[0]


# moments

def test_coherent_state(grid):
    st = initial_coherent_covariance(grid)
    assert not np.any(st.P) and not np.any(st.Q)
    assert np.allclose(st.K, np.eye(grid.n_points) / grid.dt, rtol=0, atol=1e-15 / grid.dt)
    assert st.commutator_drift() < 1e-15
    assert abs(st.physicality()) < 1e-12
    proj = total_projection(random_field(grid, 5))
    assert total_photon_noise(st, random_field(grid, 5))[1] == pytest.approx(1.0, abs=1e-14)
    assert st.variance(proj.real) > 0


@pytest.mark.parametrize("rotation,exact", [(0.0, True), (0.5, False)])
def test_conservative_soliton_stays_at_shot_noise(rotation, exact):
    # frozen snapshot maps are only valid where the background is stationary,
    # which for sech is the frame rotating at 1/2
    g = make_grid(64, 16.0)
    sech = ComplexField(g, 1 / np.cosh(g.t))
    traj = propagate(sech, NLSE, 0.4, 1e-3, stride=100, rotation=rotation)
    states = propagate_covariance(initial_coherent_covariance(g), traj, exact=exact)
    for i, st in enumerate(states):
        _, fano = total_photon_noise(st, traj.field(i))
        assert abs(fano - 1) < 1e-8
    assert states[-1].commutator_drift() < 1e-12


def test_pure_loss_keeps_coherent(grid):
    # the Kerr term is always present, so pure loss needs a vanishing background
    traj = propagate(ComplexField(grid, np.zeros(grid.n_points)), LOSS, 0.4, 1e-3, stride=100)
    states = propagate_covariance(initial_coherent_covariance(grid), traj)
    scale = 1 / grid.dt
    for st in states:
        assert np.abs(st.P).max() < 1e-12 * scale and np.abs(st.Q).max() < 1e-12 * scale
    weak = ComplexField(grid, 1e-3 / np.cosh(grid.t))
    assert total_photon_noise(states[-1], weak)[1] == pytest.approx(1.0, abs=1e-12)


def test_out_of_phase_anticorrelated(out_of_phase):
    traj = propagate(out_of_phase.field, FIG1_PARAMS, 0.4, 1e-3, stride=200,
                     rotation=out_of_phase.rotation, velocity=out_of_phase.velocity)
    grid = traj.grid
    st = propagate_covariance(initial_coherent_covariance(grid), traj)[-1]
    assert c12(st, traj.final, make_partition(traj.final)).covariance < 0


def test_moments_stay_physical(single_traj):
    states = propagate_covariance(initial_coherent_covariance(single_traj.grid), single_traj)
    for st in states:
        assert st.physicality() > -1e-9
        assert st.closure == 0.0
        assert st.commutator_drift() < 1e-10
    assert total_photon_noise(states[-1], single_traj.final)[1] > 1


def test_exact_and_frozen_agree_on_stationary_background(single_traj):
    c0 = initial_coherent_covariance(single_traj.grid)
    frozen = propagate_covariance(c0, single_traj)[-1]
    exact = propagate_covariance(c0, single_traj, exact=True)[-1]
    assert np.abs(frozen.sym - exact.sym).max() < 1e-6 * np.abs(exact.sym).max()


def test_fidelity_error(single_traj):
    with pytest.raises(FidelityError):
        propagate_covariance(initial_coherent_covariance(single_traj.grid), single_traj,
                             fidelity_limit=1e-30)


def test_step_map_power_matches_sequence(small_soliton):
    m = step_map(small_soliton.field, FIG1_PARAMS, 1e-3, small_soliton.drift_rate)
    seq = m
    for _ in range(4):
        seq = seq.then(m)
    fast = m.power(5)
    assert np.allclose(fast.S, seq.S, rtol=0, atol=1e-13)
    assert np.allclose(fast.W, seq.W, rtol=0, atol=1e-12 * np.abs(seq.W).max())
    assert fast.length == pytest.approx(5e-3)


def test_step_map_commutator_defect_is_exact(small_soliton):
    m = step_map(small_soliton.field, FIG1_PARAMS, 1e-3, small_soliton.drift_rate)
    can = canonical_commutator(small_soliton.field.grid)
    assert np.allclose(m.S @ can @ m.S.T + m.Dc, can, rtol=0, atol=1e-12 * np.abs(can).max())


def test_covariance_roundtrip(tmp_path, single_traj):
    st = propagate_covariance(initial_coherent_covariance(single_traj.grid), single_traj)[-1]
    st.save(tmp_path / "cov.npz", label="single")
    back = CovarianceState.load(tmp_path / "cov.npz")
    assert back.z == st.z and back.grid == st.grid
    assert np.array_equal(back.sym, st.sym) and np.array_equal(back.commutator, st.commutator)


# oracles

def test_monte_carlo_without_noise_is_deterministic_map():
    g = make_grid(16, 8.0)
    traj = propagate(ComplexField(g, 1 / np.cosh(g.t)), NLSE, 0.05, 1e-3, stride=10)
    mc = monte_carlo_oracle(traj, 300, seed=7)
    s = total_map(traj)
    expect = s @ mc.sym[0] @ s.T
    assert np.abs(mc.sym[-1] - expect).max() < 1e-10 * np.abs(expect).max()


def test_monte_carlo_is_reproducible():
    g = make_grid(16, 8.0)
    traj = propagate(ComplexField(g, 1 / np.cosh(g.t)), FIG1_PARAMS, 0.01, 1e-3, stride=5)
    a = monte_carlo_oracle(traj, 40, seed=3, block_size=10)
    b = monte_carlo_oracle(traj, 40, seed=3, block_size=10)
    assert np.array_equal(a.samples, b.samples)


def test_monte_carlo_loss_channel():
    g = make_grid(16, 8.0)
    traj = propagate(ComplexField(g, 1 / np.cosh(g.t)), CgleParams(delta=-0.5), 1.0, 1e-2,
                     stride=25)
    mc = monte_carlo_oracle(traj, 10000, seed=11)
    vacuum = 1 / (4 * g.dt)
    for j in (0, 5, 16 + 3):
        phi = np.zeros(2 * g.n_points)
        phi[j] = 1.0
        mean, err = mc.projection_covariance(phi)
        assert abs(mean - vacuum) < 3 * err


def test_backpropagation_is_adjoint():
    g = make_grid(16, 8.0)
    traj = propagate(ComplexField(g, 1 / np.cosh(g.t)), NLSE, 0.05, 1e-3, stride=10)
    rng = np.random.default_rng(0)
    phi = rng.standard_normal(2 * g.n_points)
    v = rng.standard_normal(2 * g.n_points)
    back = backpropagate_projection(phi, traj)
    lhs, rhs = back["phi0"] @ v, phi @ (total_map(traj) @ v)
    assert abs(lhs - rhs) < 1e-10 * np.abs(phi).sum() * np.abs(v).max()
    assert back["noise"] == 0.0


def test_backpropagation_loss_closed_form(grid):
    field = ComplexField(grid, np.zeros(grid.n_points))
    traj = propagate(field, LOSS, 1.0, 1e-2, stride=20)
    phi = np.ones(2 * grid.n_points)
    back = backpropagate_projection(phi, traj)
    c0 = phi @ initial_coherent_covariance(grid).sym @ phi
    assert back["input"] == pytest.approx(np.exp(-0.02) * c0, rel=1e-12)
    # the trapezoid noise rule matches the exact vacuum in-coupling to O(dz^3) per step
    assert back["total"] == pytest.approx(c0, rel=1e-9)


def test_backpropagation_matches_forward(single_traj):
    st = propagate_covariance(initial_coherent_covariance(single_traj.grid), single_traj)[-1]
    phi = total_projection(single_traj.final).real
    back = backpropagate_projection(phi, single_traj)
    assert abs(back["total"] - st.variance(phi)) < 1e-6 * st.variance(phi)
