import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cglnoise import ComplexField, make_grid, energy, shift, to_spectrum, from_spectrum
from cglnoise.errors import ConfigurationError, GridMismatchError
from cglnoise.grid import save_field, load_field


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    n = grid.n_points
    return ComplexField(grid, rng.standard_normal(n) + 1j * rng.standard_normal(n))


def test_dt_and_frequency_spacing():
    g = make_grid(256, 20.0)
    assert g.dt == 0.078125
    assert np.isclose(g.d_omega, 2 * np.pi / 20)
    assert np.isclose(np.sort(g.omega)[1] - np.sort(g.omega)[0], 0.3141592653589793)
    assert g.dt * g.n_points == g.window


def test_omega_unique_and_nyquist():
    g = make_grid(128, 10.0)
    assert len(np.unique(g.omega)) == g.n_points
    assert np.isclose(np.abs(g.omega).max(), np.pi / g.dt)


@pytest.mark.parametrize("args", [(7, 20.0), (256, 0.0), (256, -1.0), (8.5, 1.0)])
def test_bad_grid(args):
    with pytest.raises(ConfigurationError):
        make_grid(*args)


def test_grid_immutable():
    g = make_grid(16, 1.0)
    with pytest.raises(ValueError):
        g.t[0] = 1.0
    f = ComplexField(g, np.ones(16))
    with pytest.raises(ValueError):
        f.samples[0] = 2


def test_roundtrip_and_parseval():
    g = make_grid(256, 20.0)
    f = random_field(g)
    back = from_spectrum(to_spectrum(f))
    assert np.abs(back.samples - f.samples).max() / np.abs(f.samples).max() < 1e-12
    assert abs(energy(to_spectrum(f)) - energy(f)) / energy(f) < 1e-12


def test_constant_field_zero_bin():
    g = make_grid(64, 8.0)
    spec = to_spectrum(ComplexField(g, np.full(64, 2.0 + 1j)))
    assert np.abs(spec.samples[1:]).max() < 1e-12
    assert abs(spec.samples[0]) > 1


def test_energy_examples():
    g = make_grid(1024, 40.0)
    assert energy(ComplexField(g, np.zeros(1024))) == 0
    sech = ComplexField(g, 1 / np.cosh(g.t))
    assert abs(energy(sech) - 2.0) < 1e-6
    assert np.isclose(energy(2 * sech), 4 * energy(sech), rtol=1e-14)


def test_grid_mismatch():
    a = ComplexField(make_grid(16, 1.0), np.ones(16))
    b = ComplexField(make_grid(16, 2.0), np.ones(16))
    with pytest.raises(GridMismatchError):
        a + b
    with pytest.raises(ConfigurationError):
        ComplexField(make_grid(16, 1.0), np.ones(8))


def test_shift_is_spectral_translation():
    g = make_grid(256, 80.0)
    f = ComplexField(g, 1 / np.cosh(g.t))
    moved = shift(f, 2.5)
    assert np.abs(moved.samples - 1 / np.cosh(g.t - 2.5)).max() < 1e-10
    assert np.abs(shift(moved, -2.5).samples - f.samples).max() < 1e-12


def test_save_load_roundtrip(tmp_path):
    g = make_grid(32, 5.0)
    f = random_field(g, 3)
    path = tmp_path / "field.txt"
    save_field(path, f)
    text = path.read_text()
    assert "# t re im" in text
    back = load_field(path)
    assert back.grid == g
    assert np.array_equal(back.samples, f.samples)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(8, 300), window=st.floats(0.5, 100), seed=st.integers(0, 1000))
def test_property_roundtrip_parseval(n, window, seed):
    g = make_grid(n, window)
    f = random_field(g, seed)
    assert np.abs(from_spectrum(to_spectrum(f)).samples - f.samples).max() \
        < 1e-12 * np.abs(f.samples).max() * max(1, np.log2(n))
    assert abs(energy(to_spectrum(f)) - energy(f)) <= 1e-12 * energy(f) * max(1, np.log2(n))


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(-1e3, 1e3, allow_nan=False), seed=st.integers(0, 100))
def test_property_energy_homogeneous(scale, seed):
    f = random_field(make_grid(32, 3.0), seed)
    assert np.isclose(energy(scale * f), scale ** 2 * energy(f), rtol=1e-12, atol=1e-300)
