"""Periodic time grid, spectral transforms and the complex field container.

The retarded-time axis is sampled uniformly on ``[-T/2, T/2)`` with
``t_k = (k - N/2) * dt`` so that ``t = 0`` is always a grid point.  Angular
frequencies are kept in FFT (transform) order.

Spectra use the continuous-transform normalization ``F(w) = dt * fft(f)``,
for which Parseval reads ``sum |f|^2 dt = sum |F|^2 dw / (2 pi)``.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError, GridMismatchError

MIN_POINTS = 8

__all__ = [
    "TimeGrid",
    "ComplexField",
    "make_grid",
    "to_spectrum",
    "from_spectrum",
    "energy",
    "shift",
    "save_field",
    "load_field",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform periodic time grid and its conjugate frequency grid."""

    n_points: int
    window: float
    dt: float = dc_field(init=False)
    t: np.ndarray = dc_field(init=False, repr=False)
    omega: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise ConfigurationError(
                f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points!r}")
        if not np.isfinite(self.window) or self.window <= 0:
            raise ConfigurationError(f"window must be positive, got {self.window!r}")
        n = int(self.n_points)
        dt = float(self.window) / n
        t = (np.arange(n) - n // 2) * dt
        omega = 2 * np.pi * np.fft.fftfreq(n, dt)
        t.flags.writeable = False
        omega.flags.writeable = False
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "window", float(self.window))
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "omega", omega)

    @property
    def d_omega(self):
        return 2 * np.pi / self.window

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.n_points == other.n_points and self.window == other.window

    def __hash__(self):
        return hash((self.n_points, self.window))

    def check_same(self, other):
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


def make_grid(n_points, window):
    """Build a :class:`TimeGrid` with ``n_points`` samples spanning ``window``."""
    return TimeGrid(n_points, window)


class ComplexField:
    """Complex envelope sampled on a :class:`TimeGrid`.

    ``domain`` is ``"time"`` for ordinary fields and ``"frequency"`` for the
    output of :func:`to_spectrum`.  Samples are stored read-only.
    """

    __slots__ = ("grid", "samples", "domain")

    def __init__(self, grid, samples, domain="time"):
        samples = np.array(samples, dtype=complex)
        if samples.shape != (grid.n_points,):
            raise ConfigurationError(
                f"expected {grid.n_points} samples, got shape {samples.shape}")
        if domain not in ("time", "frequency"):
            raise ConfigurationError(f"unknown domain {domain!r}")
        samples.flags.writeable = False
        self.grid = grid
        self.samples = samples
        self.domain = domain

    def __repr__(self):
        return (f"ComplexField(grid={self.grid!r}, domain={self.domain!r}, "
                f"peak={np.abs(self.samples).max():.4g})")

    def __len__(self):
        return self.grid.n_points

    @property
    def intensity(self):
        return np.abs(self.samples) ** 2

    def with_samples(self, samples):
        return ComplexField(self.grid, samples, self.domain)

    def __mul__(self, scalar):
        return self.with_samples(self.samples * scalar)

    __rmul__ = __mul__

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return self.with_samples(self.samples - other.samples)


def to_spectrum(field):
    if field.domain != "time":
        raise ConfigurationError("to_spectrum expects a time-domain field")
    return ComplexField(field.grid, field.grid.dt * np.fft.fft(field.samples), "frequency")


def from_spectrum(spec):
    if spec.domain != "frequency":
        raise ConfigurationError("from_spectrum expects a frequency-domain field")
    return ComplexField(spec.grid, np.fft.ifft(spec.samples) / spec.grid.dt, "time")


def energy(field):
    """Discrete ``integral |U|^2 dt`` (or its spectral counterpart)."""
    weight = field.grid.dt if field.domain == "time" else field.grid.d_omega / (2 * np.pi)
    return float(np.sum(np.abs(field.samples) ** 2) * weight)


def shift(field, tau):
    """Return ``U(t - tau)``, applied spectrally (exact on the periodic grid)."""
    g = field.grid
    factor = np.exp(-1j * g.omega * tau)
    if g.n_points % 2 == 0:
        # the Nyquist bin stands for cos, so a real shift keeps real fields real
        factor[g.n_points // 2] = np.cos(np.pi * tau / g.dt)
    spec = np.fft.fft(field.samples) * factor
    return field.with_samples(np.fft.ifft(spec))


def save_field(path, field):
    """Write a field as a ``# t re im`` text table at full double precision."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# n_points={field.grid.n_points} window={field.grid.window!r}\n")
        fh.write("# t re im\n")
        for t, u in zip(field.grid.t, field.samples):
            fh.write(f"{float(t)!r} {float(u.real)!r} {float(u.imag)!r}\n")


def load_field(path):
    header = {}
    rows = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, value = token.split("=", 1)
                        header[key] = value
                continue
            if line.strip():
                rows.append([float(x) for x in line.split()])
    data = np.array(rows)
    n = int(header.get("n_points", len(data)))
    if "window" in header:
        window = float(header["window"])
    else:
        window = n * (data[1, 0] - data[0, 0])
    return ComplexField(TimeGrid(n, window), data[:, 1] + 1j * data[:, 2])
