"""Classical split-step integration of the cubic-quintic Ginzburg-Landau equation.

The equation is integrated in the form

    U_z = [i D/2 + beta] U_tt + delta U + (i + eps) |U|^2 U + (mu + i nu) |U|^4 U

with Strang splitting: half a linear step applied in the spectral domain, a
full pointwise nonlinear step integrated with classical RK4, then the second
linear half step.  All steps may be taken in a frame rotating at angular rate
``rotation`` and moving at group-delay ``velocity``; both enter the linear
symbol as ``-i*rotation + i*velocity*omega`` and are unitary.
"""

from dataclasses import dataclass, asdict
import json
import math
import warnings

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .grid import ComplexField, TimeGrid, energy

__all__ = [
    "CgleParams",
    "FIG1_PARAMS",
    "Trajectory",
    "cgle_step",
    "propagate",
    "momentum",
    "nonlinear_rhs",
    "step_tangent",
    "step_jacobian",
    "real_block",
]

TRAJECTORY_FORMAT = "cglnoise-trajectory/1"


@dataclass(frozen=True)
class CgleParams:
    """The six coefficients of the equation (dispersion sign, gains, filtering)."""

    D: float = 1.0
    delta: float = 0.0
    epsilon: float = 0.0
    beta: float = 0.0
    mu: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ConfigurationError(f"parameter {name} must be finite, got {value!r}")
        if self.D not in (1.0, -1.0):
            warnings.warn(f"dispersion coefficient D={self.D} is not +/-1", stacklevel=3)

    @property
    def nonstandard_dispersion(self):
        return self.D not in (1.0, -1.0)

    def conservative(self):
        return self.delta == 0 and self.epsilon == 0 and self.beta == 0 and self.mu == 0

    @property
    def cubic(self):
        return 1j + self.epsilon

    @property
    def quintic(self):
        return self.mu + 1j * self.nu

    def as_dict(self):
        return asdict(self)

    def linear_symbol(self, omega, rotation=0.0, velocity=0.0):
        """Per-mode rate of the linear part, including frame terms."""
        w2 = omega ** 2
        return (-0.5j * self.D * w2 + self.delta - self.beta * w2
                - 1j * rotation + 1j * velocity * omega)


FIG1_PARAMS = CgleParams(D=1.0, delta=-0.01, epsilon=1.8, beta=0.5, mu=-0.05, nu=0.0)


def nonlinear_rhs(u, params):
    intensity = u.real ** 2 + u.imag ** 2
    return (params.cubic * intensity + params.quintic * intensity ** 2) * u


def _nonlinear_derivative(u, d, params):
    # real-linear derivative of nonlinear_rhs at u in direction d
    c1, c2 = params.cubic, params.quintic
    intensity = u.real ** 2 + u.imag ** 2
    u2 = u * u
    return ((2 * c1 * intensity + 3 * c2 * intensity ** 2) * d
            + (c1 + 2 * c2 * intensity) * u2 * np.conj(d))


def _rk4(u, params, h):
    k1 = nonlinear_rhs(u, params)
    k2 = nonlinear_rhs(u + 0.5 * h * k1, params)
    k3 = nonlinear_rhs(u + 0.5 * h * k2, params)
    k4 = nonlinear_rhs(u + h * k3, params)
    return u + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_coefficients(u, params, h):
    """Pointwise (a, b) with d_out = a*d + b*conj(d) for one RK4 substep."""
    k1 = nonlinear_rhs(u, params)
    u2 = u + 0.5 * h * k1
    k2 = nonlinear_rhs(u2, params)
    u3 = u + 0.5 * h * k2
    k3 = nonlinear_rhs(u3, params)
    u4 = u + h * k3
    out = []
    for d in (np.ones_like(u), 1j * np.ones_like(u)):
        d1 = _nonlinear_derivative(u, d, params)
        d2 = _nonlinear_derivative(u2, d + 0.5 * h * d1, params)
        d3 = _nonlinear_derivative(u3, d + 0.5 * h * d2, params)
        d4 = _nonlinear_derivative(u4, d + h * d3, params)
        out.append(d + (h / 6) * (d1 + 2 * d2 + 2 * d3 + d4))
    one, eye = out
    return 0.5 * (one - 1j * eye), 0.5 * (one + 1j * eye)


class _Stepper:
    """Array-level step kernel with the half-step spectral factor cached."""

    def __init__(self, grid, params, dz, rotation=0.0, velocity=0.0):
        if not dz > 0:
            raise ConfigurationError(f"dz must be positive, got {dz!r}")
        self.grid = grid
        self.params = params
        self.dz = float(dz)
        self.rotation = float(rotation)
        self.velocity = float(velocity)
        self.half = np.exp(0.5 * self.dz * params.linear_symbol(grid.omega, rotation, velocity))

    def linear_half(self, u):
        return np.fft.ifft(self.half * np.fft.fft(u))

    def __call__(self, u):
        w = self.linear_half(u)
        w = _rk4(w, self.params, self.dz)
        return self.linear_half(w)

    def coefficients(self, u):
        """Midpoint field and pointwise tangent coefficients of the nonlinear substep."""
        w = self.linear_half(u)
        a, b = _rk4_coefficients(w, self.params, self.dz)
        return w, a, b

    def half_matrix(self):
        n = self.grid.n_points
        return np.fft.ifft(self.half[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)


def cgle_step(field, params, dz, rotation=0.0, velocity=0.0):
    """Advance ``field`` by one symmetric split step of length ``dz``."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = _Stepper(field.grid, params, dz, rotation, velocity)(field.samples)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(dz)
    return field.with_samples(out)


def step_tangent(field, params, dz, rotation=0.0, velocity=0.0):
    """Dense complex matrices ``(phi1, phi2)`` of the linearized step.

    A perturbation ``v`` of the input maps to ``phi1 @ v + phi2 @ conj(v)``.
    """
    stepper = _Stepper(field.grid, params, dz, rotation, velocity)
    _, a, b = stepper.coefficients(field.samples)
    half = stepper.half_matrix()
    phi1 = half @ (a[:, None] * half)
    phi2 = half @ (b[:, None] * np.conj(half))
    return phi1, phi2


def real_block(phi1, phi2):
    """Real matrix of ``v -> phi1 v + phi2 conj(v)`` acting on ``(Re v, Im v)``."""
    plus, minus = phi1 + phi2, phi1 - phi2
    return np.block([[plus.real, -minus.imag], [plus.imag, minus.real]])


def step_jacobian(field, params, dz, rotation=0.0, velocity=0.0):
    return real_block(*step_tangent(field, params, dz, rotation, velocity))


def momentum(field):
    """Discrete ``integral Im(U* U_t) dt`` with a spectral derivative."""
    u = field.samples
    ut = np.fft.ifft(1j * field.grid.omega * np.fft.fft(u))
    return float(np.sum(np.imag(np.conj(u) * ut)) * field.grid.dt)


class Trajectory:
    """Snapshots of a classical propagation, every ``stride`` steps.

    Intermediate steps are not stored; :meth:`replay` regenerates them exactly
    from the preceding snapshot.
    """

    def __init__(self, grid, params, dz, stride, z, samples, rotation=0.0, velocity=0.0,
                 stationarity=float("nan")):
        self.grid = grid
        self.params = params
        self.dz = float(dz)
        self.stride = int(stride)
        self.z = np.asarray(z, dtype=float)
        self.samples = np.asarray(samples, dtype=complex)
        self.rotation = float(rotation)
        self.velocity = float(velocity)
        self.stationarity = float(stationarity)
        if self.samples.shape != (len(self.z), grid.n_points):
            raise ConfigurationError("snapshot array does not match z values and grid")

    def __len__(self):
        return len(self.z)

    def __getitem__(self, i):
        return self.field(i)

    def field(self, i):
        return ComplexField(self.grid, self.samples[i])

    @property
    def final(self):
        return self.field(-1)

    @property
    def final_energy(self):
        return energy(self.final)

    @property
    def snapshot_dz(self):
        return self.dz * self.stride

    def stepper(self):
        return _Stepper(self.grid, self.params, self.dz, self.rotation, self.velocity)

    def replay(self, i):
        """Fields at every step from snapshot ``i`` up to (excluding) snapshot ``i + 1``."""
        step = self.stepper()
        u = self.samples[i]
        fields = [u]
        for _ in range(self.stride - 1):
            u = step(u)
            fields.append(u)
        return [ComplexField(self.grid, x) for x in fields]

    def manifest(self):
        return {
            "format": TRAJECTORY_FORMAT,
            "params": self.params.as_dict(),
            "dz": self.dz,
            "stride": self.stride,
            "n_points": self.grid.n_points,
            "window": self.grid.window,
            "rotation": self.rotation,
            "velocity": self.velocity,
            "stationarity": self.stationarity,
            "n_snapshots": len(self),
        }

    def save(self, path):
        """Write an ``.npz`` archive holding ``z``, the snapshots and a JSON manifest."""
        np.savez(path, z=self.z, samples=self.samples,
                 manifest=np.array(json.dumps(self.manifest(), sort_keys=True)))

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(str(data["manifest"]))
            if meta.get("format") != TRAJECTORY_FORMAT:
                raise ConfigurationError(f"unsupported trajectory format {meta.get('format')!r}")
            return cls(TimeGrid(meta["n_points"], meta["window"]), CgleParams(**meta["params"]),
                       meta["dz"], meta["stride"], data["z"], data["samples"],
                       meta["rotation"], meta["velocity"], meta["stationarity"])


def _step_count(z_total, dz):
    if z_total < 0:
        raise ConfigurationError(f"z_total must be non-negative, got {z_total!r}")
    n = int(round(z_total / dz))
    if abs(n * dz - z_total) > 1e-9 * max(1.0, z_total):
        raise ConfigurationError(f"dz={dz!r} does not divide z_total={z_total!r}")
    return n


def propagate(field, params, z_total, dz, stride=1, rotation=0.0, velocity=0.0):
    """Integrate ``field`` over ``z_total`` and return the strided :class:`Trajectory`.

    The trajectory's ``stationarity`` is the maximum change of ``|U|`` over
    the last 10% of the run, per unit z and relative to the peak amplitude.
    """
    n_steps = _step_count(z_total, dz)
    stride = int(stride)
    if stride < 1 or n_steps % stride:
        raise ConfigurationError(f"stride {stride} must divide the {n_steps} steps")
    step = _Stepper(field.grid, params, dz, rotation, velocity)
    u = field.samples.copy()
    snaps = [u]
    mark_step = int(math.floor(0.9 * n_steps))
    mark = u if mark_step == 0 else None
    for k in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            u = step(u)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(k * dz)
        if k == mark_step:
            mark = u
        if k % stride == 0:
            snaps.append(u)
    stationarity = float("nan")
    if n_steps > mark_step:
        peak = np.abs(u).max()
        if peak > 0:
            stationarity = float(np.abs(np.abs(u) - np.abs(mark)).max()
                                 / (peak * (n_steps - mark_step) * dz))
        else:
            stationarity = 0.0
    z = np.arange(len(snaps)) * stride * dz
    return Trajectory(field.grid, params, dz, stride, z, np.array(snaps), rotation, velocity,
                      stationarity)
