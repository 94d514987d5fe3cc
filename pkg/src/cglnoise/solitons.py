"""Stationary dissipative solitons and bound soliton pairs.

Stationary states are fixed points of one split step taken in a frame that
rotates at the soliton's internal frequency and moves with its group delay.
Plain propagation only approaches them at the rate of the slowest decaying
background mode (about ``|delta|``), so relaxation is finished with a damped
Newton iteration on the discrete step map.
"""

from dataclasses import dataclass
from enum import Enum
import json
import logging

import numpy as np

from .errors import (ConfigurationError, DivergenceError, MeasurementError,
                     NoAttractorError, PairCollapseError)
from .grid import ComplexField, energy, load_field, save_field, shift
from .propagator import CgleParams, _Stepper, propagate, step_jacobian

log = logging.getLogger(__name__)

__all__ = [
    "PairClass",
    "StationaryProfile",
    "BoundPair",
    "solve_stationary",
    "growth_rates",
    "find_single_soliton",
    "make_pair",
    "relax_pair",
    "measure_pair",
    "find_peaks",
    "split_index",
    "classify",
    "save_pair",
    "load_pair",
]

PEAK_FLOOR = 0.05  # local maxima below this fraction of the peak intensity are ignored
CLASS_TOL = 0.1


class PairClass(str, Enum):
    IN_PHASE = "in_phase"
    ORTHOGONAL = "orthogonal"
    OUT_OF_PHASE = "out_of_phase"
    OTHER = "other"

    @property
    def theta(self):
        return {"in_phase": 0.0, "orthogonal": np.pi / 2, "out_of_phase": np.pi}.get(self.value)


def classify(theta, tol=CLASS_TOL):
    a = abs(theta)
    if a < tol:
        return PairClass.IN_PHASE
    if abs(a - np.pi / 2) < tol:
        return PairClass.ORTHOGONAL
    if a > np.pi - tol:
        return PairClass.OUT_OF_PHASE
    return PairClass.OTHER


@dataclass(frozen=True)
class StationaryProfile:
    field: ComplexField
    params: CgleParams
    drift_rate: float          # internal angular frequency (phase rotation per unit z)
    stationarity: float
    velocity: float = 0.0
    dz: float = 1e-3
    growth_rate: float = float("nan")

    @property
    def energy(self):
        return energy(self.field)

    @property
    def tail_ratio(self):
        a = np.abs(self.field.samples)
        return float(max(a[0], a[-1]) / a.max())


@dataclass(frozen=True)
class BoundPair:
    field: ComplexField
    rho: float
    theta: float
    params: CgleParams
    pair_class: PairClass
    stationarity: float
    rotation: float
    velocity: float = 0.0
    stationary: bool = True
    dz: float = 1e-3
    growth_rate: float = float("nan")

    def manifest(self):
        return {
            "params": self.params.as_dict(),
            "rho": self.rho,
            "theta": self.theta,
            "class": self.pair_class.value,
            "stationarity": self.stationarity,
            "stationary": self.stationary,
            "rotation": self.rotation,
            "velocity": self.velocity,
            "dz": self.dz,
            "growth_rate": self.growth_rate,
            "n_points": self.field.grid.n_points,
            "window": self.field.grid.window,
        }


def _residual(stepper, u):
    return (stepper(u) - u) / stepper.dz


def _stationarity(stepper, u):
    peak = np.abs(u).max()
    if peak == 0:
        return 0.0
    return float(np.abs(_residual(stepper, u)).max() / peak)


def solve_stationary(field, params, dz, rotation, velocity=0.0, solve_velocity=True,
                     tol=1e-10, max_iter=60, max_change=0.1):
    """Newton iteration for a fixed point of the split step in a co-rotating frame.

    Unknowns are the field samples, the rotation rate and (optionally) the
    frame velocity.  The phase and translation gauges are pinned by
    orthogonality to the starting field.  Each update of the samples is capped
    at ``max_change`` times the initial peak amplitude.  Returns
    ``(samples, rotation, velocity, stationarity)``; raises
    :class:`NoAttractorError` if the iteration does not converge.
    """
    grid = field.grid
    n = grid.n_points
    u = field.samples.copy()
    ref = u.copy()
    dref = np.fft.ifft(1j * grid.omega * np.fft.fft(ref))
    gauges = [np.r_[-ref.imag, ref.real]]
    if solve_velocity:
        gauges.append(np.r_[dref.real, dref.imag])
    gauges = np.array(gauges) * grid.dt
    peak0 = np.abs(u).max()

    def pack(r):
        return np.r_[r.real, r.imag]

    stepper = _Stepper(grid, params, dz, rotation, velocity)
    res = _residual(stepper, u)
    norm = np.linalg.norm(res)
    for it in range(max_iter):
        jac = (step_jacobian(ComplexField(grid, u), params, dz, stepper.rotation,
                             stepper.velocity) - np.eye(2 * n)) / dz
        su = stepper(u)
        cols = [pack(-1j * su)]
        if solve_velocity:
            cols.append(pack(np.fft.ifft(1j * grid.omega * np.fft.fft(su))))
        k = len(cols)
        top = np.hstack([jac, np.array(cols).T])
        bottom = np.hstack([gauges, np.zeros((len(gauges), k))])
        rhs = -np.r_[pack(res), gauges @ np.r_[u.real, u.imag]]
        system = np.vstack([top, bottom])
        try:
            step = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(system, rhs, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = np.linalg.lstsq(system, rhs, rcond=None)[0]
        # trust region on the field update; rotation and velocity move freely
        scale = min(1.0, max_change * peak0 / max(np.abs(step[:2 * n]).max(), 1e-300))
        for _ in range(8):
            u_new = u + scale * (step[:n] + 1j * step[n:2 * n])
            rot_new = stepper.rotation + scale * step[2 * n]
            vel_new = stepper.velocity + (scale * step[2 * n + 1] if solve_velocity else 0.0)
            trial = _Stepper(grid, params, dz, rot_new, vel_new)
            with np.errstate(all="ignore"):
                res_new = _residual(trial, u_new)
            norm_new = np.linalg.norm(res_new)
            # non-monotone: a correct step along the slow separation mode may raise
            # the residual transiently, so only reject gross overshoots
            if np.isfinite(norm_new) and norm_new < 100 * norm + 1e-12:
                break
            scale *= 0.5
        else:
            raise NoAttractorError("Newton iteration stalled")
        u, stepper, res, norm = u_new, trial, res_new, norm_new
        stat = _stationarity(stepper, u)
        log.debug("newton %d: stationarity %.3e step %.3e", it, stat, np.abs(step).max())
        if np.abs(u).max() > 1e3 * max(peak0, 1.0):
            raise NoAttractorError("Newton iteration ran away")
        if stat < tol or np.abs(scale * step[:2 * n]).max() < 1e-13 * max(peak0, 1):
            return u, stepper.rotation, stepper.velocity, stat
    stat = _stationarity(stepper, u)
    if stat < 1e3 * tol:
        return u, stepper.rotation, stepper.velocity, stat
    raise NoAttractorError(f"Newton iteration did not converge (stationarity {stat:.3e})")


def growth_rates(field, params, dz, rotation, velocity=0.0):
    """Growth rates ``log|lambda|/dz`` of the linearized step, sorted descending."""
    lam = np.linalg.eigvals(step_jacobian(field, params, dz, rotation, velocity))
    with np.errstate(divide="ignore"):
        rates = np.log(np.abs(lam)) / dz
    return np.sort(rates)[::-1]


def _estimate_rotation(stepper, u):
    return float(np.angle(np.vdot(u, stepper(u))) / stepper.dz)


def find_single_soliton(params, seed, z_relax=20.0, dz=1e-3, tol=1e-6, check_attractor=True):
    """Relax ``seed`` onto the single dissipative soliton of ``params``.

    The seed is propagated over ``z_relax`` and then polished by
    :func:`solve_stationary`.  The result must be an attractor: apart from the
    phase and translation modes, every linear mode has to decay.
    """
    traj = propagate(seed, params, z_relax, dz, stride=max(1, int(round(z_relax / dz))))
    u = traj.samples[-1]
    peak = np.abs(u).max()
    if peak < 1e-6 * np.abs(seed.samples).max():
        raise NoAttractorError("seed decayed to the zero background")
    stepper = _Stepper(seed.grid, params, dz)
    rot = _estimate_rotation(stepper, u)
    u, rot, vel, stat = solve_stationary(ComplexField(seed.grid, u), params, dz, rot)
    if not np.all(np.isfinite(u)):
        raise DivergenceError(z_relax)
    if np.abs(u).max() < 1e-6 * peak:
        raise NoAttractorError("relaxed onto the zero background")
    if stat > tol:
        raise NoAttractorError(f"stationarity {stat:.3e} above tolerance {tol:.1e}")
    field = ComplexField(seed.grid, u)
    top = float("nan")
    if check_attractor:
        # on a finite window a pulse can sit on a small flat pedestal that hides
        # an amplifying background from the mode count, so test the background directly
        background = float(params.linear_symbol(seed.grid.omega).real.max())
        if background > 0:
            raise NoAttractorError(
                f"zero background is linearly unstable (growth rate {background:.3e})")
        rates = growth_rates(field, params, dz, rot, vel)
        # the two gauge modes (phase, position) sit at zero; everything else must decay
        gap = 1e-3
        neutral = np.count_nonzero(rates > -gap)
        if neutral > 2 or rates[0] > gap:
            raise NoAttractorError(
                f"stationary state is not an attractor ({neutral} non-decaying modes, "
                f"max growth rate {rates[0]:.3e})")
        top = float(rates[2])
    return StationaryProfile(field, params, rot, stat, vel, dz, top)


def make_pair(profile, rho, theta):
    """Superpose ``U0(t + rho) e^{-i theta/2} + U0(t - rho) e^{i theta/2}``."""
    field = profile.field if isinstance(profile, StationaryProfile) else profile
    if rho < 0:
        raise ConfigurationError(f"rho must be non-negative, got {rho!r}")
    if 2 * rho >= field.grid.window / 2:
        raise ConfigurationError(f"rho={rho} too large for window {field.grid.window}")
    left = shift(field, -rho).samples * np.exp(-0.5j * theta)
    right = shift(field, rho).samples * np.exp(0.5j * theta)
    return field.with_samples(left + right)


def find_peaks(field, floor=PEAK_FLOOR):
    """Indices of local intensity maxima above ``floor`` times the peak (periodic)."""
    intensity = field.intensity
    if intensity.max() == 0:
        return np.array([], dtype=int)
    prev = np.roll(intensity, 1)
    nxt = np.roll(intensity, -1)
    mask = (intensity > prev) & (intensity >= nxt) & (intensity > floor * intensity.max())
    return np.flatnonzero(mask)


def _refine(field, i):
    intensity = field.intensity
    n = len(intensity)
    y0, y1, y2 = intensity[i - 1], intensity[i], intensity[(i + 1) % n]
    curv = y0 - 2 * y1 + y2
    offset = 0.5 * (y0 - y2) / curv if curv != 0 else 0.0
    return field.grid.t[i] + offset * field.grid.dt


def split_index(field):
    """Index of the intensity minimum between the two pulses of a pair."""
    peaks = find_peaks(field)
    if len(peaks) != 2:
        raise MeasurementError(f"expected two intensity maxima, found {len(peaks)}")
    a, b = peaks
    return int(a + np.argmin(field.intensity[a:b + 1]))


def measure_pair(field):
    """Return ``(rho, theta)`` of a two-pulse field.

    ``rho`` is half the peak-to-peak separation, refined by a parabola through
    the three samples around each maximum; ``theta`` is the phase of the
    right pulse minus that of the left, taken at the peaks, in ``(-pi, pi]``.
    """
    peaks = find_peaks(field)
    if len(peaks) != 2:
        raise MeasurementError(f"expected two intensity maxima, found {len(peaks)}")
    left, right = peaks
    rho = 0.5 * (_refine(field, right) - _refine(field, left))
    u = field.samples
    theta = float(np.angle(u[right] * np.conj(u[left])))
    if theta < -np.pi + 1e-6:
        theta += 2 * np.pi  # keep out-of-phase pairs at +pi
    return float(rho), theta


def _centroid(field):
    intensity = field.intensity
    return float(np.sum(field.grid.t * intensity) / np.sum(intensity))


def relax_pair(field, params, z_relax=5.0, dz=1e-3, polish=True, require_stationary=True,
               tol=1e-6, max_shift=None):
    """Relax a two-pulse field onto a bound pair and classify it.

    After ``z_relax`` of propagation the pair is polished onto an exact
    stationary state when ``polish`` is set.  If no stationary state of the
    same class is found, :class:`NoAttractorError` is raised unless
    ``require_stationary`` is false, in which case the propagated field is
    returned as a quasi-stationary pair (``stationary=False``) together with
    the frame (rotation, velocity) measured over the end of the run.
    ``max_shift`` rejects a polished state whose separation differs from the
    propagated one by more than this amount.
    """
    try:
        rho0, theta0 = measure_pair(field)
    except MeasurementError as exc:
        raise PairCollapseError(f"input is not a two-pulse configuration: {exc}") from exc
    class0 = classify(theta0)
    n_steps = max(1, int(round(z_relax / dz)))
    tail = max(1, n_steps // 10)
    traj = propagate(field, params, n_steps * dz, dz, stride=1 if n_steps < 2 else
                     _tail_stride(n_steps, tail))
    end = traj.field(-1)
    before = traj.field(-2) if len(traj) > 1 else field
    try:
        rho_end, theta_end = measure_pair(end)
    except MeasurementError as exc:
        raise PairCollapseError(f"pulses merged or escaped during relaxation: {exc}") from exc
    if 2 * rho_end >= field.grid.window / 2:
        raise PairCollapseError("pulses escaped across the window")
    span = (len(traj) - 1 and traj.z[-1] - traj.z[-2]) or dz
    velocity = (_centroid(end) - _centroid(before)) / span
    stepper = _Stepper(field.grid, params, dz, 0.0, velocity)
    rotation = _estimate_rotation(stepper, end.samples)
    if polish:
        try:
            u, rot, vel, stat = solve_stationary(end, params, dz, rotation, velocity)
            polished = ComplexField(field.grid, u)
            rho, theta = measure_pair(polished)
            moved = max_shift is not None and abs(rho - rho_end) > max_shift
            if classify(theta) == class0 and stat <= tol and not moved:
                return BoundPair(polished, rho, theta, params, class0, stat, rot, vel, True, dz)
            log.info("polished pair left its class (theta %.3f -> %.3f)", theta0, theta)
        except (NoAttractorError, MeasurementError) as exc:
            log.info("pair polish failed: %s", exc)
    stat = _stationarity(_Stepper(field.grid, params, dz, rotation, velocity), end.samples)
    if require_stationary and stat > tol:
        raise NoAttractorError(f"pair did not settle (stationarity {stat:.3e})")
    return BoundPair(end, rho_end, theta_end, params, classify(theta_end), stat, rotation,
                     velocity, stat <= tol, dz)


def _tail_stride(n_steps, tail):
    # largest divisor of n_steps not exceeding the requested tail length
    for s in range(tail, 0, -1):
        if n_steps % s == 0:
            return s
    return 1


def save_pair(pair, directory, name):
    """Write ``<name>.txt`` (field table) and ``<name>.json`` (manifest)."""
    import os
    save_field(os.path.join(directory, f"{name}.txt"), pair.field)
    with open(os.path.join(directory, f"{name}.json"), "w", encoding="ascii") as fh:
        json.dump(pair.manifest(), fh, indent=1, sort_keys=True)


def load_pair(directory, name):
    import os
    field = load_field(os.path.join(directory, f"{name}.txt"))
    with open(os.path.join(directory, f"{name}.json"), encoding="ascii") as fh:
        meta = json.load(fh)
    return BoundPair(field, meta["rho"], meta["theta"], CgleParams(**meta["params"]),
                     PairClass(meta["class"]), meta["stationarity"], meta["rotation"],
                     meta["velocity"], meta["stationary"], meta["dz"], meta["growth_rate"])
