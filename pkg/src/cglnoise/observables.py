"""Photon-number functionals on a covariance state.

The photon-number fluctuation of a region with sample weights ``w`` is the
linear functional ``dn = sum_k (f_k u_k + conj(f_k) u_k^dag)`` with
``f_k = conj(U0_k) w_k dt``.  In the real quadrature basis it is the
projection ``phi . r`` with ``phi = (2 Re f, -2 Im f)``.

Slots of width ``slot_width`` are laid out from the split time ``t_mid``
in both directions, so ``t_mid`` is always a slot boundary.  A sample lying
exactly on a boundary is shared half and half between the two slots it
touches; the weights still sum to one per sample, and the layout stays
mirror symmetric about ``t_mid``.
"""

from dataclasses import dataclass, field as dc_field
import io

import numpy as np

from .errors import ConfigurationError, MeasurementError, UndefinedValueError
from .solitons import split_index

__all__ = [
    "Projection",
    "SlotPartition",
    "C12Result",
    "EtaMatrix",
    "ObservableSeries",
    "make_partition",
    "region_projection",
    "slot_projection",
    "total_projection",
    "soliton_projections",
    "normally_ordered_covariance",
    "unordered_covariance",
    "c12",
    "eta_matrix",
    "total_photon_noise",
    "observe",
    "write_c12_csv",
    "write_total_noise_csv",
    "write_eta_csv",
]

ACTIVE_FRACTION = 1e-6
CAUCHY_SLACK = 1e-9


@dataclass(frozen=True)
class Projection:
    """Coefficients ``f`` of ``dF = f.u + conj(f).u^dag`` together with the shot weights."""

    f: np.ndarray
    dt: float

    @property
    def doubled(self):
        return np.r_[self.f, np.conj(self.f)]

    @property
    def real(self):
        return np.r_[2 * self.f.real, -2 * self.f.imag]

    def shot(self, other):
        """Commutator (shot-noise) overlap ``Re sum f conj(g) / dt``."""
        return float(np.real(np.vdot(other.f, self.f)) / self.dt)

    def __mul__(self, scale):
        return Projection(self.f * scale, self.dt)

    __rmul__ = __mul__

    def __add__(self, other):
        return Projection(self.f + other.f, self.dt)


@dataclass(frozen=True)
class SlotPartition:
    """Slots of equal width tiling the window, aligned on ``split_time``."""

    grid: object
    boundaries: np.ndarray
    split_time: float
    weights: np.ndarray            # (n_slots, N); columns sum to one
    active: np.ndarray = dc_field(default=None)

    @property
    def n_slots(self):
        return len(self.boundaries) - 1

    @property
    def centers(self):
        b = self.boundaries
        return 0.5 * (b[:-1] + b[1:])

    @property
    def slot_index_map(self):
        """Slot holding the bulk of each sample (boundary samples go to the later slot)."""
        return np.argmax(self.weights, axis=0)

    @property
    def first_slots(self):
        """Boolean mask of slots on soliton 1's side (before ``split_time``)."""
        return self.centers < self.split_time

    def region_weights(self, side):
        """Sample weights of soliton 1 (``side=1``) or soliton 2 (``side=2``)."""
        mask = self.first_slots if side == 1 else ~self.first_slots
        return self.weights[mask].sum(axis=0)

    def refined(self, factor=2):
        """The same layout with slots ``factor`` times narrower."""
        width = (self.boundaries[1] - self.boundaries[0]) / factor
        return _build_partition(self.grid, width, self.split_time, None)


def _build_partition(grid, width, t_mid, intensity, threshold=ACTIVE_FRACTION):
    if not width > 0:
        raise ConfigurationError(f"slot width must be positive, got {width!r}")
    t = grid.t
    lo, hi = t[0], t[-1]
    k_lo = int(np.floor((lo - t_mid) / width + 1e-9))
    k_hi = int(np.ceil((hi - t_mid) / width - 1e-9))
    if k_hi == k_lo or t_mid + k_hi * width <= hi:
        k_hi += 1
    boundaries = t_mid + width * np.arange(k_lo, k_hi + 1)
    n_slots = len(boundaries) - 1
    pos = (t - t_mid) / width - k_lo
    index = np.floor(pos + 1e-9).astype(int)
    on_edge = np.abs(pos - np.round(pos)) < 1e-9 * max(1.0, abs(k_lo))
    weights = np.zeros((n_slots, grid.n_points))
    cols = np.arange(grid.n_points)
    index = np.clip(index, 0, n_slots - 1)
    weights[index, cols] = 1.0
    shared = on_edge & (index > 0)
    weights[index[shared], cols[shared]] = 0.5
    weights[index[shared] - 1, cols[shared]] = 0.5
    if intensity is None:
        active = np.ones(n_slots, dtype=bool)
    else:
        occupied = weights > 0
        peak_in_slot = np.array([intensity[row].max() if row.any() else 0.0 for row in occupied])
        active = peak_in_slot > threshold * intensity.max()
    return SlotPartition(grid, boundaries, float(t_mid), weights, active)


def make_partition(background, slot_width=0.3, split_time=None, threshold=ACTIVE_FRACTION):
    """Slot layout for ``background``.

    ``split_time`` defaults to the inter-pulse intensity minimum of a pair,
    or to the centre of the window for a single pulse.  Slots whose peak
    intensity is below ``threshold`` times the overall peak are inactive.
    """
    if split_time is None:
        try:
            split_time = float(background.grid.t[split_index(background)])
        except MeasurementError:
            split_time = 0.0
    return _build_partition(background.grid, slot_width, split_time, background.intensity,
                            threshold)


def region_projection(background, weights):
    u0 = background.samples
    dt = background.grid.dt
    weights = np.asarray(weights, dtype=float)
    return Projection(np.conj(u0) * weights * dt, dt)


def slot_projection(background, slot, partition):
    if not 0 <= slot < partition.n_slots:
        raise ConfigurationError(f"slot {slot} outside 0..{partition.n_slots - 1}")
    partition.grid.check_same(background.grid)
    return region_projection(background, partition.weights[slot])


def total_projection(background):
    return region_projection(background, np.ones(background.grid.n_points))


def soliton_projections(background, partition):
    return (region_projection(background, partition.region_weights(1)),
            region_projection(background, partition.region_weights(2)))


def normally_ordered_covariance(state, f, g, background=None, form="moments"):
    """``<:dF dG:>`` from the normally ordered moments ``P`` and ``Q``.

    ``form="real"`` evaluates the same quantity from the symmetrized
    covariance minus the commutator part, which is cheaper for many pairs.
    """
    if form == "moments":
        p, q = state.P, state.Q
        return float(2 * np.real(f.f @ q @ g.f) + 2 * np.real(np.conj(f.f) @ p @ g.f))
    k = state.K
    corr = 0.5 * np.real(f.f @ k @ np.conj(g.f) + g.f @ k @ np.conj(f.f))
    return float(f.real @ state.sym @ g.real - corr)


def unordered_covariance(state, f, g, background=None):
    """``<dF dG>``: the normally ordered part plus the shot term of the overlap."""
    return normally_ordered_covariance(state, f, g) + f.shot(g)


def _matrix(state, projections):
    """Normally ordered and unordered covariance matrices of several projections."""
    phis = np.array([p.real for p in projections])
    fs = np.array([p.f for p in projections])
    sym = phis @ state.sym @ phis.T
    x = fs @ state.K @ np.conj(fs).T
    normal = sym - 0.5 * np.real(x + x.T)
    shot = np.real(fs @ np.conj(fs).T) / projections[0].dt
    return normal, normal + shot


@dataclass(frozen=True)
class C12Result:
    """Pair correlation with the quantities it is built from.

    ``value`` uses a normally ordered numerator over unordered variances;
    ``normal`` uses normally ordered variances throughout.
    """

    value: float
    normal: float
    covariance: float
    variances: tuple
    normal_variances: tuple


def c12(state, background, partition):
    one, two = soliton_projections(background, partition)
    normal, unordered = _matrix(state, [one, two])
    v1, v2 = unordered[0, 0], unordered[1, 1]
    if not (v1 > 0 and v2 > 0):
        raise UndefinedValueError("soliton photon-number variance vanishes")
    value = normal[0, 1] / np.sqrt(v1 * v2)
    n1, n2 = normal[0, 0], normal[1, 1]
    normal_value = normal[0, 1] / np.sqrt(n1 * n2) if n1 > 0 and n2 > 0 else float("nan")
    if abs(value) > 1 + CAUCHY_SLACK:
        raise MeasurementError(f"|C12| = {abs(value):.6g} exceeds 1; state is unphysical")
    return C12Result(float(value), float(normal_value), float(normal[0, 1]),
                     (float(v1), float(v2)), (float(n1), float(n2)))


@dataclass(frozen=True)
class EtaMatrix:
    """Slot correlation matrix.

    ``values`` has normally ordered entries over unordered slot variances;
    ``unordered`` is the fully unordered correlation (unit diagonal).
    Entries of inactive or zero-variance slots are zero and ``flagged``.
    """

    z: float
    centers: np.ndarray
    values: np.ndarray
    unordered: np.ndarray
    normal_ordered: np.ndarray
    flagged: np.ndarray
    first: np.ndarray

    def cross_block(self):
        keep = ~self.flagged
        return self.values[np.ix_(self.first & keep, ~self.first & keep)]

    def cross_block_mean(self):
        block = self.cross_block()
        if block.size == 0:
            raise UndefinedValueError("no active slots on one side of the split")
        return float(block.mean())


def eta_matrix(state, background, partition):
    projections = [region_projection(background, w) for w in partition.weights]
    normal, unordered = _matrix(state, projections)
    var = np.diag(unordered).copy()
    nvar = np.diag(normal).copy()
    flagged = ~partition.active | ~(var > 0)
    safe = np.where(flagged, 1.0, var)
    denom = np.sqrt(np.outer(safe, safe))
    values = np.where(flagged[:, None] | flagged[None, :], 0.0, normal / denom)
    full = np.where(flagged[:, None] | flagged[None, :], 0.0, unordered / denom)
    nsafe = np.where(flagged | ~(nvar > 0), 1.0, nvar)
    nflag = flagged | ~(nvar > 0)
    nn = np.where(nflag[:, None] | nflag[None, :], 0.0, normal / np.sqrt(np.outer(nsafe, nsafe)))
    return EtaMatrix(state.z, partition.centers, values, full, nn, flagged,
                     partition.first_slots.copy())


def total_photon_noise(state, background):
    """``(normally ordered variance, Fano factor)`` of the whole-window photon number."""
    proj = total_projection(background)
    mean = float(np.sum(background.intensity) * background.grid.dt)
    if not mean > 0:
        raise UndefinedValueError("background carries no photons")
    var = normally_ordered_covariance(state, proj, proj, form="real")
    return var, 1.0 + var / mean


@dataclass
class ObservableSeries:
    label: str
    z: list = dc_field(default_factory=list)
    c12: list = dc_field(default_factory=list)
    c12_normal: list = dc_field(default_factory=list)
    covariance: list = dc_field(default_factory=list)
    variances: list = dc_field(default_factory=list)
    noise_variance: list = dc_field(default_factory=list)
    fano: list = dc_field(default_factory=list)
    mean_photons: list = dc_field(default_factory=list)
    eta: dict = dc_field(default_factory=dict)

    @property
    def is_pair(self):
        return bool(self.c12)


def observe(states, backgrounds, partition=None, label="", eta_at=(), pair=True):
    """Evaluate the observables on a sequence of states.

    ``backgrounds`` is a single field (frozen background) or one field per
    state.  ``eta_at`` lists the z values at which the slot matrix is kept.
    """
    if not isinstance(backgrounds, (list, tuple)):
        backgrounds = [backgrounds] * len(states)
    series = ObservableSeries(label)
    wanted = list(eta_at)
    for state, bg in zip(states, backgrounds):
        series.z.append(state.z)
        var, fano = total_photon_noise(state, bg)
        series.noise_variance.append(var)
        series.fano.append(fano)
        series.mean_photons.append(float(np.sum(bg.intensity) * bg.grid.dt))
        if pair:
            res = c12(state, bg, partition)
            series.c12.append(res.value)
            series.c12_normal.append(res.normal)
            series.covariance.append(res.covariance)
            series.variances.append(res.variances)
            for zw in wanted:
                if abs(state.z - zw) < 1e-9 * max(1.0, zw) and zw not in series.eta:
                    series.eta[zw] = eta_matrix(state, bg, partition)
    return series


def _fmt(x):
    return repr(float(x))


def _write(path, text):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def write_c12_csv(path, series_list):
    """Columns: label, z, c12, c12_normal, covariance, var1, var2."""
    out = io.StringIO()
    out.write("label,z,c12,c12_normal,covariance,var1,var2\n")
    for s in series_list:
        for z, c, cn, cov, (v1, v2) in zip(s.z, s.c12, s.c12_normal, s.covariance, s.variances):
            out.write(",".join([s.label] + [_fmt(x) for x in (z, c, cn, cov, v1, v2)]) + "\n")
    _write(path, out.getvalue())


def write_total_noise_csv(path, series_list):
    """Columns: label, z, variance (normally ordered), fano, mean_photons."""
    out = io.StringIO()
    out.write("label,z,variance,fano,mean_photons\n")
    for s in series_list:
        for z, v, f, m in zip(s.z, s.noise_variance, s.fano, s.mean_photons):
            out.write(",".join([s.label] + [_fmt(x) for x in (z, v, f, m)]) + "\n")
    _write(path, out.getvalue())


def write_eta_csv(path, eta):
    """Dense matrix: header row and first column hold slot-centre times."""
    out = io.StringIO()
    out.write("t," + ",".join(_fmt(c) for c in eta.centers) + "\n")
    for c, row in zip(eta.centers, eta.values):
        out.write(_fmt(c) + "," + ",".join(_fmt(x) for x in row) + "\n")
    _write(path, out.getvalue())
