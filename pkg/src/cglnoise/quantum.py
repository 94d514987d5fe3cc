"""Linearized quantum fluctuations: generator, minimum noise and second moments.

The perturbation ``u = x + i y`` is carried in the real quadrature basis
``r = (x_1..x_N, y_1..y_N)``.  On the discrete grid the canonical commutator
is ``[u_j, u_k^dag] = delta_jk / dt``, so ``[x_j, y_k] = i delta_jk / (2 dt)``.

A Gaussian state is described by two real ``2N x 2N`` matrices:

* ``C``, the symmetrized covariance ``<{r_j, r_k}>/2`` (coherent state:
  ``I / (4 dt)``);
* ``Omega``, the commutator ``-i <[r_j, r_k]>`` (canonical value
  ``[[0, I], [-I, 0]] / (2 dt)``).

One integration step maps ``C -> S C S^T + W`` and
``Omega -> S Omega S^T + Dc``, where ``S`` is the exact tangent map of the
classical split step.  The commutator injection ``Dc`` is the defect
``Omega_can - S Omega_can S^T``, which keeps the commutator canonical to
roundoff.  The noise ``W`` is the minimum quantum noise: the symmetrized
injection rate is ``|G| / (4 dt)`` in the real-block representation, where
``G`` is the Hermitian net-gain operator of the linearized equation, and it
is integrated over the step with the trapezoid rule.
"""

from dataclasses import dataclass
import json
import logging

import numpy as np

from .errors import (ConfigurationError, ConsistencyError, FidelityError,
                     GridMismatchError)
from .grid import ComplexField, TimeGrid
from .propagator import CgleParams, _Stepper, real_block, step_jacobian

log = logging.getLogger(__name__)

__all__ = [
    "LinearGenerator",
    "NoiseModel",
    "CovarianceState",
    "StepMap",
    "MonteCarloResult",
    "linearized_generator",
    "noise_rates",
    "initial_coherent_covariance",
    "canonical_commutator",
    "step_map",
    "propagate_covariance",
    "monte_carlo_oracle",
    "backpropagate_projection",
]

COVARIANCE_FORMAT = "cglnoise-covariance/1"
FIDELITY_LIMIT = 1e-6
PHYSICAL_TOL = 1e-9


def canonical_commutator(grid):
    n = grid.n_points
    eye, zero = np.eye(n), np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]]) / (2 * grid.dt)


def _unitary_dft(n):
    return np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)


class LinearGenerator:
    """Linearized right-hand side ``M`` about a background field.

    Acting on the doubled vector ``v = (u, u*)``::

        M v = (L u + A u + B u*,  conj(L) u* + conj(A) u* + conj(B) u)

    with ``L`` the spectral linear part and the pointwise coefficients
    ``A = 2 c1 |U0|^2 + 3 c2 |U0|^4`` and ``B = (c1 + 2 c2 |U0|^2) U0^2``,
    where ``c1 = i + eps`` and ``c2 = mu + i nu``.
    """

    def __init__(self, background, params):
        if not np.all(np.isfinite(background.samples)):
            raise ConfigurationError("background field must be finite")
        self.background = background
        self.params = params
        grid = background.grid
        intensity = background.intensity
        u0 = background.samples
        c1, c2 = params.cubic, params.quintic
        self.symbol = params.linear_symbol(grid.omega)
        self.diag = 2 * c1 * intensity + 3 * c2 * intensity ** 2
        self.anti = (c1 + 2 * c2 * intensity) * u0 * u0

    @property
    def grid(self):
        return self.background.grid

    def apply(self, v):
        """Apply ``M`` to a doubled vector (or to the columns of a ``2N x k`` array)."""
        n = self.grid.n_points
        v = np.asarray(v, dtype=complex)
        u, w = v[:n], v[n:]
        col = (slice(None),) + (None,) * (v.ndim - 1)
        lu = np.fft.ifft(self.symbol[col] * np.fft.fft(u, axis=0), axis=0)
        # conj(L) acting on u* has symbol conj(symbol(-omega)) = conj(symbol(omega)) (even)
        lw = np.fft.ifft(np.conj(self.symbol)[col] * np.fft.fft(w, axis=0), axis=0)
        top = lu + self.diag[col] * u + self.anti[col] * w
        bottom = lw + np.conj(self.diag)[col] * w + np.conj(self.anti)[col] * u
        return np.concatenate([top, bottom])

    def apply_field(self, u):
        """Real-linear action on a perturbation ``u`` (upper half of :meth:`apply`)."""
        n = self.grid.n_points
        return self.apply(np.r_[u, np.conj(u)])[:n]

    def to_dense(self):
        return self.apply(np.eye(2 * self.grid.n_points, dtype=complex))

    def commutator_form(self):
        """Canonical commutator ``J = <[v, v^dag]>`` in the doubled basis."""
        n = self.grid.n_points
        return np.diag(np.r_[np.ones(n), -np.ones(n)]) / self.grid.dt

    def commutator_defect(self):
        """``M J + J M^dag``; zero exactly when the dynamics preserve commutators."""
        m = self.to_dense()
        j = self.commutator_form()
        return m @ j + j @ m.conj().T

    def gain_operator(self):
        """Hermitian ``G`` with ``M_uu + M_uu^dag = G`` (unitary-DFT basis folded in)."""
        n = self.grid.n_points
        f = _unitary_dft(n)
        return (f.conj().T * (2 * self.symbol.real)) @ f + np.diag(2 * self.diag.real)


def linearized_generator(background, params):
    return LinearGenerator(background, params)


@dataclass(frozen=True)
class NoiseModel:
    """Minimum-noise injection rates per unit z.

    ``normal[j, k]`` is the rate of ``<n_j^dag n_k>`` and ``antinormal[j, k]``
    the rate of ``<n_j n_k^dag>``.  Their difference
    ``antinormal - normal.T`` equals ``commutator_injection``, the upper block
    of ``R = -(M J + J M^dag)``.
    """

    normal: np.ndarray
    antinormal: np.ndarray
    commutator_injection: np.ndarray
    gain: np.ndarray

    @property
    def symmetrized(self):
        """Complex symmetrized rate ``(N^T + A) / 2 = |G| / (2 dt)``."""
        return 0.5 * (self.normal.T + self.antinormal)

    def real_rate(self):
        """Symmetrized injection rate for the real quadratures."""
        h = self.symmetrized
        return real_block(0.5 * h, np.zeros_like(h))


def noise_rates(background, params):
    """Split the commutator injection by sign into gain and loss channels."""
    gen = background if isinstance(background, LinearGenerator) else LinearGenerator(background,
                                                                                     params)
    dt = gen.grid.dt
    g = gen.gain_operator()
    n = gen.grid.n_points
    if not np.any(g):
        zero = np.zeros((n, n), dtype=complex)
        return NoiseModel(zero, zero.copy(), zero.copy(), g)
    vals, vecs = np.linalg.eigh(g)
    plus = (vecs * np.clip(vals, 0, None)) @ vecs.conj().T
    minus = (vecs * np.clip(-vals, 0, None)) @ vecs.conj().T
    return NoiseModel(np.conj(plus) / dt, minus / dt, -g / dt, g)


class CovarianceState:
    """Second moments of the perturbation field at one propagation distance."""

    def __init__(self, grid, z, sym, commutator, closure=0.0):
        n2 = 2 * grid.n_points
        sym = np.asarray(sym, dtype=float)
        commutator = np.asarray(commutator, dtype=float)
        if sym.shape != (n2, n2) or commutator.shape != (n2, n2):
            raise GridMismatchError("moment matrices do not match the grid")
        self.grid = grid
        self.z = float(z)
        self.sym = sym
        self.commutator = commutator
        self.closure = float(closure)

    def _blocks(self, m):
        n = self.grid.n_points
        return m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:]

    @property
    def Q(self):
        """``<u_j u_k>`` (symmetric)."""
        xx, xy, yx, yy = self._blocks(self.sym)
        return xx - yy + 1j * (xy + yx)

    @property
    def K(self):
        """``<[u_j, u_k^dag]>``; canonical value ``I / dt``."""
        xx, xy, yx, yy = self._blocks(self.commutator)
        return 1j * (xx + yy) + xy - yx

    @property
    def symmetrized_number(self):
        """``<{u_j^dag, u_k}> / 2``."""
        xx, xy, yx, yy = self._blocks(self.sym)
        return xx + yy + 1j * (xy - yx)

    @property
    def P(self):
        """Normally ordered ``<u_j^dag u_k>`` (Hermitian)."""
        return self.symmetrized_number - 0.5 * self.K.T

    def commutator_drift(self):
        """Largest deviation of ``K`` from canonical, relative to ``1/dt``."""
        k = self.K * self.grid.dt
        return float(np.abs(k - np.eye(self.grid.n_points)).max())

    def physicality(self):
        """Smallest eigenvalue of ``<r r^T> = C + i Omega / 2`` relative to the vacuum level."""
        ordered = self.sym + 0.5j * self.commutator
        return float(np.linalg.eigvalsh(ordered)[0] * 4 * self.grid.dt)

    def variance(self, phi, psi=None):
        """Symmetrized covariance of two real projections ``phi . r`` and ``psi . r``."""
        psi = phi if psi is None else psi
        return float(phi @ self.sym @ psi)

    def manifest(self, **extra):
        meta = {"format": COVARIANCE_FORMAT, "z": self.z, "n_points": self.grid.n_points,
                "window": self.grid.window, "closure": self.closure,
                "commutator_drift": self.commutator_drift()}
        meta.update(extra)
        return meta

    def save(self, path, **extra):
        np.savez(path, sym=self.sym, commutator=self.commutator,
                 manifest=np.array(json.dumps(self.manifest(**extra), sort_keys=True)))

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(str(data["manifest"]))
            if meta.get("format") != COVARIANCE_FORMAT:
                raise ConfigurationError(f"unsupported covariance format {meta.get('format')!r}")
            return cls(TimeGrid(meta["n_points"], meta["window"]), meta["z"], data["sym"],
                       data["commutator"], meta.get("closure", 0.0))


def initial_coherent_covariance(grid, z=0.0):
    """Coherent state: ``P = Q = 0`` and canonical ``K``."""
    n2 = 2 * grid.n_points
    return CovarianceState(grid, z, np.eye(n2) / (4 * grid.dt), canonical_commutator(grid))


@dataclass
class StepMap:
    """Affine moment map ``C -> S C S^T + W``, ``Omega -> S Omega S^T + Dc`` over ``length``."""

    S: np.ndarray
    W: np.ndarray
    Dc: np.ndarray
    length: float
    closure: float = 0.0

    def then(self, other):
        """Map equivalent to applying ``self`` and then ``other``."""
        s = other.S
        return StepMap(s @ self.S, s @ self.W @ s.T + other.W, s @ self.Dc @ s.T + other.Dc,
                       self.length + other.length, self.closure + other.closure)

    def power(self, m):
        if m < 1:
            raise ConfigurationError("power must be at least 1")
        result, base = None, self
        while m:
            if m & 1:
                result = base if result is None else result.then(base)
            m >>= 1
            if m:
                base = base.then(base)
        return result

    def apply(self, state):
        s = self.S
        return CovarianceState(state.grid, state.z + self.length, s @ state.sym @ s.T + self.W,
                               s @ state.commutator @ s.T + self.Dc, state.closure + self.closure)


def step_map(background, params, dz, rotation=0.0, velocity=0.0, check=True, tol=PHYSICAL_TOL):
    """Moment map of one split step about ``background`` (the field at the step start).

    With ``check`` the injected pair ``(W, Dc)`` is verified to be physical,
    ``W + i Dc / 2 >= 0``.  A violation beyond ``tol`` (relative to the vacuum
    level) is closed by adding the missing multiple of the identity to ``W``;
    the amount is logged and recorded in ``closure``.
    """
    grid = background.grid
    s = step_jacobian(background, params, dz, rotation, velocity)
    can = canonical_commutator(grid)
    dc = can - s @ can @ s.T
    rate = noise_rates(background, params).real_rate()
    w = 0.5 * dz * (s @ rate @ s.T + rate)
    w = 0.5 * (w + w.T)
    closure = 0.0
    if check:
        scale = 1.0 / (4 * grid.dt)
        low = np.linalg.eigvalsh(w + 0.5j * dc)[0] / scale
        if low < -tol:
            closure = -low * scale
            w = w + closure * np.eye(len(w))
            log.warning("noise closure of %.3e (relative %.3e) added to keep the step physical",
                        closure, -low)
    return StepMap(s, w, dc, dz, closure)


def _same_background(a, b, tol):
    return a is not None and np.abs(a - b).max() <= tol * max(np.abs(b).max(), 1e-300)


def propagate_covariance(state, traj, exact=False, check=True, cache_tol=1e-9,
                         fidelity_limit=FIDELITY_LIMIT):
    """Propagate second moments along ``traj`` and return the state at every snapshot.

    Between two snapshots the background is frozen at the earlier snapshot
    and the one-step map is composed ``stride`` times by repeated squaring;
    with ``exact`` every intermediate step uses its own background, replayed
    from the snapshot.  Maps are reused while the background is unchanged to
    within ``cache_tol``.
    """
    traj.grid.check_same(state.grid)
    if abs(state.z - traj.z[0]) > 1e-12:
        raise ConfigurationError(f"state at z={state.z} but trajectory starts at {traj.z[0]}")
    states = [state]
    cached, cached_map = None, None
    for i in range(len(traj) - 1):
        bg = traj.samples[i]
        if exact:
            maps = [step_map(f, traj.params, traj.dz, traj.rotation, traj.velocity, check)
                    for f in traj.replay(i)]
            interval = maps[0]
            for m in maps[1:]:
                interval = interval.then(m)
        else:
            if not _same_background(cached, bg, cache_tol):
                one = step_map(ComplexField(traj.grid, bg), traj.params, traj.dz, traj.rotation,
                               traj.velocity, check)
                cached, cached_map = bg, one.power(traj.stride)
            interval = cached_map
        state = interval.apply(state)
        state.z = float(traj.z[i + 1])
        drift = state.commutator_drift()
        if drift > fidelity_limit:
            raise FidelityError(f"commutator drift {drift:.3e} at z={state.z:.4g}")
        states.append(state)
    return states


def _sqrt_psd(w):
    vals, vecs = np.linalg.eigh(0.5 * (w + w.T))
    return vecs * np.sqrt(np.clip(vals, 0, None))


def _rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


@dataclass
class MonteCarloResult:
    """Sampled quadratures of the classical stochastic analog.

    ``samples`` holds the final quadrature vectors (``2N x n``); ``sym`` the
    sample symmetrized covariance at every snapshot.
    """

    z: np.ndarray
    sym: list
    samples: np.ndarray
    seed: int
    n_samples: int

    def projection_covariance(self, phi, psi=None):
        """Sample covariance of two projections at the end, with its standard error."""
        psi = phi if psi is None else psi
        a, b = phi @ self.samples, psi @ self.samples
        prod = a * b
        return float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(self.n_samples))


def monte_carlo_oracle(traj, n_samples, seed, block_size=2000, initial=None):
    """Sample the linear stochastic analog of the moment propagation.

    Each sample starts from ``N(0, C0)`` (coherent by default) and is advanced
    with the same per-step tangent maps ``S`` as :func:`propagate_covariance`
    plus Gaussian increments of covariance ``W``.  Samples are generated in
    blocks from a counter-based generator keyed by ``(seed, block)``, so the
    result does not depend on how blocks are scheduled.
    """
    grid = traj.grid
    n2 = 2 * grid.n_points
    c0 = initial.sym if initial is not None else np.eye(n2) / (4 * grid.dt)
    root0 = _sqrt_psd(c0)
    maps = []
    cached = None
    for i in range(len(traj) - 1):
        bg = traj.samples[i]
        if not _same_background(cached, bg, 1e-9):
            m = step_map(ComplexField(grid, bg), traj.params, traj.dz, traj.rotation,
                         traj.velocity, check=False)
            cached, entry = bg, (m.S, _sqrt_psd(m.W))
        maps.append(entry)
    moments = [np.zeros((n2, n2)) for _ in range(len(traj))]
    finals = []
    n_blocks = -(-n_samples // block_size)
    for block in range(n_blocks):
        size = min(block_size, n_samples - block * block_size)
        rng = _rng(seed, block)
        r = root0 @ rng.standard_normal((n2, size))
        moments[0] += r @ r.T
        for i, (s, root) in enumerate(maps):
            for _ in range(traj.stride):
                r = s @ r + root @ rng.standard_normal((n2, size))
            moments[i + 1] += r @ r.T
        finals.append(r)
    return MonteCarloResult(traj.z.copy(), [m / n_samples for m in moments],
                            np.hstack(finals), int(seed), int(n_samples))


def backpropagate_projection(phi, traj, initial=None, exact=False):
    """Variance of the projection ``phi . r`` at the trajectory end, by the adjoint method.

    The projection is propagated backward, ``phi_n = S_n^T phi_{n+1}``, and the
    result is split into the input contribution ``phi_0^T C0 phi_0`` and the
    noise accumulated along the way.  Returns a dict with keys ``input``,
    ``noise``, ``total`` and the back-propagated ``phi0``.
    """
    grid = traj.grid
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (2 * grid.n_points,):
        raise GridMismatchError(f"projection of length {phi.shape} does not match the grid")
    state0 = initial if initial is not None else initial_coherent_covariance(grid)
    steps = []
    for i in range(len(traj) - 1):
        if exact:
            steps += [step_map(f, traj.params, traj.dz, traj.rotation, traj.velocity, check=False)
                      for f in traj.replay(i)]
        else:
            m = step_map(ComplexField(grid, traj.samples[i]), traj.params, traj.dz,
                         traj.rotation, traj.velocity, check=False)
            steps += [m] * traj.stride
    noise = 0.0
    for m in reversed(steps):
        noise += phi @ m.W @ phi
        phi = m.S.T @ phi
    inp = float(phi @ state0.sym @ phi)
    return {"input": inp, "noise": float(noise), "total": inp + float(noise), "phi0": phi}
