"""Flat ``key = value`` experiment configuration with typed parsing.

Blank lines and ``#`` comments are ignored.  Every key must belong to the
schema below; unknown keys are rejected.  Lists are comma separated.
"""

from dataclasses import dataclass, fields, replace, asdict
import hashlib
from importlib import resources
import json
import os

from .errors import ConfigurationError
from .propagator import CgleParams

__all__ = ["ExperimentConfig", "parse_config", "load_config", "preset_names", "config_hash"]

PAIR_NAMES = ("in_phase", "orthogonal", "out_of_phase")


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; the defaults are the standard pair setting (see the fig1 preset)."""

    name: str = "experiment"
    # equation
    D: float = 1.0
    delta: float = -0.01
    epsilon: float = 1.8
    beta: float = 0.5
    mu: float = -0.05
    nu: float = 0.0
    # grid
    n_points: int = 512
    window: float = 40.0
    # single soliton seed A sech(t / w)
    seed_amplitude: float = 3.0
    seed_width: float = 0.5
    z_relax_single: float = 10.0
    # pairs
    pairs: tuple = PAIR_NAMES
    thetas: tuple = ()
    rho: float = 1.23
    single: bool = False
    start: str = "converged"
    z_relax_pair: float = 1.0
    max_shift: float = 0.05
    # propagation
    z_total: float = 8.0
    dz: float = 1e-3
    snapshot_dz: float = 0.2
    exact_steps: bool = False
    # observables
    slot_width: float = 0.3
    eta_z: tuple = (0.4,)
    # oracles
    monte_carlo_samples: int = 0
    monte_carlo_points: int = 64
    monte_carlo_window: float = 10.0
    monte_carlo_z: float = 0.4
    backprop_checks: bool = False
    conservative_checks: bool = False
    convergence_checks: bool = False
    convergence_z: float = 2.0
    seed: int = 1234
    output: str = ""

    def __post_init__(self):
        if self.start not in ("converged", "ansatz"):
            raise ConfigurationError(f"start must be 'converged' or 'ansatz', got {self.start!r}")
        for p in self.pairs:
            if p not in PAIR_NAMES:
                raise ConfigurationError(f"unknown pair class {p!r}")
        for key in ("n_points", "monte_carlo_points"):
            if getattr(self, key) < 8:
                raise ConfigurationError(f"{key} must be at least 8")
        for key in ("window", "dz", "snapshot_dz", "slot_width", "seed_width"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key} must be positive")
        if self.z_total < 0:
            raise ConfigurationError("z_total must be non-negative")
        stride = self.snapshot_dz / self.dz
        if abs(stride - round(stride)) > 1e-9 * stride:
            raise ConfigurationError("snapshot_dz must be a multiple of dz")

    @property
    def params(self):
        return CgleParams(self.D, self.delta, self.epsilon, self.beta, self.mu, self.nu)

    @property
    def stride(self):
        return int(round(self.snapshot_dz / self.dz))

    def pair_specs(self):
        """``(label, theta)`` for every requested pair."""
        import math
        out = [(name, {"in_phase": 0.0, "orthogonal": math.pi / 2,
                       "out_of_phase": math.pi}[name]) for name in self.pairs]
        out += [(f"theta_{t!r}", t) for t in self.thetas]
        return out

    def with_values(self, **values):
        return replace(self, **values)

    def as_dict(self):
        return asdict(self)

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_PARSERS = {}
for _f in fields(ExperimentConfig):
    _default = _f.default
    if isinstance(_default, bool):
        _PARSERS[_f.name] = _bool
    elif isinstance(_default, int):
        _PARSERS[_f.name] = int
    elif isinstance(_default, float):
        _PARSERS[_f.name] = float
    elif _f.name in ("pairs",):
        _PARSERS[_f.name] = _names
    elif isinstance(_default, tuple):
        _PARSERS[_f.name] = _floats
    else:
        _PARSERS[_f.name] = str


def parse_value(key, text):
    if key not in _PARSERS:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    try:
        return _PARSERS[key](text.strip())
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {exc}") from exc


def parse_config(text, base=None, source="<string>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key in values:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, value)
    return replace(base or ExperimentConfig(), **values)


def preset_names():
    root = resources.files("cglnoise") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_config(name_or_path):
    """Load a preset by name or a config file by path."""
    if os.path.exists(name_or_path):
        with open(name_or_path, encoding="utf-8") as fh:
            return parse_config(fh.read(), source=name_or_path)
    root = resources.files("cglnoise") / "presets"
    preset = root / f"{name_or_path}.cfg"
    if not preset.is_file():
        raise ConfigurationError(
            f"no config file or preset {name_or_path!r} (presets: {', '.join(preset_names())})")
    return parse_config(preset.read_text(encoding="utf-8"), source=f"preset:{name_or_path}")


def config_hash(cfg):
    """SHA-256 of the canonical JSON form, ignoring the output location."""
    data = cfg.as_dict()
    data.pop("output", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
