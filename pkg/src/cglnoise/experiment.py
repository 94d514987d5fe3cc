"""Experiment pipeline: soliton, pairs, covariance propagation, observables, oracles."""

from dataclasses import dataclass
import hashlib
import json
import logging
import math
import os

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_hash
from .errors import CglNoiseError, ConfigurationError, MeasurementError
from .grid import ComplexField, energy, make_grid
from .observables import (c12 as c12_of, make_partition, observe, soliton_projections,
                          total_photon_noise, total_projection, write_c12_csv,
                          write_eta_csv, write_total_noise_csv, slot_projection)
from .propagator import CgleParams, propagate
from .quantum import (backpropagate_projection, initial_coherent_covariance,
                      monte_carlo_oracle, propagate_covariance, step_map)
from .solitons import (PairClass, find_single_soliton, make_pair, relax_pair, save_pair)

log = logging.getLogger(__name__)

__all__ = ["Background", "prepare_single", "prepare_pair", "run_case", "run_pipeline",
           "run_experiment", "run_validation", "output_root", "EXIT_OK", "EXIT_FAILED",
           "EXIT_CONFIG"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
OUTPUT_ENV = "CGLNOISE_OUTPUT"


def output_root():
    return os.environ.get(OUTPUT_ENV, os.path.join(os.getcwd(), "cglnoise-output"))


@dataclass
class Background:
    """A classical background and the frame it is propagated in."""

    label: str
    field: ComplexField
    rotation: float
    velocity: float
    pair: object = None   # BoundPair for pairs, None for the single soliton

    @property
    def is_pair(self):
        return self.pair is not None


def _grid(cfg):
    return make_grid(cfg.n_points, cfg.window)


def prepare_single(cfg, grid=None):
    grid = grid or _grid(cfg)
    seed = ComplexField(grid, cfg.seed_amplitude / np.cosh(grid.t / cfg.seed_width))
    return find_single_soliton(cfg.params, seed, cfg.z_relax_single, cfg.dz)


def prepare_pair(cfg, profile, label, theta):
    field = make_pair(profile, cfg.rho, theta)
    if cfg.start == "ansatz":
        from .solitons import BoundPair, classify, measure_pair
        rho, th = measure_pair(field)
        pair = BoundPair(field, rho, th, cfg.params, classify(th), float("nan"),
                         profile.drift_rate, profile.velocity, False, cfg.dz)
    else:
        quasi_ok = label == PairClass.ORTHOGONAL.value or label.startswith("theta_")
        pair = relax_pair(field, cfg.params, cfg.z_relax_pair, cfg.dz,
                          require_stationary=not quasi_ok, max_shift=cfg.max_shift)
    return Background(label, pair.field, pair.rotation, pair.velocity, pair)


@dataclass
class CaseResult:
    background: Background
    trajectory: object
    states: list
    series: object
    partition: object


def run_case(cfg, background):
    """Propagate one background and its covariance, and evaluate the observables."""
    traj = propagate(background.field, cfg.params, cfg.z_total, cfg.dz, cfg.stride,
                     background.rotation, background.velocity)
    states = propagate_covariance(initial_coherent_covariance(traj.grid), traj,
                                  exact=cfg.exact_steps)
    fields = [traj.field(i) for i in range(len(traj))]
    partition = make_partition(background.field, cfg.slot_width) if background.is_pair else None
    series = observe(states, fields, partition, background.label, cfg.eta_z,
                     pair=background.is_pair)
    return CaseResult(background, traj, states, series, partition)


def run_pipeline(cfg):
    """All cases of ``cfg``; returns ``(profile, {label: CaseResult})``."""
    profile = prepare_single(cfg)
    cases = {}
    for label, theta in cfg.pair_specs():
        bg = prepare_pair(cfg, profile, label, theta)
        log.info("%s: rho=%.6f theta=%.6f stationary=%s", label, bg.pair.rho, bg.pair.theta,
                 bg.pair.stationary)
        cases[label] = run_case(cfg, bg)
    if cfg.single:
        bg = Background("single", profile.field, profile.drift_rate, profile.velocity)
        cases["single"] = run_case(cfg, bg)
    return profile, cases


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _dump(path, data):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(data, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_manifest(out_dir, cfg, status, files):
    manifest = {
        "config_hash": config_hash(cfg),
        "code_version": __version__,
        "status": status,
        "files": {name: _sha(os.path.join(out_dir, name)) for name in sorted(files)},
    }
    _dump(os.path.join(out_dir, "manifest.json"), manifest)


def _case_summary(case, single_fano=None):
    s = case.series
    out = {
        "final_z": s.z[-1],
        "final_fano": s.fano[-1],
        "final_noise_variance": s.noise_variance[-1],
        "max_commutator_drift": max(st.commutator_drift() for st in case.states),
        "noise_closure": case.states[-1].closure,
        "classical_stationarity": case.trajectory.stationarity,
    }
    if single_fano:
        out["fano_ratio_to_single"] = s.fano[-1] / single_fano
    if s.is_pair:
        pair = case.background.pair
        out.update({
            "saturated_c12": s.c12[-1],
            "saturated_c12_normal": s.c12_normal[-1],
            "rho": pair.rho,
            "theta": pair.theta,
            "class": pair.pair_class.value,
            "pair_stationarity": pair.stationarity,
            "pair_stationary": pair.stationary,
        })
        for zw, eta in s.eta.items():
            try:
                out[f"eta_cross_mean_z{zw!r}"] = eta.cross_block_mean()
            except CglNoiseError:
                out[f"eta_cross_mean_z{zw!r}"] = None
    return out


def _fail(out_dir, cfg, exc, files):
    report = {"status": "failed", "config_hash": config_hash(cfg), "code_version": __version__,
              "error": {"type": type(exc).__name__, "message": str(exc)}}
    _dump(os.path.join(out_dir, "summary.json"), report)
    with open(os.path.join(out_dir, "INCOMPLETE"), "w", encoding="ascii") as fh:
        fh.write(f"{type(exc).__name__}: {exc}\n")
    _write_manifest(out_dir, cfg, "incomplete", files + ["summary.json", "INCOMPLETE"])
    return EXIT_CONFIG if isinstance(exc, ConfigurationError) else EXIT_FAILED


def run_experiment(cfg, out_dir=None):
    """Run ``cfg`` and write its artifacts; returns ``(exit_code, summary)``."""
    out_dir = out_dir or os.path.join(output_root(), cfg.output or cfg.name)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    marker = os.path.join(out_dir, "INCOMPLETE")
    if os.path.exists(marker):
        os.remove(marker)
    with open(os.path.join(out_dir, "config.cfg"), "w", encoding="ascii", newline="\n") as fh:
        fh.write(cfg.to_text())
    files.append("config.cfg")
    try:
        profile, cases = run_pipeline(cfg)
        oracles = run_oracles(cfg, profile, cases)
    except (CglNoiseError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("run failed: %s", exc)
        return _fail(out_dir, cfg, exc, files), None
    pairs = [c.series for c in cases.values() if c.series.is_pair]
    if pairs:
        write_c12_csv(os.path.join(out_dir, "c12.csv"), pairs)
        files.append("c12.csv")
    write_total_noise_csv(os.path.join(out_dir, "total_noise.csv"),
                          [c.series for c in cases.values()])
    files.append("total_noise.csv")
    for label, case in cases.items():
        if case.background.is_pair:
            os.makedirs(os.path.join(out_dir, label), exist_ok=True)
            save_pair(case.background.pair, os.path.join(out_dir, label), "pair")
            files += [f"{label}/pair.txt", f"{label}/pair.json"]
            for zw, eta in case.series.eta.items():
                name = f"{label}/eta_z{zw!r}.csv"
                write_eta_csv(os.path.join(out_dir, name), eta)
                files.append(name)
    single_fano = cases["single"].series.fano[-1] if "single" in cases else None
    summary = {
        "status": "complete",
        "config_hash": config_hash(cfg),
        "code_version": __version__,
        "single_soliton": {"energy": energy(profile.field), "drift_rate": profile.drift_rate,
                           "peak": float(np.abs(profile.field.samples).max()),
                           "stationarity": profile.stationarity},
        "cases": {label: _case_summary(case, single_fano) for label, case in cases.items()},
        "oracles": oracles,
    }
    _dump(os.path.join(out_dir, "summary.json"), summary)
    files.append("summary.json")
    _write_manifest(out_dir, cfg, "complete", files)
    failed = [name for name, r in oracles.items() if not r["passed"]]
    return (EXIT_FAILED if failed else EXIT_OK), summary


# ---------------------------------------------------------------- oracles

def _check(value, limit, passed=None, **extra):
    ok = bool(value <= limit) if passed is None else bool(passed)
    return dict(value=float(value), limit=float(limit), passed=ok, **extra)


def check_conservative(cfg):
    """Energy, shot noise and injected noise in the conservative limit."""
    grid = _grid(cfg)
    params = CgleParams(D=1.0)
    sech = ComplexField(grid, 1 / np.cosh(grid.t))
    traj = propagate(sech, params, 1.0, cfg.dz, stride=int(round(0.1 / cfg.dz)))
    e0 = energy(sech)
    drift = max(abs(energy(traj.field(i)) - e0) for i in range(len(traj))) / e0
    m = step_map(sech, params, cfg.dz, check=False)
    # sech rotates as exp(i z / 2); frozen snapshot maps need the co-rotating frame
    short = propagate(sech, params, 0.4, cfg.dz, stride=int(round(0.1 / cfg.dz)), rotation=0.5)
    states = propagate_covariance(initial_coherent_covariance(grid), short)
    fano = max(abs(total_photon_noise(st, short.field(i))[1] - 1)
               for i, st in enumerate(states))
    return {
        "conservative_energy": _check(drift, 1e-10),
        "conservative_shot_noise": _check(fano, 1e-8),
        "conservative_injected_noise": _check(float(np.abs(m.W).max()), 0.0),
    }


def check_commutator(cases):
    worst = 0.0
    for case in cases.values():
        z = case.states[-1].z
        if z > 0:
            worst = max(worst, max(st.commutator_drift() for st in case.states) / z)
    return {"commutator_drift_per_z": _check(worst, 1e-8)}


def _mc_c12(samples, phi1, phi2, shot12):
    a, b = phi1 @ samples, phi2 @ samples
    maa, mbb, mab = np.mean(a * a), np.mean(b * b), np.mean(a * b)
    value = (mab - shot12) / math.sqrt(maa * mbb)
    infl = ((a * b - mab) / math.sqrt(maa * mbb) - value / (2 * maa) * (a * a - maa)
            - value / (2 * mbb) * (b * b - mbb))
    return value, float(infl.std(ddof=1) / math.sqrt(len(a)))


def check_monte_carlo(cfg):
    """Covariance propagation against sampled trajectories on a small grid."""
    small = cfg.with_values(n_points=cfg.monte_carlo_points, window=cfg.monte_carlo_window)
    grid = _grid(small)
    profile = prepare_single(small, grid)
    pair = prepare_pair(small, profile, "in_phase", 0.0)
    out = {}
    stride = int(round(cfg.monte_carlo_z / cfg.dz))
    for label, bg in (("single", Background("single", profile.field, profile.drift_rate,
                                             profile.velocity)), ("in_phase", pair)):
        traj = propagate(bg.field, small.params, cfg.monte_carlo_z, cfg.dz, stride,
                         bg.rotation, bg.velocity)
        state = propagate_covariance(initial_coherent_covariance(grid), traj)[-1]
        mc = monte_carlo_oracle(traj, cfg.monte_carlo_samples, cfg.seed)
        end = traj.final
        phi = total_projection(end).real
        est, err = mc.projection_covariance(phi)
        exact = state.variance(phi)
        out[f"monte_carlo_total_noise_{label}"] = _check(
            abs(est - exact) / err, 3.0, estimate=est, exact=exact, sigma=err)
        if label == "in_phase":
            part = make_partition(end, small.slot_width)
            one, two = soliton_projections(end, part)
            exact_c12 = c12_of(state, end, part).value
            est_c12, err_c12 = _mc_c12(mc.samples, one.real, two.real, one.shot(two))
            out["monte_carlo_c12"] = _check(abs(est_c12 - exact_c12) / err_c12, 3.0,
                                            estimate=est_c12, exact=exact_c12, sigma=err_c12)
    return out


def check_backprop(cfg, profile, cases):
    """Adjoint variance against forward propagation for three projections per background."""
    z = min(cfg.monte_carlo_z, cfg.z_total) if cfg.z_total > 0 else cfg.monte_carlo_z
    stride = int(round(z / cfg.dz))
    backgrounds = [Background("single", profile.field, profile.drift_rate, profile.velocity)]
    backgrounds += [c.background for c in cases.values() if c.background.is_pair][:1]
    worst, count = 0.0, 0
    for bg in backgrounds:
        traj = propagate(bg.field, cfg.params, z, cfg.dz, stride, bg.rotation, bg.velocity)
        state = propagate_covariance(initial_coherent_covariance(traj.grid), traj)[-1]
        end = traj.final
        part = make_partition(end, cfg.slot_width)
        centre = int(np.argmin(np.abs(part.centers - part.split_time - cfg.slot_width)))
        projections = [total_projection(end), slot_projection(end, centre, part),
                       soliton_projections(end, part)[0]]
        for proj in projections:
            forward = state.variance(proj.real)
            back = backpropagate_projection(proj.real, traj)["total"]
            worst = max(worst, abs(back - forward) / abs(forward))
            count += 1
    return {"backprop_vs_forward": _check(worst, 1e-6, projections=count)}


def check_convergence(cfg):
    """Saturated C12 and total noise of the in-phase pair under dz halving and N doubling."""
    base = cfg.with_values(pairs=("in_phase",), thetas=(), single=False,
                           z_total=cfg.convergence_z, eta_z=())
    variants = {"base": base, "half_dz": base.with_values(dz=cfg.dz / 2),
                "double_n": base.with_values(n_points=2 * cfg.n_points)}
    ends = {}
    for name, c in variants.items():
        _, cases = run_pipeline(c)
        s = cases["in_phase"].series
        ends[name] = (s.c12[-1], s.fano[-1])
    out = {}
    for name in ("half_dz", "double_n"):
        dc = abs(ends[name][0] - ends["base"][0]) / abs(ends["base"][0])
        df = abs(ends[name][1] - ends["base"][1]) / abs(ends["base"][1])
        out[f"convergence_{name}_c12"] = _check(dc, 0.01, base=ends["base"][0],
                                                 variant=ends[name][0])
        out[f"convergence_{name}_noise"] = _check(df, 0.01, base=ends["base"][1],
                                                   variant=ends[name][1])
    return out


def run_oracles(cfg, profile, cases):
    results = {}
    if cases:
        results.update(check_commutator(cases))
    if cfg.conservative_checks:
        results.update(check_conservative(cfg))
    if cfg.monte_carlo_samples > 0:
        results.update(check_monte_carlo(cfg))
    if cfg.backprop_checks:
        results.update(check_backprop(cfg, profile, cases))
    if cfg.convergence_checks:
        results.update(check_convergence(cfg))
    return results


def run_validation(cfg, out_dir=None):
    """Run the invariant suite and write ``validation.json`` / ``validation.txt``."""
    cfg = cfg.with_values(conservative_checks=True, backprop_checks=True,
                          monte_carlo_samples=cfg.monte_carlo_samples or 10000)
    out_dir = out_dir or os.path.join(output_root(), cfg.output or f"{cfg.name}-validation")
    code, summary = run_experiment(cfg, out_dir)
    if summary is None:
        return code, None
    lines = []
    for name, r in sorted(summary["oracles"].items()):
        lines.append(f"{'PASS' if r['passed'] else 'FAIL'} {name}: {r['value']!r} "
                     f"(limit {r['limit']!r})")
    stamp = f"# config_hash={summary['config_hash']} code_version={__version__}"
    with open(os.path.join(out_dir, "validation.txt"), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write("\n".join([stamp] + lines) + "\n")
    _dump(os.path.join(out_dir, "validation.json"),
          {"config_hash": summary["config_hash"], "code_version": __version__,
           "checks": summary["oracles"]})
    return code, summary["oracles"]
