"""Command-line front end: ``run``, ``validate`` and ``sweep``.

The output root is taken from ``$CGLNOISE_OUTPUT`` (default
``./cglnoise-output``); each run writes into its own subdirectory.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import itertools
import json
import logging
import os
import sys

from .config import config_hash, load_config, parse_value, preset_names
from .errors import ConfigurationError
from .experiment import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, output_root, run_experiment, \
    run_validation

log = logging.getLogger("cglnoise")


def _overrides(pairs):
    values = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        values[key.strip()] = parse_value(key.strip(), text)
    return values


def _load(args):
    cfg = load_config(args.config)
    values = _overrides(args.set)
    if args.output:
        values["output"] = args.output
    return cfg.with_values(**values) if values else cfg


def _print_summary(summary):
    if not summary:
        return
    for label, case in summary["cases"].items():
        parts = [f"fano={case['final_fano']:.6g}"]
        if "saturated_c12" in case:
            parts.insert(0, f"C12={case['saturated_c12']:.6g}")
            parts.append(f"rho={case['rho']:.6f}")
        print(f"{label:>14}: " + " ".join(parts))
    for name, r in sorted(summary["oracles"].items()):
        print(f"{'PASS' if r['passed'] else 'FAIL'} {name}: {r['value']:.3e} (limit {r['limit']:g})")


def cmd_run(args):
    cfg = _load(args)
    code, summary = run_experiment(cfg)
    _print_summary(summary)
    print(os.path.join(output_root(), cfg.output or cfg.name))
    return code


def cmd_validate(args):
    cfg = _load(args)
    code, checks = run_validation(cfg)
    if checks:
        for name, r in sorted(checks.items()):
            print(f"{'PASS' if r['passed'] else 'FAIL'} {name}: {r['value']:.3e} "
                  f"(limit {r['limit']:g})")
    return code


def _sweep_job(job):
    cfg, out_dir = job
    summary_path = os.path.join(out_dir, "summary.json")
    if os.path.exists(summary_path):
        with open(summary_path, encoding="ascii") as fh:
            if json.load(fh).get("status") == "complete":
                return out_dir, EXIT_OK, True
    code, _ = run_experiment(cfg, out_dir)
    return out_dir, code, False


def cmd_sweep(args):
    base = _load(args)
    axes = []
    for item in args.vary:
        key, _, values = item.partition("=")
        key = key.strip()
        if not values:
            raise ConfigurationError(f"--vary {item!r} needs key=a,b,c")
        axes.append([(key, parse_value(key, v)) for v in values.split(",")])
    root = os.path.join(output_root(), base.output or f"{base.name}-sweep")
    jobs = []
    for combo in itertools.product(*axes):
        cfg = base.with_values(**dict(combo))
        jobs.append((cfg, os.path.join(root, config_hash(cfg))))
    os.makedirs(root, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(job) for job in jobs]
    keys = [axis[0][0] for axis in axes]
    with open(os.path.join(root, "sweep.csv"), "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(keys + ["config_hash", "exit_code", "resumed"]) + "\n")
        for (cfg, _), (out_dir, code, resumed) in zip(jobs, results):
            vals = [repr(getattr(cfg, k)) for k in keys]
            fh.write(",".join(vals + [os.path.basename(out_dir), str(code), str(resumed)]) + "\n")
    print(root)
    return EXIT_OK if all(code == EXIT_OK for _, code, _ in results) else EXIT_FAILED


def build_parser():
    parser = argparse.ArgumentParser(prog="cglnoise", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("config", help=f"config file or preset ({', '.join(preset_names())})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--output", help="subdirectory of the output root")

    p = sub.add_parser("run", help="run an experiment")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", help="run the invariant and oracle suite")
    common(p)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("sweep", help="run a grid of configs")
    common(p)
    p.add_argument("--vary", action="append", required=True, metavar="KEY=A,B,C")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
