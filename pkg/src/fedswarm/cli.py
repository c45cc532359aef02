"""Command-line entry points: run experiments, evaluate bounds, validate JSON.

Subcommands:

* ``run <experiment>`` -- execute one of e1, e1_5, e2, quant_check and write
  a JSON summary.
* ``bounds`` -- print the evaluated bound report for a parameter set.
* ``quant-check`` -- shortcut for ``run quant_check``.
* ``validate <json>`` -- check a summary file against the schema.

Exit status is 0 on success, 2 on configuration errors, 1 on failures.
A flat JSON config file may supply any ``run`` option; explicit flags win.
The worker count comes from ``--jobs`` or the FEDSWARM_JOBS variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from fedswarm import bounds as bd
from fedswarm.harness import ExperimentSpec, run_experiment, validate_file
from fedswarm.harness.experiments import jsonify
from fedswarm.harness.grids import EXPERIMENTS

_RUN_KEYS = ("seeds", "out", "reduced", "jobs", "master_seed")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="fedswarm", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--seeds", type=int, default=None)
    run.add_argument("--out", type=str, default=None)
    run.add_argument("--config", type=str, default=None,
                     help="flat JSON file with run options and overrides")
    run.add_argument("--reduced", action="store_true", default=None,
                     help="use the small CI grids instead of the reference grids")
    run.add_argument("--jobs", type=int, default=None,
                     help="parallel workers (default: FEDSWARM_JOBS or 1)")
    run.add_argument("--master-seed", type=int, default=None)

    b = sub.add_parser("bounds", help="print a bound report for a parameter set")
    b.add_argument("--K", type=int, default=4)
    b.add_argument("--n", type=int, default=3000)
    b.add_argument("--m", type=int, default=3000)
    b.add_argument("--V", type=int, default=256)
    b.add_argument("--bits", type=float, default=8.0)
    b.add_argument("--d", type=float, default=None)
    b.add_argument("--rho", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=0.05)
    b.add_argument("--c1", type=float, default=1.0)
    b.add_argument("--c2", type=float, default=1.0)
    b.add_argument("--clip", type=float, default=20.0)
    b.add_argument("--eps-opt", type=float, default=0.0)
    b.add_argument("--eps-fit", type=float, default=0.0)
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--n-cal", type=int, default=3000)
    b.add_argument("--b-i", type=str, default=None,
                   help="comma-separated per-node score bits (default: 8 x K)")
    b.add_argument("--b-cal", type=int, default=8)
    b.add_argument("--s-max", type=float, default=bd.BoundParams().s_max)
    b.add_argument("--f-max", type=float, default=1.0)
    b.add_argument("--c-quantile", type=float, default=1.0)
    b.add_argument("--kl-bar", type=float, default=None)
    b.add_argument("--drift-term", type=float, default=None)

    qc = sub.add_parser("quant-check", help="run the quantizer moment suite")
    qc.add_argument("--out", type=str, default=None)
    qc.add_argument("--reduced", action="store_true", default=None)
    qc.add_argument("--master-seed", type=int, default=None)

    v = sub.add_parser("validate", help="validate a summary JSON against the schema")
    v.add_argument("path", type=str)
    return top


def _default_jobs() -> int:
    env = os.environ.get("FEDSWARM_JOBS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _cmd_run(args) -> int:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return 2
        if not isinstance(file_cfg, dict):
            print("error: config file must hold a flat JSON object", file=sys.stderr)
            return 2
    merged = {}
    for key in _RUN_KEYS:
        cli_val = getattr(args, key, None)
        merged[key] = cli_val if cli_val is not None else file_cfg.get(key)
    overrides = {k: v for k, v in file_cfg.items() if k not in _RUN_KEYS}
    try:
        spec = ExperimentSpec(
            experiment=args.experiment,
            seeds=merged["seeds"],
            out=merged["out"],
            master_seed=merged["master_seed"] or 0,
            reduced=bool(merged["reduced"]),
            jobs=merged["jobs"] if merged["jobs"] is not None else _default_jobs(),
            overrides=overrides,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    doc = run_experiment(spec)
    n_points = len(doc.get("points", doc.get("mode_kl", [])))
    print(f"{spec.experiment}: {n_points} points x {spec.seeds} seeds "
          f"in {doc['wall_time_s']:.1f}s"
          + (f" -> {spec.out}" if spec.out else ""))
    if spec.experiment == "quant_check":
        for name, ok in doc["passes"].items():
            print(f"  {name}: {'pass' if ok else 'FAIL'}")
        return 0 if doc["passes"]["all"] else 1
    return 0


def _cmd_bounds(args) -> int:
    b_i = tuple(int(x) for x in args.b_i.split(",")) if args.b_i else tuple([8] * args.K)
    try:
        params = bd.BoundParams(
            K=args.K, n=args.n, m=args.m, V=args.V, bits_per_coord=args.bits,
            d=args.d, rho=args.rho, delta=args.delta, c1=args.c1, c2=args.c2,
            clip=args.clip, eps_opt=args.eps_opt, eps_fit=args.eps_fit,
            alpha=args.alpha, n_cal=args.n_cal, b_i=b_i, b_cal=args.b_cal,
            s_max=args.s_max, f_max=args.f_max, c_quantile=args.c_quantile,
        )
        report = bd.full_report(params, kl_bar=args.kl_bar, drift_term=args.drift_term)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(jsonify(report.to_dict()), indent=2, sort_keys=True))
    return 0


def _cmd_validate(args) -> int:
    import jsonschema

    try:
        doc = validate_file(args.path)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {args.path}: {exc}", file=sys.stderr)
        return 2
    except jsonschema.ValidationError as exc:
        print(f"invalid: {exc.message}", file=sys.stderr)
        return 1
    print(f"valid: {args.path} ({doc['experiment']}, schema {doc['schema_version']})")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "bounds":
        return _cmd_bounds(args)
    if args.command == "quant-check":
        ns = argparse.Namespace(
            experiment="quant_check", seeds=None, out=args.out, config=None,
            reduced=args.reduced, jobs=None, master_seed=args.master_seed,
        )
        return _cmd_run(ns)
    if args.command == "validate":
        return _cmd_validate(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
