"""Command line entry point: ``sampdist {sample,estimate,evaluate,oc-table}``."""

from __future__ import annotations

import argparse
import os
import sys

from .harness import ExperimentConfig, csv_text, ingest, run
from .oc import OCTable, oc_build
from .query import ESTIMATORS, KeyPredicate, estimate_lp, estimate_lpp, estimate_one_sided
from .sampler import (
    POISSON,
    PRIORITY,
    poisson_pps_sample,
    pps_threshold_for_expected_size,
    priority_sample,
    read_sample,
    write_sample,
)
from .seeds import HashConfig, Mode


def _cmd_sample(args) -> int:
    inst = ingest(args.input, args.instance_id)
    cfg = HashConfig(args.hash_seed, Mode(args.mode))
    if args.scheme == POISSON:
        if (args.T is None) == (args.fraction is None):
            raise SystemExit("poisson_pps needs exactly one of --T or --fraction")
        T = args.T if args.T is not None else pps_threshold_for_expected_size(inst, args.fraction * len(inst))
        sample = poisson_pps_sample(inst, T, cfg)
    else:
        if args.k is None:
            raise SystemExit("priority sampling needs --k")
        sample = priority_sample(inst, args.k, cfg)
    if args.output in (None, "-"):
        write_sample(sample, sys.stdout)
    else:
        write_sample(sample, args.output)
    return 0


def _cmd_estimate(args) -> int:
    samples = [read_sample(path) for path in args.samples]
    pred = KeyPredicate.parse(args.predicate)
    table = OCTable.load(args.oc_table) if args.oc_table else None
    kwargs = dict(oc_table=table, per_key=args.per_key)
    if args.query in ("plus", "minus"):
        rep = estimate_one_sided(samples, pred, args.p, args.query, args.estimator, **kwargs)
    else:
        if args.truth:
            kwargs["truth"] = [ingest(path, s.instance_id) for path, s in zip(args.truth, samples)]
        fn = estimate_lpp if args.query == "lpp" else estimate_lp
        rep = fn(samples, pred, args.p, args.estimator, **kwargs)
    print(rep.to_json())
    return 0


def _cmd_evaluate(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.trials is not None:
        config.trials = args.trials
        config.seeds = None
    if args.hash_seed is not None:
        config.seed_start = args.hash_seed
        config.seeds = None
    base = os.path.dirname(os.path.abspath(args.config))
    instances = config.load_instances(base)
    out = args.output or config.output
    if out in (None, "-"):
        rows = run(config, out=None, instances=instances)
        sys.stdout.write(csv_text(rows))
    else:
        run(config, out=out, instances=instances)
    return 0


def _cmd_oc_table(args) -> int:
    table = oc_build(args.p, args.grid_resolution, args.z_min, args.c_tol)
    table.save(args.output)
    print(f"p={table.p!r} c={table.c:.6f} grid_resolution={table.grid_resolution} -> {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sampdist", description="weighted sampling and L_p distance estimation")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("sample", help="sample an instance file")
    sp.add_argument("input", help="key<TAB>value instance file")
    sp.add_argument("--scheme", choices=[POISSON, PRIORITY], default=POISSON)
    sp.add_argument("--T", type=float, help="Poisson threshold")
    sp.add_argument("--fraction", type=float, help="Poisson: expected sample as a fraction of entries")
    sp.add_argument("--k", type=int, help="priority sample size")
    sp.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.COORDINATED.value)
    sp.add_argument("--hash-seed", type=int, default=0, help="global hash seed")
    sp.add_argument("--instance-id", type=int, default=1)
    sp.add_argument("-o", "--output", help="sample file (default stdout)")
    sp.set_defaults(func=_cmd_sample)

    ep = sub.add_parser("estimate", help="estimate a distance from sample files")
    ep.add_argument("samples", nargs="+", help="sample files, one per instance")
    ep.add_argument("--estimator", choices=ESTIMATORS, default="coord_L")
    ep.add_argument("--p", type=float, default=1.0)
    ep.add_argument("--predicate", default="all", help="all | keys:a,b | prefix:x")
    ep.add_argument("--query", choices=["lpp", "lp", "plus", "minus"], default="lpp")
    ep.add_argument("--oc-table", help="cached OC table (coord_OC)")
    ep.add_argument("--truth", nargs="+", help="true instance files, to report the analytic variance")
    ep.add_argument("--per-key", action="store_true", help="include per-key estimates")
    ep.set_defaults(func=_cmd_estimate)

    vp = sub.add_parser("evaluate", help="run an experiment config and write CSV")
    vp.add_argument("--config", required=True, help="experiment config (JSON)")
    vp.add_argument("-o", "--output", help="CSV path (default: config output, else stdout)")
    vp.add_argument("--trials", type=int, help="override the number of trials")
    vp.add_argument("--hash-seed", type=int, help="first global hash seed of the trial sequence")
    vp.set_defaults(func=_cmd_evaluate)

    op = sub.add_parser("oc-table", help="build and cache an OC table")
    op.add_argument("--p", type=float, required=True)
    op.add_argument("--grid-resolution", type=int, default=2000)
    op.add_argument("--z-min", type=float, default=1e-4)
    op.add_argument("--c-tol", type=float, default=1e-3)
    op.add_argument("-o", "--output", required=True)
    op.set_defaults(func=_cmd_oc_table)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"sampdist: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
