"""Command line entry point.

Each pipeline stage is a subcommand taking the same ``--config`` run
file, so a run can be executed end to end (``normdev run``) or stage by
stage. ``phantom`` generates a synthetic cohort, ``gradcheck`` verifies
the network gradients, ``audit`` re-checks leakage from artifacts alone.

Exit codes: 0 success, 2 validation/config, 3 numeric failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import NormdevError
from .net.gradcheck import gradient_check
from .phantom import PhantomConfig
from .pipeline import RunConfig, STAGES, audit_run, run_pipeline, run_stage


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run config JSON file")
    parser.add_argument("--out", help="override the configured output directory")
    parser.add_argument(
        "--seed", type=int, help="override every seed (split, train, bootstrap)"
    )


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config)
    if args.out is not None:
        config.out_dir = args.out
    if args.seed is not None:
        config.seeds = {k: args.seed for k in ("split", "train", "bootstrap")}
    config.validate()
    return config


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normdev",
        description="normative deviation modelling pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_phantom = sub.add_parser("phantom", help="generate a synthetic phantom cohort")
    p_phantom.add_argument("--out", required=True, help="output directory")
    p_phantom.add_argument("--config", help="phantom config JSON file")
    p_phantom.add_argument("--subjects", type=int, help="number of subjects")
    p_phantom.add_argument("--visits", type=int, help="visits per subject")
    p_phantom.add_argument("--seed", type=int, help="generation seed")
    p_phantom.add_argument("--delta", type=float, help="converter deviation shift")
    p_phantom.add_argument("--noise", type=float, help="target noise sigma")
    p_phantom.add_argument("--dims", help="volume dims, e.g. 16,16,16")
    p_phantom.add_argument(
        "--label-model", choices=("deterministic", "logistic"), help="label mechanism"
    )

    stage_help = {
        "ingest": "validate the cohort and volumes",
        "split": "write the subject-level split manifest",
        "train": "train the normative regressor",
        "score": "score val/test visits into deviation.csv",
        "assoc": "run the association suite",
        "discrim": "run the discrimination suite",
        "report": "render tables and figures from stored JSON",
    }
    for stage in STAGES:
        name = "report" if stage == "render" else stage
        p_stage = sub.add_parser(name, help=stage_help[name])
        _add_run_arguments(p_stage)
        p_stage.set_defaults(stage=stage)

    p_run = sub.add_parser("run", help="execute all stages under a lockfile")
    _add_run_arguments(p_run)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_grad.add_argument("--samples", type=int, default=2)
    p_grad.add_argument("--directions", type=int, default=24)
    p_grad.add_argument("--eps", type=float, default=1e-6)
    p_grad.add_argument("--seed", type=int, default=0)

    p_audit = sub.add_parser("audit", help="post-hoc leakage audit of a run directory")
    p_audit.add_argument("--out", required=True, help="run output directory to audit")
    p_audit.add_argument("--cohort", help="cohort CSV for the converter-visit check")

    return parser


def _cmd_phantom(args: argparse.Namespace) -> int:
    from .phantom import write_phantom_dataset

    base = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
    overrides = {
        "n_subjects": args.subjects,
        "visits_per_subject": args.visits,
        "rng_seed": args.seed,
        "delta": args.delta,
        "noise_sigma": args.noise,
        "label_model": args.label_model,
    }
    if args.dims:
        overrides["dims"] = tuple(int(v) for v in args.dims.split(","))
    base.update({k: v for k, v in overrides.items() if v is not None})
    cfg = PhantomConfig.from_dict(base)
    records, truth = write_phantom_dataset(cfg, args.out)
    _emit(
        {
            "out_dir": args.out,
            "n_visits": len(records),
            "n_subjects": cfg.n_subjects,
            "n_converter_visits": sum(r.converter for r in records),
            "rng_seed": cfg.rng_seed,
        }
    )
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    result = gradient_check(
        n_samples=args.samples,
        n_directions=args.directions,
        eps=args.eps,
        seed=args.seed,
    )
    _emit(result)
    return 0 if result["passed"] else 3


def _cmd_audit(args: argparse.Namespace) -> int:
    result = audit_run(args.out, cohort_csv=args.cohort)
    _emit(result)
    return 0 if result["ok"] else 2


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "phantom":
            return _cmd_phantom(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "audit":
            return _cmd_audit(args)
        if args.command == "run":
            meta = run_pipeline(_load_run_config(args))
            _emit({"status": meta["status"], "stages": meta["stages_completed"]})
            return 0
        config = _load_run_config(args)
        summary = run_stage(config, args.stage)
        # keep stdout small: drop bulky payloads, report the headline numbers
        compact = {
            k: v
            for k, v in summary.items()
            if isinstance(v, (int, float, str, bool)) or k == "written"
        }
        _emit({"stage": args.stage, **compact})
        return 0
    except NormdevError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
