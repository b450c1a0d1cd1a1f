"""Command line entry point.

Verbs: run, figure1, figure2, certify, sharpness, validate.
Exit codes: 0 success, 1 config/validation failure, 2 unexpected
divergence at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import harness
from .errors import AssumptionViolation, CertificateUnavailable, \
    ConstructionError, EstimateUnavailable, HypothesisViolation

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgdcert",
        description="Decentralized gradient descent simulator with "
                    "convergence certificates.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--no-certificates", action="store_true")

    p_f1 = sub.add_parser("figure1", help="diminishing-stepsize sweep")
    p_f1.add_argument("--out", required=True)
    p_f1.add_argument("--seed", type=int, default=20260821)
    p_f1.add_argument("--horizon", type=int,
                      default=harness.DEFAULT_HORIZON_FIGURE1)

    p_f2 = sub.add_parser("figure2", help="two-agent bifurcation sweep")
    p_f2.add_argument("--out", required=True)
    p_f2.add_argument("--seed", type=int, default=20260821)
    p_f2.add_argument("--horizon", type=int,
                      default=harness.DEFAULT_HORIZON_FIGURE2)

    p_cert = sub.add_parser("certify",
                            help="evaluate envelopes for a stored run")
    p_cert.add_argument("--run-dir", required=True)

    p_sharp = sub.add_parser("sharpness", help="two-agent threshold report")
    p_sharp.add_argument("--a1", type=float, required=True)
    p_sharp.add_argument("--a2", type=float, required=True)
    p_sharp.add_argument("--gamma", type=float, required=True)
    p_sharp.add_argument("--alpha", type=float, default=None)

    p_val = sub.add_parser("validate", help="check a config end to end")
    p_val.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            cfg = harness.ExperimentConfig.load(args.config)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            summary = harness.cmd_run(
                cfg, args.out, no_certificates=args.no_certificates)
            print(json.dumps(
                {k: summary[k] for k in
                 ("status", "diverged_t", "mu", "L", "eta", "beta", "R")},
                sort_keys=True))
            if summary["status"] == "diverged" and not cfg.expect_divergence:
                print("run diverged unexpectedly", file=sys.stderr)
                return EXIT_DIVERGED
            return EXIT_OK
        if args.verb == "figure1":
            summary = harness.cmd_figure1(
                args.out, seed=args.seed, horizon=args.horizon)
            print(json.dumps({"Z": summary["Z"], "beta": summary["beta"],
                              "mu": summary["mu"], "L": summary["L"]},
                             sort_keys=True))
            return EXIT_OK
        if args.verb == "figure2":
            summary = harness.cmd_figure2(
                args.out, seed=args.seed, horizon=args.horizon)
            bad = [r for r in summary["runs"] if not r["consistent"]]
            print(json.dumps(
                {"threshold": summary["divergence_threshold"],
                 "consistent": not bad}, sort_keys=True))
            return EXIT_DIVERGED if bad else EXIT_OK
        if args.verb == "certify":
            result = harness.cmd_certify(args.run_dir)
            print(json.dumps(
                {k: result[k] for k in result if k != "constants"},
                sort_keys=True))
            return EXIT_OK
        if args.verb == "sharpness":
            out = harness.cmd_sharpness(
                args.a1, args.a2, args.gamma, alpha=args.alpha)
            print(json.dumps(out, sort_keys=True, indent=2))
            return EXIT_OK
        if args.verb == "validate":
            cfg = harness.ExperimentConfig.load(args.config)
            print(json.dumps(harness.cmd_validate(cfg), sort_keys=True,
                             indent=2))
            return EXIT_OK
        raise AssertionError(f"unhandled verb {args.verb}")
    except (harness.ConfigError, ConstructionError, AssumptionViolation,
            CertificateUnavailable, HypothesisViolation, EstimateUnavailable,
            FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
