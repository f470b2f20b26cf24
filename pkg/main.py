import argparse
import logging
import os
import sys

from scripts.config import ConfigError, load_config, output_dir
from scripts.harness import (
    compare_learners,
    print_report_summary,
    print_run_summary,
    report,
    run_experiment,
    velocity_sweep,
)
from scripts.predictor import GRADCHECK_TOLERANCE, VERIFY_HIDDEN, VERIFY_RESOLUTION, Architecture, gradcheck


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_GRADCHECK = 3
FULL_CHECK_COORDINATES = 200


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--episodes", type=int, help="episodes per run")
    common.add_argument("--learner", choices=["ssl", "supervised", "reward"])
    common.add_argument("--scenario", help="static | dynamic_linear | dynamic_sliding | dynamic_rotating")
    common.add_argument("--eta", type=float, help="success-objective step size")
    common.add_argument("--pose-eta", type=float, help="pose-loss step size (online and pretraining)")
    common.add_argument("--lambda", dest="lam", type=float, help="orientation loss weight")
    common.add_argument("--out", help="output directory (default: $GRASP_SSL_OUT or data/processed)")
    common.add_argument("--log-observations", action="store_true", help="log full depth images and wrenches")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="selfgrasp", description="Self-supervised grasping simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single experiment")

    p = sub.add_parser("compare", parents=[common], help="learner comparison on identical seeds")
    p.add_argument("--learners", nargs="+", choices=["ssl", "supervised", "reward"])
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--scenarios", nargs="+")
    p.add_argument("--keep-logs", action="store_true", help="keep every run's episode log")

    p = sub.add_parser("sweep", parents=[common], help="success rate against object speed")
    p.add_argument("--learners", nargs="+", choices=["ssl", "supervised", "reward"])
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--speeds", nargs="+", type=float)

    p = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference gradients")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--full", action="store_true", help="check the configured architecture on sampled coordinates")

    sub.add_parser("report", parents=[common], help="recompute a run summary from its JSONL log")
    return parser


def overrides_from(args):
    overrides = {}
    for key in ("seed", "episodes", "learner", "scenario"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    hyper = {}
    if args.eta is not None:
        hyper["eta"] = args.eta
    if args.pose_eta is not None:
        hyper["pose_eta"] = args.pose_eta
    if args.lam is not None:
        hyper["lambda"] = args.lam
    if hyper:
        overrides["hyperparams"] = hyper
    if args.log_observations:
        overrides["log_observations"] = True
    for key in ("learners", "seeds", "speeds"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def cmd_run(config, out_dir, args):
    summary = run_experiment(config, out_dir)
    print_run_summary(summary, out_dir)
    return EXIT_OK


def cmd_compare(config, out_dir, args):
    compare_learners(config, scenarios=args.scenarios, out_dir=out_dir, keep_logs=args.keep_logs)
    return EXIT_OK


def cmd_sweep(config, out_dir, args):
    velocity_sweep(config, out_dir=out_dir)
    return EXIT_OK


def cmd_gradcheck(config, out_dir, args):
    if args.full:
        arch = Architecture.for_resolution(config.world.resolution, hidden=config.predictor.hidden)
        coordinates = FULL_CHECK_COORDINATES
        scope = f"configured model, {coordinates} sampled coordinates per instance"
    else:
        arch = Architecture.for_resolution(VERIFY_RESOLUTION, hidden=VERIFY_HIDDEN)
        coordinates = None
        scope = "verification network, every coordinate (--full checks the configured model)"
    errors = gradcheck(args.instances, config.seed, arch, coordinates=coordinates)
    print("\n=== gradcheck Summary ===")
    print(f"  Network               : {arch.input_size} inputs, hidden {list(arch.hidden)}")
    print(f"  Scope                 : {scope}")
    print(f"  Instances             : {args.instances}")
    print(f"  Tolerance             : {GRADCHECK_TOLERANCE:.0e}")
    for name, err in errors.items():
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        print(f"  {name:<22s}: {err:.3e}  {status}")
    if max(errors.values()) >= GRADCHECK_TOLERANCE:
        print("ERROR: analytic gradients disagree with finite differences", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_report(config, out_dir, args):
    try:
        summary, problems = report(out_dir)
    except ValueError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_IO
    print_report_summary(summary, problems, out_dir)
    return EXIT_CONFIG if problems else EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config, overrides_from(args))
        return COMMANDS[args.command](config, os.path.abspath(output_dir(args.out)), args)
    except ConfigError as e:
        print(f"ERROR: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
