"""Command-line entry point.

Exit status: 0 success, 2 configuration error, 3 numerical fault (non-finite
loss or gradient), 4 oracle instance too large, 1 any other failure (including
a failed gradient check).
"""
from __future__ import annotations

import argparse
import sys

from .baselines import OracleTooLarge, check_oracle_size, dp_oracle, relaxation_bound
from .config import ConfigError, ExperimentConfig, load_config
from .env import record_trace
from .nn import NumericalFault

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORACLE = 0, 1, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output directory for metric files")
    p.add_argument("--steps", type=int, help="overrides total_steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train-access", "train-predict", "train-joint"):
        _common(sub.add_parser(name, help=f"run the {name[6:]} training loop"))
    p = sub.add_parser("baseline", help="roll out a reference scheduler")
    p.add_argument("name", choices=["rr", "random", "mp", "oracle"])
    _common(p)
    p = sub.add_parser("compare", help="final smoothed reward of several policies over seeds")
    _common(p)
    p.add_argument("--policies", default="access,baseline:mp,baseline:rr,baseline:random",
                   help="comma-separated algorithm names")
    p.add_argument("--n-seeds", type=int, default=5, help="seeds seed .. seed + n - 1")
    p.add_argument("--no-bounds", action="store_true", help="skip the bound rows")
    p = sub.add_parser("gradcheck", help="finite-difference check of the training gradients")
    _common(p)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    p = sub.add_parser("oracle", help="exact optimum and relaxation bound on a recorded realization")
    _common(p)
    p.add_argument("--horizon", type=int, help="slots to optimize over (default: total_steps)")
    p.add_argument("--gamma", type=float, default=1.0)
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "total_steps": args.steps, "out_dir": args.out}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None}).validate()


def _run(args) -> int:
    from .experiment import compare_policies, run_experiment

    cfg = _config(args)
    cmd = args.command
    if cmd.startswith("train-") or cmd == "baseline":
        algo = cmd[6:] if cmd.startswith("train-") else f"baseline:{args.name}"
        _, summary = run_experiment(cfg.replace(algorithm=algo))
        for k, v in summary.items():
            print(f"{k} = {v}")
        return EXIT_OK
    if cmd == "compare":
        policies = [p.strip() for p in args.policies.split(",") if p.strip()]
        for p in policies:
            cfg.replace(algorithm=p)  # reject unknown names before any run starts
        table = compare_policies(cfg, policies, range(cfg.seed, cfg.seed + args.n_seeds),
                                 bounds=not args.no_bounds)
        print(table.format())
        return EXIT_OK
    if cmd == "gradcheck":
        from .gradcheck import run_gradchecks

        errors = run_gradchecks(range(cfg.seed, cfg.seed + args.n_seeds), args.epsilon)
        ok = True
        for name, err in errors.items():
            status = "ok" if err < args.tol else "FAIL"
            ok &= err < args.tol
            print(f"{name:<10} max relative error {err:.3e}  {status}")
        return EXIT_OK if ok else EXIT_FAIL
    if cmd == "oracle":
        scen = cfg.scenario()
        horizon = args.horizon or cfg.total_steps
        check_oracle_size(scen, horizon)
        trace = record_trace(scen, cfg.seed, horizon)
        bound = relaxation_bound(trace, scen, horizon, args.gamma)
        print(f"relaxation_bound = {bound}")
        value, _ = dp_oracle(trace, scen, horizon, args.gamma)
        print(f"dp_oracle = {value}")
        return EXIT_OK
    raise AssertionError(cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OracleTooLarge as exc:
        print(f"oracle infeasible: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
