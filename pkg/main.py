import os
from dotenv import load_dotenv

# Load Environment Variables BEFORE any other local imports
ENV = os.getenv("ENV", "production")
if ENV == "dev":
    env_file = ".env.dev"
    if os.path.exists(env_file):
        load_dotenv(env_file)
        print(f"Loaded configuration from {env_file}")
    else:
        print(f"Warning: ENV=dev but {env_file} not found")
elif os.path.exists(".env"):
    load_dotenv(".env")

import argparse
import json
import logging
import math
import sys

from pydantic import ValidationError

# Configure Logging
logging.basicConfig(
    level=os.getenv("SRPT_LAB_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)

from models.dist import ProcTimeDist
from models.experiment import ExperimentConfig
from models.rbm import RbmParams
from services import experiment_service, file_service
from services.dist_service import SInversionError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _describe_validation(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "config"
        parts.append(f"{loc}: {err.get('msg', '').removeprefix('Value error, ')}")
    return "; ".join(parts)


def load_config(path: str, seed=None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}") from e
    if seed is not None:
        payload["base_seed"] = seed
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        raise UsageError(_describe_validation(e)) from e


def _workers(flag):
    if flag is not None:
        return flag
    raw = os.getenv("SRPT_LAB_WORKERS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError as e:
        raise UsageError(f"SRPT_LAB_WORKERS must be an integer, got {raw!r}") from e


def _parse_y(token: str) -> float:
    """Plain numbers, or eN for e**N."""
    token = token.strip()
    try:
        if token.lower().startswith("e") and len(token) > 1:
            return math.exp(float(token[1:]))
        return float(token)
    except OverflowError as e:
        raise UsageError(f"y value {token!r} exceeds the float range") from e
    except ValueError as e:
        raise UsageError(f"bad y value {token!r}") from e


def cmd_run(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out_dir = args.out or os.getenv("SRPT_LAB_OUT") or cfg.output_dir
    files = experiment_service.run_experiment(cfg, out_dir=out_dir, workers=_workers(args.workers))
    print(f"{len(files)} files written to {out_dir}")
    return EXIT_OK


def cmd_invert_s(args) -> int:
    try:
        dist = ProcTimeDist(alpha=args.alpha, beta=args.beta)
    except ValidationError as e:
        raise UsageError(_describe_validation(e)) from e
    ys = [_parse_y(t) for t in args.y]
    if any(y <= 0 for y in ys):
        raise UsageError("y values must be positive")
    rows = experiment_service.invert_s(dist, ys)
    print(f"{'y':>24} {'S^-1(y)':>24} {'S(S^-1(y))':>24} {'beta S^-1/(ln y)^(1/a)':>24}")
    for row in rows:
        ratio = "-" if row["weibull_ratio"] is None else f"{row['weibull_ratio']:.12g}"
        print(f"{row['y']:>24.12g} {row['s_inverse']:>24.12g} {row['s_of_s_inverse']:>24.12g} {ratio:>24}")
    if args.out:
        file_service.write_json(os.path.join(args.out, "invert_s.json"), {"dist": dist.model_dump(), "rows": rows})
    return EXIT_OK


def cmd_compare_rbm(args) -> int:
    try:
        params = RbmParams(drift=args.drift, variance=args.variance, w0=0.0, step=args.step, scheme=args.scheme)
    except ValidationError as e:
        raise UsageError(_describe_validation(e)) from e
    if args.n < 1 or args.horizon <= 0:
        raise UsageError("compare-rbm needs n >= 1 and a positive horizon")
    seed = 0 if args.seed is None else args.seed
    report = experiment_service.compare_rbm(params, args.n, seed, horizon=args.horizon)
    print(json.dumps(report, indent=2))
    out_dir = args.out or os.getenv("SRPT_LAB_OUT")
    if out_dir:
        file_service.write_json(os.path.join(out_dir, "compare_rbm.json"), report)
        file_service.write_columns_csv(os.path.join(out_dir, "rbm_path.csv"),
                                       experiment_service.rbm_path_table(params, args.horizon, seed))
    return EXIT_OK


def cmd_replay(args) -> int:
    events = file_service.read_event_log(args.event_log)
    table = experiment_service.replay(events)
    out = args.out or os.path.splitext(args.event_log)[0] + "_replay.csv"
    file_service.write_columns_csv(out, table)
    worst = float(abs(table["w_error"]).max()) if len(table["w_error"]) else 0.0
    mismatched = int((table["q"] != table["q_replayed"]).sum())
    print(f"replayed {len(table['t'])} grid records: max |W error| {worst:.3g}, Q mismatches {mismatched} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srpt-lab", description="SRPT queue simulator and heavy-traffic scaling lab")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline named in an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--workers", type=int)
    run.add_argument("--seed", type=int, help="overrides base_seed")
    run.set_defaults(func=cmd_run)

    inv = sub.add_parser("invert-s", help="tabulate S^-1 for a Weibull law")
    inv.add_argument("--alpha", type=float, default=1.0)
    inv.add_argument("--beta", type=float, default=1.0)
    inv.add_argument("--y", nargs="+", required=True, help="values, or eN for e**N")
    inv.add_argument("--out")
    inv.set_defaults(func=cmd_invert_s)

    rbm = sub.add_parser("compare-rbm", help="KS of simulated RBM marginal against the closed form")
    rbm.add_argument("--drift", type=float, default=0.0)
    rbm.add_argument("--variance", type=float, default=1.0)
    rbm.add_argument("--horizon", type=float, default=1.0)
    rbm.add_argument("--step", type=float, default=1e-3)
    rbm.add_argument("--scheme", choices=["euler", "bridge"], default="bridge")
    rbm.add_argument("-n", "--n", type=int, default=10000)
    rbm.add_argument("--seed", type=int)
    rbm.add_argument("--out")
    rbm.set_defaults(func=cmd_compare_rbm)

    rep = sub.add_parser("replay", help="re-derive grid statistics from an event log")
    rep.add_argument("event_log")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        logger.error(f"[CLI] {e}")
        return EXIT_USAGE
    except (OSError, ValueError, SInversionError, RuntimeError) as e:
        logger.error(f"[CLI] {args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
