"""Command-line front end.

Subcommands: ``direct-rate`` (loss-limited baseline), ``simulate`` (one chain
from a config file), ``sweep`` (distance sweep with per-distance schedule
optimization, CSV), and ``optimize`` (best schedule at one distance, JSON).

Outputs are byte-identical for identical inputs and seed; every probability
and rate is emitted in scientific notation with 13 significant digits so the
encodings round-trip.  Exit codes: 0 success, 2 bad flags or config, 3
infeasible plan.
"""

import argparse
import sys

import numpy as np

from . import chain, keyrate
from .errors import InfeasibleStage, SimulationError


def _fmt(x: float) -> str:
    return format(float(x), ".12e")


def _to_json(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(f'{pad}  "{k}": {_to_json(v, indent + 1)}' for k, v in obj.items())
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(f"{pad}  {_to_json(v, indent + 1)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _write(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# config files: flat "key = value" lines, '#' comments, schema-checked

_CONFIG_SCHEMA = {
    "schema_version": int,
    "total_length_km": float,
    "nesting": int,
    "initial_lambda": float,
    "strategy": str,
    "pr_lambda_target": float,
    "swap_lambda_targets": str,
    "purify_lambda_target": float,
    "gaussify_iterations": int,
    "cutoff": int,
    "mu_db_per_km": float,
    "seed": int,
}
_REQUIRED_KEYS = ("schema_version", "total_length_km", "nesting", "initial_lambda",
                  "strategy", "swap_lambda_targets")


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_SCHEMA[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    for key in _REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if values["schema_version"] != 1:
        raise ConfigError(f"unsupported schema_version {values['schema_version']}")
    return values


def plan_from_config(values: dict) -> chain.ChainPlan:
    targets = tuple(float(t) for t in values["swap_lambda_targets"].split(",") if t.strip())
    return chain.ChainPlan(
        total_length_km=values["total_length_km"],
        nesting=values["nesting"],
        initial_lambda=values["initial_lambda"],
        strategy=values["strategy"],
        pr_lambda_target=values.get("pr_lambda_target"),
        swap_lambda_targets=targets,
        purify_lambda_target=values.get("purify_lambda_target"),
        gaussify_iterations=values.get("gaussify_iterations", 2),
        cutoff=values.get("cutoff", 8),
        mu_db_per_km=values.get("mu_db_per_km", 0.2),
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_direct_rate(args) -> int:
    grid = None
    if args.lambda_grid:
        grid = [float(x) for x in args.lambda_grid.split(",") if x.strip()]
    lines = ["distance_km,lambda_opt,rate,tag"]
    for dist in args.distance_km:
        rate, lam = keyrate.direct_transmission_rate(dist, mu=args.mu, lambda_grid=grid)
        tag = "secure" if rate > 0 else "insecure"
        lines.append(f"{dist:.6f},{_fmt(lam)},{_fmt(rate)},{tag}")
    _write("\n".join(lines) + "\n", args.output)
    return 0


def cmd_simulate(args) -> int:
    try:
        with open(args.config) as fh:
            values = parse_config(fh.read())
        plan = plan_from_config(values)
    except (OSError, ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = chain.simulate_chain(plan)
    except InfeasibleStage as exc:
        _write(_to_json({"error": "infeasible-plan", "stage": exc.stage,
                         "detail": str(exc)}) + "\n", args.output)
        return 3
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3
    _write(_to_json(result.to_dict()) + "\n", args.output)
    return 0


def cmd_sweep(args) -> int:
    if args.min_km >= args.max_km or args.points < 2:
        print("sweep needs min < max and at least 2 points", file=sys.stderr)
        return 2
    step = (args.max_km - args.min_km) / (args.points - 1)
    lines = ["distance_km,rate_direct,rate_qr,p_total,n_qr,nesting"]
    for i in range(args.points):
        dist = args.min_km + i * step
        direct, _ = keyrate.direct_transmission_rate(dist, mu=args.mu)
        best = chain.optimize(dist, strategy=args.strategy, budget=args.budget,
                              seed=args.seed, cutoff=args.cutoff, mu=args.mu)
        if best.feasible:
            row = (f"{dist:.6f},{_fmt(direct)},{_fmt(best.rate_qr)},"
                   f"{_fmt(best.result.p_total)},{_fmt(best.result.n_qr)},"
                   f"{best.plan.nesting}")
        else:
            row = f"{dist:.6f},{_fmt(direct)},nan,nan,nan,-1"
        lines.append(row)
    _write("\n".join(lines) + "\n", args.output)
    return 0


def cmd_optimize(args) -> int:
    best = chain.optimize(args.distance_km, strategy=args.strategy, budget=args.budget,
                          seed=args.seed, cutoff=args.cutoff, mu=args.mu)
    if not best.feasible:
        _write(_to_json({"error": "no-feasible-plan",
                         "evaluations": best.evaluations}) + "\n", args.output)
        return 3
    doc = best.result.to_dict()
    doc["evaluations"] = best.evaluations
    _write(_to_json(doc) + "\n", args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvrepeater",
                                     description="Repeater-chain simulation and key rates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("direct-rate", help="loss-limited baseline rate")
    p.add_argument("--distance-km", type=float, nargs="+", required=True)
    p.add_argument("--mu", type=float, default=0.2)
    p.add_argument("--lambda-grid", type=str, default=None,
                   help="comma list of source squeezing values to scan")
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(func=cmd_direct_rate)

    p = sub.add_parser("simulate", help="run one chain from a config file")
    p.add_argument("--config", type=str, required=True)
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="distance sweep with per-distance optimization")
    p.add_argument("--min-km", type=float, required=True)
    p.add_argument("--max-km", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--strategy", choices=chain.STRATEGIES, default="pr-only")
    p.add_argument("--budget", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, default=8)
    p.add_argument("--mu", type=float, default=0.2)
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="best schedule at one distance")
    p.add_argument("--distance-km", type=float, required=True)
    p.add_argument("--strategy", choices=chain.STRATEGIES, default="pr-only")
    p.add_argument("--budget", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, default=8)
    p.add_argument("--mu", type=float, default=0.2)
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(func=cmd_optimize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
