"""Command line entry point: ``privrl {run,params,audit,sweep}``."""

import argparse
import itertools
import json
import sys
from pathlib import Path

from ..errors import ConfigError, PrivRLError
from .audit import audit_privacy_arithmetic
from .config import derived_params, load_config
from .emit import emit
from .runner import run_experiment

GRID_KEYS = ("epsilon", "K", "scale_override")


def _run(config, out_dir):
    records = run_experiment(config)
    paths = emit(records, out_dir, config.emit, config=config.to_dict(), derived=derived_params(config))
    for p in paths:
        print(p)
    return 0


def cmd_run(args):
    config = load_config(args.config)
    return _run(config, args.out or config.output)


def cmd_params(args):
    config = load_config(args.config)
    print(json.dumps(derived_params(config), indent=1))
    return 0


def cmd_audit(args):
    config = load_config(args.config)
    agent = config.agent
    if args.scale_override is not None:
        config = config.with_changes(scale_override=args.scale_override)
        agent = config.agent
    report = audit_privacy_arithmetic(agent, config.env, config.K)
    print(json.dumps(report.to_dict(), indent=1) if args.json else report.format())
    return 0 if report.passed else 1


def load_grid(path):
    try:
        grid = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from None
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid must be a non-empty JSON object")
    bad = set(grid) - set(GRID_KEYS)
    if bad:
        raise ConfigError(f"grid keys must be among {GRID_KEYS}, got {sorted(bad)}")
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid.{key} must be a non-empty list")
    return grid


def grid_points(grid):
    keys = sorted(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, combo))


def cmd_sweep(args):
    config = load_config(args.config)
    grid = load_grid(args.grid)
    root = Path(args.out or config.output)
    for point in grid_points(grid):
        tag = "_".join(f"{k}={v}" for k, v in point.items())
        sub = config.with_changes(**point)
        print(f"[{tag}]")
        _run(sub, root / tag)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="privrl", description="Private RL experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run all seeds and emit regret traces")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("params", help="print derived parameters as JSON")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_params)
    p = sub.add_parser("audit", help="check noise scales against the composition arithmetic")
    p.add_argument("--config", required=True)
    p.add_argument("--scale-override", type=float, default=None)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_audit)
    p = sub.add_parser("sweep", help="Cartesian grid over epsilon / K / scale_override")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PrivRLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
