"""Command-line entry points: train, oracle, verify, sweep.

Exit codes: 0 success, 1 failed invariant or training failure, 2 usage,
config or IO error.
"""

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd
import yaml

from mackrl.errors import ConfigError, DomainError, MackrlError, TrainingDivergedError
from mackrl.utils.config_loader import load_run_config, load_settings, save_run_config
from mackrl.utils.logger import setup_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _setup_logging(args, settings, out_dir=None):
    level = args.log_level or settings.get("log_level", "INFO")
    log_dir = Path(out_dir) / "logs" if out_dir else Path(settings.get("output_dir", "output")) / "logs"
    setup_logger(level=level, log_dir=str(log_dir))


def _seeds(args, config):
    return [args.seed] if args.seed is not None else list(config.seeds)


def _train_seeds(config, seeds, out_dir, settings):
    from mackrl.core.trainer import train
    from mackrl.utils.metrics import write_manifest

    out_dir = Path(out_dir)
    results = []
    outputs = []
    for seed in seeds:
        result = train(config, seed, out_dir, settings)
        results.append(result)
        outputs.extend(result.outputs)
    config_path = out_dir / "config.yaml"
    save_run_config(config, config_path)
    outputs.append(config_path)
    write_manifest(out_dir, config, seeds, outputs)
    return results


def cmd_train(args):
    """Train every seed of a run config and write the manifest"""
    settings = load_settings(args.settings)
    config = load_run_config(args.config)
    out_dir = Path(args.out)
    _setup_logging(args, settings, out_dir)
    results = _train_seeds(config, _seeds(args, config), out_dir, settings)
    for result in results:
        print(f"{result.run_id} seed {result.seed}: final greedy return {result.final_return:.4f}")
    return EXIT_OK


def cmd_oracle(args):
    """Print the brute-force matrix-game optima for one CK fraction"""
    from mackrl.envs.matrix_game import MatrixGameConfig, matrix_oracle

    if args.env != "matrix":
        raise ConfigError(f"No oracle for env '{args.env}'")
    if not 0.0 <= args.ck_fraction <= 1.0:
        raise ConfigError(f"--ck-fraction must lie in [0, 1], got {args.ck_fraction}")
    config = MatrixGameConfig.from_ck_fraction(args.ck_fraction)
    table = matrix_oracle(config)
    print(f"ck_fraction={args.ck_fraction:g} p_ck={config.p_ck:.6f} p_sigma={config.p_sigma:.6f}")
    for name in ("IAC", "CK-JAL", "MACKRL", "JAL"):
        print(f"{name:8s} {table[name]:.6f}")
    return EXIT_OK


def cmd_verify(args):
    """Run property suites; exit code 1 when any check fails"""
    from mackrl.core.verification import run_suite

    results = run_suite(args.suite, args.samples, args.seed or 0)
    for result in results:
        print(result)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def parse_values(text):
    """'0, 0.1, 0.2' -> [0, 0.1, 0.2]; each item is read as a YAML scalar"""
    values = [yaml.safe_load(item.strip()) for item in text.split(",") if item.strip()]
    if not values:
        raise ConfigError("--values needs at least one value")
    return values


def cmd_sweep(args):
    """Train one run config per parameter value and aggregate the final returns"""
    from mackrl.utils.metrics import aggregate_sweep, read_metrics

    settings = load_settings(args.settings)
    base = load_run_config(args.config)
    out_dir = Path(args.out)
    _setup_logging(args, settings, out_dir)
    frames = {}
    for value in parse_values(args.values):
        config = base.with_value(args.param, value)
        point_dir = out_dir / f"{args.param}={value}"
        logger.info(f"Sweep point {args.param}={value}")
        seeds = _seeds(args, config)
        _train_seeds(config, seeds, point_dir, settings)
        frames[value] = pd.concat([read_metrics(point_dir / f"metrics_seed{s}.csv") for s in seeds],
                                  ignore_index=True)
    merged = pd.concat([df.assign(**{args.param: value}) for value, df in frames.items()], ignore_index=True)
    merged.to_csv(out_dir / "sweep_metrics.csv", index=False)
    summary = aggregate_sweep(frames, args.param)
    summary.to_csv(out_dir / "sweep.csv", index=False)
    print(summary.to_string(index=False))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mackrl", description="Common knowledge multi-agent RL harness")
    parser.add_argument("--settings", default="config/settings.yaml", help="global settings file")
    parser.add_argument("--log-level", default=None, help="override the settings log level")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one run config")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, default=None, help="single seed (default: the config's seed list)")
    train.add_argument("--out", required=True)
    train.set_defaults(handler=cmd_train)

    oracle = sub.add_parser("oracle", help="exact optimal returns of the matrix game")
    oracle.add_argument("--env", default="matrix")
    oracle.add_argument("--ck-fraction", type=float, required=True)
    oracle.set_defaults(handler=cmd_oracle)

    verify = sub.add_parser("verify", help="run property suites")
    verify.add_argument("--suite", default="all", choices=["ck", "tree", "sampling", "gradients", "envs", "all"])
    verify.add_argument("--samples", type=int, default=None,
                        help="primary size of each suite (defaults to the full acceptance sizes)")
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(handler=cmd_verify)

    sweep = sub.add_parser("sweep", help="train one run per (value, seed) and aggregate")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, help="config key, or env_config.<key>")
    sweep.add_argument("--values", required=True, help="comma separated values")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv=None):
    """Console entry point; returns the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except TrainingDivergedError as e:
        logger.error(f"Training diverged: {e} (diagnostics in {e.dump_dir})")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (ConfigError, OSError) as e:
        logger.error(f"Configuration or IO error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as e:
        logger.error(f"Invalid request: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MackrlError as e:
        logger.error(f"Run failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
