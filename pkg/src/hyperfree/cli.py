"""Command-line interface: bench-mv, solve and verify subcommands.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import bench
from .bench import ConfigError, RunConfig
from .material import NonPositiveJacobian
from .solver import IndefiniteOperator, MaxNewtonIterations


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    parser.add_argument("--dim", type=int)
    parser.add_argument("--p", "--degree", dest="degree", type=int)
    parser.add_argument("--q", "--n-qpoints", dest="n_qpoints", type=int)
    parser.add_argument("--refinements", type=int)
    parser.add_argument("--coarse-cells", dest="coarse_cells", type=int)
    parser.add_argument("--strategy", choices=("scalar", "tensor2", "tensor4", "matrix_based"))
    parser.add_argument("--preconditioner", choices=("gmg", "diag", "none"))
    parser.add_argument("--material")
    parser.add_argument("--load", dest="load")
    parser.add_argument("--load-steps", dest="n_load_steps", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument(
        "--timings",
        action="store_true",
        default=None,
        help="include wall-time columns in the solve output (non-deterministic)",
    )


def _build_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config) as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
    field_names = {f.name for f in dataclasses.fields(RunConfig)}
    for name in field_names:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    return RunConfig.from_dict(data)


def _emit(records, columns, config: RunConfig) -> None:
    text = (
        bench.render_csv(records, columns)
        if config.format == "csv"
        else bench.render_json(records, columns)
    )
    if config.out:
        with open(config.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _cmd_bench_mv(args: argparse.Namespace) -> int:
    config = _build_config(args)
    record = bench.run_mv_benchmark(config)
    _emit([record], bench.metrics_columns(timings=True), config)
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    config = _build_config(args)
    record, log = bench.run_solver_benchmark(config)
    for r in log:
        print(
            f"step {r.load_step} (load {r.fraction:.2f}) it {r.iteration}: "
            f"|F| = {r.residual_norm:.3e}  |du| = {r.update_norm:.3e}  "
            f"cg {r.cg_iterations} ({r.cg_seconds:.3f} s)",
            file=sys.stderr,
        )
    _emit(log, bench.newton_log_columns(timings=bool(config.timings)), config)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    from .verify import run_verify

    config = _build_config(args)
    records = run_verify(seed=config.seed)
    all_ok = True
    for rec in records:
        status = "PASS" if rec.passed else "FAIL"
        print(f"[{status}] {rec.name}: value={rec.value:.3e} threshold={rec.threshold:.3e}")
        all_ok &= rec.passed
    if config.out:
        columns = ("name", "passed", "value", "threshold")
        rows = [
            {"name": r.name, "passed": r.passed, "value": r.value, "threshold": r.threshold}
            for r in records
        ]
        text = bench.render_csv(rows, columns) if config.format == "csv" else bench.render_json(rows, columns)
        with open(config.out, "w") as f:
            f.write(text)
    return 0 if all_ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hyperfree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("bench-mv", _cmd_bench_mv), ("solve", _cmd_solve), ("verify", _cmd_verify)):
        p = sub.add_parser(name)
        _add_config_flags(p)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, KeyError, json.JSONDecodeError, FileNotFoundError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except (MaxNewtonIterations, IndefiniteOperator, NonPositiveJacobian) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
