"""Command-line interface: ``meda run | sweep | bench``.

Results are written as canonical JSON (sorted keys, schema_version field).
Exit codes: 2 parse/config, 3 dimension, 4 numerical, 5 I/O.
"""

import argparse
import configparser
import itertools
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import (
    NORMALIZATIONS,
    SyntheticTaskSpec,
    conditional_shift_spec,
    marginal_shift_spec,
    generate_synthetic,
    infer_format,
    load_dataset,
    make_pair,
    standard_spec,
    write_json,
)
from .errors import ConfigError, MedaError
from .features import Domain
from .learner import Hyper, KernelSpec, save_model
from .pipeline import run_task

log = logging.getLogger("meda")

SCHEMA_VERSION = 1
DEFAULT_SEED = 0
MU_GRID = tuple(round(0.1 * i, 1) for i in range(11))
SYNTHETIC_D = 3
SYNTHETIC_TASKS = 5
WORKERS_ENV = "MEDA_WORKERS"
SYNTHETIC_KINDS = {
    "standard": standard_spec,
    "none": lambda seed: SyntheticTaskSpec(seed=seed, class_sep=3.0, name=f"no-shift-{seed}"),
    "marginal": marginal_shift_spec,
    "conditional": conditional_shift_spec,
}
EXIT_IO = 5


@dataclass(frozen=True)
class RunConfig:
    source_path: Optional[str] = None
    target_path: Optional[str] = None
    synthetic_seed: Optional[int] = None
    synthetic_kind: str = "standard"
    format: str = "auto"
    normalization: str = "zscore"
    d: int = 20
    p: int = 10
    lam: float = 10.0
    eta: float = 0.1
    rho: float = 1.0
    t_max: int = 10
    mu_mode: str = "estimate"
    kernel: str = "rbf"
    bandwidth: str = "auto"
    seed: int = DEFAULT_SEED
    output_path: Optional[str] = None
    model_path: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.mu_mode not in ("estimate", "grid"):
            try:
                mu = float(self.mu_mode)
            except ValueError:
                raise ConfigError(f"mu must be 'estimate', 'grid' or a number, got {self.mu_mode!r}") from None
            if not 0.0 <= mu <= 1.0:
                raise ConfigError(f"fixed mu must lie in [0, 1], got {mu}")
        if self.eta <= 0 or self.lam < 0 or self.rho < 0:
            raise ConfigError("need eta > 0, lambda >= 0, rho >= 0")
        if self.d < 1 or self.p < 1 or self.t_max < 1:
            raise ConfigError("d, p and t_max must be positive")
        if self.synthetic_kind not in SYNTHETIC_KINDS:
            raise ConfigError(f"unknown synthetic task kind {self.synthetic_kind!r}")
        if self.synthetic_seed is None and not (self.source_path and self.target_path):
            raise ConfigError("give --source and --target, or --synthetic SEED")

    @property
    def fixed_mu(self) -> Optional[float]:
        return None if self.mu_mode in ("estimate", "grid") else float(self.mu_mode)

    def hyper(self) -> Hyper:
        bandwidth = self.bandwidth if self.bandwidth == "auto" else float(self.bandwidth)
        try:
            return Hyper(
                lam=self.lam,
                eta=self.eta,
                rho=self.rho,
                p=self.p,
                d=self.d,
                t_max=self.t_max,
                kernel=KernelSpec(self.kernel, bandwidth),
                mu=self.fixed_mu,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("output_path")
        out.pop("model_path")
        return out


def load_pair(config: RunConfig):
    if config.synthetic_seed is not None:
        return generate_synthetic(SYNTHETIC_KINDS[config.synthetic_kind](config.synthetic_seed))
    fmt_s = config.format if config.format != "auto" else infer_format(config.source_path)
    fmt_t = config.format if config.format != "auto" else infer_format(config.target_path)
    source = load_dataset(config.source_path, fmt_s)
    target = load_dataset(config.target_path, fmt_t, domain=Domain.TARGET)
    if fmt_s == "sparse" and source.n_features != target.n_features:
        width = max(source.n_features, target.n_features)
        source = load_dataset(config.source_path, fmt_s, n_features=width)
        target = load_dataset(config.target_path, fmt_t, n_features=width, domain=Domain.TARGET)
    name = config.name or f"{Path(config.source_path).stem}->{Path(config.target_path).stem}"
    return make_pair(source, target, name)


def _finite(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def cmd_run(config: RunConfig) -> dict:
    """Run one adaptation task and return the result payload."""
    t0 = time.perf_counter()
    pair = load_pair(config)
    load_time = time.perf_counter() - t0
    outcome = run_task(pair, config.hyper(), config.normalization)
    model = outcome.model
    accs = outcome.accuracies or [None] * model.n_iterations
    iterations = [
        {
            "iteration": i + 1,
            "mu": model.mu_history[i],
            "accuracy": accs[i],
            "label_agreement": model.label_history[i],
            "a_distance": None if model.reports[i] is None else model.reports[i].to_dict(),
        }
        for i in range(model.n_iterations)
    ]
    result = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "task": config.name or pair.name,
        "config": config.echo(),
        "iterations": iterations,
        "mu_history": list(model.mu_history),
        "accuracy_history": outcome.accuracies,
        "final_accuracy": _finite(outcome.final_accuracy),
        "baseline_accuracy": _finite(outcome.baseline_accuracy),
        "converged": model.converged,
        "timing": {"load": load_time, **outcome.timings},
    }
    if config.model_path:
        save_model(model, config.model_path)
    if config.output_path:
        write_json(result, config.output_path)
    return result


def strip_timing(payload):
    """Copy of a result payload without wall-clock fields."""
    if isinstance(payload, dict):
        return {k: strip_timing(v) for k, v in payload.items() if k != "timing"}
    if isinstance(payload, list):
        return [strip_timing(v) for v in payload]
    return payload


def _run_cell(args):
    index, params, config = args
    try:
        result = cmd_run(replace(config, output_path=None, model_path=None, **params))
        return {"index": index, "params": params, "final_accuracy": result["final_accuracy"],
                "error": None, "result": result}
    except (MedaError, ValueError, ArithmeticError, OSError) as exc:
        return {"index": index, "params": params, "final_accuracy": None,
                "error": f"{type(exc).__name__}: {exc}", "result": None}


def _workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def cmd_sweep(config: RunConfig, grid: dict) -> list:
    """Cartesian-product sweep; one result cell per grid point, in grid order."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("sweep grid is empty")
    keys = list(grid)
    cells = []
    for index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        params = dict(zip(keys, combo))
        if "mu_mode" in params:
            params["mu_mode"] = str(params["mu_mode"])
        cells.append((index, params, config))
    workers = _workers()
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return sorted(results, key=lambda r: r["index"])


def sweep_payload(config, grid, cells):
    return {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "kind": "sweep",
        "config": config.echo(),
        "grid": {k: [str(v) if k == "mu_mode" else v for v in vals] for k, vals in grid.items()},
        "cells": cells,
    }


def _bench_tasks(suite: str, seed: int, base: RunConfig):
    if suite == "synthetic":
        for i in range(SYNTHETIC_TASKS):
            yield replace(base, synthetic_seed=seed + i, d=SYNTHETIC_D, name=f"synthetic-{seed + i}")
        return
    root = Path(suite)
    if not root.is_dir():
        raise ConfigError(f"bench suite must be 'synthetic' or a directory, got {suite!r}")
    domains = []
    for path in sorted(root.iterdir()):
        try:
            infer_format(path)
        except MedaError:
            continue
        domains.append(path)
    for src, tgt in itertools.permutations(domains, 2):
        yield replace(base, source_path=str(src), target_path=str(tgt),
                      name=f"{src.stem}->{tgt.stem}")


def cmd_bench(suite: str, seed: int = DEFAULT_SEED, base: Optional[RunConfig] = None):
    """Run every task of a suite with default settings.

    Returns ``(summary, n_failed)``; failing tasks are skipped with a warning.
    """
    rows, failed = [], 0
    placeholder = base or RunConfig(synthetic_seed=seed, seed=seed)
    tasks = list(_bench_tasks(suite, seed, placeholder))
    if not tasks:
        log.warning("no tasks found in suite %s", suite)
    for task in tasks:
        try:
            result = cmd_run(replace(task, output_path=None, model_path=None))
        except (MedaError, ValueError, ArithmeticError, OSError) as exc:
            log.warning("skipping %s: %s", task.name, exc)
            failed += 1
            continue
        rows.append({
            "task": task.name,
            "final_accuracy": result["final_accuracy"],
            "baseline_accuracy": result["baseline_accuracy"],
            "iterations": len(result["iterations"]),
        })
    scored = [r["final_accuracy"] for r in rows if r["final_accuracy"] is not None]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "kind": "bench",
        "suite": suite,
        "seed": seed,
        "tasks": rows,
        "average_accuracy": float(np.mean(scored)) if scored else None,
        "n_failed": failed,
    }
    return summary, failed


# --------------------------------------------------------------------------
# argument handling

_CONFIG_KEYS = {f.name for f in fields(RunConfig)}
_ALIASES = {
    "source": "source_path",
    "target": "target_path",
    "synthetic": "synthetic_seed",
    "lambda": "lam",
    "mu": "mu_mode",
    "output": "output_path",
    "model": "model_path",
    "save_model": "model_path",
}


def _coerce(key, value):
    if value is None:
        return None
    if key == "synthetic_kind":
        return value
    kind = {"d": int, "p": int, "t_max": int, "seed": int, "synthetic_seed": int,
            "lam": float, "eta": float, "rho": float}.get(key, str)
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"invalid value {value!r} for {key}") from None


def read_config_file(path) -> dict:
    """``key = value`` lines (``#`` comments allowed); keys mirror the long flags."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _add_run_flags(p):
    p.add_argument("--config", help="key = value file; explicit flags override it")
    p.add_argument("--source", dest="source_path")
    p.add_argument("--target", dest="target_path")
    p.add_argument("--synthetic", dest="synthetic_seed", type=int, metavar="SEED",
                   help="use the seeded synthetic shifted-Gaussians task")
    p.add_argument("--synthetic-kind", dest="synthetic_kind", choices=["standard", "none", "marginal", "conditional"])
    p.add_argument("--format", choices=["auto", "dense", "sparse", "mat"])
    p.add_argument("--normalization", choices=list(NORMALIZATIONS))
    p.add_argument("--d", type=int, help="manifold subspace dimension")
    p.add_argument("--p", type=int, help="neighbours in the Laplacian graph")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--mu", dest="mu_mode", help="'estimate', 'grid' or a fixed value in [0, 1]")
    p.add_argument("--kernel", choices=["rbf", "linear"])
    p.add_argument("--bandwidth", help="RBF sigma^2 or 'auto'")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", dest="output_path", help="result JSON path ('-' for stdout)")
    p.add_argument("--save-model", dest="model_path")
    p.add_argument("--name")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="meda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one adaptation task")
    _add_run_flags(run)

    sweep = sub.add_parser("sweep", help="Cartesian hyperparameter sweep")
    _add_run_flags(sweep)
    sweep.add_argument("--grid-d", type=_ints)
    sweep.add_argument("--grid-p", type=_ints)
    sweep.add_argument("--grid-lambda", type=_floats)
    sweep.add_argument("--grid-eta", type=_floats)
    sweep.add_argument("--grid-rho", type=_floats)
    sweep.add_argument("--grid-mu", help="comma list of fixed mu values, or 'default' for 0,0.1,...,1")

    bench = sub.add_parser("bench", help="run a benchmark suite with default settings")
    bench.add_argument("suite", help="'synthetic' or a directory of per-domain feature files")
    bench.add_argument("--seed", type=int, default=DEFAULT_SEED)
    bench.add_argument("--output", dest="output_path")
    bench.add_argument("--normalization", choices=list(NORMALIZATIONS), default="zscore")
    bench.add_argument("--d", type=int, default=20, help="subspace dimension for directory suites")
    return parser


def config_from_args(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return RunConfig(**values)


def _sweep_grid(args) -> dict:
    grid = {}
    for flag, key in (("grid_d", "d"), ("grid_p", "p"), ("grid_lambda", "lam"),
                      ("grid_eta", "eta"), ("grid_rho", "rho")):
        if getattr(args, flag) is not None:
            grid[key] = getattr(args, flag)
    if args.grid_mu is not None:
        grid["mu_mode"] = list(MU_GRID) if args.grid_mu == "default" else _floats(args.grid_mu)
    return grid


def _print_table(rows, columns):
    print("\t".join(columns))
    for row in rows:
        print("\t".join("" if row.get(c) is None else
                        (f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]))
                        for c in columns))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        if args.command == "bench":
            base = RunConfig(synthetic_seed=args.seed, seed=args.seed, d=args.d,
                             normalization=args.normalization)
            summary, failed = cmd_bench(args.suite, args.seed, base)
            _print_table(summary["tasks"], ["task", "baseline_accuracy", "final_accuracy", "iterations"])
            if summary["average_accuracy"] is not None:
                print(f"average\t\t{summary['average_accuracy']:.4f}")
            if args.output_path:
                write_json(summary, args.output_path)
            return 1 if summary["tasks"] == [] and failed else 0

        config = config_from_args(args)
        if args.command == "sweep" or config.mu_mode == "grid":
            grid = _sweep_grid(args) if args.command == "sweep" else {}
            if config.mu_mode == "grid":
                grid.setdefault("mu_mode", list(MU_GRID))
            cells = cmd_sweep(replace(config, output_path=None), grid)
            rows = [{**c["params"], "final_accuracy": c["final_accuracy"], "error": c["error"]}
                    for c in cells]
            _print_table(rows, list(grid) + ["final_accuracy", "error"])
            if config.output_path:
                write_json(sweep_payload(config, grid, cells), config.output_path)
            return 0

        result = cmd_run(config)
        if config.output_path is None:
            acc = result["final_accuracy"]
            print(f"{result['task']}: iterations={len(result['iterations'])} "
                  f"final_accuracy={'n/a' if acc is None else f'{acc:.4f}'}")
        return 0
    except MedaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
