"""Benchmark harness: configs, matrix-vector and solver studies, CSV/JSON output."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import presets
from .flops import FLOPS, counting
from .operators import Problem, build_problem_hierarchy, compute_residual, make_tangent
from .solver import LoadSpec, NewtonSettings, apply_load_fraction, cg, newton_solve
from .multigrid import build_gmg


class ConfigError(ValueError):
    pass


_STRATEGIES = ("scalar", "tensor2", "tensor4", "matrix_based")
_PRECONDITIONERS = ("gmg", "diag", "none")


@dataclass
class RunConfig:
    dim: int = 2
    degree: int = 2
    n_qpoints: int | None = None  # defaults to degree + 1
    refinements: int = 2
    coarse_cells: int = 8
    strategy: str = "tensor4"
    preconditioner: str = "gmg"
    material: str = "benchmark"
    load: str = "benchmark"
    n_load_steps: int = 5
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    timings: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.strategy not in _STRATEGIES:
            raise ConfigError(f"strategy must be one of {_STRATEGIES}, got {self.strategy!r}")
        if self.preconditioner not in _PRECONDITIONERS:
            raise ConfigError(f"preconditioner must be one of {_PRECONDITIONERS}")
        if self.refinements < 0:
            raise ConfigError("refinements must be >= 0")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.n_qpoints is not None and self.n_qpoints < self.degree + 1:
            # explicit override of the q >= p+1 default; allowed but risky
            import warnings

            warnings.warn("n_qpoints below degree+1 under-integrates the tangent", stacklevel=2)

    @property
    def q(self) -> int:
        return self.n_qpoints if self.n_qpoints is not None else self.degree + 1

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        with open(path) as f:
            data = json.load(f)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigError(str(err)) from err


_CONFIG_COLUMNS = (
    "dim",
    "degree",
    "q",
    "refinements",
    "coarse_cells",
    "strategy",
    "preconditioner",
    "material",
    "load",
    "seed",
)

_METRIC_COLUMNS = (
    "n_dofs",
    "n_elements",
    "flops_per_apply",
    "flops_per_dof",
    "storage_bytes",
    "storage_bytes_per_dof",
    "mv_seconds",
    "mv_seconds_per_dof",
    "cg_iterations_mean",
    "newton_iterations_total",
    "solver_seconds",
    "solver_seconds_per_dof",
)

_TIMING_COLUMNS = ("mv_seconds", "mv_seconds_per_dof", "solver_seconds", "solver_seconds_per_dof")


@dataclass
class MetricsRecord:
    dim: int
    degree: int
    q: int
    refinements: int
    coarse_cells: int
    strategy: str
    preconditioner: str
    material: str
    load: str
    seed: int
    n_dofs: int
    n_elements: int
    flops_per_apply: int | None = None
    flops_per_dof: float | None = None
    storage_bytes: int | None = None
    storage_bytes_per_dof: float | None = None
    mv_seconds: float | None = None
    mv_seconds_per_dof: float | None = None
    cg_iterations_mean: float | None = None
    newton_iterations_total: int | None = None
    solver_seconds: float | None = None
    solver_seconds_per_dof: float | None = None


def _problems_for(config: RunConfig) -> list[Problem]:
    hierarchy = presets.benchmark_hierarchy(config.dim, config.refinements, config.coarse_cells)
    mat = presets.material_preset(config.material)
    return build_problem_hierarchy(hierarchy, config.degree, mat, n_qpoints=config.n_qpoints)


def representative_state(config: RunConfig, problems: list[Problem]) -> np.ndarray:
    """First Newton iterate of load step 1: the state the mv benchmark linearizes at."""
    fine = problems[-1]
    load = presets.load_preset(config.load, config.dim)
    traction = apply_load_fraction(1, config.n_load_steps, load)
    u0 = fine.zero_vector()
    residual = compute_residual(fine, u0, traction)
    op = make_tangent(fine, u0, config.strategy)
    if config.preconditioner == "gmg":
        level_strategy = "tensor4" if config.strategy == "matrix_based" else config.strategy
        prec = build_gmg(problems, u0, level_strategy, seed=config.seed).apply
    elif config.preconditioner == "diag":
        inv_diag = 1.0 / op.diagonal()
        prec = lambda r: inv_diag * r
    else:
        prec = None
    du, _ = cg(op.apply, -residual, rel_tol=1e-6, preconditioner=prec)
    return u0 + du


def _record_base(config: RunConfig, fine: Problem) -> MetricsRecord:
    return MetricsRecord(
        dim=config.dim,
        degree=config.degree,
        q=config.q,
        refinements=config.refinements,
        coarse_cells=config.coarse_cells,
        strategy=config.strategy,
        preconditioner=config.preconditioner,
        material=config.material,
        load=config.load,
        seed=config.seed,
        n_dofs=fine.n_dofs,
        n_elements=fine.mesh.n_elements,
    )


def run_mv_benchmark(config: RunConfig, n_runs: int = 10) -> MetricsRecord:
    """Time and count one operator application at a representative state.

    Wall time is the mean over ``n_runs`` applications on a random vector with
    FLOP counting disabled; the FLOP count is taken from one counted apply.
    """
    problems = _problems_for(config)
    fine = problems[-1]
    u_bar = representative_state(config, problems)
    op = make_tangent(fine, u_bar, config.strategy)

    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(fine.n_dofs)

    FLOPS.reset()
    with counting():
        op.apply(x)
    flops = FLOPS.count

    op.apply(x)  # warm up
    t0 = time.perf_counter()
    for _ in range(n_runs):
        op.apply(x)
    elapsed = (time.perf_counter() - t0) / n_runs

    rec = _record_base(config, fine)
    rec.flops_per_apply = flops
    rec.flops_per_dof = flops / fine.n_dofs
    rec.storage_bytes = op.storage_bytes()
    rec.storage_bytes_per_dof = op.storage_bytes() / fine.n_dofs
    rec.mv_seconds = elapsed
    rec.mv_seconds_per_dof = elapsed / fine.n_dofs
    return rec


def run_solver_benchmark(config: RunConfig) -> tuple[MetricsRecord, list]:
    """Full incremental Newton solve; mean CG iterations and time per DoF."""
    problems = _problems_for(config)
    fine = problems[-1]
    load = presets.load_preset(config.load, config.dim)
    settings = NewtonSettings(n_load_steps=config.n_load_steps)
    t0 = time.perf_counter()
    result = newton_solve(
        problems,
        settings,
        load,
        preconditioner=config.preconditioner,
        strategy=config.strategy,
        seed=config.seed,
    )
    elapsed = time.perf_counter() - t0

    rec = _record_base(config, fine)
    cg_iters = [r.cg_iterations for r in result.records]
    rec.cg_iterations_mean = float(np.mean(cg_iters)) if cg_iters else 0.0
    rec.newton_iterations_total = len(result.records)
    rec.solver_seconds = elapsed
    rec.solver_seconds_per_dof = elapsed / fine.n_dofs
    return rec, result.records


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def records_to_rows(records, columns) -> list[list[str]]:
    rows = []
    for rec in records:
        d = dataclasses.asdict(rec) if dataclasses.is_dataclass(rec) else dict(rec)
        rows.append([_format_value(d.get(c)) for c in columns])
    return rows


def metrics_columns(timings: bool = True) -> tuple[str, ...]:
    cols = _CONFIG_COLUMNS + _METRIC_COLUMNS
    if not timings:
        cols = tuple(c for c in cols if c not in _TIMING_COLUMNS)
    return cols


def newton_log_columns(timings: bool = False) -> tuple[str, ...]:
    cols = ("load_step", "fraction", "iteration", "residual_norm", "update_norm", "cg_iterations")
    if timings:
        cols = cols + ("cg_seconds",)
    return cols


def render_csv(records, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(records_to_rows(records, columns))
    return buf.getvalue()


def render_json(records, columns) -> str:
    rows = []
    for rec in records:
        d = dataclasses.asdict(rec) if dataclasses.is_dataclass(rec) else dict(rec)
        rows.append({c: d.get(c) for c in columns})
    return json.dumps(rows, indent=2) + "\n"


def emit_results(records, path: str, fmt: str = "csv", columns=None) -> None:
    """Write records with a stable column order (config fields, then metrics)."""
    if columns is None:
        columns = metrics_columns()
    text = render_csv(records, columns) if fmt == "csv" else render_json(records, columns)
    with open(path, "w") as f:
        f.write(text)
