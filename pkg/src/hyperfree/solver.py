"""Preconditioned conjugate gradients and Newton-Raphson with incremental loading."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .material import NonPositiveJacobian
from .multigrid import build_gmg, build_transfers
from .operators import Problem, compute_residual, make_tangent


class IndefiniteOperator(RuntimeError):
    """CG encountered a search direction with non-positive curvature."""


class MaxNewtonIterations(RuntimeError):
    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass
class CGReport:
    iterations: int
    rel_residual: float
    converged: bool
    wall_time: float
    residual_history: list[float] = field(default_factory=list)


def cg(apply_fn, b, x0=None, rel_tol: float = 1e-6, preconditioner=None, max_iterations: int | None = None):
    """Preconditioned CG for SPD operators; returns (x, CGReport).

    Convergence is declared when the (recursively updated) residual norm drops
    below ``rel_tol * ||b||``; the iteration cap defaults to 10 * n.
    """
    n = len(b)
    if max_iterations is None:
        max_iterations = 10 * n
    x = np.zeros(n) if x0 is None else x0.copy()
    t0 = time.perf_counter()

    r = b - apply_fn(x) if np.any(x) else b.copy()
    b_norm = np.linalg.norm(b)
    history = [np.linalg.norm(r)]
    if b_norm == 0.0:
        return x, CGReport(0, 0.0, True, time.perf_counter() - t0, history)
    if history[0] <= rel_tol * b_norm:
        return x, CGReport(0, history[0] / b_norm, True, time.perf_counter() - t0, history)

    z = preconditioner(r) if preconditioner is not None else r.copy()
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iterations:
        ap = apply_fn(p)
        pap = p @ ap
        if pap <= 0.0:
            raise IndefiniteOperator(f"p.Ap = {pap:.3e} <= 0 at iteration {it}")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        it += 1
        r_norm = np.linalg.norm(r)
        history.append(r_norm)
        if r_norm <= rel_tol * b_norm:
            return x, CGReport(it, r_norm / b_norm, True, time.perf_counter() - t0, history)
        z = preconditioner(r) if preconditioner is not None else r
        rz_new = r @ z
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
    return x, CGReport(it, history[-1] / b_norm, False, time.perf_counter() - t0, history)


@dataclass(frozen=True)
class NewtonSettings:
    n_load_steps: int = 5
    update_tol: float = 1e-5
    residual_rel_tol: float = 1e-8
    residual_abs_tol: float = 1e-8
    linear_rel_tol: float = 1e-6
    max_newton_iterations: int = 30

    def __post_init__(self):
        for name in ("update_tol", "residual_rel_tol", "residual_abs_tol", "linear_rel_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class LoadSpec:
    """Constant traction on the top surface: magnitude times a unit direction."""

    magnitude: float
    direction: tuple[float, ...]


def apply_load_fraction(step: int, total: int, load: LoadSpec) -> np.ndarray:
    """Traction vector at load step ``step`` of ``total`` (step 0 is unloaded)."""
    if not 0 <= step <= total:
        raise ValueError(f"step must be in [0, {total}], got {step}")
    d = np.asarray(load.direction, dtype=float)
    return load.magnitude * (step / total) * d / np.linalg.norm(d)


@dataclass
class NewtonRecord:
    load_step: int
    fraction: float
    iteration: int
    residual_norm: float
    update_norm: float
    cg_iterations: int
    cg_seconds: float


@dataclass
class NewtonResult:
    u: np.ndarray
    records: list[NewtonRecord]
    converged: bool


def _make_preconditioner(problems, u, strategy, kind, seed, transfers):
    fine = problems[-1]
    level_strategy = "tensor4" if strategy == "matrix_based" else strategy
    op = make_tangent(fine, u, strategy)
    if kind == "gmg":
        gmg = build_gmg(problems, u, level_strategy, seed=seed, transfers=transfers)
        return op, gmg.apply
    if kind == "diag":
        inv_diag = 1.0 / op.diagonal()
        return op, lambda r: inv_diag * r
    if kind == "none":
        return op, None
    raise ValueError(f"unknown preconditioner {kind!r}")


def newton_solve(
    problems: list[Problem],
    settings: NewtonSettings,
    load: LoadSpec,
    preconditioner: str = "gmg",
    strategy: str = "tensor4",
    seed: int = 0,
) -> NewtonResult:
    """Incremental 5-step loading with full Newton steps.

    The tangent, its diagonal and the multigrid levels (including eigenvalue
    estimates) are rebuilt at every Newton iteration; each linear system is
    solved by preconditioned CG from a zero initial guess.  If a trial state
    inverts an element, the load increment of the current step is bisected
    once and the step is retried through the midpoint.
    """
    fine = problems[-1]
    transfers = build_transfers(problems) if preconditioner == "gmg" else None
    u = fine.zero_vector()
    records: list[NewtonRecord] = []

    def solve_at_fraction(u_in: np.ndarray, fraction: float, step_index: int) -> np.ndarray:
        traction = apply_load_fraction(1, 1, load) * fraction
        u_cur = u_in.copy()
        residual = compute_residual(fine, u_cur, traction)
        res0 = np.linalg.norm(residual)
        res_target = max(settings.residual_rel_tol * res0, settings.residual_abs_tol)
        if res0 <= settings.residual_abs_tol:
            return u_cur
        for it in range(1, settings.max_newton_iterations + 1):
            op, prec = _make_preconditioner(problems, u_cur, strategy, preconditioner, seed, transfers)
            du, rep = cg(op.apply, -residual, rel_tol=settings.linear_rel_tol, preconditioner=prec)
            u_cur += du
            residual = compute_residual(fine, u_cur, traction)
            res_norm = np.linalg.norm(residual)
            du_norm = np.linalg.norm(du)
            records.append(
                NewtonRecord(step_index, fraction, it, res_norm, du_norm, rep.iterations, rep.wall_time)
            )
            if du_norm <= settings.update_tol and res_norm <= res_target:
                return u_cur
        raise MaxNewtonIterations(
            f"no convergence in {settings.max_newton_iterations} Newton iterations "
            f"(load fraction {fraction:.3f})",
            records,
        )

    total = settings.n_load_steps
    prev_fraction = 0.0
    for step in range(1, total + 1):
        fraction = step / total
        try:
            u = solve_at_fraction(u, fraction, step)
        except NonPositiveJacobian:
            mid = 0.5 * (prev_fraction + fraction)
            u = solve_at_fraction(u, mid, step)
            u = solve_at_fraction(u, fraction, step)
        prev_fraction = fraction
    return NewtonResult(u=u, records=records, converged=True)
