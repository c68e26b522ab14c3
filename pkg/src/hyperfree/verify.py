"""Deterministic self-checks behind ``hyperfree verify``.

Each check compares an operator path against an independent reference (naive
loops, finite differences, the assembled matrix, closed-form identities) and
reports a scalar discrepancy.  Everything is seeded, so two runs produce
byte-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import material as mat
from . import presets
from .fespace import evaluate_gradients, evaluate_values, gauss_legendre, integrate_testfunctions, lagrange_basis
from .mesh import MeshHierarchy, build_benchmark_mesh, refine_globally
from .multigrid import ChebyshevSettings, build_transfers, chebyshev_apply
from .operators import (
    AssembledTangent,
    MatrixFreeTangent,
    Material,
    Problem,
    build_problem_hierarchy,
    compute_residual,
    energy,
    random_valid_state,
)


@dataclass
class CheckRecord:
    name: str
    passed: bool
    value: float
    threshold: float


def _unit_problems(dim: int, refinements: int, degree: int, seed_mesh: int = 0) -> list[Problem]:
    n = 4 if dim == 2 else 2
    mesh = build_benchmark_mesh(dim, n, [], side=1.0)
    hier = refine_globally(MeshHierarchy.from_coarse(mesh), refinements)
    return build_problem_hierarchy(hier, degree, presets.material_preset("unit"))


def _naive_tables(basis, dim):
    from .operators import _tensor_shape_tables

    return _tensor_shape_tables(basis, dim)


def check_sumfac_vs_naive(seed: int) -> CheckRecord:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, degree in ((2, 3), (2, 5), (3, 2)):
        basis = lagrange_basis(degree, gauss_legendre(degree + 1))
        n_table, g_table = _naive_tables(basis, dim)
        nloc = (degree + 1) ** dim
        x = rng.standard_normal((3, nloc, 2))
        vals = evaluate_values(basis, x, dim)
        grads = evaluate_gradients(basis, x, dim)
        ref_v = np.einsum("nq,enc->eqc", n_table, x)
        ref_g = np.einsum("nqa,enc->eqca", g_table, x)
        scale = np.abs(ref_v).max()
        worst = max(worst, np.abs(vals - ref_v).max() / scale, np.abs(grads - ref_g).max() / scale)
    return CheckRecord("sum_factorization_vs_naive", worst <= 1e-13, worst, 1e-13)


def check_strategy_equivalence(seed: int) -> CheckRecord:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim in (2, 3):
        problem = _unit_problems(dim, 0, 2)[0]
        u_bar = random_valid_state(problem, seed)
        ops = [MatrixFreeTangent(problem, u_bar, s) for s in ("scalar", "tensor2", "tensor4")]
        ops.append(AssembledTangent(problem, u_bar))
        for _ in range(3):
            x = rng.standard_normal(problem.n_dofs)
            ys = [op.apply(x) for op in ops]
            ref = np.linalg.norm(ys[-1])
            for y in ys[:-1]:
                worst = max(worst, np.linalg.norm(y - ys[-1]) / ref)
    return CheckRecord("strategy_vs_assembled", worst <= 1e-10, worst, 1e-10)


def check_tangent_fd(seed: int) -> CheckRecord:
    problem = _unit_problems(2, 0, 2)[0]
    rng = np.random.default_rng(seed)
    u_bar = random_valid_state(problem, seed, j_min=0.7, j_max=1.4)
    v = rng.standard_normal(problem.n_dofs)
    v[problem.constraints.mask] = 0.0
    v /= np.linalg.norm(v)
    op = MatrixFreeTangent(problem, u_bar, "tensor4")
    av = op.apply(v)
    av[problem.constraints.mask] = 0.0
    scale = np.linalg.norm(u_bar)
    errs, eps_list = [], (1e-3, 1e-4, 1e-5)
    for eps in eps_list:
        h = eps * scale
        fd = (compute_residual(problem, u_bar + h * v) - compute_residual(problem, u_bar - h * v)) / (2 * h)
        errs.append(np.linalg.norm(fd - av) / np.linalg.norm(av))
    slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
    return CheckRecord("tangent_fd_slope", slope >= 1.8, float(slope), 1.8)


def check_energy_residual_fd(seed: int) -> CheckRecord:
    problem = _unit_problems(2, 0, 1)[0]
    traction = np.array([0.02, 0.01])
    u = random_valid_state(problem, seed, j_min=0.85, j_max=1.2)
    res = compute_residual(problem, u, traction)
    free = np.flatnonzero(~problem.constraints.mask)
    h = 1e-6 * max(np.linalg.norm(u), 1.0)
    fd = np.zeros_like(res)
    for i in free:
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        fd[i] = (energy(problem, up, traction) - energy(problem, um, traction)) / (2 * h)
    err = np.linalg.norm(fd - res) / np.linalg.norm(res)
    return CheckRecord("energy_residual_fd", err <= 1e-6, float(err), 1e-6)


def check_material_identities(seed: int) -> CheckRecord:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        grad_u = 0.2 * rng.standard_normal((3, 3))
        kin = mat.kinematics_from_displacement_gradient(grad_u)
        mu, lam = 1.3, 0.9
        tau = mat.kirchhoff_stress(kin, mu, lam)
        s = mat.second_pk_stress(kin.C, mu, lam)
        push = mat.push_forward_rank2(kin.F, s)
        worst = max(worst, np.abs(push - tau).max() / np.abs(tau).max())
        g = rng.standard_normal((3, 3))
        g = 0.5 * (g + g.T)
        closed = mat.tangent_action_closed_form(g, kin.J, mu, lam)
        full = mat.voigt_contract(mat.material_tangent_full(kin.J, mu, lam, 3), g)
        worst = max(worst, np.abs(closed - full).max() / np.abs(closed).max())
    return CheckRecord("material_identities", worst <= 1e-12, worst, 1e-12)


def check_transfer(seed: int) -> CheckRecord:
    rng = np.random.default_rng(seed)
    problems = _unit_problems(2, 2, 2)
    transfers = build_transfers(problems)
    worst = 0.0
    for t, (pc, pf) in zip(transfers, zip(problems, problems[1:])):
        for _ in range(5):
            x = rng.standard_normal(pc.n_dofs)
            y = rng.standard_normal(pf.n_dofs)
            lhs = t.prolong(x) @ y
            rhs = x @ t.restrict(y)
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return CheckRecord("transfer_transpose", worst <= 1e-12, worst, 1e-12)


def check_diagonal(seed: int) -> CheckRecord:
    problem = _unit_problems(2, 0, 2)[0]
    u_bar = random_valid_state(problem, seed)
    mf = MatrixFreeTangent(problem, u_bar, "tensor2")
    mb = AssembledTangent(problem, u_bar)
    d1, d2 = mf.diagonal(), mb.diagonal()
    err = np.abs(d1 - d2).max() / np.abs(d2).max()
    return CheckRecord("diagonal_vs_assembled", err <= 1e-11, float(err), 1e-11)


def check_payload_counts(seed: int) -> CheckRecord:
    counts = {}
    for dim in (2, 3):
        problem = _unit_problems(dim, 0, 1)[0]
        u = problem.zero_vector()
        counts[dim] = tuple(
            MatrixFreeTangent(problem, u, s).cache.payload_scalars_per_qpoint
            for s in ("scalar", "tensor2", "tensor4")
        )
    ok = counts[3] == (1, 8, 27) and counts[2][0] < counts[2][1] < counts[2][2]
    return CheckRecord("cache_payload_counts", ok, float(counts[3][2]), 27.0)


def check_chebyshev_fixed_point(seed: int) -> CheckRecord:
    rng = np.random.default_rng(seed)
    n = 24
    diag = np.linspace(1.0, 3.0, n)
    apply_fn = lambda v: diag * v
    x_star = rng.standard_normal(n)
    b = diag * x_star
    out = chebyshev_apply(apply_fn, 1.0 / diag, 1.0, b, x_star, ChebyshevSettings(), steps=2)
    err = np.abs(out - x_star).max() / np.abs(x_star).max()
    return CheckRecord("chebyshev_fixed_point", err <= 1e-12, float(err), 1e-12)


def check_geometry_partition(seed: int) -> CheckRecord:
    problems = _unit_problems(2, 1, 2)
    err = 0.0
    for p in problems:
        err = max(err, abs(p.geometry.jxw.sum() - 1.0))
    return CheckRecord("geometry_partition_of_measure", err <= 1e-12, float(err), 1e-12)


ALL_CHECKS = (
    check_sumfac_vs_naive,
    check_strategy_equivalence,
    check_tangent_fd,
    check_energy_residual_fd,
    check_material_identities,
    check_transfer,
    check_diagonal,
    check_payload_counts,
    check_chebyshev_fixed_point,
    check_geometry_partition,
)


def run_verify(seed: int = 0) -> list[CheckRecord]:
    return [check(seed) for check in ALL_CHECKS]
