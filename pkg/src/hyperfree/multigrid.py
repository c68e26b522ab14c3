"""Geometric multigrid V-cycle preconditioner.

Level tangent operators are built by linearizing each level around the nodal
injection of the fine displacement onto that level (not by Galerkin triple
products).  The interlevel transfer is the nested-space embedding of the
tensor-product Lagrange spaces; restriction is its transpose.  Smoothing and
the coarse solve use a diagonally preconditioned Chebyshev polynomial of
fixed degree over a target eigenvalue range derived from a CG/Lanczos
estimate of the largest eigenvalue.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fespace import _contract, _lagrange_values
from .material import NonPositiveJacobian
from .operators import MatrixFreeTangent, Problem

log = logging.getLogger(__name__)


class TransferOperator:
    """Embedding of a coarse tensor-product Lagrange space into the 2:1 refined one."""

    def __init__(self, coarse: Problem, fine: Problem):
        if fine.mesh.n_cells_per_side != 2 * coarse.mesh.n_cells_per_side:
            raise ValueError("transfer requires a 2:1 refined pair of levels")
        self.dim = coarse.dim
        self.components = coarse.dofmap.components
        self.coarse_nodes_1d = coarse.dofmap.nodes_per_side
        self.fine_nodes_1d = fine.dofmap.nodes_per_side
        self.matrix_1d = _interpolation_matrix_1d(coarse.degree, coarse.mesh.n_cells_per_side, coarse.basis.nodes)

    def _apply_all_axes(self, grid: np.ndarray, matrix: np.ndarray) -> np.ndarray:
        # grid axes: (i_dim, ..., i_1, comp)
        for axis in range(self.dim):
            grid = _contract(grid, matrix.T, axis)
        return grid

    def prolong(self, x_coarse: np.ndarray) -> np.ndarray:
        m = self.coarse_nodes_1d
        grid = x_coarse.reshape((m,) * self.dim + (self.components,))
        out = self._apply_all_axes(grid, self.matrix_1d)
        return out.reshape(-1)

    def restrict(self, r_fine: np.ndarray) -> np.ndarray:
        m = self.fine_nodes_1d
        grid = r_fine.reshape((m,) * self.dim + (self.components,))
        out = self._apply_all_axes(grid, self.matrix_1d.T)
        return out.reshape(-1)


def _interpolation_matrix_1d(degree: int, n_coarse_cells: int, nodes: np.ndarray) -> np.ndarray:
    """1D nodal interpolation from the coarse to the refined node lattice."""
    p, m = degree, n_coarse_cells
    n_coarse = m * p + 1
    n_fine = 2 * m * p + 1
    mat = np.zeros((n_fine, n_coarse))
    fine_idx = np.arange(n_fine)
    cell = np.minimum(fine_idx // (2 * p), m - 1)
    xi = (fine_idx - 2 * p * cell) / (2.0 * p)
    for c in range(m):
        sel = cell == c
        if not np.any(sel):
            continue
        vals = _lagrange_values(nodes, xi[sel])  # (p+1, n_sel)
        mat[np.flatnonzero(sel)[None, :], (c * p + np.arange(p + 1))[:, None]] = vals
    return mat


def restrict_solution(problems: list[Problem], u_fine: np.ndarray) -> list[np.ndarray]:
    """Nodal injection of the finest displacement onto every level.

    Coarse nodes coincide with every second fine node per axis; constrained
    level DoFs are reset to their prescribed value (zero).
    """
    levels = [u_fine]
    for lvl in range(len(problems) - 1, 0, -1):
        fine_p, coarse_p = problems[lvl], problems[lvl - 1]
        mf = fine_p.dofmap.nodes_per_side
        comp = fine_p.dofmap.components
        grid = levels[0].reshape((mf,) * fine_p.dim + (comp,))
        sub = grid[(slice(None, None, 2),) * fine_p.dim]
        u_c = sub.reshape(-1).copy()
        u_c[coarse_p.constraints.mask] = 0.0
        levels.insert(0, u_c)
    return levels


def estimate_lambda_max(
    apply_fn,
    diagonal: np.ndarray,
    seed: int = 0,
    iterations: int = 30,
    constrained: np.ndarray | None = None,
) -> float:
    """Largest Ritz value of the diagonally preconditioned operator.

    Runs a fixed number of preconditioned CG iterations on a random right-hand
    side and diagonalizes the Lanczos tridiagonal accumulated from the CG
    coefficients.  On breakdown (vanishing residual) the values collected so
    far are used.
    """
    return estimate_eigenvalue_range(apply_fn, diagonal, seed, iterations, constrained)[1]


def estimate_eigenvalue_range(
    apply_fn,
    diagonal: np.ndarray,
    seed: int = 0,
    iterations: int = 30,
    constrained: np.ndarray | None = None,
) -> tuple[float, float]:
    """Smallest and largest Ritz values from the CG/Lanczos tridiagonal."""
    n = len(diagonal)
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n)
    if constrained is not None:
        b[constrained] = 0.0
    inv_d = 1.0 / diagonal

    x = np.zeros(n)
    r = b.copy()
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    alphas: list[float] = []
    betas: list[float] = []
    for _ in range(iterations):
        if rz <= 0.0 or not np.isfinite(rz):
            break
        ap = apply_fn(p)
        pap = p @ ap
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = inv_d * r
        rz_new = r @ z
        if rz_new <= 1e-28 * rz or not np.isfinite(rz_new):
            alphas.append(alpha)
            break
        beta = rz_new / rz
        alphas.append(alpha)
        betas.append(beta)
        p = z + beta * p
        rz = rz_new

    if not alphas:
        return 1.0, 1.0
    k = len(alphas)
    diag_t = np.empty(k)
    diag_t[0] = 1.0 / alphas[0]
    for i in range(1, k):
        diag_t[i] = 1.0 / alphas[i] + betas[i - 1] / alphas[i - 1]
    off_t = np.array([np.sqrt(betas[i]) / alphas[i] for i in range(k - 1)])
    if k == 1:
        return float(diag_t[0]), float(diag_t[0])
    ritz = scipy.linalg.eigvalsh_tridiagonal(diag_t, off_t)
    return float(ritz[0]), float(ritz[-1])


@dataclass(frozen=True)
class ChebyshevSettings:
    degree: int = 4
    range_lo: float = 0.6
    range_hi: float = 1.2


def chebyshev_apply(
    apply_fn,
    inv_diagonal: np.ndarray,
    lam_max: float,
    b: np.ndarray,
    x: np.ndarray,
    settings: ChebyshevSettings = ChebyshevSettings(),
    steps: int = 1,
) -> np.ndarray:
    """Chebyshev semi-iteration targeting [lo*lam_max, hi*lam_max] of D^-1 A.

    One step performs ``degree`` operator applications; the exact solution is
    a fixed point.
    """
    theta = 0.5 * (settings.range_hi + settings.range_lo) * lam_max
    delta = 0.5 * (settings.range_hi - settings.range_lo) * lam_max
    sigma = theta / delta
    x = x.copy()
    for _ in range(steps):
        z = inv_diagonal * (b - apply_fn(x))
        d = z / theta
        x += d
        rho_old = 1.0 / sigma
        for _ in range(settings.degree - 1):
            z = inv_diagonal * (b - apply_fn(x))
            rho = 1.0 / (2.0 * sigma - rho_old)
            d = (rho * rho_old) * d + (2.0 * rho / delta) * z
            x += d
            rho_old = rho
    return x


class LevelOperator:
    """Tangent operator of one level plus its smoother data."""

    def __init__(
        self,
        problem: Problem,
        u_level: np.ndarray,
        strategy: str,
        seed: int,
        level: int,
        is_coarsest: bool = False,
    ):
        self.level = level
        self.problem = problem
        try:
            self.op = MatrixFreeTangent(problem, u_level, strategy)
        except NonPositiveJacobian as err:
            raise NonPositiveJacobian(f"level {level}: {err}", element=err.element, level=level) from err
        self.diag = self.op.diagonal()
        self.inv_diag = 1.0 / self.diag
        self.lam_min, self.lam_max = estimate_eigenvalue_range(
            self.op.apply, self.diag, seed=seed, constrained=problem.constraints.mask
        )
        if is_coarsest:
            # the coarse solver needs its range to reach down to the smallest
            # eigenvalue; 30 Lanczos steps overestimate it badly, so refine
            # the lower end on this (cheap) level
            lo, _ = estimate_eigenvalue_range(
                self.op.apply,
                self.diag,
                seed=seed,
                iterations=min(problem.n_dofs, 120),
                constrained=problem.constraints.mask,
            )
            self.lam_min = min(self.lam_min, lo)
        self._cap_warned = False

    def smooth(self, b: np.ndarray, x: np.ndarray, steps: int, settings: ChebyshevSettings) -> np.ndarray:
        return chebyshev_apply(self.op.apply, self.inv_diag, self.lam_max, b, x, settings, steps)

    def coarse_settings(self, settings: ChebyshevSettings) -> ChebyshevSettings:
        """Solver variant of the smoother: same degree, range widened to the
        estimated smallest eigenvalue (with safety 0.5) so low modes converge."""
        lo = max(0.5 * self.lam_min / self.lam_max, 1e-8)
        return ChebyshevSettings(degree=settings.degree, range_lo=min(lo, settings.range_lo), range_hi=settings.range_hi)


def coarse_solve(
    level: LevelOperator,
    b: np.ndarray,
    rel_target: float = 1e-3,
    max_applications: int = 100,
    settings: ChebyshevSettings = ChebyshevSettings(),
) -> np.ndarray:
    """Chebyshev iteration as a coarse solver down to a relative residual target.

    Runs one continuous (restart-free) Chebyshev iteration over a range
    widened to the level's smallest estimated eigenvalue, so the effective
    polynomial degree adapts to the target: the residual is checked every
    ``degree`` operator applications and the iteration stops at the target or
    at the application cap, whichever comes first.  Returns the best iterate
    with a warning if the cap is reached.
    """
    b_norm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if b_norm == 0.0:
        return x
    s = level.coarse_settings(settings)
    theta = 0.5 * (s.range_hi + s.range_lo) * level.lam_max
    delta = 0.5 * (s.range_hi - s.range_lo) * level.lam_max
    sigma = theta / delta
    apply_fn = level.op.apply
    inv_d = level.inv_diag

    r = b.copy()
    r_norm = b_norm
    d = (inv_d * r) / theta
    x = x + d
    rho_old = 1.0 / sigma
    for step in range(2, max_applications + 1):
        r = b - apply_fn(x)
        if step % s.degree == 0:
            r_norm = np.linalg.norm(r)
            if r_norm <= rel_target * b_norm:
                return x
        rho = 1.0 / (2.0 * sigma - rho_old)
        d = (rho * rho_old) * d + (2.0 * rho / delta) * (inv_d * r)
        x += d
        rho_old = rho
    if not level._cap_warned:
        log.warning(
            "coarse solve on level %d reached the application cap (%d) at relative "
            "residual %.2e; iterates remain usable (message shown once per level)",
            level.level,
            max_applications,
            r_norm / b_norm,
        )
        level._cap_warned = True
    return x


def v_cycle(
    levels: list[LevelOperator],
    transfers: list[TransferOperator],
    b: np.ndarray,
    lvl: int | None = None,
    smoothing_steps: int = 2,
    settings: ChebyshevSettings = ChebyshevSettings(),
) -> np.ndarray:
    """One V-cycle with pre/post Chebyshev smoothing and a Chebyshev coarse solve."""
    if lvl is None:
        lvl = len(levels) - 1
    if lvl == 0:
        return coarse_solve(levels[0], b, settings=settings)
    level = levels[lvl]
    x = level.smooth(b, np.zeros_like(b), steps=smoothing_steps, settings=settings)
    r = b - level.op.apply(x)
    r[level.problem.constraints.mask] = 0.0
    r_c = transfers[lvl - 1].restrict(r)
    r_c[levels[lvl - 1].problem.constraints.mask] = 0.0
    x_c = v_cycle(levels, transfers, r_c, lvl - 1, smoothing_steps, settings)
    corr = transfers[lvl - 1].prolong(x_c)
    corr[level.problem.constraints.mask] = 0.0
    x += corr
    return level.smooth(b, x, steps=smoothing_steps, settings=settings)


class GMGPreconditioner:
    """V-cycle preconditioner over level operators linearized at restricted states."""

    def __init__(
        self,
        levels: list[LevelOperator],
        transfers: list[TransferOperator],
        smoothing_steps: int = 2,
        settings: ChebyshevSettings = ChebyshevSettings(),
    ):
        self.levels = levels
        self.transfers = transfers
        self.smoothing_steps = smoothing_steps
        self.settings = settings

    def apply(self, b: np.ndarray) -> np.ndarray:
        return v_cycle(self.levels, self.transfers, b, None, self.smoothing_steps, self.settings)


def build_transfers(problems: list[Problem]) -> list[TransferOperator]:
    return [TransferOperator(problems[i], problems[i + 1]) for i in range(len(problems) - 1)]


def build_level_operators(
    problems: list[Problem],
    u_fine: np.ndarray,
    strategy: str = "tensor4",
    seed: int = 0,
) -> list[LevelOperator]:
    """Linearize every level around the injected fine-level displacement."""
    u_levels = restrict_solution(problems, u_fine)
    return [
        LevelOperator(p, u_l, strategy, seed=seed + 7919 * lvl, level=lvl, is_coarsest=(lvl == 0))
        for lvl, (p, u_l) in enumerate(zip(problems, u_levels))
    ]


def build_gmg(
    problems: list[Problem],
    u_fine: np.ndarray,
    strategy: str = "tensor4",
    seed: int = 0,
    transfers: list[TransferOperator] | None = None,
) -> GMGPreconditioner:
    if transfers is None:
        transfers = build_transfers(problems)
    levels = build_level_operators(problems, u_fine, strategy, seed)
    return GMGPreconditioner(levels, transfers)
