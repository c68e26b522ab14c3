"""Residual, matrix-free tangent operators (three caching strategies) and the
assembled sparse tangent.

The tangent bilinear form at a linearization state u_bar is

    a(du, v) = int  grad_s(v) : JC : grad_s(du)  dV
             + int  grad(v) : [grad(du) . tau_bar]  dV

with spatial gradients and referential integration, so the cached Kirchhoff
stress and material tangent carry no 1/J factor.  The three matrix-free
strategies differ only in what they store per quadrature point:

* ``scalar``:  c1 = mu - 2 lam ln(J); the deformation gradient and the
  unit-to-spatial inverse Jacobian are rebuilt from u_bar at every apply,
  so only the undeformed mesh geometry is cached.
* ``tensor2``: c1 = 2[mu - 2 lam ln(J)], c2 = 2 lam and the packed Kirchhoff
  stress; the material action uses the Neo-Hookean closed form.
* ``tensor4``: packed Kirchhoff stress and the packed Voigt matrix of the
  material tangent; the material action is a generic Voigt contraction that
  assumes nothing about the constitutive law.

Constrained DoFs are handled symmetrically: inputs are zeroed on read,
outputs reproduce the input entries (identity on the constrained subspace),
matching the assembled matrix whose constrained rows/columns are cleared and
given a unit diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fespace, material
from .fespace import (
    Basis1D,
    ConstraintSet,
    DoFMap,
    bottom_constraints,
    build_dof_map,
    distribute_local_to_global,
    evaluate_gradients,
    evaluate_values,
    gather_local,
    gauss_legendre,
    integrate_testfunctions,
    lagrange_basis,
)
from .flops import FLOPS
from .material import (
    NeoHookeanParams,
    NonPositiveJacobian,
    material_tangent_full,
    n_sym,
    pack_sym,
    pack_voigt_matrix,
    unpack_sym,
    unpack_voigt_matrix,
)
from .mesh import (
    INCLUSION,
    TOP,
    GeometryCache,
    Mesh,
    MeshHierarchy,
    compute_geometry_cache,
    lex_grid_indices,
    lex_grid_points,
)

STRATEGIES = ("scalar", "tensor2", "tensor4")


@dataclass(frozen=True)
class Material:
    """Two-phase material: params for the matrix and the inclusion phase."""

    matrix: NeoHookeanParams
    inclusion: NeoHookeanParams


class Problem:
    """Discretization of the hyperelastic problem on one mesh level."""

    def __init__(
        self,
        mesh: Mesh,
        degree: int,
        mat: Material,
        n_qpoints: int | None = None,
        basis_nodes: str = "equispaced",
    ):
        self.mesh = mesh
        self.degree = degree
        self.quadrature = gauss_legendre(n_qpoints if n_qpoints is not None else degree + 1)
        self.basis = lagrange_basis(degree, self.quadrature, nodes=basis_nodes)
        self.dofmap = build_dof_map(mesh, degree, components=mesh.dim)
        self.constraints = bottom_constraints(mesh, self.dofmap)
        self.geometry = compute_geometry_cache(mesh, self.quadrature)
        self.material = mat
        inc = mesh.material_id == INCLUSION
        self.mu_el = np.where(inc, mat.inclusion.mu, mat.matrix.mu)[:, None]
        self.lam_el = np.where(inc, mat.inclusion.lam, mat.matrix.lam)[:, None]
        self.surface_weights = top_surface_weights(mesh, self.basis, self.dofmap)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def zero_vector(self) -> np.ndarray:
        return np.zeros(self.n_dofs)


def build_problem_hierarchy(
    hierarchy: MeshHierarchy,
    degree: int,
    mat: Material,
    n_qpoints: int | None = None,
) -> list[Problem]:
    """One Problem per mesh level, coarsest first."""
    return [Problem(m, degree, mat, n_qpoints=n_qpoints) for m in hierarchy.levels]


def top_surface_weights(mesh: Mesh, basis: Basis1D, dofmap: DoFMap) -> np.ndarray:
    """Per-node weights s_n = int_top N_n dS over the undeformed top surface."""
    dim = mesh.dim
    fdim = dim - 1
    surf = np.zeros(dofmap.n_nodes)
    top_elems = np.array([bf.element for bf in mesh.boundary_faces if bf.tag == TOP], dtype=np.int64)
    if len(top_elems) == 0:
        return surf

    quad = basis.quadrature
    pts = lex_grid_points([quad.points] * fdim)
    wts = lex_grid_points([quad.weights] * fdim).prod(axis=1)

    from .mesh import _q1_gradients

    corner_bits = lex_grid_indices((2,) * dim)
    face_corner_ids = np.flatnonzero(corner_bits[:, dim - 1] == 1)
    corners = mesh.vertices[mesh.elements[top_elems][:, face_corner_ids]]  # (nf, 2^fdim, dim)
    dn = _q1_gradients(pts, fdim)  # (2^fdim, nq, fdim)
    tangents = np.einsum("fci,cqk->fqik", corners, dn)
    if dim == 2:
        ds = np.linalg.norm(tangents[..., 0], axis=-1)
    else:
        ds = np.linalg.norm(np.cross(tangents[..., 0], tangents[..., 1]), axis=-1)

    # restriction of the volume basis to the top face is the (dim-1)-tensor basis
    n1 = basis.n_nodes_1d
    q1 = quad.n_points
    node_multi = lex_grid_indices((n1,) * fdim)
    q_multi = lex_grid_indices((q1,) * fdim)
    n_face = np.ones((n1**fdim, q1**fdim))
    for k in range(fdim):
        n_face *= basis.values[node_multi[:, k][:, None], q_multi[:, k][None, :]]

    local = np.einsum("nq,fq->fn", n_face, wts[None, :] * ds)
    grid = dofmap.cell_nodes[top_elems].reshape((-1,) + (n1,) * dim)
    face_nodes = grid[:, -1].reshape(len(top_elems), -1)  # axis 1 is the last direction
    np.add.at(surf, face_nodes, local)
    return surf


def displacement_gradients(problem: Problem, u: np.ndarray) -> np.ndarray:
    """Referential gradients Grad u at all quadrature points, (n_el, n_q, dim, dim)."""
    u_loc = gather_local(u, problem.dofmap)
    g_unit = evaluate_gradients(problem.basis, u_loc, problem.dim)
    out = np.einsum("eqia,eqaA->eqiA", g_unit, problem.geometry.jac_inv)
    FLOPS.add(2 * out.size * problem.dim)
    return out


def _deformation_state(problem: Problem, u: np.ndarray):
    """F, J, F^-1, b at every quadrature point; raises on element inversion."""
    grad_u = displacement_gradients(problem, u)
    f = grad_u + np.eye(problem.dim)
    det = np.linalg.det(f)
    if np.any(det <= 0.0):
        e, q = np.unravel_index(int(np.argmin(det)), det.shape)
        raise NonPositiveJacobian(
            f"det F = {det[e, q]:.3e} <= 0 in element {e} (quadrature point {q})", element=int(e)
        )
    return f, det, np.linalg.inv(f), f @ np.swapaxes(f, -1, -2)


def jacobian_range(problem: Problem, u: np.ndarray) -> tuple[float, float]:
    """Min and max of det F over all quadrature points."""
    grad_u = displacement_gradients(problem, u)
    det = np.linalg.det(grad_u + np.eye(problem.dim))
    return float(det.min()), float(det.max())


def _spatial_inverse(problem: Problem, f_inv: np.ndarray) -> np.ndarray:
    out = np.einsum("eqaA,eqAj->eqaj", problem.geometry.jac_inv, f_inv)
    FLOPS.add(2 * out.size * problem.dim)
    return out


def compute_residual(problem: Problem, u: np.ndarray, traction: np.ndarray | None = None) -> np.ndarray:
    """Discrete residual: internal Kirchhoff-stress term minus the top-surface load.

    The traction is a constant force per unit reference area on the top face
    (conservative loading); constrained entries of the result are zeroed.
    """
    dim = problem.dim
    f, det, f_inv, b = _deformation_state(problem, u)
    tau = material.kirchhoff_stress_from_b(b, det, problem.mu_el, problem.lam_el)
    s_inv = _spatial_inverse(problem, f_inv)
    queued = np.einsum("eqij,eqaj->eqia", tau, s_inv)
    FLOPS.add(2 * queued.size * dim)
    local = integrate_testfunctions(problem.basis, problem.geometry.jxw, dim, gradients=queued)

    out = np.zeros(problem.n_dofs)
    np.add.at(out.reshape(problem.dofmap.n_nodes, dim), problem.dofmap.cell_nodes, local)
    if traction is not None:
        out.reshape(-1, dim)[:] -= traction[None, :] * problem.surface_weights[:, None]
    out[problem.constraints.mask] = 0.0
    return out


def energy(problem: Problem, u: np.ndarray, traction: np.ndarray | None = None) -> float:
    """Total potential energy; the finite-difference oracle for the residual."""
    f, det, _, _ = _deformation_state(problem, u)
    c = np.swapaxes(f, -1, -2) @ f
    psi = material.strain_energy(c, problem.mu_el, problem.lam_el)
    total = float(np.sum(psi * problem.geometry.jxw))
    if traction is not None:
        u2 = u.reshape(-1, problem.dim)
        total -= float(traction @ (problem.surface_weights @ u2))
    return total


# ---------------------------------------------------------------------------
# quadrature-point caches
# ---------------------------------------------------------------------------


@dataclass
class ScalarCache:
    strategy = "scalar"
    c1: np.ndarray  # (n_el, n_q)
    u_bar: np.ndarray  # handle to the linearization displacement (not copied)

    @property
    def payload_scalars_per_qpoint(self) -> int:
        return 1

    @property
    def payload_nbytes(self) -> int:
        return self.c1.nbytes


@dataclass
class Tensor2Cache:
    strategy = "tensor2"
    c1: np.ndarray  # 2[mu - 2 lam ln J]
    c2: np.ndarray  # 2 lam
    tau: np.ndarray  # (n_el, n_q, n_sym)
    jac_spatial_inv: np.ndarray  # (n_el, n_q, dim, dim)

    @property
    def payload_scalars_per_qpoint(self) -> int:
        return 2 + self.tau.shape[-1]

    @property
    def payload_nbytes(self) -> int:
        return self.c1.nbytes + self.c2.nbytes + self.tau.nbytes


@dataclass
class Tensor4Cache:
    strategy = "tensor4"
    tau: np.ndarray  # (n_el, n_q, n_sym)
    cmat: np.ndarray  # (n_el, n_q, nv(nv+1)/2) packed Voigt tangent
    jac_spatial_inv: np.ndarray

    @property
    def payload_scalars_per_qpoint(self) -> int:
        return self.tau.shape[-1] + self.cmat.shape[-1]

    @property
    def payload_nbytes(self) -> int:
        return self.tau.nbytes + self.cmat.nbytes


def build_cache(problem: Problem, u_bar: np.ndarray, strategy: str):
    """Evaluate and store the per-quadrature-point data of one strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    f, det, f_inv, b = _deformation_state(problem, u_bar)
    ln_j = np.log(det)
    c1 = problem.mu_el - 2.0 * problem.lam_el * ln_j
    if strategy == "scalar":
        return ScalarCache(c1=c1, u_bar=u_bar)
    s_inv = _spatial_inverse(problem, f_inv)
    tau = material.kirchhoff_stress_from_b(b, det, problem.mu_el, problem.lam_el)
    if strategy == "tensor2":
        return Tensor2Cache(
            c1=2.0 * c1,
            c2=np.broadcast_to(2.0 * problem.lam_el, c1.shape).copy(),
            tau=pack_sym(tau),
            jac_spatial_inv=s_inv,
        )
    cmat = material_tangent_full(det, problem.mu_el, problem.lam_el, problem.dim)
    return Tensor4Cache(tau=pack_sym(tau), cmat=pack_voigt_matrix(cmat), jac_spatial_inv=s_inv)


# ---------------------------------------------------------------------------
# tangent operators
# ---------------------------------------------------------------------------


class MatrixFreeTangent:
    """Apply-only tangent operator backed by one of the quadrature caches."""

    def __init__(self, problem: Problem, u_bar: np.ndarray, strategy: str = "tensor4"):
        self.problem = problem
        self.strategy = strategy
        self.cache = build_cache(problem, u_bar, strategy)

    @property
    def n_dofs(self) -> int:
        return self.problem.n_dofs

    def apply(self, x: np.ndarray) -> np.ndarray:
        problem = self.problem
        xe = x.copy()
        xe[problem.constraints.mask] = 0.0
        x_loc = gather_local(xe, problem.dofmap)
        y_loc = self._local_apply(x_loc)
        y = distribute_local_to_global(y_loc, problem.dofmap, problem.constraints)
        y[problem.constraints.mask] = x[problem.constraints.mask]
        return y

    def _local_apply(self, x_loc: np.ndarray) -> np.ndarray:
        problem = self.problem
        dim = problem.dim
        cache = self.cache
        eye = np.eye(dim)

        g_unit = evaluate_gradients(problem.basis, x_loc, dim)

        if self.strategy == "scalar":
            # rebuild F and the unit-to-spatial inverse from the cached c1 and u_bar
            ub_loc = gather_local(cache.u_bar, problem.dofmap)
            gu_unit = evaluate_gradients(problem.basis, ub_loc, dim)
            grad_u = np.einsum("eqia,eqaA->eqiA", gu_unit, problem.geometry.jac_inv)
            FLOPS.add(2 * grad_u.size * dim)
            f = grad_u + eye
            b = f @ np.swapaxes(f, -1, -2)
            FLOPS.add(2 * b.size * dim)
            tau = problem.mu_el[..., None, None] * b - cache.c1[..., None, None] * eye
            FLOPS.add(2 * tau.size)
            s_inv = np.einsum("eqaA,eqAj->eqaj", problem.geometry.jac_inv, np.linalg.inv(f))
            FLOPS.add(2 * s_inv.size * dim)
            c1_action = 2.0 * cache.c1
            c2_action = 2.0 * problem.lam_el
        else:
            s_inv = cache.jac_spatial_inv
            tau = unpack_sym(cache.tau, dim)

        g = np.einsum("eqia,eqaj->eqij", g_unit, s_inv)
        FLOPS.add(2 * g.size * dim)
        g_s = 0.5 * (g + np.swapaxes(g, -1, -2))
        FLOPS.add(2 * g_s.size)

        if self.strategy == "scalar":
            trace = np.trace(g_s, axis1=-2, axis2=-1)
            c_gs = c1_action[..., None, None] * g_s + (c2_action * trace)[..., None, None] * eye
            FLOPS.add(4 * g_s.size)
        elif self.strategy == "tensor2":
            trace = np.trace(g_s, axis1=-2, axis2=-1)
            c_gs = cache.c1[..., None, None] * g_s + (cache.c2 * trace)[..., None, None] * eye
            FLOPS.add(4 * g_s.size)
        else:
            nv = n_sym(dim)
            gamma = material.pack_strain_voigt(g_s)
            cmat = unpack_voigt_matrix(cache.cmat, nv)
            sigma = np.einsum("eqkl,eql->eqk", cmat, gamma)
            FLOPS.add(2 * sigma.size * nv)
            c_gs = unpack_sym(sigma, dim)

        g_tau = np.einsum("eqik,eqkj->eqij", g, tau)
        FLOPS.add(2 * g_tau.size * dim)
        queued = np.einsum("eqij,eqaj->eqia", c_gs + g_tau, s_inv)
        FLOPS.add(2 * queued.size * dim + c_gs.size)
        return integrate_testfunctions(problem.basis, problem.geometry.jxw, dim, gradients=queued)

    def diagonal(self) -> np.ndarray:
        """diag(A) accumulated from local tangent applications on unit vectors."""
        problem = self.problem
        dofmap = problem.dofmap
        n_el = problem.mesh.n_elements
        nloc, ncomp = dofmap.n_local_nodes, dofmap.components
        diag2d = np.zeros((dofmap.n_nodes, ncomp))
        for n in range(nloc):
            for c in range(ncomp):
                x_loc = np.zeros((n_el, nloc, ncomp))
                x_loc[:, n, c] = 1.0
                y_loc = self._local_apply(x_loc)
                np.add.at(diag2d[:, c], dofmap.cell_nodes[:, n], y_loc[:, n, c])
        diag = diag2d.reshape(-1)
        diag[problem.constraints.mask] = 1.0
        return diag

    def storage_bytes(self) -> int:
        """Bytes held for repeated applies: strategy payload plus geometry."""
        geo = self.problem.geometry
        if self.strategy == "scalar":
            return self.cache.payload_nbytes + geo.jac_inv.nbytes + geo.jxw.nbytes
        return self.cache.payload_nbytes + self.cache.jac_spatial_inv.nbytes + geo.jxw.nbytes


def _tensor_shape_tables(basis: Basis1D, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Full shape tables N (nloc, nq) and dN (nloc, nq, dim) for naive quadrature."""
    n1, q1 = basis.n_nodes_1d, basis.quadrature.n_points
    node_multi = lex_grid_indices((n1,) * dim)
    q_multi = lex_grid_indices((q1,) * dim)
    n = np.ones((n1**dim, q1**dim))
    g = np.ones((n1**dim, q1**dim, dim))
    for k in range(dim):
        vals = basis.values[node_multi[:, k][:, None], q_multi[:, k][None, :]]
        ders = basis.derivatives[node_multi[:, k][:, None], q_multi[:, k][None, :]]
        n *= vals
        for a in range(dim):
            g[:, :, a] *= ders if a == k else vals
    return n, g


def assemble_matrix(problem: Problem, u_bar: np.ndarray, block_size: int = 256) -> sp.csr_matrix:
    """Assemble the tangent as CSR by naive per-element quadrature.

    Constrained rows and columns are cleared and replaced by a unit diagonal.
    """
    dim = problem.dim
    nv = n_sym(dim)
    _, g_table = _tensor_shape_tables(problem.basis, dim)
    f, det, f_inv, b = _deformation_state(problem, u_bar)
    tau = material.kirchhoff_stress_from_b(b, det, problem.mu_el, problem.lam_el)
    s_inv = _spatial_inverse(problem, f_inv)

    dofmap = problem.dofmap
    nloc = dofmap.n_local_nodes
    nld = nloc * dim
    rows, cols, vals = [], [], []
    for start in range(0, problem.mesh.n_elements, block_size):
        sl = slice(start, start + block_size)
        si = s_inv[sl]
        jxw = problem.geometry.jxw[sl]
        gs = np.einsum("nqa,eqaj->eqnj", g_table, si)

        bmat = np.zeros(gs.shape[:2] + (nv, nloc, dim))
        for k, (a, c) in enumerate(material.SYM_PAIRS[dim]):
            bmat[:, :, k, :, a] += gs[..., c]
            if a != c:
                bmat[:, :, k, :, c] += gs[..., a]
        bmat = bmat.reshape(gs.shape[:2] + (nv, nld))

        mvoigt = material_tangent_full(det[sl], problem.mu_el[sl], problem.lam_el[sl], dim)
        t1 = np.einsum("eqkl,eqlj->eqkj", mvoigt, bmat)
        a_local = np.einsum("eqki,eqkj,eq->eij", bmat, t1, jxw)

        t2 = np.einsum("eqkj,eqmj->eqmk", tau[sl], gs)
        h = np.einsum("eqnk,eqmk,eq->enm", gs, t2, jxw)
        a_view = a_local.reshape(-1, nloc, dim, nloc, dim)
        for c in range(dim):
            a_view[:, :, c, :, c] += h

        vdofs = (dofmap.cell_nodes[sl][:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(-1, nld)
        rows.append(np.broadcast_to(vdofs[:, :, None], vdofs.shape + (nld,)).reshape(-1))
        cols.append(np.broadcast_to(vdofs[:, None, :], (vdofs.shape[0], nld, nld)).reshape(-1))
        vals.append(a_local.reshape(-1))

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    mask = problem.constraints.mask
    keep = ~(mask[r] | mask[c])
    r, c, v = r[keep], c[keep], v[keep]
    fixed = problem.constraints.dofs
    r = np.concatenate([r, fixed])
    c = np.concatenate([c, fixed])
    v = np.concatenate([v, np.ones(len(fixed))])
    n = problem.n_dofs
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


class AssembledTangent:
    """Matrix-based tangent: stored CSR entries, used as oracle and baseline."""

    strategy = "matrix_based"

    def __init__(self, problem: Problem, u_bar: np.ndarray):
        self.problem = problem
        self.matrix = assemble_matrix(problem, u_bar)

    @property
    def n_dofs(self) -> int:
        return self.problem.n_dofs

    def apply(self, x: np.ndarray) -> np.ndarray:
        FLOPS.add(2 * self.matrix.nnz)
        return self.matrix @ x

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def storage_bytes(self) -> int:
        m = self.matrix
        return m.data.nbytes + m.indices.nbytes + m.indptr.nbytes


def make_tangent(problem: Problem, u_bar: np.ndarray, strategy: str):
    if strategy == "matrix_based":
        return AssembledTangent(problem, u_bar)
    return MatrixFreeTangent(problem, u_bar, strategy)


def random_valid_state(
    problem: Problem,
    seed: int,
    j_min: float = 0.8,
    j_max: float = 1.3,
    scale: float | None = None,
) -> np.ndarray:
    """Random constrained displacement whose det F stays inside [j_min, j_max]."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(problem.n_dofs)
    u[problem.constraints.mask] = 0.0
    if scale is None:
        scale = 0.05 * problem.mesh.side
    for _ in range(60):
        lo, hi = jacobian_range(problem, scale * u)
        if j_min <= lo and hi <= j_max:
            return scale * u
        scale *= 0.5
    raise RuntimeError("could not scale the random state into the Jacobian bounds")


def smooth_valid_state(
    problem: Problem,
    seed: int,
    j_min: float = 0.5,
    j_max: float = 1.8,
    amplitude: float = 0.4,
) -> np.ndarray:
    """Smooth constrained displacement with det F inside [j_min, j_max].

    Interpolates an analytic field (plus a small random nodal perturbation)
    that vanishes on the bottom face; smooth states reach a much larger norm
    than random nodal noise at the same Jacobian bounds, which matters for
    finite-difference probes of the tangent.
    """
    from .fespace import node_coordinates

    side = problem.mesh.side
    xv = node_coordinates(problem.mesh, problem.dofmap) / side
    rng = np.random.default_rng(seed)
    vertical = xv[:, problem.dim - 1]
    # shear-dominant ramp (large norm, bounded gradient) plus a gentle wiggle
    direction = np.full(problem.dim, 1.0)
    direction[-1] = 0.25
    field = vertical[:, None] * direction[None, :]
    for c in range(problem.dim):
        phase = np.pi * (xv @ (1.0 + np.arange(problem.dim) + c)) + 0.7 * c
        field[:, c] += 0.15 * np.sin(phase) * vertical
    field += 0.02 * rng.standard_normal(field.shape) * vertical[:, None]
    u = (side * field).reshape(-1)
    u[problem.constraints.mask] = 0.0
    for _ in range(60):
        lo, hi = jacobian_range(problem, amplitude * u)
        if j_min <= lo and hi <= j_max:
            return amplitude * u
        amplitude *= 0.5
    raise RuntimeError("could not scale the smooth state into the Jacobian bounds")
