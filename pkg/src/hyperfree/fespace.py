"""Tensor-product Lagrange spaces: 1D tables, Gauss rules, DoF maps, sum-factorized kernels.

Vector fields are stored node-blocked: the global DoF of (node, component) is
``node * n_components + component``, and element-local vectors use the same
layout over the lexicographic local tensor nodes.  Scalar nodes on a
structured grid of m cells per side and degree p form a lexicographic
``(m*p+1)^dim`` lattice; this closed-form numbering is the deterministic
scheme used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flops import FLOPS
from .mesh import Mesh, lex_grid_indices, lex_grid_points


@dataclass(frozen=True)
class Quadrature1D:
    """Gauss-Legendre points and weights on [0, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)


def gauss_legendre(q: int) -> Quadrature1D:
    if not 1 <= q <= 16:
        raise ValueError(f"number of quadrature points must be in [1, 16], got {q}")
    t, w = np.polynomial.legendre.leggauss(q)
    return Quadrature1D(points=0.5 * (t + 1.0), weights=0.5 * w)


def _lagrange_values(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = len(nodes)
    vals = np.ones((n, len(x)))
    for i in range(n):
        for j in range(n):
            if j != i:
                vals[i] *= (x - nodes[j]) / (nodes[i] - nodes[j])
    return vals


def _lagrange_derivatives(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = len(nodes)
    out = np.zeros((n, len(x)))
    for i in range(n):
        for k in range(n):
            if k == i:
                continue
            term = np.full(len(x), 1.0 / (nodes[i] - nodes[k]))
            for j in range(n):
                if j != i and j != k:
                    term *= (x - nodes[j]) / (nodes[i] - nodes[j])
            out[i] += term
    return out


@dataclass(frozen=True)
class Basis1D:
    """1D Lagrange basis tabulated at the quadrature points."""

    degree: int
    nodes: np.ndarray  # (p+1,) on [0, 1]
    quadrature: Quadrature1D
    values: np.ndarray  # (p+1, q)
    derivatives: np.ndarray  # (p+1, q)

    @property
    def n_nodes_1d(self) -> int:
        return self.degree + 1


def _gauss_lobatto_nodes(p: int) -> np.ndarray:
    interior = np.polynomial.legendre.Legendre.basis(p).deriv().roots()
    return np.concatenate(([0.0], 0.5 * (np.sort(interior) + 1.0), [1.0]))


def lagrange_basis(degree: int, quadrature: Quadrature1D, nodes: str = "equispaced") -> Basis1D:
    """Lagrange basis of the given degree; equispaced nodes by default,
    Gauss-Lobatto available as an alternative."""
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if nodes == "equispaced":
        pts = np.arange(degree + 1) / degree
    elif nodes == "gauss_lobatto":
        pts = _gauss_lobatto_nodes(degree)
    else:
        raise ValueError(f"unknown node rule {nodes!r}")
    return Basis1D(
        degree=degree,
        nodes=pts,
        quadrature=quadrature,
        values=_lagrange_values(pts, quadrature.points),
        derivatives=_lagrange_derivatives(pts, quadrature.points),
    )


@dataclass(frozen=True)
class DoFMap:
    """Global numbering of the scalar tensor nodes plus vector blocking."""

    dim: int
    degree: int
    components: int
    nodes_per_side: int
    n_nodes: int
    cell_nodes: np.ndarray  # (n_el, (p+1)^dim) global scalar node ids

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.components

    @property
    def n_local_nodes(self) -> int:
        return self.cell_nodes.shape[1]


def build_dof_map(mesh: Mesh, degree: int, components: int) -> DoFMap:
    dim, m = mesh.dim, mesh.n_cells_per_side
    nodes_per_side = m * degree + 1
    strides = np.array([nodes_per_side**k for k in range(dim)], dtype=np.int64)
    e_multi = lex_grid_indices((m,) * dim)  # (n_el, dim)
    loc_multi = lex_grid_indices((degree + 1,) * dim)  # (nloc, dim)
    node_multi = e_multi[:, None, :] * degree + loc_multi[None, :, :]
    return DoFMap(
        dim=dim,
        degree=degree,
        components=components,
        nodes_per_side=nodes_per_side,
        n_nodes=nodes_per_side**dim,
        cell_nodes=node_multi @ strides,
    )


def node_coordinates(mesh: Mesh, dofmap: DoFMap) -> np.ndarray:
    """Physical coordinates of the scalar nodes via the multilinear element map."""
    from .mesh import _q1_values

    loc = lex_grid_points([np.arange(dofmap.degree + 1) / dofmap.degree] * mesh.dim)
    q1 = _q1_values(loc, mesh.dim)  # (2^dim, nloc)
    per_el = np.einsum("eci,cn->eni", mesh.element_corners(), q1)
    coords = np.zeros((dofmap.n_nodes, mesh.dim))
    coords[dofmap.cell_nodes.reshape(-1)] = per_el.reshape(-1, mesh.dim)
    return coords


@dataclass(frozen=True)
class ConstraintSet:
    """Homogeneous Dirichlet constraints as a set of fixed global DoFs."""

    n_dofs: int
    dofs: np.ndarray  # sorted constrained DoF ids
    mask: np.ndarray  # (n_dofs,) bool

    @classmethod
    def from_dofs(cls, n_dofs: int, dofs: np.ndarray) -> "ConstraintSet":
        dofs = np.unique(np.asarray(dofs, dtype=np.int64))
        mask = np.zeros(n_dofs, dtype=bool)
        mask[dofs] = True
        return cls(n_dofs=n_dofs, dofs=dofs, mask=mask)


def bottom_constraints(mesh: Mesh, dofmap: DoFMap) -> ConstraintSet:
    """Fix all components of every node on the bottom face (last coordinate 0)."""
    node_multi = lex_grid_indices((dofmap.nodes_per_side,) * dofmap.dim)
    nodes = np.flatnonzero(node_multi[:, dofmap.dim - 1] == 0)
    dofs = (nodes[:, None] * dofmap.components + np.arange(dofmap.components)[None, :]).reshape(-1)
    return ConstraintSet.from_dofs(dofmap.n_dofs, dofs)


# ---------------------------------------------------------------------------
# sum-factorization kernels
#
# Local coefficient tensors are laid out (n_el, ..., ncomp, i_dim, ..., i_1)
# internally; the per-direction contraction below is the O(n^{d+1}) building
# block of every evaluate/integrate call.
# ---------------------------------------------------------------------------


def _contract(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    """Contract one tensor axis with a (n_in, n_out) matrix; new axis at the same slot."""
    out = np.tensordot(tensor, matrix, axes=([axis], [0]))
    out = np.moveaxis(out, -1, axis)
    if FLOPS.enabled:
        FLOPS.add(2 * tensor.size * matrix.shape[1])
    return out


def _to_tensor(x_loc: np.ndarray, n1d: int, dim: int) -> np.ndarray:
    n_el, nloc, ncomp = x_loc.shape
    t = np.ascontiguousarray(np.swapaxes(x_loc, 1, 2))
    return t.reshape((n_el, ncomp) + (n1d,) * dim)


def _chain(t: np.ndarray, tables: list[np.ndarray], dim: int) -> np.ndarray:
    """Apply one 1D table per direction to tensor axes (el, comp, i_dim, ..., i_1).

    Direction k's table is contracted at step k against axis -k (the slot the
    untouched direction occupies after the previous tensordots appended their
    output axes at the end).  Returns (el, comp, q_1, ..., q_dim).
    """
    for k in range(dim):
        table = tables[k]
        t = np.tensordot(t, table, axes=([-(k + 1)], [0]))
        if FLOPS.enabled:
            FLOPS.add(2 * t.size * table.shape[0])
    return t


def _flatten_qpoints(t: np.ndarray, dim: int) -> np.ndarray:
    # (el, comp, q_1, .., q_dim) -> (el, nq, comp) with q_1 fastest
    order = (0,) + tuple(range(t.ndim - 1, 1, -1)) + (1,)
    n_el, ncomp = t.shape[0], t.shape[1]
    return np.ascontiguousarray(t.transpose(order).reshape(n_el, -1, ncomp))


def evaluate_values(basis: Basis1D, x_loc: np.ndarray, dim: int) -> np.ndarray:
    """Field values at the tensor quadrature points, (n_el, n_q, ncomp)."""
    t = _chain(_to_tensor(x_loc, basis.n_nodes_1d, dim), [basis.values] * dim, dim)
    return _flatten_qpoints(t, dim)


def evaluate_gradients(basis: Basis1D, x_loc: np.ndarray, dim: int) -> np.ndarray:
    """Unit-cell gradients at the quadrature points, (n_el, n_q, ncomp, dim)."""
    t0 = _to_tensor(x_loc, basis.n_nodes_1d, dim)
    n_el, ncomp = t0.shape[:2]
    nq = basis.quadrature.n_points**dim
    out = np.empty((n_el, nq, ncomp, dim))
    for g in range(dim):
        tables = [basis.derivatives if d == g else basis.values for d in range(dim)]
        out[:, :, :, g] = _flatten_qpoints(_chain(t0, tables, dim), dim)
    return out


def evaluate_at_qpoints(basis: Basis1D, x_loc: np.ndarray, dim: int, mode: str = "values") -> np.ndarray:
    if mode == "values":
        return evaluate_values(basis, x_loc, dim)
    if mode == "reference_gradients":
        return evaluate_gradients(basis, x_loc, dim)
    raise ValueError(f"unknown mode {mode!r}")


def _fold_weights(data: np.ndarray, jxw: np.ndarray) -> np.ndarray:
    extra = data.ndim - jxw.ndim
    w = jxw.reshape(jxw.shape + (1,) * extra)
    if FLOPS.enabled:
        FLOPS.add(data.size)
    return data * w


def _transpose_chain(basis: Basis1D, data: np.ndarray, dim: int, deriv_direction: int | None) -> np.ndarray:
    """Contract per-qpoint data (n_el, n_q, ncomp) against test functions."""
    t = _to_tensor(data, basis.quadrature.n_points, dim)
    tables = [(basis.derivatives if d == deriv_direction else basis.values).T for d in range(dim)]
    return _flatten_qpoints(_chain(t, tables, dim), dim)


def integrate_testfunctions(
    basis: Basis1D,
    jxw: np.ndarray,
    dim: int,
    values: np.ndarray | None = None,
    gradients: np.ndarray | None = None,
) -> np.ndarray:
    """Local load vectors Sum_q N_i v_q JxW_q (+ Sum_q dN_i/dxi_a G_qa JxW_q).

    ``values`` has shape (n_el, n_q, ncomp); ``gradients`` has shape
    (n_el, n_q, ncomp, dim) and contracts against unit-cell test-function
    gradients.  Returns (n_el, nloc, ncomp).
    """
    if values is None and gradients is None:
        raise ValueError("nothing queued for integration")
    out = None
    if values is not None:
        out = _transpose_chain(basis, _fold_weights(values, jxw), dim, None)
    if gradients is not None:
        g = _fold_weights(gradients, jxw)
        for a in range(dim):
            part = _transpose_chain(basis, np.ascontiguousarray(g[:, :, :, a]), dim, a)
            out = part if out is None else out + part
    return out


def gather_local(u: np.ndarray, dofmap: DoFMap) -> np.ndarray:
    """Extract element-local vectors, (n_el, nloc, ncomp)."""
    return u.reshape(dofmap.n_nodes, dofmap.components)[dofmap.cell_nodes]


def scatter_add(local: np.ndarray, dofmap: DoFMap, out2d: np.ndarray) -> None:
    """Accumulate (n_el, nloc, ncomp) locals onto nodes, in element order."""
    flat_nodes = dofmap.cell_nodes.reshape(-1)
    for c in range(dofmap.components):
        out2d[:, c] += np.bincount(
            flat_nodes, weights=local[:, :, c].reshape(-1), minlength=dofmap.n_nodes
        )
    if FLOPS.enabled:
        FLOPS.add(local.size)


def distribute_local_to_global(
    local: np.ndarray,
    dofmap: DoFMap,
    constraints: ConstraintSet,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Accumulate local vectors into a global one, dropping constrained rows.

    Elements are processed in ascending index order, which fixes the
    floating-point summation order of shared entries.
    """
    if out is None:
        out = np.zeros(dofmap.n_dofs)
    out2d = out.reshape(dofmap.n_nodes, dofmap.components)
    keep = ~constraints.mask.reshape(dofmap.n_nodes, dofmap.components)
    contrib = local * keep[dofmap.cell_nodes]
    scatter_add(contrib, dofmap, out2d)
    return out
