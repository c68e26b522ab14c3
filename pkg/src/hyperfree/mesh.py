"""Structured quad/hex meshes with nested 2:1 refinement and cached element geometry.

Conventions used everywhere in the package:

* Vertices, element-local nodes and quadrature points are numbered
  lexicographically with the x index running fastest.
* Element corners are the 2^dim vertices in lexicographic corner order,
  corner ``c = c1 + 2*c2 + 4*c3`` with ``(c1, c2, c3)`` the per-axis bits.
* Local faces are numbered (-x, +x, -y, +y[, -z, +z]); the face with the
  smallest last coordinate is tagged ``bottom``, the opposite one ``top``.
* The geometric mapping from the unit cell to an element is multilinear in
  the corner vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

MATRIX = 0
INCLUSION = 1

BOTTOM = "bottom"
TOP = "top"
OTHER = "other"


def lex_grid_points(axes: Sequence[np.ndarray]) -> np.ndarray:
    """Tensor grid of the 1D coordinate arrays, flattened with x fastest.

    Returns an array of shape ``(prod(len(a)), dim)``.
    """
    dim = len(axes)
    shape = tuple(len(a) for a in reversed(axes))
    out = np.empty(shape + (dim,), dtype=float)
    for k, ax in enumerate(axes):
        view = [1] * dim
        view[dim - 1 - k] = len(ax)
        out[..., k] = np.asarray(ax, dtype=float).reshape(view)
    return out.reshape(-1, dim)


def lex_grid_indices(counts: Sequence[int]) -> np.ndarray:
    """Integer multi-indices of a tensor grid, flattened with x fastest."""
    dim = len(counts)
    shape = tuple(reversed(counts))
    out = np.empty(shape + (dim,), dtype=np.int64)
    for k, n in enumerate(counts):
        view = [1] * dim
        view[dim - 1 - k] = n
        out[..., k] = np.arange(n).reshape(view)
    return out.reshape(-1, dim)


class BoundaryFace(NamedTuple):
    element: int
    face: int
    tag: str


@dataclass(frozen=True)
class Mesh:
    """One level of a structured quad/hex grid.

    ``vertices`` may be perturbed relative to the uniform lattice; only the
    topology is required to stay structured.  Instances are treated as
    immutable after construction.
    """

    dim: int
    side: float
    n_cells_per_side: int
    vertices: np.ndarray  # (n_vertices, dim), mm
    elements: np.ndarray  # (n_el, 2**dim) corner vertex ids
    material_id: np.ndarray  # (n_el,) MATRIX or INCLUSION
    boundary_faces: tuple[BoundaryFace, ...]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def element_corners(self) -> np.ndarray:
        """Corner coordinates per element, shape (n_el, 2^dim, dim)."""
        return self.vertices[self.elements]

    def centroids(self) -> np.ndarray:
        return self.element_corners().mean(axis=1)


@dataclass(frozen=True)
class MeshHierarchy:
    """Nested mesh levels produced by global 2:1 refinement (level 0 coarsest)."""

    levels: tuple[Mesh, ...]
    parent_index: tuple[np.ndarray, ...]  # per level >= 1
    child_index: tuple[np.ndarray, ...]  # per level >= 1, values in 0..2^dim-1

    @classmethod
    def from_coarse(cls, mesh: Mesh) -> "MeshHierarchy":
        return cls(levels=(mesh,), parent_index=(), child_index=())

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> Mesh:
        return self.levels[-1]


@dataclass(frozen=True)
class GeometryCache:
    """Per (element, quadrature point) mapping data of the undeformed mesh.

    ``jac_inv`` is the inverse Jacobian of the unit-to-reference map and
    ``jxw`` the quadrature weight times its determinant.
    """

    jac_inv: np.ndarray  # (n_el, n_q, dim, dim)
    jxw: np.ndarray  # (n_el, n_q)

    @property
    def nbytes(self) -> int:
        return self.jac_inv.nbytes + self.jxw.nbytes


def _structured_connectivity(dim: int, n: int) -> np.ndarray:
    n_verts_1d = n + 1
    strides = np.array([n_verts_1d**k for k in range(dim)], dtype=np.int64)
    e_multi = lex_grid_indices((n,) * dim)
    offsets = lex_grid_indices((2,) * dim)
    corners = e_multi[:, None, :] + offsets[None, :, :]
    return corners @ strides


def _boundary_faces(dim: int, n: int) -> tuple[BoundaryFace, ...]:
    e_multi = lex_grid_indices((n,) * dim)
    flat = np.arange(n**dim)
    faces = []
    for axis in range(dim):
        for hi in (0, 1):
            sel = flat[e_multi[:, axis] == (n - 1 if hi else 0)]
            if axis == dim - 1:
                tag = TOP if hi else BOTTOM
            else:
                tag = OTHER
            faces.extend(BoundaryFace(int(e), 2 * axis + hi, tag) for e in sel)
    return tuple(faces)


def _structured_mesh(dim: int, n: int, side: float, material_id: np.ndarray) -> Mesh:
    axes = [np.linspace(0.0, side, n + 1)] * dim
    return Mesh(
        dim=dim,
        side=side,
        n_cells_per_side=n,
        vertices=lex_grid_points(axes),
        elements=_structured_connectivity(dim, n),
        material_id=np.asarray(material_id, dtype=np.int64),
        boundary_faces=_boundary_faces(dim, n),
    )


def build_benchmark_mesh(
    dim: int,
    n_cells_per_side: int,
    inclusion_spec: Sequence[tuple[Sequence[float], float]],
    side: float = 1e-3,
) -> Mesh:
    """Structured grid on [0, side]^dim with inclusions assigned by a centroid test.

    An element carries ``INCLUSION`` material iff its centroid lies inside any
    of the given disks/spheres ``(center, radius)``; everything else is
    ``MATRIX``.  The face with minimal last coordinate is tagged ``bottom``,
    the opposite face ``top``.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if n_cells_per_side < 2:
        raise ValueError("n_cells_per_side must be at least 2")
    centers = []
    for center, radius in inclusion_spec:
        c = np.asarray(center, dtype=float)
        if c.shape != (dim,):
            raise ValueError(f"inclusion center {center} does not have dim {dim}")
        if np.any(c < 0.0) or np.any(c > side):
            raise ValueError(f"inclusion center {center} lies outside the domain")
        if radius <= 0.0:
            raise ValueError("inclusion radius must be positive")
        centers.append((c, float(radius)))

    mesh = _structured_mesh(dim, n_cells_per_side, side, np.zeros(n_cells_per_side**dim))
    cents = mesh.centroids()
    material = np.full(mesh.n_elements, MATRIX, dtype=np.int64)
    for c, radius in centers:
        inside = np.linalg.norm(cents - c[None, :], axis=1) <= radius
        material[inside] = INCLUSION
    return replace(mesh, material_id=material)


def _midpoint_refine_axis(a: np.ndarray, axis: int) -> np.ndarray:
    n = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = 2 * n - 1
    out = np.empty(shape, dtype=a.dtype)
    even = [slice(None)] * a.ndim
    even[axis] = slice(0, None, 2)
    out[tuple(even)] = a
    odd = [slice(None)] * a.ndim
    odd[axis] = slice(1, None, 2)
    lo = [slice(None)] * a.ndim
    lo[axis] = slice(0, n - 1)
    hi = [slice(None)] * a.ndim
    hi[axis] = slice(1, n)
    out[tuple(odd)] = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
    return out


def _refine_mesh(mesh: Mesh) -> tuple[Mesh, np.ndarray, np.ndarray]:
    """Split every element into 2^dim children; midpoints average the parents."""
    dim, n = mesh.dim, mesh.n_cells_per_side
    grid = mesh.vertices.reshape((n + 1,) * dim + (dim,))
    for axis in range(dim):
        grid = _midpoint_refine_axis(grid, axis)
    fine_vertices = grid.reshape(-1, dim)

    n2 = 2 * n
    fe_multi = lex_grid_indices((n2,) * dim)
    parent_strides = np.array([n**k for k in range(dim)], dtype=np.int64)
    child_strides = np.array([2**k for k in range(dim)], dtype=np.int64)
    parent = (fe_multi // 2) @ parent_strides
    child = (fe_multi % 2) @ child_strides

    fine = Mesh(
        dim=dim,
        side=mesh.side,
        n_cells_per_side=n2,
        vertices=fine_vertices,
        elements=_structured_connectivity(dim, n2),
        material_id=mesh.material_id[parent],
        boundary_faces=_boundary_faces(dim, n2),
    )
    return fine, parent, child


def refine_globally(hierarchy: MeshHierarchy, times: int) -> MeshHierarchy:
    """Append ``times`` globally refined levels to the hierarchy."""
    if times < 0:
        raise ValueError("times must be non-negative")
    levels = list(hierarchy.levels)
    parents = list(hierarchy.parent_index)
    children = list(hierarchy.child_index)
    for _ in range(times):
        fine, parent, child = _refine_mesh(levels[-1])
        levels.append(fine)
        parents.append(parent)
        children.append(child)
    return MeshHierarchy(levels=tuple(levels), parent_index=tuple(parents), child_index=tuple(children))


def _q1_values(points: np.ndarray, dim: int) -> np.ndarray:
    """Multilinear corner shape functions at unit-cell points, (2^dim, n_pts)."""
    offsets = lex_grid_indices((2,) * dim)
    vals = np.ones((2**dim, points.shape[0]))
    for k in range(dim):
        x = points[:, k]
        vals *= np.where(offsets[:, k : k + 1] == 1, x[None, :], 1.0 - x[None, :])
    return vals


def _q1_gradients(points: np.ndarray, dim: int) -> np.ndarray:
    """Gradients of the corner shape functions, (2^dim, n_pts, dim)."""
    offsets = lex_grid_indices((2,) * dim)
    grads = np.ones((2**dim, points.shape[0], dim))
    for k in range(dim):
        x = points[:, k]
        factor = np.where(offsets[:, k : k + 1] == 1, x[None, :], 1.0 - x[None, :])
        dfactor = np.where(offsets[:, k : k + 1] == 1, 1.0, -1.0)
        for a in range(dim):
            grads[:, :, a] *= dfactor if a == k else factor
    return grads


def compute_geometry_cache(mesh: Mesh, quadrature) -> GeometryCache:
    """Inverse mapping Jacobians and JxW at every tensor quadrature point.

    Fails if the multilinear mapping is inverted anywhere.
    """
    dim = mesh.dim
    points = lex_grid_points([quadrature.points] * dim)
    weights = lex_grid_points([quadrature.weights] * dim).prod(axis=1)
    dn = _q1_gradients(points, dim)  # (2^dim, n_q, dim)
    corners = mesh.element_corners()  # (n_el, 2^dim, dim)
    jac = np.einsum("eci,cqa->eqia", corners, dn)
    det = np.linalg.det(jac)
    if np.any(det <= 0.0):
        e, q = np.unravel_index(int(np.argmin(det)), det.shape)
        raise ValueError(
            f"non-positive mapping Jacobian (det={det[e, q]:.3e}) in element {e} at quadrature point {q}"
        )
    return GeometryCache(jac_inv=np.linalg.inv(jac), jxw=det * weights[None, :])


_VTK_QUAD_ORDER = np.array([0, 1, 3, 2])
_VTK_HEX_ORDER = np.array([0, 1, 3, 2, 4, 5, 7, 6])


def write_vtk(mesh: Mesh, path: str) -> None:
    """Write the mesh as a legacy ASCII VTK unstructured grid with material ids."""
    order = _VTK_QUAD_ORDER if mesh.dim == 2 else _VTK_HEX_ORDER
    cell_type = 9 if mesh.dim == 2 else 12
    npc = 2**mesh.dim
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("hyperfree mesh\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices:
            coords = list(v) + [0.0] * (3 - mesh.dim)
            f.write(" ".join(f"{c:.17g}" for c in coords) + "\n")
        f.write(f"CELLS {mesh.n_elements} {mesh.n_elements * (npc + 1)}\n")
        for el in mesh.elements:
            f.write(f"{npc} " + " ".join(str(int(v)) for v in el[order]) + "\n")
        f.write(f"CELL_TYPES {mesh.n_elements}\n")
        for _ in range(mesh.n_elements):
            f.write(f"{cell_type}\n")
        f.write(f"CELL_DATA {mesh.n_elements}\n")
        f.write("SCALARS material_id int 1\n")
        f.write("LOOKUP_TABLE default\n")
        for m in mesh.material_id:
            f.write(f"{int(m)}\n")
