"""Named material, load, geometry and benchmark-size presets.

The benchmark domain is a square/cube of side 1e-3 mm fixed along the bottom
face and sheared by a constant traction on the top face.  The matrix phase
has shear modulus 0.4225e6 N/mm^2 and Poisson ratio 0.3; the inclusion phase
is 100x stiffer.  Inclusion centers and radii are approximate placeholders
chosen to give a heterogeneous coarse mesh (the exact benchmark geometry is
not part of this package's contract) and the hole of the original benchmark
geometry is not modeled.

Desk-scale size presets mirror the published degree/quadrature combinations
with the refinement counts reduced so that every configuration stays near or
below 1e5 DoFs; ``original_refinements`` records the full-scale counts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .material import NeoHookeanParams
from .mesh import Mesh, MeshHierarchy, build_benchmark_mesh, refine_globally
from .operators import Material
from .solver import LoadSpec

DOMAIN_SIDE_MM = 1e-3
INCLUSION_STIFFNESS_FACTOR = 100.0

MATERIALS = {
    "benchmark": Material(
        matrix=NeoHookeanParams.from_shear_and_poisson(0.4225e6, 0.3),
        inclusion=NeoHookeanParams.from_shear_and_poisson(0.4225e6, 0.3).scaled(INCLUSION_STIFFNESS_FACTOR),
    ),
    # convenient O(1) moduli for experiments and tests
    "unit": Material(
        matrix=NeoHookeanParams.from_shear_and_poisson(1.0, 0.3),
        inclusion=NeoHookeanParams.from_shear_and_poisson(1.0, 0.3).scaled(INCLUSION_STIFFNESS_FACTOR),
    ),
}

_LOADS = {
    ("benchmark", 2): LoadSpec(magnitude=12.5e3, direction=(1.0, 0.0)),
    ("benchmark", 3): LoadSpec(magnitude=12.5e3 * 2.0**0.5, direction=(1.0, 1.0, 0.0)),
    ("unit", 2): LoadSpec(magnitude=0.05, direction=(1.0, 0.0)),
    ("unit", 3): LoadSpec(magnitude=0.05 * 2.0**0.5, direction=(1.0, 1.0, 0.0)),
}

# fractions of the domain side: ((center...), radius)
INCLUSIONS_2D = (((0.25, 0.7), 0.15), ((0.65, 0.35), 0.2))
INCLUSIONS_3D = (((0.25, 0.7, 0.5), 0.15), ((0.65, 0.35, 0.5), 0.2))


def material_preset(name: str) -> Material:
    try:
        return MATERIALS[name]
    except KeyError:
        raise KeyError(f"unknown material preset {name!r}; available: {sorted(MATERIALS)}") from None


def load_preset(name: str, dim: int) -> LoadSpec:
    try:
        return _LOADS[(name, dim)]
    except KeyError:
        raise KeyError(f"unknown load preset {name!r} for dim {dim}") from None


def inclusion_spec(dim: int, side: float = DOMAIN_SIDE_MM):
    fractions = INCLUSIONS_2D if dim == 2 else INCLUSIONS_3D
    return [(tuple(side * c for c in center), side * r) for center, r in fractions]


def benchmark_coarse_mesh(dim: int, n_cells_per_side: int = 8, side: float = DOMAIN_SIDE_MM) -> Mesh:
    return build_benchmark_mesh(dim, n_cells_per_side, inclusion_spec(dim, side), side=side)


def benchmark_hierarchy(dim: int, refinements: int, n_cells_per_side: int = 8) -> MeshHierarchy:
    coarse = benchmark_coarse_mesh(dim, n_cells_per_side)
    return refine_globally(MeshHierarchy.from_coarse(coarse), refinements)


@dataclass(frozen=True)
class SizePreset:
    dim: int
    degree: int
    n_qpoints: int
    refinements: int
    original_refinements: int


# desk-scale reductions of the published (p, q, refinement) combinations
SIZE_PRESETS = {
    "2d-p1": SizePreset(2, 1, 2, 5, 7),
    "2d-p2": SizePreset(2, 2, 3, 4, 6),
    "2d-p3": SizePreset(2, 3, 4, 3, 5),
    "2d-p4": SizePreset(2, 4, 5, 3, 5),
    "2d-p5": SizePreset(2, 5, 6, 2, 5),
    "2d-p6": SizePreset(2, 6, 7, 2, 4),
    "2d-p7": SizePreset(2, 7, 8, 2, 4),
    "2d-p8": SizePreset(2, 8, 9, 2, 4),
    "3d-p1": SizePreset(3, 1, 2, 2, 4),
    "3d-p2": SizePreset(3, 2, 3, 1, 3),
    "3d-p3": SizePreset(3, 3, 4, 0, 2),
    "3d-p4": SizePreset(3, 4, 5, 0, 2),
}


def size_preset(name: str) -> SizePreset:
    try:
        return SIZE_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown size preset {name!r}; available: {sorted(SIZE_PRESETS)}") from None
