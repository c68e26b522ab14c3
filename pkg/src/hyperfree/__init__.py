"""Matrix-free finite-strain hyperelasticity on tensor-product meshes with GMG."""

from .material import NeoHookeanParams, NonPositiveJacobian
from .mesh import MeshHierarchy, build_benchmark_mesh, refine_globally
from .operators import (
    AssembledTangent,
    Material,
    MatrixFreeTangent,
    Problem,
    build_problem_hierarchy,
    compute_residual,
    energy,
)
from .solver import LoadSpec, NewtonSettings, cg, newton_solve

__all__ = [
    "AssembledTangent",
    "LoadSpec",
    "Material",
    "MatrixFreeTangent",
    "MeshHierarchy",
    "NeoHookeanParams",
    "NewtonSettings",
    "NonPositiveJacobian",
    "Problem",
    "build_benchmark_mesh",
    "build_problem_hierarchy",
    "cg",
    "compute_residual",
    "energy",
    "newton_solve",
    "refine_globally",
]
