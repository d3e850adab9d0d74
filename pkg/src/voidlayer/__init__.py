"""Homogenized interface conditions for thin periodically voided elastic layers.

The toolkit computes corrector fields on a perforated reference cell,
assembles effective membrane/plate tensors and interface memory kernels,
solves the three limit models (soft, membrane and plate scalings of the
layer stiffness), and verifies them against a resolved micro-solver.
"""

__version__ = "0.1.0"

from .tensors import (
    ElasticTensor4,
    isotropic_tensor,
    apply_tensor,
    verify_tensor_class,
    strain_basis,
)
from .cellmesh import CellMeshSpec, PeriodicCellMesh, build_cell_mesh

__all__ = [
    "__version__",
    "ElasticTensor4",
    "isotropic_tensor",
    "apply_tensor",
    "verify_tensor_class",
    "strain_basis",
    "CellMeshSpec",
    "PeriodicCellMesh",
    "build_cell_mesh",
]
