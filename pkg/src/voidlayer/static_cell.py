"""Static cell problems on the perforated reference cell and the effective tensors.

Three corrector families are solved on the same mesh:

* membrane correctors, driven by a unit in-plane strain (prestrain M_ab),
  periodic laterally, traction-free top/bottom and hole, zero mean;
* bending correctors, driven by the linear prestrain -y1 M_ab;
* jump correctors, constant on each of the two faces (face-group
  constraint) with opposite unit face forces, zero mean.

Effective quadratic forms are evaluated exactly from the stiffness matrix,
the prestrain load vectors and closed-form box moments, which reproduces
the defining integrals without any strain post-processing:

    int A(e(x) + E_p) : (e(y) + E_q) =
        x.K y - f_p . y - f_q . x + int A E_p : E_q

with f_p the assembled prestrain load of E_p.  In-plane coordinate axes
are 1..d-1 (axis 0 is the thickness direction); in-plane tensors are
stored as full 4-index arrays over relabeled axes 0..d-2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cellmesh import PeriodicCellMesh, cell_measure
from .fem import (
    DofMap,
    _per_element_values,
    assemble_loads,
    assemble_stiffness,
    solve_constrained,
)
from .tensors import ElasticTensor4, strain_basis

__all__ = [
    "StaticCorrectorSet",
    "EffectiveCoefficients",
    "inplane_pairs",
    "solve_membrane_corrector",
    "solve_bending_corrector",
    "solve_jump_corrector",
    "solve_static_correctors",
    "assemble_effective_tensors",
    "jump_of",
]


def inplane_pairs(dim: int) -> list[tuple[int, int]]:
    """Ordered in-plane index pairs (a <= b), coordinate axes 1..d-1."""
    return [(a, b) for a in range(1, dim) for b in range(a, dim)]


def _periodic_dofmap(mesh: PeriodicCellMesh) -> DofMap:
    return DofMap(mesh, periodic=mesh.canonical)


def _resolve_tensor(tensor_field, mesh):
    """A representative tensor for dimension checks (fields are per-element)."""
    if isinstance(tensor_field, ElasticTensor4):
        return tensor_field
    if isinstance(tensor_field, dict):
        return next(iter(tensor_field.values()))
    return tensor_field(mesh.element_centers()[0])


def solve_membrane_corrector(mesh: PeriodicCellMesh, tensor_field, pair) -> np.ndarray:
    """Corrector for a unit in-plane strain: -div(A(e(x) + M_ab)) = 0."""
    a, b = pair
    dim = mesh.dim
    if not (1 <= a < dim and 1 <= b < dim):
        raise ValueError(f"pair {pair} is not in-plane for dimension {dim}")
    K = assemble_stiffness(mesh, tensor_field)
    f = assemble_loads(mesh, tensor_field=tensor_field, prestrain=strain_basis(a, b, dim))
    return solve_constrained(K, f, _periodic_dofmap(mesh), zero_mean=True)


def solve_bending_corrector(mesh: PeriodicCellMesh, tensor_field, pair) -> np.ndarray:
    """Corrector for the bending prestrain -y1 M_ab."""
    a, b = pair
    dim = mesh.dim
    if not (1 <= a < dim and 1 <= b < dim):
        raise ValueError(f"pair {pair} is not in-plane for dimension {dim}")
    M = strain_basis(a, b, dim)

    def prestrain(points):
        return -points[:, 0, None, None] * M

    K = assemble_stiffness(mesh, tensor_field)
    f = assemble_loads(mesh, tensor_field=tensor_field, prestrain=prestrain)
    return solve_constrained(K, f, _periodic_dofmap(mesh), zero_mean=True)


def solve_jump_corrector(mesh: PeriodicCellMesh, tensor_field, k: int) -> np.ndarray:
    """Jump corrector: face-constant field with unit face forces +-e_k."""
    dim = mesh.dim
    if not (0 <= k < dim):
        raise ValueError(f"component {k} out of range for dimension {dim}")
    K = assemble_stiffness(mesh, tensor_field)
    ek = np.eye(dim)[k]
    faces = [
        (*mesh.plane_faces(0, 0.5), ek),
        (*mesh.plane_faces(0, -0.5), -ek),
    ]
    f = assemble_loads(mesh, face_loads=faces)
    dofmap = _periodic_dofmap(mesh)
    dofmap.add_face_group(mesh.face_nodes("S_plus"))
    dofmap.add_face_group(mesh.face_nodes("S_minus"))
    return solve_constrained(K, f, dofmap, zero_mean=True)


def jump_of(mesh: PeriodicCellMesh, eta: np.ndarray) -> np.ndarray:
    """Face-constant difference eta|_{S+} - eta|_{S-} (a d-vector)."""
    dim = mesh.dim
    n_plus = int(mesh.face_nodes("S_plus")[0])
    n_minus = int(mesh.face_nodes("S_minus")[0])
    return eta[n_plus * dim : n_plus * dim + dim] - eta[n_minus * dim : n_minus * dim + dim]


@dataclass
class StaticCorrectorSet:
    """Solved membrane/bending/jump correctors on one mesh and tensor field."""

    mesh: PeriodicCellMesh
    tensor_field: object
    chi_A: dict = field(default_factory=dict)
    chi_B: dict = field(default_factory=dict)
    eta_jump: dict = field(default_factory=dict)

    def chi_A_at(self, a: int, b: int) -> np.ndarray:
        return self.chi_A[(a, b) if a <= b else (b, a)]

    def chi_B_at(self, a: int, b: int) -> np.ndarray:
        return self.chi_B[(a, b) if a <= b else (b, a)]


def solve_static_correctors(mesh: PeriodicCellMesh, tensor_field) -> StaticCorrectorSet:
    """Solve every distinct corrector; (a,b) and (b,a) share one solve."""
    out = StaticCorrectorSet(mesh, tensor_field)
    for pair in inplane_pairs(mesh.dim):
        out.chi_A[pair] = solve_membrane_corrector(mesh, tensor_field, pair)
        out.chi_B[pair] = solve_bending_corrector(mesh, tensor_field, pair)
    for k in range(mesh.dim):
        out.eta_jump[k] = solve_jump_corrector(mesh, tensor_field, k)
    return out


@dataclass
class EffectiveCoefficients:
    """Effective membrane/plate tensors and layer mass of one cell configuration.

    `A_star` is the unnormalized membrane tensor; `a_star`, `b_star`,
    `c_star` follow `normalization` ('volume_normalized' divides by |Y_0|,
    'unnormalized' does not).  All four are 4-index arrays over the
    in-plane axes.  `rho_bar` is the integral of the layer density over the
    solid cell.
    """

    dimension: int
    A_star: np.ndarray
    a_star: np.ndarray
    b_star: np.ndarray
    c_star: np.ndarray
    rho_bar: float
    cell_volume: float
    normalization: str
    provenance: dict = field(default_factory=dict)

    @property
    def in_plane_dim(self) -> int:
        return self.dimension - 1

    def plate_unnormalized(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """a*, b*, c* rescaled to the unnormalized weak form used by the solvers."""
        s = self.cell_volume if self.normalization == "volume_normalized" else 1.0
        return s * self.a_star, s * self.b_star, s * self.c_star

    def inplane_voigt(self, tensor4: np.ndarray) -> np.ndarray:
        """Voigt matrix (plain components) of an in-plane 4-index tensor."""
        m = self.in_plane_dim
        pairs = [(i, j) for i in range(m) for j in range(i, m)]
        V = np.empty((len(pairs), len(pairs)))
        for r, (i, j) in enumerate(pairs):
            for c, (k, l) in enumerate(pairs):
                V[r, c] = tensor4[i, j, k, l]
        return V

    def mandel(self, tensor4: np.ndarray) -> np.ndarray:
        """Mandel matrix of an in-plane tensor (for eigenvalue checks)."""
        m = self.in_plane_dim
        pairs = [(i, j) for i in range(m) for j in range(i, m)]
        s = np.array([1.0 if i == j else np.sqrt(2.0) for (i, j) in pairs])
        return self.inplane_voigt(tensor4) * np.outer(s, s)


def _box_moments(mesh):
    """Per-element integrals of 1, y1 and y1^2 over the solid boxes (exact)."""
    vols = mesh.element_volumes()
    centers = mesh.element_centers()[:, 0]
    h1 = mesh.element_sizes()[:, 0]
    return vols, vols * centers, vols * (centers**2 + h1**2 / 12.0)


def assemble_effective_tensors(
    correctors: StaticCorrectorSet,
    density_field=1.0,
    normalization: str = "volume_normalized",
) -> EffectiveCoefficients:
    """Assemble A*, a*, b*, c* and the mean layer mass from solved correctors."""
    if normalization not in ("volume_normalized", "unnormalized"):
        raise ValueError(f"unknown normalization {normalization!r}")
    mesh = correctors.mesh
    tensor_field = correctors.tensor_field
    dim = mesh.dim
    m = dim - 1
    pairs = inplane_pairs(dim)
    for pair in pairs:
        if pair not in correctors.chi_A or pair not in correctors.chi_B:
            raise ValueError(f"missing corrector for pair {pair}")

    K = assemble_stiffness(mesh, tensor_field)
    tensors = _per_element_values(mesh, tensor_field)
    w0, w1, w2 = _box_moments(mesh)

    f_A, f_B = {}, {}
    for (a, b) in pairs:
        M = strain_basis(a, b, dim)
        f_A[(a, b)] = assemble_loads(mesh, tensor_field=tensor_field, prestrain=M)

        def prestrain(points, M=M):
            return -points[:, 0, None, None] * M

        f_B[(a, b)] = assemble_loads(mesh, tensor_field=tensor_field, prestrain=prestrain)

    def contract_moment(p, q, weights):
        Mp = strain_basis(*p, dim)
        Mq = strain_basis(*q, dim)
        vals = np.array([t.contract(Mp, Mq) for t in tensors])
        return float(vals @ weights)

    A_star = np.zeros((m, m, m, m))
    b_star = np.zeros((m, m, m, m))
    c_star = np.zeros((m, m, m, m))
    for p in pairs:
        xA_p, xB_p = correctors.chi_A[p], correctors.chi_B[p]
        for q in pairs:
            xA_q, xB_q = correctors.chi_A[q], correctors.chi_B[q]
            # prestrains: membrane E = M_q (constant), bending E = -y1 M_q
            a_pq = (
                xA_p @ K @ xA_q
                - f_A[p] @ xA_q
                - f_A[q] @ xA_p
                + contract_moment(p, q, w0)
            )
            b_pq = (
                xB_p @ K @ xA_q
                - f_B[p] @ xA_q
                - f_A[q] @ xB_p
                - contract_moment(p, q, w1)
            )
            c_pq = (
                xB_p @ K @ xB_q
                - f_B[p] @ xB_q
                - f_B[q] @ xB_p
                + contract_moment(p, q, w2)
            )
            for (i, j) in {(p[0], p[1]), (p[1], p[0])}:
                for (k, l) in {(q[0], q[1]), (q[1], q[0])}:
                    A_star[i - 1, j - 1, k - 1, l - 1] = a_pq
                    b_star[i - 1, j - 1, k - 1, l - 1] = b_pq
                    c_star[i - 1, j - 1, k - 1, l - 1] = c_pq

    vol = cell_measure(mesh)
    rhos = np.array(_per_element_values(mesh, density_field), dtype=float)
    rho_bar = float(rhos @ w0)

    scale = 1.0 / vol if normalization == "volume_normalized" else 1.0
    return EffectiveCoefficients(
        dimension=dim,
        A_star=A_star,
        a_star=scale * A_star,
        b_star=scale * b_star,
        c_star=scale * c_star,
        rho_bar=rho_bar,
        cell_volume=vol,
        normalization=normalization,
        provenance={
            "resolution": int(mesh.eshape[0]),
            "dimension": dim,
            "solid_elements": int(mesh.n_solid),
        },
    )


def effective_single_form(correctors: StaticCorrectorSet, p, q) -> float:
    """Single-corrector evaluation of A*: int A(M_q + e(chi_q)) : M_p.

    Equivalent to the double-corrector form by Galerkin orthogonality; used
    as a consistency diagnostic.
    """
    mesh = correctors.mesh
    tensors = _per_element_values(mesh, correctors.tensor_field)
    w0, _, _ = _box_moments(mesh)
    Mp = strain_basis(*p, mesh.dim)
    Mq = strain_basis(*q, mesh.dim)
    moment = float(np.array([t.contract(Mp, Mq) for t in tensors]) @ w0)
    f_p = assemble_loads(mesh, tensor_field=correctors.tensor_field, prestrain=Mp)
    return moment - float(f_p @ correctors.chi_A[q])
