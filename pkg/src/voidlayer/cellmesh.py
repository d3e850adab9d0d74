"""Voxel finite-element meshes: tensor grids, and the perforated periodic reference cell.

The reference cell occupies (-1/2, 1/2) x (0, 1)^{d-1}; coordinate 0 is the
thickness direction, coordinates 1..d-1 are the in-plane periodic
directions.  A single hole (ellipsoid or axis-aligned box), strictly
interior with at least one voxel of margin, is removed element-by-element
using the element-center test, so periodic pairing stays exact index
arithmetic and hole membership is deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Hole",
    "CellMeshSpec",
    "VoxelMesh",
    "PeriodicCellMesh",
    "build_cell_mesh",
    "cell_measure",
    "periodic_pairing",
    "mesh_to_text",
]


@dataclass(frozen=True)
class Hole:
    """Single hole: 'ellipsoid' with half_axes or 'box' with half-widths."""

    kind: str
    center: tuple
    half_axes: tuple

    def __post_init__(self):
        if self.kind not in ("ellipsoid", "box"):
            raise ValueError(f"unknown hole kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "half_axes", tuple(float(a) for a in self.half_axes))
        if any(a <= 0 for a in self.half_axes):
            raise ValueError("hole half-axes must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict membership test for an array of points, shape (n, d)."""
        rel = (points - np.asarray(self.center)) / np.asarray(self.half_axes)
        if self.kind == "ellipsoid":
            return (rel**2).sum(axis=1) < 1.0
        return np.all(np.abs(rel) < 1.0, axis=1)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        a = np.asarray(self.half_axes)
        return c - a, c + a


@dataclass(frozen=True)
class CellMeshSpec:
    """Reference-cell description: dimension, voxels per unit length, optional hole."""

    dimension: int
    resolution: int
    hole: Hole | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.resolution < 2:
            raise ValueError(f"resolution must be >= 2, got {self.resolution}")
        if self.hole is not None:
            if len(self.hole.center) != self.dimension:
                raise ValueError("hole center dimension mismatch")
            h = 1.0 / self.resolution
            lo, hi = self.hole.bounding_box()
            dlo = self.domain_lo()
            dhi = self.domain_hi()
            if np.any(lo < dlo + h - 1e-12) or np.any(hi > dhi - h + 1e-12):
                raise ValueError(
                    "hole must be strictly interior with at least one voxel of margin"
                )

    def domain_lo(self) -> np.ndarray:
        return np.array([-0.5] + [0.0] * (self.dimension - 1))

    def domain_hi(self) -> np.ndarray:
        return np.array([0.5] + [1.0] * (self.dimension - 1))


class VoxelMesh:
    """Tensor-product grid of box elements with a solid mask and a material id per element.

    `axes` are the grid breakpoints per coordinate.  Elements and nodes are
    addressed by flat C-order indices over their multi-index grids; only
    solid elements carry degrees of freedom downstream.
    """

    def __init__(self, axes, solid=None, material=None):
        self.axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
        self.dim = len(self.axes)
        self.nshape = tuple(len(ax) for ax in self.axes)
        self.eshape = tuple(len(ax) - 1 for ax in self.axes)
        n_elem = int(np.prod(self.eshape))
        if solid is None:
            solid = np.ones(self.eshape, dtype=bool)
        self.solid = np.asarray(solid, dtype=bool).reshape(self.eshape)
        self.esolid = np.flatnonzero(self.solid.ravel(order="C"))
        if material is None:
            material = np.zeros(n_elem, dtype=int)
        self.material = np.asarray(material, dtype=int).reshape(-1)
        self.n_nodes = int(np.prod(self.nshape))
        self._conn = None

    # -- nodes ---------------------------------------------------------

    def node_coords(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel(order="C") for g in grids], axis=1)

    def node_flat(self, multi) -> int:
        return int(np.ravel_multi_index(multi, self.nshape, order="C"))

    # -- elements ------------------------------------------------------

    @property
    def n_solid(self) -> int:
        return len(self.esolid)

    def corner_offsets(self) -> list[tuple[int, ...]]:
        """Local corner enumeration; matches the shape-function ordering in the FEM module."""
        return list(itertools.product((0, 1), repeat=self.dim))

    def element_conn(self) -> np.ndarray:
        """Corner node flat ids of the solid elements, shape (n_solid, 2^d)."""
        if self._conn is None:
            emulti = np.stack(
                np.unravel_index(self.esolid, self.eshape, order="C"), axis=1
            )
            corners = []
            for off in self.corner_offsets():
                corners.append(
                    np.ravel_multi_index(
                        tuple((emulti[:, k] + off[k]) for k in range(self.dim)),
                        self.nshape,
                        order="C",
                    )
                )
            self._conn = np.stack(corners, axis=1)
        return self._conn

    def element_sizes(self) -> np.ndarray:
        emulti = np.unravel_index(self.esolid, self.eshape, order="C")
        return np.stack(
            [np.diff(self.axes[k])[emulti[k]] for k in range(self.dim)], axis=1
        )

    def element_centers(self) -> np.ndarray:
        emulti = np.unravel_index(self.esolid, self.eshape, order="C")
        mids = [0.5 * (self.axes[k][1:] + self.axes[k][:-1]) for k in range(self.dim)]
        return np.stack([mids[k][emulti[k]] for k in range(self.dim)], axis=1)

    def element_volumes(self) -> np.ndarray:
        return self.element_sizes().prod(axis=1)

    def solid_volume(self) -> float:
        return float(self.element_volumes().sum())

    def active_nodes(self) -> np.ndarray:
        """Flat ids of nodes that belong to at least one solid element."""
        return np.unique(self.element_conn())

    # -- boundary faces --------------------------------------------------

    def plane_faces(self, axis: int, value: float, tol: float = 1e-12):
        """Faces of solid elements lying on the plane {x_axis = value}.

        Returns (face_nodes, measures): node ids shape (n_f, 2^{d-1}) and
        the face areas.  Only exterior grid planes are meaningful here.
        """
        ax = self.axes[axis]
        conn = self.element_conn()
        sizes = self.element_sizes()
        if abs(ax[0] - value) < tol:
            side = 0
        elif abs(ax[-1] - value) < tol:
            side = 1
        else:
            raise ValueError(f"plane x_{axis}={value} is not a grid boundary plane")
        emulti = np.stack(np.unravel_index(self.esolid, self.eshape, order="C"), axis=1)
        on = emulti[:, axis] == (0 if side == 0 else self.eshape[axis] - 1)
        keep = [
            i
            for i, off in enumerate(self.corner_offsets())
            if off[axis] == side
        ]
        face_nodes = conn[on][:, keep]
        other = [k for k in range(self.dim) if k != axis]
        measures = sizes[on][:, other].prod(axis=1) if other else np.ones(on.sum())
        return face_nodes, measures

    def interface_faces(self):
        """Interior faces between a solid and a removed element (the hole boundary)."""
        faces = []
        solid = self.solid
        for axis in range(self.dim):
            sl_lo = [slice(None)] * self.dim
            sl_hi = [slice(None)] * self.dim
            sl_lo[axis] = slice(0, -1)
            sl_hi[axis] = slice(1, None)
            a = solid[tuple(sl_lo)]
            b = solid[tuple(sl_hi)]
            mism = np.argwhere(a != b)
            for idx in mism:
                lo = list(idx)
                hi = list(idx)
                hi[axis] += 1
                solid_elem = tuple(lo) if solid[tuple(lo)] else tuple(hi)
                faces.append((axis, solid_elem))
        return faces


class PeriodicCellMesh(VoxelMesh):
    """Reference-cell mesh with tagged faces and in-plane periodic node pairing."""

    def __init__(self, spec: CellMeshSpec):
        res = spec.resolution
        axes = [np.linspace(-0.5, 0.5, res + 1)] + [
            np.linspace(0.0, 1.0, res + 1) for _ in range(spec.dimension - 1)
        ]
        solid = np.ones([res] * spec.dimension, dtype=bool)
        if spec.hole is not None:
            mids = [0.5 * (ax[1:] + ax[:-1]) for ax in axes]
            grids = np.meshgrid(*mids, indexing="ij")
            centers = np.stack([g.ravel(order="C") for g in grids], axis=1)
            solid = ~spec.hole.contains(centers).reshape(solid.shape)
            if not solid.any():
                raise ValueError("hole removes every element")
        super().__init__(axes, solid)
        self.spec = spec
        self.canonical = self._build_canonical()
        self.periodic_pairs = [
            (int(self.canonical[n]), int(n))
            for n in range(self.n_nodes)
            if self.canonical[n] != n
        ]

    def _build_canonical(self) -> np.ndarray:
        """Map each node to its periodic master (in-plane max coordinate -> 0)."""
        canonical = np.empty(self.n_nodes, dtype=int)
        for flat in range(self.n_nodes):
            multi = list(np.unravel_index(flat, self.nshape, order="C"))
            for k in range(1, self.dim):
                if multi[k] == self.nshape[k] - 1:
                    multi[k] = 0
            canonical[flat] = np.ravel_multi_index(multi, self.nshape, order="C")
        return canonical

    def face_nodes(self, tag: str) -> np.ndarray:
        """Flat node ids carrying the given face tag."""
        coords = self.node_coords()
        if tag == "S_plus":
            return np.flatnonzero(np.abs(coords[:, 0] - 0.5) < 1e-12)
        if tag == "S_minus":
            return np.flatnonzero(np.abs(coords[:, 0] + 0.5) < 1e-12)
        if tag == "lateral":
            mask = np.zeros(self.n_nodes, dtype=bool)
            for k in range(1, self.dim):
                mask |= np.abs(coords[:, k]) < 1e-12
                mask |= np.abs(coords[:, k] - 1.0) < 1e-12
            return np.flatnonzero(mask)
        if tag == "hole_boundary":
            nodes = set()
            offsets = self.corner_offsets()
            unit = np.eye(self.dim, dtype=int)
            for axis, elem in self.interface_faces():
                e = np.array(elem)
                hi = tuple(e + unit[axis])
                # side of the solid element facing its removed neighbour
                side = 1 if (elem[axis] + 1 < self.eshape[axis] and not self.solid[hi]) else 0
                for off in offsets:
                    if off[axis] != side:
                        continue
                    multi = tuple(e[k] + off[k] for k in range(self.dim))
                    nodes.add(int(np.ravel_multi_index(multi, self.nshape, order="C")))
            return np.array(sorted(nodes), dtype=int)
        raise ValueError(f"unknown face tag {tag!r}")


def build_cell_mesh(spec: CellMeshSpec) -> PeriodicCellMesh:
    """Build the perforated reference-cell mesh for a validated spec."""
    return PeriodicCellMesh(spec)


def cell_measure(mesh: VoxelMesh) -> float:
    """|Y_0|: total volume of the solid voxels."""
    return mesh.solid_volume()


def periodic_pairing(mesh: PeriodicCellMesh) -> list[tuple[int, int]]:
    """(master, slave) node pairs eliminating the in-plane slave boundary nodes."""
    return list(mesh.periodic_pairs)


def mesh_to_text(mesh: VoxelMesh) -> str:
    """Plain-text export: one node per line, then one element per line."""
    lines = [f"# voxel mesh dim={mesh.dim} nodes={mesh.n_nodes} solid_elements={mesh.n_solid}"]
    coords = mesh.node_coords()
    for i, xyz in enumerate(coords):
        lines.append("node %d %s" % (i, " ".join(format(x, ".17g") for x in xyz)))
    conn = mesh.element_conn()
    for row, eid in enumerate(mesh.esolid):
        nodes = " ".join(str(int(n)) for n in conn[row])
        lines.append(f"element {int(eid)} {nodes} solid=1 material={int(mesh.material[eid])}")
    return "\n".join(lines) + "\n"
