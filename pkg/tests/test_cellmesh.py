"""Reference-cell meshing: hole removal, tags, periodic pairing, measures."""

import numpy as np
import pytest

from voidlayer.cellmesh import (
    CellMeshSpec,
    Hole,
    build_cell_mesh,
    cell_measure,
    mesh_to_text,
    periodic_pairing,
)


def brute_force_pairs(mesh):
    """Coordinate-matching oracle for the periodic pairing."""
    coords = mesh.node_coords()
    pairs = []
    for n, x in enumerate(coords):
        if not any(np.isclose(x[k], 1.0) for k in range(1, mesh.dim)):
            continue
        target = x.copy()
        for k in range(1, mesh.dim):
            if np.isclose(target[k], 1.0):
                target[k] = 0.0
        (master,) = np.flatnonzero(np.all(np.isclose(coords, target), axis=1))
        pairs.append((int(master), int(n)))
    return pairs


class TestBuild:
    def test_counts_no_hole(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 4))
        assert mesh.n_solid == 16
        assert mesh.n_nodes == 25
        pairs = periodic_pairing(mesh)
        assert len(pairs) == 5  # one per node of the slave lateral face
        coords = mesh.node_coords()
        for master, slave in pairs:
            assert np.isclose(coords[slave, 1], 1.0)
            assert np.isclose(coords[master, 1], 0.0)
            assert np.isclose(coords[master, 0], coords[slave, 0])

    def test_removed_count_matches_point_oracle(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.2, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        centers = []
        for i in range(8):
            for j in range(8):
                centers.append((-0.5 + (i + 0.5) / 8, (j + 0.5) / 8))
        inside = sum(
            1
            for (x, y) in centers
            if ((x - 0.0) / 0.2) ** 2 + ((y - 0.5) / 0.2) ** 2 < 1.0
        )
        assert inside > 0
        assert 64 - mesh.n_solid == inside

    def test_hole_touching_face_rejected(self):
        hole = Hole("box", (0.3, 0.5, 0.5), (0.2, 0.1, 0.1))  # reaches y1 = 0.5
        with pytest.raises(ValueError):
            CellMeshSpec(3, 4, hole)

    def test_margin_one_voxel(self):
        # closure must stay one voxel away from every face of Y
        hole = Hole("box", (0.0, 0.5), (0.3, 0.2))
        CellMeshSpec(2, 8, hole)  # margin 0.2 - h = 0.125, fine
        with pytest.raises(ValueError):
            CellMeshSpec(2, 4, hole)  # margin 0.2 < h = 0.25

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            CellMeshSpec(2, 1)


class TestMeasure:
    def test_no_hole(self):
        assert cell_measure(build_cell_mesh(CellMeshSpec(2, 4))) == pytest.approx(1.0)

    def test_grid_aligned_box(self):
        hole = Hole("box", (0.0, 0.5), (0.125, 0.125))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        assert cell_measure(mesh) == pytest.approx(1.0 - 0.0625, abs=1e-14)

    def test_ellipse_counting(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.2, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        removed = 64 - mesh.n_solid
        assert cell_measure(mesh) == pytest.approx(1.0 - removed / 64, abs=1e-14)

    def test_staircase_convergence(self):
        # O(1/res) convergence of the voxel measure to the exact complement
        exact = 1.0 - np.pi * 0.2 * 0.25
        errs = []
        for res in (8, 16, 32):
            hole = Hole("ellipsoid", (0.0, 0.5), (0.2, 0.25))
            m = cell_measure(build_cell_mesh(CellMeshSpec(2, res, hole)))
            errs.append(abs(m - exact))
        perimeter = 1.5  # rough upper bound for this ellipse
        for res, err in zip((8, 16, 32), errs):
            assert err <= 2.0 * perimeter / res


class TestPairing:
    def test_3d_corner_chaining(self):
        mesh = build_cell_mesh(CellMeshSpec(3, 2))
        pairs = periodic_pairing(mesh)
        assert sorted(pairs) == sorted(brute_force_pairs(mesh))
        coords = mesh.node_coords()
        # the node at (y2, y3) = (1, 1) chains to the single master at (0, 0)
        for master, slave in pairs:
            if np.isclose(coords[slave, 1], 1.0) and np.isclose(coords[slave, 2], 1.0):
                assert np.isclose(coords[master, 1], 0.0)
                assert np.isclose(coords[master, 2], 0.0)

    def test_each_slave_has_one_master(self):
        mesh = build_cell_mesh(CellMeshSpec(3, 4, Hole("ellipsoid", (0, 0.5, 0.5), (0.2, 0.2, 0.2))))
        pairs = periodic_pairing(mesh)
        slaves = [s for _, s in pairs]
        assert len(set(slaves)) == len(slaves)
        coords = mesh.node_coords()
        for master, slave in pairs:
            assert np.isclose(coords[master, 0], coords[slave, 0])  # same thickness coord


class TestTagsAndInvariants:
    def test_face_tag_partition(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.2, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        s_plus = mesh.face_nodes("S_plus")
        s_minus = mesh.face_nodes("S_minus")
        lateral = mesh.face_nodes("lateral")
        holeb = mesh.face_nodes("hole_boundary")
        assert len(s_plus) == 9 and len(s_minus) == 9
        assert len(holeb) > 0
        # hole boundary never touches the outer faces
        assert not set(holeb) & set(s_plus)
        assert not set(holeb) & set(s_minus)
        assert not set(holeb) & set(lateral)

    def test_watertight(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.25, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        # every interior grid face is either shared by two solid elements,
        # shared by two removed elements, or tagged as hole boundary
        solid = mesh.solid
        n_mismatch = 0
        for axis in range(2):
            a = solid.take(range(0, solid.shape[axis] - 1), axis=axis)
            b = solid.take(range(1, solid.shape[axis]), axis=axis)
            n_mismatch += int((a != b).sum())
        assert n_mismatch == len(mesh.interface_faces())

    def test_reflection_symmetry(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.2, 0.3))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        assert np.array_equal(mesh.solid, mesh.solid[::-1, :])

    def test_export_text(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 2))
        text = mesh_to_text(mesh)
        assert text.count("node ") == 9
        assert text.count("element ") == 4
