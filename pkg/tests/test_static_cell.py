"""Static correctors and effective tensors against closed-form oracles."""

import numpy as np
import pytest

from voidlayer.cellmesh import CellMeshSpec, Hole, build_cell_mesh
from voidlayer.fem import assemble_stiffness
from voidlayer.static_cell import (
    assemble_effective_tensors,
    effective_single_form,
    inplane_pairs,
    jump_of,
    solve_bending_corrector,
    solve_jump_corrector,
    solve_membrane_corrector,
    solve_static_correctors,
)
from voidlayer.tensors import isotropic_tensor

LAM, MU = 2.0, 1.0


def plane_stress_inplane(lam, mu, m):
    """Analytic plane-stress reduction: 4-index in-plane tensor of size m."""
    lam_star = 2.0 * lam * mu / (lam + 2.0 * mu)
    t = np.zeros((m, m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    t[i, j, k, l] = lam_star * (i == j) * (k == l) + mu * (
                        (i == k) * (j == l) + (i == l) * (j == k)
                    )
    return t


def weighted_mean(mesh, field):
    """Componentwise solid-volume-weighted mean of a nodal field."""
    d = mesh.dim
    conn = mesh.element_conn()
    vols = mesh.element_volumes()
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, conn.ravel(), np.repeat(vols / 2**d, conn.shape[1]))
    out = np.empty(d)
    for c in range(d):
        out[c] = (w * field[c::d]).sum() / vols.sum()
    return out


class TestMembraneCorrector:
    def test_hole_free_closed_form(self):
        # plane-stress corrector: only the thickness component is active,
        # chi_0(y) = -(lam / (lam + 2 mu)) y1, affine hence exact
        for dim in (2, 3):
            mesh = build_cell_mesh(CellMeshSpec(dim, 4))
            C = isotropic_tensor(LAM, MU, dim)
            chi = solve_membrane_corrector(mesh, C, (1, 1))
            coords = mesh.node_coords()
            expected = np.zeros_like(chi)
            expected[0::dim] = -(LAM / (LAM + 2 * MU)) * coords[:, 0]
            assert np.abs(chi - expected).max() <= 1e-8 * np.abs(expected).max()

    def test_pure_shear_corrector_vanishes(self):
        mesh = build_cell_mesh(CellMeshSpec(3, 4))
        C = isotropic_tensor(LAM, MU, 3)
        chi = solve_membrane_corrector(mesh, C, (1, 2))
        assert np.abs(chi).max() <= 1e-10

    def test_energy_minimization_with_hole(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 8, Hole("ellipsoid", (0.0, 0.5), (0.2, 0.2))))
        C = isotropic_tensor(LAM, MU, 2)
        correctors = solve_static_correctors(mesh, C)
        eff = assemble_effective_tensors(correctors)
        no_corr = (LAM + 2 * MU) * mesh.solid_volume()  # int A M11 : M11 over Y0
        assert eff.A_star[0, 0, 0, 0] <= no_corr + 1e-12

    def test_out_of_plane_pair_rejected(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 4))
        with pytest.raises(ValueError):
            solve_membrane_corrector(mesh, isotropic_tensor(LAM, MU, 2), (0, 1))


class TestBendingCorrector:
    def test_hole_free_quadratic_profile(self):
        # chi_0 = (lam/(lam+2mu)) y1^2/2, shifted to discrete zero mean; the
        # 1d reduction is nodally exact, so only the mean shift remains
        mesh = build_cell_mesh(CellMeshSpec(2, 8))
        C = isotropic_tensor(LAM, MU, 2)
        chi = solve_bending_corrector(mesh, C, (1, 1))
        coords = mesh.node_coords()
        raw = np.zeros_like(chi)
        raw[0::2] = (LAM / (LAM + 2 * MU)) * coords[:, 0] ** 2 / 2.0
        shift = weighted_mean(mesh, raw)
        expected = raw.copy()
        for c in range(2):
            expected[c::2] -= shift[c]
        assert np.abs(chi - expected).max() <= 1e-10
        # and the continuum profile is approached at O(h^2)
        exact = raw.copy()
        exact[0::2] -= (LAM / (LAM + 2 * MU)) / 24.0
        assert np.abs(chi - exact).max() <= 1.0 / 8**2

    def test_symmetric_hole_parity(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.2, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        C = isotropic_tensor(LAM, MU, 2)
        chi = solve_bending_corrector(mesh, C, (1, 1))
        nshape = mesh.nshape
        refl = np.empty_like(chi)
        for n in range(mesh.n_nodes):
            i, j = np.unravel_index(n, nshape)
            m = np.ravel_multi_index((nshape[0] - 1 - i, j), nshape)
            refl[2 * n : 2 * n + 2] = chi[2 * m : 2 * m + 2]
        active = np.zeros(mesh.n_nodes * 2, dtype=bool)
        for node in mesh.active_nodes():
            active[2 * node : 2 * node + 2] = True
        scale = np.abs(chi).max()
        # thickness component even, in-plane component odd under y1 -> -y1
        assert np.abs((refl - chi)[0::2][active[0::2]]).max() <= 1e-9 * scale
        assert np.abs((refl + chi)[1::2][active[1::2]]).max() <= 1e-9 * scale


class TestJumpCorrector:
    def test_normal_closed_form(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 4))
        C = isotropic_tensor(LAM, MU, 2)
        eta = solve_jump_corrector(mesh, C, 0)
        coords = mesh.node_coords()
        expected = np.zeros_like(eta)
        expected[0::2] = coords[:, 0] / (LAM + 2 * MU)
        assert np.abs(eta - expected).max() <= 1e-8 * np.abs(expected).max()

    def test_shear_closed_form(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 4))
        C = isotropic_tensor(LAM, MU, 2)
        eta = solve_jump_corrector(mesh, C, 1)
        coords = mesh.node_coords()
        expected = np.zeros_like(eta)
        expected[1::2] = coords[:, 0] / MU
        assert np.abs(eta - expected).max() <= 1e-8 * np.abs(expected).max()

    def test_face_constants_and_reactions(self):
        hole = Hole("box", (0.0, 0.5), (0.2, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        C = isotropic_tensor(LAM, MU, 2)
        K = assemble_stiffness(mesh, C)
        for k in range(2):
            eta = solve_jump_corrector(mesh, C, k)
            for tag, sign in (("S_plus", 1.0), ("S_minus", -1.0)):
                nodes = mesh.face_nodes(tag)
                vals = eta.reshape(-1, 2)[nodes]
                assert np.abs(vals - vals[0]).max() <= 1e-10  # constant on the face
                reaction = (K @ eta).reshape(-1, 2)[nodes].sum(axis=0)
                assert np.abs(reaction - sign * np.eye(2)[k]).max() <= 1e-9

    def test_reciprocity_table(self):
        hole = Hole("ellipsoid", (0.0, 0.5), (0.25, 0.2))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        C = isotropic_tensor(LAM, MU, 2)
        K = assemble_stiffness(mesh, C)
        etas = [solve_jump_corrector(mesh, C, k) for k in range(2)]
        for j in range(2):
            for k in range(2):
                energy = etas[j] @ K @ etas[k]
                assert abs(energy - jump_of(mesh, etas[j])[k]) <= 1e-9
                assert abs(energy - jump_of(mesh, etas[k])[j]) <= 1e-9


class TestEffectiveTensors:
    def test_plane_stress_recovery_2d(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 4))
        C = isotropic_tensor(LAM, MU, 2)
        eff = assemble_effective_tensors(solve_static_correctors(mesh, C))
        want = plane_stress_inplane(LAM, MU, 1)
        assert np.allclose(eff.A_star, want, rtol=1e-9)

    def test_plane_stress_recovery_3d(self):
        mesh = build_cell_mesh(CellMeshSpec(3, 4))
        C = isotropic_tensor(LAM, MU, 3)
        eff = assemble_effective_tensors(solve_static_correctors(mesh, C))
        want = plane_stress_inplane(LAM, MU, 2)
        assert np.allclose(eff.A_star, want, rtol=1e-8, atol=1e-10)

    def test_b_star_vanishes_for_symmetric_cell(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 8, Hole("box", (0.0, 0.5), (0.2, 0.3))))
        C = isotropic_tensor(LAM, MU, 2)
        eff = assemble_effective_tensors(solve_static_correctors(mesh, C))
        assert np.abs(eff.b_star).max() <= 1e-10

    def test_c_star_twelfth_rule_no_hole(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 8))
        C = isotropic_tensor(LAM, MU, 2)
        eff = assemble_effective_tensors(solve_static_correctors(mesh, C))
        want = plane_stress_inplane(LAM, MU, 1) / 12.0
        assert np.allclose(eff.c_star, want, rtol=0.05)

    def test_single_vs_double_form(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 8, Hole("ellipsoid", (0.0, 0.5), (0.2, 0.2))))
        C = isotropic_tensor(LAM, MU, 2)
        correctors = solve_static_correctors(mesh, C)
        eff = assemble_effective_tensors(correctors)
        for p in inplane_pairs(2):
            for q in inplane_pairs(2):
                single = effective_single_form(correctors, p, q)
                double = eff.A_star[p[0] - 1, p[1] - 1, q[0] - 1, q[1] - 1]
                assert abs(single - double) <= 1e-9 * max(1.0, abs(double))

    def test_loewner_monotone_in_hole_size(self):
        C = isotropic_tensor(LAM, MU, 2)
        values = []
        for r in (0.1, 0.2, 0.3):
            mesh = build_cell_mesh(CellMeshSpec(2, 8, Hole("ellipsoid", (0.0, 0.5), (r, r))))
            eff = assemble_effective_tensors(solve_static_correctors(mesh, C))
            values.append(eff.A_star[0, 0, 0, 0])
        assert values[0] > values[1] > values[2]

    def test_c_star_positive_definite(self):
        mesh = build_cell_mesh(CellMeshSpec(3, 4, Hole("box", (0, 0.5, 0.5), (0.2, 0.2, 0.2))))
        C = isotropic_tensor(LAM, MU, 3)
        eff = assemble_effective_tensors(solve_static_correctors(mesh, C))
        assert np.linalg.eigvalsh(eff.mandel(eff.c_star)).min() > 0.0
        assert np.linalg.eigvalsh(eff.mandel(eff.a_star)).min() > 0.0

    def test_rho_bar_and_normalization(self):
        hole = Hole("box", (0.0, 0.5), (0.125, 0.125))
        mesh = build_cell_mesh(CellMeshSpec(2, 8, hole))
        C = isotropic_tensor(LAM, MU, 2)
        correctors = solve_static_correctors(mesh, C)
        eff_norm = assemble_effective_tensors(correctors, density_field=2.0)
        eff_raw = assemble_effective_tensors(
            correctors, density_field=2.0, normalization="unnormalized"
        )
        assert eff_norm.rho_bar == pytest.approx(2.0 * 0.9375, rel=1e-13)
        assert np.allclose(eff_norm.a_star * eff_norm.cell_volume, eff_raw.a_star)
        assert np.allclose(eff_norm.A_star, eff_raw.A_star)  # A* never normalized
        a_u, _, c_u = eff_norm.plate_unnormalized()
        assert np.allclose(a_u, eff_raw.a_star) and np.allclose(c_u, eff_raw.c_star)

    def test_missing_corrector_rejected(self):
        mesh = build_cell_mesh(CellMeshSpec(2, 4))
        C = isotropic_tensor(LAM, MU, 2)
        correctors = solve_static_correctors(mesh, C)
        correctors.chi_B.clear()
        with pytest.raises(ValueError):
            assemble_effective_tensors(correctors)
