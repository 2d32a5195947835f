import numpy as np
import pytest

from conftest import grid_2d, props
from vagdfn.dofs import DofLayout
from vagdfn.errors import GeometryError, InvalidPropertyError
from vagdfn.mesh import Mesh, build_hex_mesh_3d, build_single_fracture_mesh_2d
from vagdfn.properties import FractureProperties, MatrixProperties
from vagdfn.submesh import build_submesh
from vagdfn.vag import (assemble_cell_transmissibilities, assemble_face_transmissibilities,
                        assemble_transmissibilities, fracture_flux, matrix_flux)


def unit_cube(fracture_face=None):
    nodes = np.array([(x, y, z) for z in (0, 1) for y in (0, 1) for x in (0, 1)], float)
    faces = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]]
    frac = [] if fracture_face is None else [fracture_face]
    return Mesh.build(3, nodes, [list(range(8))], faces, frac, [1] * len(frac))


def test_submesh_unit_cube():
    s = build_submesh(unit_cube())
    assert len(s) == 24
    assert s.measure.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(s.measure > 0)


def test_submesh_square_cell():
    s = build_submesh(grid_2d(1))
    assert len(s) == 4
    assert s.measure.sum() == pytest.approx(1.0, abs=1e-15)


def test_submesh_fracture_edge_split():
    m = grid_2d(1, 2, fracture_row=1)
    s = build_submesh(m)
    assert np.bincount(s.cell).tolist() == [5, 5]
    np.testing.assert_allclose(s.cell_measures(), m.cell_volumes, atol=1e-15)


def test_submesh_degenerate_cell():
    # bow-tie cycle: one edge passes through the cell centre
    nodes = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float)
    with pytest.raises(GeometryError):
        m = Mesh.build(2, nodes, [[0, 1, 2, 3]], [[0, 1], [1, 2], [2, 3], [3, 0]])
        build_submesh(m)


@pytest.mark.parametrize("mesh_fn", [lambda: build_single_fracture_mesh_2d(8, 0.5),
                                     lambda: build_hex_mesh_3d(4, [("y", 0.5)], 1.2)])
def test_submesh_reproduces_affine_gradient(mesh_fn):
    m = mesh_fn()
    s = build_submesh(m)
    lay = DofLayout.of(m)
    g = np.arange(1, m.dim + 1, dtype=float)
    pos = np.concatenate([m.nodes, m.face_centers[m.fracture_faces], m.cell_centers])
    v = pos @ g
    grads = (s.gradient_operator @ v).reshape(len(s), m.dim)
    np.testing.assert_allclose(grads, np.broadcast_to(g, grads.shape), atol=1e-11)
    assert lay.size == len(v)


def _square():
    m = grid_2d(1)
    return m, MatrixProperties.build(m, 1.0, 1.0)


def test_cell_block_symmetric_psd_constant_kernel():
    m, mp = _square()
    ct = assemble_cell_transmissibilities(m, mp)
    dofs, a = ct.block(0)
    np.testing.assert_allclose(a, a.T, atol=1e-15)
    assert np.linalg.eigvalsh(a).min() > -1e-14
    v = np.ones(DofLayout.of(m).size)
    assert all(matrix_flux(0, d, v, type("T", (), {"cells": ct})) == 0.0 for d in dofs)


@pytest.mark.parametrize("lam", [0.5, 3.0, 1e4])
def test_cell_block_scales_with_permeability(lam, single20):
    ref = assemble_cell_transmissibilities(single20, MatrixProperties.build(single20, 1.0, 1.0))
    out = assemble_cell_transmissibilities(single20, MatrixProperties.build(single20, lam, 1.0))
    np.testing.assert_allclose(out.values, lam * ref.values, rtol=0, atol=1e-13 * lam * np.abs(ref.values).max())


def test_non_spd_matrix_permeability(single20):
    mp = MatrixProperties.build(single20, 1.0, 1.0)
    mp.permeability[3] = np.diag([1.0, -1.0])
    with pytest.raises(InvalidPropertyError):
        assemble_cell_transmissibilities(single20, mp)


@pytest.mark.parametrize("length,kappa", [(1.0, 0.2), (0.25, 1.0), (2.0, 5.0)])
def test_fracture_edge_hand_values(length, kappa):
    # 1D P1 on the two halves of the edge, midpoint being the face unknown
    m = grid_2d(1, 2, fracture_row=1, length=length)
    fp = FractureProperties.build(m, 0.5, 2 * kappa, 1.0)
    ft = assemble_face_transmissibilities(m, fp)
    _, a = ft.block(0)
    np.testing.assert_allclose(a, 2 * kappa / length * np.eye(2), rtol=1e-14, atol=1e-14)


def test_fracture_face_3d_symmetric_zero_row_sums():
    m = unit_cube(fracture_face=0)
    ft = assemble_face_transmissibilities(m, FractureProperties.build(m, 1.0, 1.0, 1.0))
    _, a = ft.block(0)
    np.testing.assert_allclose(a, a.T, atol=1e-15)
    assert np.linalg.eigvalsh(a).min() > -1e-14
    v = np.ones(DofLayout.of(m).size)
    np.testing.assert_allclose(ft.fluxes(v), 0.0, atol=1e-15)


def test_zero_width_rejected(single20):
    fp = FractureProperties(np.zeros(single20.n_fracture_faces),
                            np.ones((single20.n_fracture_faces, 1, 1)), np.ones(single20.n_fracture_faces))
    with pytest.raises(InvalidPropertyError):
        assemble_face_transmissibilities(single20, fp)


def test_affine_fluxes_single_fracture():
    m = build_single_fracture_mesh_2d(16, 0.5)
    mp, fp = props(m, 1.0, 1.0, 0.01)
    t = assemble_transmissibilities(m, mp, fp)
    pos = np.concatenate([m.nodes, m.face_centers[m.fracture_faces], m.cell_centers])
    v = 1.0 - pos[:, 0]
    # a_K^{nu nu'} = int grad(phi_nu) . grad(phi_nu'), so sum_nu F_{K,nu} x_nu equals -|K| grad(u)
    for k in (0, 37, 200):
        dofs, _ = t.cells.block(k)
        f = np.array([matrix_flux(k, d, v, t) for d in dofs])
        assert f.sum() == pytest.approx(0.0, abs=1e-13)
        np.testing.assert_allclose(f @ (pos[dofs] - m.cell_centers[k]), m.cell_volumes[k] * np.array([1.0, 0.0]),
                                   atol=1e-13)


def test_fracture_flux_linear_chain():
    m = grid_2d(4, 2, fracture_row=1)
    mp, fp = props(m, 1.0, 1.0, 1.0)
    t = assemble_transmissibilities(m, mp, fp)
    pos = np.concatenate([m.nodes, m.face_centers[m.fracture_faces], m.cell_centers])
    v = 2.0 * pos[:, 0]
    lay = t.layout
    for j in range(m.n_fracture_faces):
        nodes = m.face_nodes[m.fracture_faces[j]]
        left, right = nodes[np.argsort(m.nodes[nodes, 0])]
        # flux from the face centre towards each node: d_f * Lambda_f * |grad| = 2
        assert fracture_flux(j, right, v, t) == pytest.approx(-2.0, abs=1e-13)
        assert fracture_flux(j, left, v, t) == pytest.approx(2.0, abs=1e-13)
    assert lay.n_reduced == m.n_nodes + m.n_fracture_faces


def test_flux_index_errors(single20):
    mp, fp = props(single20)
    t = assemble_transmissibilities(single20, mp, fp)
    v = np.zeros(t.layout.size)
    with pytest.raises(IndexError):
        matrix_flux(0, single20.n_nodes - 1, v, t)
    with pytest.raises(IndexError):
        fracture_flux(0, 0, v, t)


def test_outflow_sign_when_centre_is_max(single20):
    mp, fp = props(single20)
    t = assemble_transmissibilities(single20, mp, fp)
    rng = np.random.default_rng(1)
    v = rng.random(t.layout.size)
    for k in range(0, single20.n_cells, 17):
        dofs, _ = t.cells.block(k)
        v[t.cells.centre[k]] = v[dofs].max() + 0.1
        assert sum(matrix_flux(k, d, v, t) for d in dofs) >= 0.0
