import numpy as np
import pytest
import scipy.sparse as sp

from conftest import grid_2d, props
from vagdfn._csr import Csr
from vagdfn.darcy import (BoundaryConditions, SourceTerms, assemble_darcy, back_substitute, condense,
                          schur_eliminate, solve, solve_pressure)
from vagdfn.dofs import DofLayout
from vagdfn.errors import InvalidParameterError, SingularSystemError
from vagdfn.krylov import SolverConfig
from vagdfn.mesh import build_hex_mesh_3d, build_single_fracture_mesh_2d
from vagdfn.vag import CellTransmissibilities, FaceTransmissibilities, Transmissibilities, assemble_transmissibilities

DIRECT = SolverConfig("direct")


def two_cell_chain():
    """Nodes 0 - 1 - 2, cells {0, 1} and {1, 2}, identity local blocks."""
    lay = DofLayout(3, 0, 2)
    dofs = Csr.from_lists([[0, 1], [1, 2]])
    cells = CellTransmissibilities(np.array([3, 4]), dofs, np.array([0, 4, 8]), np.tile(np.eye(2).ravel(), 2))
    faces = FaceTransmissibilities(np.zeros(0, np.int64), Csr.from_lists([]), np.zeros(1, np.int64), np.zeros(0))
    return Transmissibilities(lay, cells, faces), BoundaryConditions([0, 2], [1.0, 0.0])


def test_two_cell_hand_solution():
    t, bc = two_cell_chain()
    sysm = assemble_darcy(t, bc)
    u = sysm.solve_dense()
    assert u[1] == pytest.approx(0.5, abs=1e-15)
    # cell values are the means of their two nodes
    np.testing.assert_allclose(u[3:], [0.75, 0.25], atol=1e-15)


def test_two_cell_schur_matches_full():
    t, bc = two_cell_chain()
    full = assemble_darcy(t, bc).solve_dense()
    sch = schur_eliminate(assemble_darcy(t, bc))
    red = np.linalg.solve(sch.matrix.toarray(), sch.rhs)
    np.testing.assert_allclose(back_substitute(sch, red), full, atol=1e-13)
    cond = condense(t, bc)
    np.testing.assert_allclose(back_substitute(cond, np.linalg.solve(cond.matrix.toarray(), cond.rhs)), full,
                               atol=1e-13)


def _affine(mesh, perm_f=20.0, grad=(-1.0, 0.0, 0.0)):
    mp, fp = props(mesh, 1.0, perm_f, 0.01)
    t = assemble_transmissibilities(mesh, mp, fp)
    g = np.asarray(grad[: mesh.dim])
    bc = BoundaryConditions.from_function(mesh, mesh.boundary_nodes, lambda x: 1.0 + x @ g)
    pos = np.concatenate([mesh.nodes, mesh.face_centers[mesh.fracture_faces], mesh.cell_centers])
    return t, bc, 1.0 + pos @ g


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_affine_exactness_single_fracture(method):
    m = build_single_fracture_mesh_2d(16, 0.5)
    t, bc, exact = _affine(m)
    sol = solve_pressure(t, bc, SolverConfig(method, "jacobi", 1e-13))
    assert np.max(np.abs(sol.u - exact)) < 1e-11
    # cell values alone, as recovered by back substitution
    _, _, cells = t.layout.split(sol.u)
    np.testing.assert_allclose(cells, 1.0 - m.cell_centers[:, 0], atol=1e-11)


def test_affine_exactness_hex_with_fracture_parallel_to_gradient():
    m = build_hex_mesh_3d(4, [("y", 0.5)], 1.5)
    t, bc, exact = _affine(m, grad=(-1.0, 0.0, 0.0))
    sol = solve_pressure(t, bc, DIRECT)
    assert np.max(np.abs(sol.u - exact)) < 1e-11


def test_constant_boundary_gives_constant(single20):
    mp, fp = props(single20)
    t = assemble_transmissibilities(single20, mp, fp)
    bc = BoundaryConditions(single20.boundary_nodes, 2.5)
    u = solve_pressure(t, bc, DIRECT).u
    np.testing.assert_allclose(u, 2.5, atol=1e-13)


def test_no_dirichlet_no_well_is_singular(single20):
    mp, fp = props(single20)
    t = assemble_transmissibilities(single20, mp, fp)
    with pytest.raises(SingularSystemError):
        assemble_darcy(t, BoundaryConditions([], []))
    with pytest.raises(SingularSystemError):
        solve_pressure(t, BoundaryConditions([], []), DIRECT)


def test_decoupled_cells_keep_node_blocks():
    # with no cell coupling the reduced matrix equals the node/face block
    t, bc = two_cell_chain()
    sysm = assemble_darcy(t, bc)
    a = sysm.matrix.tolil()
    a[3:, :3] = 0.0
    a[:3, 3:] = 0.0
    from vagdfn.darcy import BlockSystem
    alt = BlockSystem(sysm.layout, a.tocsr(), sysm.rhs, sysm.dirichlet)
    sch = schur_eliminate(alt)
    np.testing.assert_array_equal(sch.matrix.toarray(), alt.block("v", "v").toarray())


def test_zero_cell_diagonal_rejected():
    t, bc = two_cell_chain()
    sysm = assemble_darcy(t, bc)
    a = sysm.matrix.tolil()
    a[4, 4] = 0.0
    from vagdfn.darcy import BlockSystem
    with pytest.raises(SingularSystemError):
        schur_eliminate(BlockSystem(sysm.layout, a.tocsr(), sysm.rhs, sysm.dirichlet))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_block_system_schur_positive(seed):
    rng = np.random.default_rng(seed)
    n_red, n_c = 12, 20
    d = rng.uniform(1.0, 5.0, n_c)
    b = rng.normal(size=(n_red, n_c))
    m = rng.normal(size=(n_red, n_red))
    a = np.block([[b @ np.diag(1 / d) @ b.T + m @ m.T + 1e-3 * np.eye(n_red), b], [b.T, np.diag(d)]])
    from vagdfn.darcy import BlockSystem
    sysm = BlockSystem(DofLayout(n_red, 0, n_c), sp.csr_matrix(a), rng.normal(size=n_red + n_c), np.zeros(n_red, bool))
    sch = schur_eliminate(sysm)
    assert np.linalg.eigvalsh(sch.matrix.toarray()).min() > 0.0
    x = np.linalg.solve(sch.matrix.toarray(), sch.rhs)
    np.testing.assert_allclose(back_substitute(sch, x), sysm.solve_dense(), atol=1e-10)


@pytest.mark.parametrize("mesh_fn", [lambda: build_single_fracture_mesh_2d(12, 0.5),
                                     lambda: build_hex_mesh_3d(4, [("x", 0.5), ("z", 0.5)], 1.2)])
def test_condense_matches_sparse_elimination(mesh_fn):
    m = mesh_fn()
    t, bc, _ = _affine(m)
    a = schur_eliminate(assemble_darcy(t, bc))
    b = condense(t, bc)
    assert abs(a.matrix - b.matrix).max() < 1e-10 * abs(a.matrix).max()
    np.testing.assert_allclose(b.rhs, a.rhs, atol=1e-10 * np.abs(a.rhs).max())


def test_source_terms_shift_diagonal(single20):
    mp, fp = props(single20)
    t = assemble_transmissibilities(single20, mp, fp)
    bc = BoundaryConditions(single20.boundary_nodes, 0.0)
    src = SourceTerms(np.array([3]), np.array([2.0]), np.array([4.0]))
    base = condense(t, bc).matrix
    wel = condense(t, bc, src)
    r = t.layout.fracture_face(3)
    assert wel.matrix[r, r] - base[r, r] == pytest.approx(2.0, rel=1e-14)
    assert wel.rhs[r] == pytest.approx(4.0, rel=1e-14)
    with pytest.raises(InvalidParameterError):
        condense(t, bc, SourceTerms(np.array([10 ** 6]), np.array([1.0]), np.array([0.0])))


def test_boundary_conditions_validation(single20):
    with pytest.raises(InvalidParameterError):
        BoundaryConditions([1, 1], [0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        BoundaryConditions([1], [np.nan])
    interior = np.flatnonzero(~single20.is_boundary_node)[:1]
    with pytest.raises(InvalidParameterError):
        BoundaryConditions.from_function(single20, interior, lambda x: x[:, 0])


def test_solve_reports_iterations(single20):
    t, bc, _ = _affine(single20)
    res = solve(condense(t, bc), SolverConfig("cg", "ilu0", 1e-10))
    assert res.iterations > 0 and res.residual <= 1e-10
