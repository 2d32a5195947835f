import math

import numpy as np
import pytest

from conftest import grid_2d, props
from vagdfn.darcy import BoundaryConditions
from vagdfn.dofs import DofLayout
from vagdfn.errors import CFLViolationError, ConfigurationError, InvalidParameterError, NoFlowError
from vagdfn.properties import FractureProperties, MatrixProperties
from vagdfn.transport import (ControlVolumes, FluxField, TransportProblem, WellTerms, build_control_volumes,
                              cfl_timestep, compute_porous_volumes, compute_volume_fractions, run, step,
                              step_schedule, upwind_fluxes)


def chain():
    """Dirichlet node 0 -> cell (dof 2) -> node 1, unit inflow rate 2."""
    lay = DofLayout(2, 0, 1)
    flux = FluxField(lay, np.array([2, 2]), np.array([0, 1]), np.array([-2.0, 2.0]), np.array([True, False]))
    vol = ControlVolumes(lay, np.array([0.0, 1.0, 4.0]), np.array([True, False]), np.zeros(0))
    return TransportProblem(flux, vol, np.zeros((2, 1)), lambda t, x: np.ones(len(x)))


def test_hand_update_two_steps():
    p = chain()
    c = p.initial_state()
    assert c.tolist() == [1.0, 0.0, 0.0]
    c = step(p, c, 1.0, 1.0)
    np.testing.assert_allclose(c, [1.0, 0.0, 0.5], rtol=0, atol=0)
    c = step(p, c, 1.0, 2.0)
    np.testing.assert_allclose(c, [1.0, 1.0, 0.75], rtol=0, atol=0)


def test_cfl_of_chain():
    p = chain()
    assert p.cfl() == 2.0
    assert cfl_timestep(p.flux, p.volumes) == 2.0
    with pytest.raises(CFLViolationError):
        step(p, p.initial_state(), 2.5, 2.5)


def test_single_cell_cfl():
    lay = DofLayout(1, 0, 1)
    flux = FluxField(lay, np.array([1]), np.array([0]), np.array([4.0]), np.array([True]))
    vol = ControlVolumes(lay, np.array([0.0, 2.0]), np.array([True]), np.zeros(0))
    assert cfl_timestep(flux, vol) == 0.5


def test_no_flow_raises():
    lay = DofLayout(1, 0, 1)
    flux = FluxField(lay, np.array([1]), np.array([0]), np.array([0.0]), np.array([True]))
    vol = ControlVolumes(lay, np.array([0.0, 2.0]), np.array([True]), np.zeros(0))
    with pytest.raises(NoFlowError):
        cfl_timestep(flux, vol)


def test_zero_flow_state_unchanged():
    lay = DofLayout(2, 0, 1)
    flux = FluxField(lay, np.array([2, 2]), np.array([0, 1]), np.zeros(2), np.array([True, False]))
    vol = ControlVolumes(lay, np.array([0.0, 1.0, 4.0]), np.array([True, False]), np.zeros(0))
    p = TransportProblem(flux, vol, np.zeros((2, 1)), lambda t, x: np.full(len(x), 0.3))
    c = np.array([0.3, 0.7, 0.1])
    np.testing.assert_array_equal(step(p, c, 10.0, 10.0, dt_cfl=math.inf), c)


def test_well_production_enters_cfl():
    p = chain()
    w = WellTerms(np.array([0.0, 0.0, 6.0]), np.zeros(3))
    assert cfl_timestep(p.flux, p.volumes, w) == pytest.approx(0.5)


@pytest.mark.parametrize("f", [3.0, -1.5, 0.0])
def test_upwind_definition(f):
    lay = DofLayout(1, 0, 1)
    flux = FluxField(lay, np.array([1]), np.array([0]), np.array([f]), np.array([False]))
    c = np.array([0.2, 0.9])
    h = upwind_fluxes(flux, c)[0]
    assert h == (0.9 * f if f > 0 else 0.2 * f if f < 0 else 0.0)
    assert upwind_fluxes(flux, np.full(2, 0.4))[0] == pytest.approx(0.4 * f)


@pytest.mark.parametrize("factor", [2.5, 1.0, 3.0, 1.5, 4.0 + 1e-4])
def test_step_schedule(factor):
    dt = 0.1
    steps = step_schedule(0.0, factor * dt, dt)
    assert len(steps) == math.ceil(factor - 1e-12)
    assert math.fsum(steps) == pytest.approx(factor * dt, abs=1e-16)
    np.testing.assert_array_equal(steps[:-2], dt)
    assert np.all(steps <= dt * (1 + 1e-12))


def test_sliver_remainder_is_shared():
    dt = 0.1
    steps = step_schedule(0.0, (3.0 + 1e-9) * dt, dt)
    assert len(steps) == 4
    np.testing.assert_array_equal(steps[:2], dt)
    assert steps[2] == pytest.approx(0.5 * dt, rel=1e-8) and steps[3] == pytest.approx(0.5 * dt, rel=1e-8)
    assert math.fsum(steps) == pytest.approx(3.000000001 * dt, rel=1e-15)


def test_no_sliver_step_from_rounding():
    # 0.2 / dt evaluates to 640.0000000000013
    dt = 0.0003124999999999994
    steps = step_schedule(0.0, 0.2, dt)
    assert steps.min() > 0.4 * dt and steps.max() <= dt


def test_two_and_a_half_steps_exact_sizes():
    steps = step_schedule(0.0, 2.5, 1.0)
    assert steps.tolist() == [1.0, 1.0, 0.5]
    assert step_schedule(0.0, 1.0, 1.0).tolist() == [1.0]


def test_run_counts_steps_and_snapshots():
    p = chain()
    res = run(p, 5.0, snapshot_times=[0.0, 1.0], dt=2.0)
    assert res.times == [0.0, 1.0, 5.0]
    # [0, 1]: one short step; [1, 5]: two full steps
    assert res.stats.n_steps == 3
    with pytest.raises(InvalidParameterError):
        run(p, 1.0, snapshot_times=[2.0])
    with pytest.raises(CFLViolationError):
        run(p, 1.0, dt=3.0)


def _homog(nx=4, omega=0.1, dirichlet=None):
    m = grid_2d(nx)
    mp, fp = MatrixProperties.build(m, 1.0, 1.0), FractureProperties.build(m, 0.01, 1.0, 1.0)
    d = m.is_boundary_node if dirichlet is None else dirichlet
    return m, mp, fp, d


def test_fractions_symmetric_interior():
    m, mp, fp, d = _homog(4)
    fr = compute_volume_fractions(m, mp, fp, d, 0.1, 0.1)
    cn = m.cell_nodes
    # node (2, 2) is shared by the four central cells, each with 4 eligible nodes
    centre = 2 * 5 + 2
    alpha = fr.cell[cn.idx == centre]
    np.testing.assert_allclose(alpha, 0.1 / 4)
    corner_cell = 0
    assert np.count_nonzero(fr.cell[cn.ptr[0]:cn.ptr[1]]) == 1
    assert fr.cell[cn.ptr[corner_cell]:cn.ptr[corner_cell + 1]].max() == pytest.approx(0.1)


def test_fractions_only_most_permeable_donate():
    m = grid_2d(2)
    mp = MatrixProperties.build(m, np.array([1.0, 100.0, 1.0, 100.0]), 1.0)
    fp = FractureProperties.build(m, 0.01, 1.0, 1.0)
    fr = compute_volume_fractions(m, mp, fp, m.is_boundary_node, 0.1, 0.1)
    cn = m.cell_nodes
    donors = np.unique(cn.row_ids[fr.cell > 0])
    assert donors.tolist() == [1, 3]


def test_omega_zero_is_rejected():
    m, mp, fp, d = _homog(4)
    with pytest.raises(ConfigurationError):
        build_control_volumes(m, mp, fp, d, 0.0, 0.1)
    with pytest.raises(InvalidParameterError):
        build_control_volumes(m, mp, fp, d, 1.0, 0.1)


def test_all_dirichlet_zero_omega_gives_cell_volumes():
    m, mp, fp, _ = _homog(3)
    d = np.ones(m.n_nodes, dtype=bool)
    fr = compute_volume_fractions(m, mp, fp, d, 0.0, 0.0)
    cv = compute_porous_volumes(m, fr, mp, fp, d)
    np.testing.assert_array_equal(cv.phi[m.n_nodes:], m.cell_volumes)


def test_pore_volume_conserved(single20):
    mp, fp = props(single20)
    d = single20.is_boundary_node
    cv = build_control_volumes(single20, mp, fp, d)
    # Dirichlet nodes receive nothing, so redistribution keeps the total
    total = math.fsum(single20.cell_volumes) + math.fsum(fp.width * single20.face_measures[single20.fracture_faces])
    assert cv.total() == pytest.approx(total, rel=1e-14)
    assert np.all(cv.phi[cv.active] > 0)


def test_one_step_from_zero_respects_bounds():
    from vagdfn.config import SCHEMA, from_dict
    from vagdfn.scenarios import build_scenario, simulate, solve_flow
    cfg = from_dict({"schema": SCHEMA, "scenario": "single_fracture", "mesh": {"n_x": 16},
                     "solver": {"method": "direct"}})
    sc = build_scenario(cfg)
    res = simulate(sc, solve_flow(sc), max_steps=1)
    assert res.stats.n_steps == 1
    assert res.final.min() >= 0.0 and res.final.max() <= 1.0
    assert res.max_principle_violation() == 0.0
