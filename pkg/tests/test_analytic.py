import csv
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vagdfn.analytic import (FourFractureCase, SingleFractureCase, convergence_study, exact_four_stationary,
                             exact_single, l1_error, observed_orders, relative_l1, write_convergence_csv)
from vagdfn.errors import InvalidParameterError
from vagdfn.mesh import build_single_fracture_mesh_2d


def test_single_fracture_value():
    case = SingleFractureCase(0.5, 20.0, 0.01)
    assert case.k == pytest.approx(16.0, rel=1e-15)
    assert case.beta == pytest.approx(math.sqrt(5) * 20, rel=1e-15)
    assert case.beta / (case.k - 1) == pytest.approx(2.98142, abs=1e-5)
    assert float(case.c_fracture(0.6, 0.5)) == pytest.approx(0.74220, abs=5e-6)
    assert float(case.c_fracture(0.6, 0.5)) == pytest.approx(math.exp(-0.1 * case.beta / 15.0), rel=1e-15)


def test_single_fracture_front_and_initial_state():
    case = SingleFractureCase()
    rng = np.random.default_rng(0)
    x, y = rng.random(200), rng.random(200)
    t = x + rng.random(200) * 0.3
    np.testing.assert_array_equal(case.c_matrix(x, y, t), 1.0)
    cm, cf = exact_single(x, y, 0.0, case)
    np.testing.assert_array_equal(cm[x > 0], 0.0)
    np.testing.assert_array_equal(cf[x > 0], 0.0)


def test_single_fracture_transport_equation():
    # inside the fan x/k < t < x: k c_t + c_x ... reduces to d/dt along x fixed: c_t = beta/(k-1) c
    case = SingleFractureCase()
    x, t, h = 0.6, 0.3, 1e-6
    ct = (case.c_fracture(x, t + h) - case.c_fracture(x, t - h)) / (2 * h)
    assert float(ct) == pytest.approx(case.beta / (case.k - 1) * float(case.c_fracture(x, t)), rel=1e-8)


def test_single_fracture_matrix_uses_fracture_value_below_line():
    case = SingleFractureCase()
    # a point below the fracture receives the value carried from the fracture at the same height
    x, t = 0.9, 0.5
    y = 0.3
    xi = (4 * y - 1) / (4 * case.tan_theta)
    assert float(case.c_matrix(x, y, t)) == pytest.approx(float(case.c_fracture(xi, t + xi - x)), rel=1e-15)


@pytest.mark.parametrize("kw", [dict(tan_theta=0.0), dict(tan_theta=0.8), dict(width=0.0),
                                dict(perm_fracture=1.0)])
def test_single_case_validation(kw):
    with pytest.raises(InvalidParameterError):
        SingleFractureCase(**kw)


@pytest.fixture(scope="module")
def four():
    return FourFractureCase()


def test_four_inlet_values(four):
    assert float(four.c_f1(0.0)) == 1.0
    assert float(four.c_f4(1.0)) == 1.0


def test_four_intersection_balance(four):
    assert abs(four.intersection_balance()) < 1e-14


def test_four_continuity(four):
    x0, y0 = four.x0y0
    assert float(four.c_f2(x0)) == pytest.approx(four.c0, abs=1e-14)
    assert float(four.c_f3(y0)) == pytest.approx(four.c0, abs=1e-14)


def test_four_fracture2_ode(four):
    # c' = a (c_m - c) with the matrix above fed by fracture 4 at the same height
    a, b = four.beta1 / four.k1, four.beta2 / four.k2
    x0, _ = four.x0y0
    sol = solve_ivp(lambda x, c: a * (four.c_f4(four.line1(x)) - c), (x0, 1.0), [four.c0],
                    rtol=1e-12, atol=1e-14, dense_output=True)
    xs = np.linspace(x0, 1.0, 25)
    np.testing.assert_allclose(four.c_f2(xs), sol.sol(xs)[0], rtol=1e-9)
    assert b > 0


def test_four_fracture3_ode(four):
    # flowing downwards: -c' = b (c_m - c), c_m fed by fracture 1 along the matrix streamline
    a, b = four.beta1 / four.k1, four.beta2 / four.k2
    _, y0 = four.x0y0
    cm = lambda y: np.exp(-a * (y - 0.25) / four.tan_theta1)
    sol = solve_ivp(lambda y, c: -b * (cm(y) - c), (y0, 0.25), [four.c0], rtol=1e-12, atol=1e-14,
                    dense_output=True)
    ys = np.linspace(0.25, y0, 25)
    np.testing.assert_allclose(four.c_f3(ys), sol.sol(ys)[0], rtol=1e-9)


def test_four_matrix_regions(four):
    x0, y0 = four.x0y0
    # upper left region receives no tracer
    assert float(exact_four_stationary(0.05, 0.95, four)) == 0.0
    # upper right is fed horizontally by fracture 4
    assert float(four.c_matrix(0.95, 0.9)) == pytest.approx(float(four.c_f4(0.9)), rel=1e-15)
    # lower left is fed by fracture 1 along the flow
    y = 0.4
    assert float(four.c_matrix(0.5, y)) == pytest.approx(float(four.c_f1((y - 0.25) / four.tan_theta1)),
                                                         rel=1e-15)


def test_four_fracture_points(four):
    x0, y0 = four.x0y0
    pts = np.array([[0.2, four.line1(0.2)], [0.9, four.line1(0.9)], [four.line2(0.9), 0.9],
                    [four.line2(0.3), 0.3], [x0, y0]])
    want = [four.c_f1(0.2), four.c_f2(0.9), four.c_f4(0.9), four.c_f3(0.3), four.c0]
    np.testing.assert_allclose(four.c_fracture_at(pts), np.array(want, float), rtol=1e-15)


def test_relative_l1_basic():
    e = np.ones(10)
    assert relative_l1(e, e, np.arange(1.0, 11.0)) == 0.0
    assert relative_l1(e + 0.03, e, np.arange(1.0, 11.0)) == pytest.approx(0.03, rel=1e-13)
    with pytest.raises(InvalidParameterError):
        relative_l1(e, np.zeros(10), e)


def test_l1_error_offset():
    m = build_single_fracture_mesh_2d(8, 0.5)
    c = np.full(m.n_nodes + m.n_fracture_faces + m.n_cells, 1.2)
    em, ef = l1_error(c, m, np.ones(m.n_cells), np.ones(m.n_fracture_faces), 0.01)
    assert em == pytest.approx(0.2, rel=1e-13) and ef == pytest.approx(0.2, rel=1e-13)


def _injected_single(n):
    """Exact values averaged from the vertices of each cell / face: the pure interpolation error."""
    case, t = SingleFractureCase(), 0.5
    m = build_single_fracture_mesh_2d(n, 0.5)
    nodal = case.evaluate(m.nodes, t)
    cn, fn = m.cell_nodes, m.face_nodes.take(m.fracture_faces)
    cells = np.bincount(cn.row_ids, weights=nodal[cn.idx]) / cn.counts
    faces = np.bincount(fn.row_ids, weights=nodal[fn.idx]) / fn.counts
    c = np.concatenate([np.zeros(m.n_nodes), faces, cells])
    xf = m.face_centers[m.fracture_faces]
    return l1_error(c, m, case.c_matrix(*m.cell_centers.T, t), case.c_fracture(xf[:, 0], t), 0.01)


def test_convergence_study_interpolation_control(tmp_path):
    rows = convergence_study(_injected_single, [48, 96, 192])
    assert [r.n_x for r in rows] == [48, 96, 192]
    assert math.isnan(rows[0].order_matrix)
    # asymptotically first order in the matrix, second order along the smooth fracture profile
    for r in rows[1:]:
        assert r.order_matrix >= 0.95
        assert r.order_fracture >= 1.9
    write_convergence_csv(tmp_path / "c.csv", rows)
    with open(tmp_path / "c.csv", newline="") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["n_x", "err_matrix", "err_fracture", "order_matrix", "order_fracture"]
    assert table[1][3] == "" and float(table[2][1]) == rows[1].err_matrix


@pytest.mark.parametrize("levels", [[100], [100, 200], [200, 100, 400]])
def test_convergence_levels_validation(levels):
    with pytest.raises(InvalidParameterError):
        convergence_study(lambda n: (1.0, 1.0), levels)


def test_observed_orders():
    o = observed_orders([10, 20, 40], [1.0, 0.5, 0.125])
    assert math.isnan(o[0]) and o[1] == pytest.approx(1.0) and o[2] == pytest.approx(2.0)
