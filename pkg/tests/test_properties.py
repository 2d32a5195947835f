"""Property-based checks with hypothesis."""
import math
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, example, given, settings
from hypothesis import strategies as st

from conftest import grid_2d, props
from vagdfn.darcy import BoundaryConditions, solve_pressure
from vagdfn.krylov import SolverConfig, exact_dot
from vagdfn.mesh import build_hex_mesh_3d, build_single_fracture_mesh_2d
from vagdfn.parallel import build_exchange, build_overlap, partition_cells
from vagdfn.transport import FluxField, TransportProblem, build_control_volumes, run, step_schedule
from vagdfn.vag import assemble_transmissibilities
from vagdfn.wells import well_index

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@FAST
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=60))
def test_exact_dot_correctly_rounded(pairs):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    exact = sum((Fraction(a) * Fraction(b) for a, b in zip(x, y)), Fraction(0))
    assert exact_dot(x, y) == float(exact)


@FAST
@given(st.floats(1e-3, 10.0), st.floats(1e-3, 1.0))
def test_schedule_hits_end(span, dt):
    steps = step_schedule(0.0, span, dt)
    assert len(steps) == max(1, math.ceil(span / dt - 1e-12))
    assert abs(math.fsum(steps) - span) <= 4 * np.finfo(float).eps * span
    assert np.all(steps > 0) and np.all(steps <= dt * (1 + 1e-12))
    assert steps[-1] >= min(span, 1e-3 * dt) * (1 - 1e-12)


@FAST
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 12))
def test_partition_ownership_total(nx, ny, n_parts):
    m = grid_2d(nx, ny, fracture_row=ny // 2 if ny > 1 else None)
    n_parts = min(n_parts, m.n_cells)
    p = partition_cells(m, n_parts)
    assert set(p.cell_part.tolist()) == set(range(n_parts))
    ov = build_overlap(m, p)
    plan = build_exchange(m, ov)
    n_red = m.n_nodes + m.n_fracture_faces
    owned = np.zeros(n_red, int)
    for part, route in zip(ov.parts, plan.routes):
        g = np.concatenate([part.sub.nodes, m.n_nodes + part.sub.fracture_faces])
        owned[g[route.own_pos]] += 1
    assert np.all(owned == 1)


@FAST
@given(st.sampled_from([4, 8, 12]), st.floats(0.05, 0.7), st.floats(-3, 3), st.floats(-3, 3), st.floats(-5, 5))
def test_affine_exactness_random(n, tan, gx, gy, c0):
    # normal matrix fluxes cancel across the fracture and the tangential field is divergence free
    m = build_single_fracture_mesh_2d(n, tan)
    mp, fp = props(m, 1.0, 1.0 / 0.01, 0.01)
    t = assemble_transmissibilities(m, mp, fp)
    g = np.array([gx, gy])
    bc = BoundaryConditions.from_function(m, m.boundary_nodes, lambda x: c0 + x @ g)
    u = solve_pressure(t, bc, SolverConfig("direct")).u
    pos = np.concatenate([m.nodes, m.face_centers[m.fracture_faces], m.cell_centers])
    assert np.max(np.abs(u - (c0 + pos @ g))) < 1e-10 * (1 + abs(c0) + np.abs(g).sum())


@FAST
@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0), st.floats(1e-4, 1.0), st.floats(1e-3, 1e3),
       st.floats(1e-3, 0.9), st.floats(0.1, 10.0))
def test_well_index_linear(dx, dz, d_f, lam, frac, scale):
    from vagdfn.wells import equivalent_radius
    r_w = frac * equivalent_radius(dx, dz, d_f)
    a = well_index(dx, dz, d_f, lam, r_w)
    assert a > 0
    assert math.isclose(well_index(dx, dz, d_f, lam * scale, r_w), scale * a, rel_tol=1e-13)


_HEX = {}


def _hex_setup():
    if not _HEX:
        m = build_hex_mesh_3d(4, [("x", 0.5), ("z", 0.5)], 1.3)
        mp, fp = props(m)
        t = assemble_transmissibilities(m, mp, fp)
        _HEX["v"] = (m, mp, fp, t)
    return _HEX["v"]


# subnormal data has too few significant bits for a 1e-12 relative mass audit
_conc = st.floats(0.0, 1.0, allow_subnormal=False)


@settings(max_examples=15, deadline=None)
@given(_conc, _conc, _conc, st.floats(0.2, 1.0))
@example(0.0, 0.0, 1.0, 1 / 3)  # T / dt lands a few ulps above an integer
def test_max_principle_random_data(c_in, c_out, c_init, safety):
    m, mp, fp, t = _hex_setup()
    z = m.nodes[:, 2]
    bnd = m.boundary_nodes
    sel = bnd[(z[bnd] == 0.0) | (z[bnd] == 1.0)]
    bc = BoundaryConditions(sel, np.where(z[sel] == 0.0, 1.0, 0.0))
    u = solve_pressure(t, bc, SolverConfig("direct")).u
    dmask = bc.mask(m.n_nodes)
    vol = build_control_volumes(m, mp, fp, dmask)
    prob = TransportProblem(FluxField.from_pressure(t, u, dmask), vol, m.nodes,
                            lambda s, x: np.where(x[:, 2] == 0.0, c_in, c_out), None, False)
    res = run(prob, 0.2, c0=np.full(t.layout.size, c_init), cfl_safety=safety)
    lo, hi = min(c_in, c_out, c_init), max(c_in, c_out, c_init)
    chk = prob.flux.checked()
    assert res.final[chk].min() >= lo - 1e-12 and res.final[chk].max() <= hi + 1e-12
    assert res.stats.max_mass_defect < 1e-12
