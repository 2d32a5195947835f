import numpy as np
import pytest

from vagdfn.mesh import Mesh, build_hex_mesh_3d, build_single_fracture_mesh_2d
from vagdfn.properties import FractureProperties, MatrixProperties


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", help="skip the long acceptance runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        mark = pytest.mark.skip(reason="--skip-slow given")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(mark)


def grid_2d(nx, ny=None, fracture_row=None, length=1.0):
    """Uniform quad grid on [0, length]^2, optionally with a horizontal fracture row."""
    ny = nx if ny is None else ny
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, length, ny + 1)
    nodes = np.array([(x, y) for y in ys for x in xs])

    def nid(i, j):
        return j * (nx + 1) + i

    cells = [[nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)] for j in range(ny) for i in range(nx)]
    faces, frac = [], []
    for j in range(ny + 1):
        for i in range(nx):
            if fracture_row is not None and j == fracture_row:
                frac.append(len(faces))
            faces.append([nid(i, j), nid(i + 1, j)])
    for i in range(nx + 1):
        for j in range(ny):
            faces.append([nid(i, j), nid(i, j + 1)])
    return Mesh.build(2, nodes, cells, faces, frac, [1] * len(frac))


@pytest.fixture(scope="session")
def single20():
    return build_single_fracture_mesh_2d(20, 0.5)


@pytest.fixture(scope="session")
def hex4():
    return build_hex_mesh_3d(4, [("x", 0.5), ("y", 0.5), ("z", 0.5)], 1.0)


def props(mesh, perm_m=1.0, perm_f=20.0, width=0.01):
    return MatrixProperties.build(mesh, perm_m, 1.0), FractureProperties.build(mesh, width, perm_f, 1.0)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
