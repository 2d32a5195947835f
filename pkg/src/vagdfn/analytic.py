"""Closed-form reference solutions and relative L1 errors.

Two verification cases on the unit square with ``u = 1 - x``, unit matrix
permeability and unit porosities:

* one fracture from ``(0, 1/4)`` to ``(1, 1/4 + tan(theta))``, transient;
* four fractures made of two crossing segments, stationary.

Points lying exactly on a discontinuity take the value from the upwind side.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameterError
from .mesh import four_fracture_intersection

ON_LINE = 1e-12


@dataclass(frozen=True)
class SingleFractureCase:
    tan_theta: float = 0.5
    perm_fracture: float = 20.0
    width: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.tan_theta < 0.75:
            raise InvalidParameterError("tan_theta must lie in (0, 3/4)")
        if self.perm_fracture <= 0.0 or self.width <= 0.0:
            raise InvalidParameterError("fracture permeability and width must be positive")
        if not self.k > 1.0:
            raise InvalidParameterError(f"the fracture must be faster than the matrix (k = {self.k} <= 1)")

    @property
    def theta(self) -> float:
        return math.atan(self.tan_theta)

    @property
    def beta(self) -> float:
        return math.sin(self.theta) / self.width

    @property
    def k(self) -> float:
        return self.perm_fracture * math.cos(self.theta) ** 2

    def fracture_height(self, x):
        return 0.25 + np.asarray(x, float) * self.tan_theta

    # -- evaluators -----------------------------------------------------
    def c_fracture(self, x, t):
        x = np.asarray(x, float)
        t = np.broadcast_to(np.asarray(t, float), x.shape)
        k, b = self.k, self.beta
        mid = np.exp(-b / (k - 1.0) * (x - t))
        return np.where(t >= x, 1.0, np.where(t >= x / k, mid, 0.0))

    def c_matrix(self, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        t = np.broadcast_to(np.asarray(t, float), x.shape)
        front = np.where(t >= x, 1.0, 0.0)
        above = y > self.fracture_height(x)
        xi = (4.0 * y - 1.0) / (4.0 * self.tan_theta)
        fed = np.where(t >= x - xi, self.c_fracture(np.clip(xi, 0.0, 1.0), t + xi - x), 0.0)
        return np.where(above | (y <= 0.25), front, fed)

    def evaluate(self, points, t, on_fracture_tol: float = ON_LINE):
        """Values at points; points on the fracture line take the fracture value."""
        p = np.atleast_2d(np.asarray(points, float))
        x, y = p[:, 0], p[:, 1]
        on = np.abs(y - self.fracture_height(x)) <= on_fracture_tol
        return np.where(on, self.c_fracture(x, t), self.c_matrix(x, y, t))


def exact_single(x, y, t, case: SingleFractureCase):
    """Matrix concentration at ``(x, y)`` and fracture concentration at abscissa ``x``."""
    return case.c_matrix(x, y, t), case.c_fracture(x, t)


@dataclass(frozen=True)
class FourFractureCase:
    tan_theta1: float = 5.0 / 8.0
    tan_theta2: float = 0.25
    perm_f1: float = 200.0
    perm_f3: float = 400.0
    width_f1: float = 0.01
    width_f3: float = 0.01

    def __post_init__(self):
        for t in (self.tan_theta1, self.tan_theta2):
            if not 0.0 < t < 0.75:
                raise InvalidParameterError("fracture angles must have tan in (0, 3/4)")
        if min(self.perm_f1, self.perm_f3, self.width_f1, self.width_f3) <= 0.0:
            raise InvalidParameterError("fracture permeabilities and widths must be positive")
        if not (self.k1 > 1.0 and self.k2 * self.tan_theta2 > 1.0):
            raise InvalidParameterError("fractures must be faster than the matrix")

    @property
    def theta1(self):
        return math.atan(self.tan_theta1)

    @property
    def theta2(self):
        return math.atan(self.tan_theta2)

    @property
    def beta1(self):
        return math.sin(self.theta1) / self.width_f1

    @property
    def k1(self):
        return self.perm_f1 * math.cos(self.theta1) ** 2

    @property
    def beta2(self):
        return math.cos(self.theta2) / self.width_f3

    @property
    def k2(self):
        return self.perm_f3 * math.cos(self.theta2) * math.sin(self.theta2)

    @property
    def r(self):
        return (self.perm_f3 * self.width_f3 * math.sin(self.theta2)
                / (self.perm_f1 * self.width_f1 * math.cos(self.theta1)))

    @property
    def r1(self):
        return self.beta1 / self.k1 + self.beta2 / self.k2 * self.tan_theta1

    @property
    def r2(self):
        return self.beta2 / self.k2 + self.beta1 / (self.k1 * self.tan_theta1)

    @property
    def x0y0(self):
        return four_fracture_intersection(self.tan_theta1, self.tan_theta2)

    @property
    def c0(self):
        x0, y0 = self.x0y0
        a, b = self.beta1 / self.k1, self.beta2 / self.k2
        return (math.exp(-a * x0) + self.r * math.exp(-b * (1.0 - y0))) / (self.r + 1.0)

    def intersection_balance(self) -> float:
        """Residual of the mixing relation at the crossing point."""
        x0, y0 = self.x0y0
        return (self.r + 1.0) * self.c0 - float(self.c_f1(x0)) - self.r * float(self.c_f4(y0))

    # -- fracture evaluators (abscissa x for 1, 2; ordinate y for 3, 4) ---
    def c_f1(self, x):
        return np.exp(-self.beta1 / self.k1 * np.asarray(x, float))

    def c_f4(self, y):
        return np.exp(-self.beta2 / self.k2 * (1.0 - np.asarray(y, float)))

    def c_f2(self, x):
        x = np.asarray(x, float)
        x0, _ = self.x0y0
        a, b = self.beta1 / self.k1, self.beta2 / self.k2
        r1 = self.r1
        return np.exp(-a * x) * (self.c0 * math.exp(a * x0)
                                 + a / r1 * (np.exp(r1 * x - 0.75 * b) - math.exp(r1 * x0 - 0.75 * b)))

    def c_f3(self, y):
        y = np.asarray(y, float)
        _, y0 = self.x0y0
        a, b = self.beta1 / self.k1, self.beta2 / self.k2
        r2 = self.r2
        shift = a / (4.0 * self.tan_theta1)
        # the matrix feeding this branch carries exp(-a (y - 1/4) / tan(theta1)), hence the + shift
        lower = math.exp(-r2 / 4.0 + shift)
        upper = np.exp(-r2 * y + shift)
        inner = np.where(y < 0.25, lower, upper)
        return np.exp(b * y) * (self.c0 * math.exp(-b * y0) + b / r2 * (inner - math.exp(-r2 * y0 + shift)))

    # -- geometry ---------------------------------------------------------
    def line1(self, x):
        return 0.25 + np.asarray(x, float) * self.tan_theta1

    def line2(self, y):
        return 0.75 - np.asarray(y, float) * self.tan_theta2

    def c_matrix(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        _, y0 = self.x0y0
        upper = y > self.line1(x)
        left = x < self.line2(y)
        xi = (y - 0.25) / self.tan_theta1
        m2 = self.c_f4(y)
        m3 = np.where(y < 0.25, 0.0, self.c_f1(np.clip(xi, 0.0, None)))
        m4 = np.where(y < y0, self.c_f3(np.minimum(y, y0)), self.c_f2(np.clip(xi, 0.0, None)))
        return np.where(upper, np.where(left, 0.0, m2), np.where(left, m3, m4))

    def c_fracture_at(self, points):
        """Fracture concentration at points on the network (NaN elsewhere)."""
        p = np.atleast_2d(np.asarray(points, float))
        x, y = p[:, 0], p[:, 1]
        x0, y0 = self.x0y0
        out = np.full(len(p), np.nan)
        on1 = np.abs(y - self.line1(x)) <= ON_LINE
        on3 = np.abs(x - self.line2(y)) <= ON_LINE
        out = np.where(on1 & (x <= x0), self.c_f1(x), out)
        out = np.where(on1 & (x > x0), self.c_f2(x), out)
        out = np.where(on3 & (y >= y0), self.c_f4(y), out)
        out = np.where(on3 & (y < y0), self.c_f3(np.minimum(y, y0)), out)
        out = np.where(on1 & on3, self.c0, out)
        return out

    def evaluate(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        f = self.c_fracture_at(p)
        return np.where(np.isnan(f), self.c_matrix(p[:, 0], p[:, 1]), f)


def exact_four_stationary(x, y, case: FourFractureCase):
    """Stationary matrix concentration; fracture values via ``case.c_f1`` ... ``case.c_f4``."""
    return case.c_matrix(x, y)


# ---------------------------------------------------------------- errors
def relative_l1(values, exact, weights) -> float:
    values, exact, weights = (np.asarray(a, float) for a in (values, exact, weights))
    norm = math.fsum(np.abs(exact) * weights)
    if norm == 0.0:
        raise InvalidParameterError("exact solution has zero L1 norm")
    return math.fsum(np.abs(values - exact) * weights) / norm


def l1_error(c, mesh, exact_cells, exact_faces, width) -> tuple[float, float]:
    """Relative L1 errors in the matrix (cells) and the fractures (faces).

    ``exact_cells`` / ``exact_faces`` hold the reference values at the cell
    centres and fracture-face centres; face weights are ``width * area``.
    """
    n_v, n_f = mesh.n_nodes, mesh.n_fracture_faces
    c = np.asarray(c, float)
    err_m = relative_l1(c[n_v + n_f:], exact_cells, mesh.cell_volumes)
    err_f = relative_l1(c[n_v: n_v + n_f], exact_faces, np.asarray(width) * mesh.face_measures[mesh.fracture_faces])
    return err_m, err_f


# ------------------------------------------------------------ convergence
@dataclass(frozen=True)
class ConvergenceRow:
    n_x: int
    err_matrix: float
    err_fracture: float
    order_matrix: float
    order_fracture: float


def observed_orders(levels: Sequence[int], errors: Sequence[float]) -> list[float]:
    """``log(e_i / e_{i+1}) / log(n_{i+1} / n_i)``; NaN for the first level."""
    out = [math.nan]
    for i in range(1, len(levels)):
        a, b = errors[i - 1], errors[i]
        if a > 0.0 and b > 0.0:
            out.append(math.log(a / b) / math.log(levels[i] / levels[i - 1]))
        else:
            out.append(math.nan)
    return out


def convergence_study(run_level: Callable[[int], tuple[float, float]], levels: Sequence[int]) -> list[ConvergenceRow]:
    """Run ``run_level(n_x) -> (err_matrix, err_fracture)`` on increasing levels."""
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise InvalidParameterError("a convergence study needs at least 3 levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidParameterError("levels must be strictly increasing")
    errs = [run_level(n) for n in levels]
    om = observed_orders(levels, [e[0] for e in errs])
    of = observed_orders(levels, [e[1] for e in errs])
    return [ConvergenceRow(n, e[0], e[1], a, b) for n, e, a, b in zip(levels, errs, om, of)]


def write_convergence_csv(path, rows: Sequence[ConvergenceRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n_x", "err_matrix", "err_fracture", "order_matrix", "order_fracture"])
        for r in rows:
            w.writerow([r.n_x, repr(r.err_matrix), repr(r.err_fracture),
                        "" if math.isnan(r.order_matrix) else repr(r.order_matrix),
                        "" if math.isnan(r.order_fracture) else repr(r.order_fracture)])
