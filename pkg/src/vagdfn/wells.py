"""Vertical wells perforating fracture faces, with Peaceman well indices.

Each perforated face is treated as a box ``dx * d_f * dz``; the well index
relates the face rate to the pressure difference, ``q = WI (p_face - p_w)``,
with ``q > 0`` meaning production.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .darcy import SourceTerms
from .dofs import DofLayout
from .errors import ConfigurationError, GeometryError, InvalidParameterError
from .properties import FractureProperties
from .transport import WellTerms

PRESSURE, RATE = "pressure", "rate"


def equivalent_radius(dx: float, dz: float, d_f: float) -> float:
    """Peaceman equivalent radius ``r0`` of a fracture-face box."""
    c = 4.0 / 3.0 * (dx * dz / d_f + dx * d_f / dz + dz * d_f / dx)
    d = 0.5 * math.sqrt(dx * dx + d_f * d_f)
    return d * math.exp(-2.0 * math.pi * dz / c)


def well_index(dx: float, dz: float, d_f: float, perm_f: float, r_w: float) -> float:
    """Well index of a perforated fracture face.

    Raises
    ------
    InvalidParameterError
        If an argument is not positive.
    GeometryError
        If the well radius is not smaller than the equivalent radius.
    """
    args = {"dx": dx, "dz": dz, "d_f": d_f, "perm_f": perm_f, "r_w": r_w}
    for k, v in args.items():
        if not (v > 0.0 and math.isfinite(v)):
            raise InvalidParameterError(f"{k} must be positive and finite, got {v}")
    r0 = equivalent_radius(dx, dz, d_f)
    if r0 <= r_w:
        raise GeometryError(f"well radius {r_w} is not below the equivalent radius {r0}")
    return 2.0 * math.pi * dz * perm_f / math.log(r0 / r_w)


@dataclass(frozen=True)
class Well:
    """A vertical well on a set of fracture faces (fracture indices).

    ``rate`` is the total rate of a rate-controlled well (positive when
    producing); ``pressure`` the bottom-hole pressure of a pressure-controlled
    one.  Injected fluid carries ``injection_concentration``.
    """

    name: str
    kind: str
    faces: tuple[int, ...]
    dx: tuple[float, ...]
    dz: float
    radius: float
    pressure: float | None = None
    rate: float | None = None
    injection_concentration: float = 1.0

    def __post_init__(self):
        if self.kind not in (PRESSURE, RATE):
            raise InvalidParameterError(f"well kind must be {PRESSURE!r} or {RATE!r}")
        if self.kind == PRESSURE and self.pressure is None:
            raise InvalidParameterError(f"well {self.name}: pressure-controlled well needs a pressure")
        if self.kind == RATE and self.rate is None:
            raise InvalidParameterError(f"well {self.name}: rate-controlled well needs a rate")
        if len(self.faces) == 0:
            raise InvalidParameterError(f"well {self.name} has no perforation")
        if len(self.dx) not in (1, len(self.faces)):
            raise InvalidParameterError(f"well {self.name}: one dx per perforation expected")
        if not self.radius > 0.0:
            raise InvalidParameterError(f"well {self.name}: radius must be positive")

    def dx_array(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.dx, float), (len(self.faces),)).copy()

    def indices(self, fracture: FractureProperties) -> np.ndarray:
        """Well index of every perforation."""
        faces = np.asarray(self.faces, dtype=np.int64)
        if np.any(faces < 0) or np.any(faces >= len(fracture.width)):
            raise ConfigurationError(f"well {self.name} perforates a face that is not a fracture face")
        lam = fracture.magnitude()[faces]
        return np.array([well_index(dx, self.dz, w, k, self.radius)
                         for dx, w, k in zip(self.dx_array(), fracture.width[faces], lam)])


def perforations_from_face_ids(mesh, face_ids) -> tuple[int, ...]:
    """Fracture indices of mesh face ids; non-fracture faces are rejected."""
    idx = mesh.fracture_index[np.asarray(face_ids, dtype=np.int64)]
    if np.any(idx < 0):
        raise ConfigurationError("well perforation on a face that is not a fracture face")
    return tuple(int(i) for i in idx)


def apply_wells(wells, fracture: FractureProperties) -> SourceTerms:
    """Flow source terms of all wells (fracture-face diagonal and rhs)."""
    faces, diag, rhs = [], [], []
    for w in wells:
        wi = w.indices(fracture)
        faces.append(np.asarray(w.faces, dtype=np.int64))
        if w.kind == PRESSURE:
            diag.append(wi)
            rhs.append(wi * w.pressure)
        else:
            diag.append(np.zeros_like(wi))
            rhs.append(-w.rate * wi / math.fsum(wi))
    if not faces:
        return SourceTerms()
    return SourceTerms(np.concatenate(faces), np.concatenate(diag), np.concatenate(rhs))


def face_rates(well: Well, fracture: FractureProperties, u, layout: DofLayout) -> np.ndarray:
    """Rate of each perforation (positive when producing)."""
    wi = well.indices(fracture)
    if well.kind == RATE:
        return well.rate * wi / math.fsum(wi)
    p = np.asarray(u, float)[layout.fracture_face(np.asarray(well.faces, dtype=np.int64))]
    return wi * (p - well.pressure)


def transport_terms(wells, fracture: FractureProperties, u, layout: DofLayout) -> WellTerms:
    faces, q, cin = [], [], []
    for w in wells:
        r = face_rates(w, fracture, u, layout)
        faces.append(np.asarray(w.faces, dtype=np.int64))
        q.append(r)
        cin.append(np.full(len(r), w.injection_concentration))
    if not faces:
        return WellTerms.none(layout)
    return WellTerms.from_rates(layout, np.concatenate(faces), np.concatenate(q), np.concatenate(cin))


@dataclass
class WellRecorder:
    """Collects fluid rate, tracer rate and mean concentration of every well over time."""

    wells: list
    rates: list
    layout: DofLayout

    def __post_init__(self):
        self.rows: list[tuple] = []

    @classmethod
    def build(cls, wells, fracture, u, layout) -> "WellRecorder":
        return cls(list(wells), [face_rates(w, fracture, u, layout) for w in wells], layout)

    def record(self, t: float, c) -> None:
        c = np.asarray(c, float)
        for w, q in zip(self.wells, self.rates):
            cf = c[self.layout.fracture_face(np.asarray(w.faces, dtype=np.int64))]
            tracer = math.fsum(np.maximum(q, 0.0) * cf + np.minimum(q, 0.0) * w.injection_concentration)
            fluid = math.fsum(q)
            mean = tracer / fluid if fluid != 0.0 else math.nan
            self.rows.append((t, w.name, fluid, tracer, mean))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["time", "well", "fluid_rate", "tracer_rate", "mean_concentration"])
            for t, name, fluid, tracer, mean in self.rows:
                wr.writerow([repr(float(t)), name, repr(fluid), repr(tracer), "" if math.isnan(mean) else repr(mean)])
