"""Native text mesh format and legacy VTK output.

Native format (UTF-8, one record per line, ``#`` starts a comment)::

    dfnmesh <d>
    nodes <n>
    <x> <y> [<z>]
    cells <n>
    <node> <node> ...
    faces <n>
    <node> <node> ...          # ordered cycle (2 nodes in 2D)
    fracture_faces <n>
    <face> <fracture id>
    boundary_nodes <n>
    <node>
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ._csr import Csr
from .errors import GeometryError, InvalidParameterError, MeshParseError
from .mesh import Mesh

_BLOCKS = ("nodes", "cells", "faces", "fracture_faces", "boundary_nodes")


def write_mesh(path, mesh: Mesh) -> None:
    lines = [f"dfnmesh {mesh.dim}", f"nodes {mesh.n_nodes}"]
    lines += [" ".join(repr(float(v)) for v in p) for p in mesh.nodes]
    lines.append(f"cells {mesh.n_cells}")
    lines += [" ".join(map(str, mesh.cell_nodes[k])) for k in range(mesh.n_cells)]
    lines.append(f"faces {mesh.n_faces}")
    lines += [" ".join(map(str, mesh.face_nodes[f])) for f in range(mesh.n_faces)]
    lines.append(f"fracture_faces {mesh.n_fracture_faces}")
    lines += [f"{f} {i}" for f, i in zip(mesh.fracture_faces, mesh.fracture_ids)]
    lines.append(f"boundary_nodes {len(mesh.boundary_nodes)}")
    lines += [str(s) for s in mesh.boundary_nodes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mesh(path) -> Mesh:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                records.append((lineno, text.split()))
    if not records:
        raise MeshParseError("empty mesh file", 1)
    lineno, head = records[0]
    if len(head) != 2 or head[0] != "dfnmesh" or head[1] not in ("2", "3"):
        raise MeshParseError("expected header 'dfnmesh <2|3>'", lineno)
    dim = int(head[1])
    pos = 1
    data = {}
    for name in _BLOCKS:
        if pos >= len(records):
            raise MeshParseError(f"missing block '{name}'", records[-1][0])
        lineno, tok = records[pos]
        if len(tok) != 2 or tok[0] != name:
            raise MeshParseError(f"expected '{name} <count>'", lineno)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshParseError(f"bad count {tok[1]!r}", lineno) from None
        rows = records[pos + 1 : pos + 1 + count]
        if len(rows) != count:
            raise MeshParseError(f"block '{name}' is truncated", lineno)
        data[name] = rows
        pos += 1 + count
    if pos != len(records):
        raise MeshParseError("trailing content after 'boundary_nodes'", records[pos][0])

    def parse(rows, conv, width=None):
        out = []
        for ln, tok in rows:
            if width is not None and len(tok) != width:
                raise MeshParseError(f"expected {width} values", ln)
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise MeshParseError("malformed number", ln) from None
        return out

    nodes = np.array(parse(data["nodes"], float, dim), dtype=float).reshape(-1, dim)
    n_nodes = len(nodes)

    def node_lists(rows, what):
        lists = parse(rows, int)
        for (ln, _), lst in zip(rows, lists):
            if not lst:
                raise MeshParseError(f"empty {what}", ln)
            bad = [s for s in lst if s < 0 or s >= n_nodes]
            if bad:
                raise MeshParseError(f"{what} references missing node {bad[0]}", ln)
        return lists

    cells = node_lists(data["cells"], "cell")
    faces = node_lists(data["faces"], "face")
    frac = parse(data["fracture_faces"], int, 2)
    for (ln, _), (f, _i) in zip(data["fracture_faces"], frac):
        if f < 0 or f >= len(faces):
            raise MeshParseError(f"fracture face references missing face {f}", ln)
    bnodes = parse(data["boundary_nodes"], int, 1)
    for (ln, _), (s,) in zip(data["boundary_nodes"], bnodes):
        if s < 0 or s >= n_nodes:
            raise MeshParseError(f"boundary node {s} does not exist", ln)
    frac = np.array(frac, dtype=np.int64).reshape(-1, 2)
    try:
        return Mesh.build(
            dim, nodes, cells, faces, frac[:, 0], frac[:, 1],
            boundary_nodes=np.array(bnodes, dtype=np.int64).reshape(-1),
        )
    except (GeometryError, InvalidParameterError) as exc:
        raise MeshParseError(f"inconsistent mesh: {exc}") from exc


def meshes_equal(a: Mesh, b: Mesh) -> bool:
    """Structural identity: same topology, tags and coordinates."""
    return (
        a.dim == b.dim
        and np.array_equal(a.nodes, b.nodes)
        and a.cell_nodes.equals(b.cell_nodes)
        and a.face_nodes.equals(b.face_nodes)
        and np.array_equal(a.face_cells, b.face_cells)
        and np.array_equal(a.fracture_faces, b.fracture_faces)
        and np.array_equal(a.fracture_ids, b.fracture_ids)
        and np.array_equal(a.boundary_nodes, b.boundary_nodes)
        and np.array_equal(a.cell_centers, b.cell_centers)
    )


# ------------------------------------------------------------------- VTK
VTK_LINE, VTK_POLYGON, VTK_CONVEX_POINT_SET, VTK_HEXAHEDRON = 3, 7, 41, 12


def _oriented_cell_edges(mesh: Mesh, k: int):
    out = []
    for f in mesh.cell_faces[k]:
        a, b = mesh.face_nodes[f]
        out.append((a, b) if mesh.face_cells[f, 0] == k else (b, a))
    return out


def _polygon_order(mesh: Mesh, k: int) -> list[int]:
    nxt = dict(_oriented_cell_edges(mesh, k))
    start = min(nxt)
    cycle = [start]
    while len(cycle) < len(nxt):
        cycle.append(int(nxt[cycle[-1]]))
    return cycle


def _hexahedron_order(mesh: Mesh, k: int):
    faces = mesh.cell_faces[k]
    if len(faces) != 6 or any(len(mesh.face_nodes[f]) != 4 for f in faces):
        return None
    f0 = faces[0]
    cyc = list(mesh.face_nodes[f0])
    if mesh.face_cells[f0, 0] == k:
        cyc = cyc[::-1]  # VTK wants the bottom face normal pointing inward
    bottom = set(cyc)
    nbrs = {}
    for f in faces:
        fn = list(mesh.face_nodes[f])
        for i, s in enumerate(fn):
            for t in (fn[i - 1], fn[(i + 1) % 4]):
                nbrs.setdefault(s, set()).add(t)
    top = []
    for s in cyc:
        up = [t for t in nbrs[s] if t not in bottom]
        if len(up) != 1:
            return None
        top.append(up[0])
    return [int(s) for s in cyc + top]


def write_vtk(path, mesh: Mesh, cell_data=None, point_data=None, fracture_data=None,
              title="vagdfn") -> None:
    """Legacy ASCII unstructured grid: matrix cells then fracture faces.

    ``cell_data`` and ``fracture_data`` are merged into one CELL_DATA block
    (fracture values on fracture elements, NaN elsewhere, and vice versa).
    """
    cell_data = cell_data or {}
    point_data = point_data or {}
    fracture_data = fracture_data or {}
    conn, types = [], []
    for k in range(mesh.n_cells):
        if mesh.dim == 2:
            conn.append(_polygon_order(mesh, k))
            types.append(VTK_POLYGON)
        else:
            hexa = _hexahedron_order(mesh, k)
            if hexa is None:
                conn.append([int(s) for s in mesh.cell_nodes[k]])
                types.append(VTK_CONVEX_POINT_SET)
            else:
                conn.append(hexa)
                types.append(VTK_HEXAHEDRON)
    for f in mesh.fracture_faces:
        conn.append([int(s) for s in mesh.face_nodes[f]])
        types.append(VTK_LINE if mesh.dim == 2 else VTK_POLYGON)
    n_el = len(conn)
    nc, nf = mesh.n_cells, mesh.n_fracture_faces
    pts = mesh.nodes if mesh.dim == 3 else np.column_stack([mesh.nodes, np.zeros(mesh.n_nodes)])
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_nodes} double"]
    out += [" ".join(repr(float(v)) for v in p) for p in pts]
    out.append(f"CELLS {n_el} {sum(len(c) + 1 for c in conn)}")
    out += [" ".join(map(str, [len(c)] + c)) for c in conn]
    out.append(f"CELL_TYPES {n_el}")
    out += [str(t) for t in types]
    out.append(f"CELL_DATA {n_el}")
    is_frac = np.r_[np.zeros(nc), np.ones(nf)]
    out += ["SCALARS fracture int 1", "LOOKUP_TABLE default"] + [str(int(v)) for v in is_frac]
    for name, values in cell_data.items():
        full = np.r_[np.asarray(values, float).reshape(nc), np.full(nf, np.nan)]
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [repr(float(v)) for v in full]
    for name, values in fracture_data.items():
        full = np.r_[np.full(nc, np.nan), np.asarray(values, float).reshape(nf)]
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [repr(float(v)) for v in full]
    if point_data:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            vals = np.asarray(values, float).reshape(mesh.n_nodes)
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [repr(float(v)) for v in vals]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
