"""Command-line entry point.

``vagdfn run --config <path> [--np N] [--out DIR]`` runs one scenario and
writes the mesh, VTK snapshots, CSV tables and a JSON manifest.
``vagdfn convergence --config <path> --levels 100,200,400`` runs the same
scenario on several grids and writes the error table.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import platform
import sys
import time
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .analytic import convergence_study, write_convergence_csv
from .config import RunConfig, load, validate
from .darcy import write_solver_log
from .errors import VagError
from .mesh_io import write_mesh, write_vtk
from .parallel import write_timings_csv
from .scenarios import build_scenario, level_errors, run_level, simulate, solve_flow
from .transport import write_series_csv, write_snapshot_csv, write_snapshot_vtk
from .wells import WellRecorder

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


def versions() -> dict:
    return {"vagdfn": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _stamp(t: float) -> str:
    return f"{t:.6f}".rstrip("0").rstrip(".").replace(".", "p") or "0"


def _write_manifest(out: Path, cfg: RunConfig, command: str, timings: dict, outputs: list, summary: dict) -> Path:
    path = out / "manifest.json"
    doc = {"command": command, "config": cfg.to_dict(), "versions": versions(), "timings": timings,
           "summary": summary, "outputs": sorted(outputs)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False, default=float) + "\n",
                    encoding="utf-8")
    return path


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


def execute_run(cfg: RunConfig, out: Path) -> dict:
    """Run ``cfg`` and write every artefact into ``out``; returns the manifest summary."""
    out.mkdir(parents=True, exist_ok=True)
    timings, outputs = {}, []
    t0 = time.perf_counter()
    sc = build_scenario(cfg)
    timings["setup"] = time.perf_counter() - t0
    if cfg.output.vtk or cfg.output.csv:
        write_mesh(out / "mesh.txt", sc.mesh)
        outputs.append("mesh.txt")

    flow = solve_flow(sc)
    timings["flow"] = flow.seconds
    summary = {"n_dofs": sc.layout.size, "n_cells": sc.mesh.n_cells, "n_fracture_faces": sc.mesh.n_fracture_faces,
               "solver_iterations": flow.result.iterations, "solver_residual": _finite(flow.result.residual)}
    if cfg.output.csv:
        write_solver_log(out / "solver_log.csv", flow.result)
        outputs.append("solver_log.csv")
    if cfg.output.vtk:
        n, f, c = sc.layout.split(flow.u)
        write_vtk(out / "pressure.vtk", sc.mesh, cell_data={"pressure": c}, point_data={"pressure": n},
                  fracture_data={"pressure": f}, title="pressure")
        outputs.append("pressure.vtk")
    if cfg.output.csv:
        write_snapshot_csv(out / "pressure.csv", sc.mesh, flow.u)
        outputs.append("pressure.csv")

    if cfg.transport.enabled:
        t0 = time.perf_counter()
        res = simulate(sc, flow)
        timings["transport"] = time.perf_counter() - t0
        summary.update({"steps": res.stats.n_steps, "dt": res.dt, "final_time": res.final_time,
                        "stationary": res.stationary, "max_mass_defect": res.stats.max_mass_defect,
                        "max_principle_violation": res.max_principle_violation()})
        for t, c in zip(res.times, res.states):
            name = f"tracer_t{_stamp(t)}"
            if cfg.output.vtk:
                write_snapshot_vtk(out / f"{name}.vtk", sc.mesh, c)
                outputs.append(f"{name}.vtk")
            if cfg.output.csv:
                write_snapshot_csv(out / f"{name}.csv", sc.mesh, c, t)
                outputs.append(f"{name}.csv")
        if cfg.output.csv and res.series:
            write_series_csv(out / "tracer_volumes.csv", res.series)
            outputs.append("tracer_volumes.csv")
        if sc.wells and cfg.output.csv:
            rec = WellRecorder.build(sc.wells, sc.fracture, flow.u, sc.layout)
            for t, c in zip(res.times, res.states):
                rec.record(t, c)
            rec.write_csv(out / "wells.csv")
            outputs.append("wells.csv")
        if sc.case is not None and cfg.output.csv:
            em, ef = level_errors(sc, res)
            summary.update({"error_matrix": em, "error_fracture": ef})
            with open(out / "errors.csv", "w", newline="", encoding="utf-8") as fh:
                fh.write("n_x,final_time,err_matrix,err_fracture\r\n")
                fh.write(f"{cfg.mesh.n_x},{res.final_time!r},{em!r},{ef!r}\r\n")
            outputs.append("errors.csv")
    if flow.parallel is not None and cfg.output.csv:
        write_timings_csv(out / "part_timings.csv", flow.parallel.timings)
        outputs.append("part_timings.csv")
    _write_manifest(out, cfg, "run", timings, outputs, summary)
    return summary


def execute_convergence(cfg: RunConfig, levels, out: Path) -> list:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = convergence_study(lambda n: run_level(cfg, n), levels)
    write_convergence_csv(out / "convergence.csv", rows)
    summary = {"levels": [dataclasses.asdict(r) for r in rows]}
    for row in summary["levels"]:
        for k, v in row.items():
            row[k] = _finite(v) if isinstance(v, float) else v
    _write_manifest(out, cfg, "convergence", {"total": time.perf_counter() - t0}, ["convergence.csv"], summary)
    return rows


def _levels(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vagdfn", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"vagdfn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--np", type=int, dest="n_parts", default=None, help="number of workers")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    c = sub.add_parser("convergence", help="grid convergence study")
    c.add_argument("--config", required=True)
    c.add_argument("--levels", type=_levels, required=True, help="e.g. 100,200,400")
    c.add_argument("--out", default=None)
    return p


def _error(exc: Exception) -> int:
    msg = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(msg), file=sys.stderr)
    return EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.command == "run" and args.n_parts is not None:
            cfg = cfg.replace(parallel=dataclasses.replace(cfg.parallel, n_parts=args.n_parts))
        if args.out is not None:
            cfg = cfg.replace(output=dataclasses.replace(cfg.output, directory=args.out))
        validate(cfg)
        out = Path(cfg.output.directory)
        if args.command == "run":
            summary = execute_run(cfg, out)
            print(json.dumps({"status": "ok", "output": str(out), **summary}, default=float))
        else:
            rows = execute_convergence(cfg, args.levels, out)
            print("n_x,err_matrix,err_fracture,order_matrix,order_fracture")
            for row in rows:
                print(f"{row.n_x},{row.err_matrix:.6e},{row.err_fracture:.6e},"
                      f"{row.order_matrix:.3f},{row.order_fracture:.3f}")
    except (VagError, OSError) as exc:
        return _error(exc)
    return EXIT_OK

