"""Wall time of a fixed number of transport steps against the worker count.

Without enough physical cores the workers share one CPU and no speedup is
expected.
"""
import argparse
import dataclasses
import os
import time
from pathlib import Path

from vagdfn.config import load
from vagdfn.scenarios import build_scenario, simulate, solve_flow

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-x", type=int, default=64)
    ap.add_argument("--workers", default="1,2,4")
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args()
    cfg = load(ROOT / "configs" / "hex3d.json")
    cfg = cfg.replace(mesh=dataclasses.replace(cfg.mesh, n_x=args.n_x),
                      solver=dataclasses.replace(cfg.solver, method="cg", preconditioner="ilu0"),
                      parallel=dataclasses.replace(cfg.parallel, deterministic=False))
    sc = build_scenario(cfg)
    print(f"{os.cpu_count()} CPU(s), {sc.layout.size} dofs, {args.steps} steps")
    base = None
    for n in (int(s) for s in args.workers.split(",")):
        flow = solve_flow(sc, n)
        simulate(sc, flow, max_steps=2)
        t0 = time.perf_counter()
        simulate(sc, flow, max_steps=args.steps)
        secs = time.perf_counter() - t0
        base = secs if base is None else base
        print(f"workers={n}  flow={flow.seconds:.2f} s  transport={secs:.2f} s  speedup={base / secs:.2f}")


if __name__ == "__main__":
    main()
