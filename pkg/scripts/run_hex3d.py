"""Run the bundled 3D hexahedral scenario and print the run summary."""
import argparse
import dataclasses
import json
from pathlib import Path

from vagdfn.cli import execute_run
from vagdfn.config import load

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-x", type=int, default=None, help="cells per side (default from config)")
    ap.add_argument("--np", type=int, dest="n_parts", default=1)
    ap.add_argument("--out", default="out/hex3d")
    args = ap.parse_args()
    cfg = load(ROOT / "configs" / "hex3d.json")
    if args.n_x is not None:
        cfg = cfg.replace(mesh=dataclasses.replace(cfg.mesh, n_x=args.n_x))
    cfg = cfg.replace(parallel=dataclasses.replace(cfg.parallel, n_parts=args.n_parts))
    print(json.dumps(execute_run(cfg, Path(args.out)), indent=2, default=float))


if __name__ == "__main__":
    main()
