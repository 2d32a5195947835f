"""Single-fracture convergence study (levels 100, 200, 400) for two volume fractions."""
import argparse
import dataclasses
from pathlib import Path

from vagdfn.cli import execute_convergence
from vagdfn.config import load

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="100,200,400")
    ap.add_argument("--omegas", default="0.1,0.3")
    ap.add_argument("--out", default="out/convergence_single")
    args = ap.parse_args()
    base = load(ROOT / "configs" / "single_fracture.json")
    levels = [int(s) for s in args.levels.split(",")]
    for om in (float(s) for s in args.omegas.split(",")):
        cfg = base.replace(transport=dataclasses.replace(base.transport, omega_m=om, omega_f=om))
        print(f"omega = {om}")
        for row in execute_convergence(cfg, levels, Path(args.out) / f"omega_{om:g}"):
            print(f"  n_x={row.n_x:4d}  err_m={row.err_matrix:.4e}  err_f={row.err_fracture:.4e}  "
                  f"order_m={row.order_matrix:.3f}  order_f={row.order_fracture:.3f}")


if __name__ == "__main__":
    main()
