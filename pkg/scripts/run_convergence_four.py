"""Four-fracture stationary convergence study (levels 50, 100, 200)."""
import argparse
from pathlib import Path

from vagdfn.analytic import FourFractureCase
from vagdfn.cli import execute_convergence
from vagdfn.config import load

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="50,100,200")
    ap.add_argument("--out", default="out/convergence_four")
    args = ap.parse_args()
    cfg = load(ROOT / "configs" / "four_fractures.json")
    print(f"intersection balance: {FourFractureCase().intersection_balance():.3e}")
    for row in execute_convergence(cfg, [int(s) for s in args.levels.split(",")], Path(args.out)):
        print(f"n_x={row.n_x:4d}  err_m={row.err_matrix:.4e}  err_f={row.err_fracture:.4e}  "
              f"order_m={row.order_matrix:.3f}  order_f={row.order_fracture:.3f}")


if __name__ == "__main__":
    main()
