"""Manufactured frictionless solution in (-1,1)^3: errors and observed
orders on a mesh family.

    python demos/manufactured_convergence.py --family tet --levels 1 2 3
"""
import argparse

from polycontact.cases import run_manufactured
from polycontact.recon import observed_orders

ap = argparse.ArgumentParser()
ap.add_argument("--family", default="cartesian", choices=("cartesian", "tet", "hex"))
ap.add_argument("--levels", type=int, nargs="+", default=[1, 2, 3])
ap.add_argument("--two-sided", action="store_true")
args = ap.parse_args()

runs = []
for L in args.levels:
    r = run_manufactured(L, args.family, two_sided=args.two_sided)
    runs.append(r)
    errs = "  ".join(f"{k} {v:.3e}" for k, v in r["errors"].items())
    print(f"m={L} cells={r['cells']} ndof={r['ndof']} newton={r['newton']} {r['seconds']:.1f}s  {errs}")

for k in runs[0]["errors"]:
    print(f"{k:10s} orders", " ".join(f"{o:.2f}" for o in observed_orders([r["errors"][k] for r in runs])))
