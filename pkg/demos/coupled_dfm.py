"""Fixed-stress coupled run on the six-fracture network: mean quantities,
iteration counts and the energy audit at every step.

    python demos/coupled_dfm.py --level 1
"""
import argparse

from polycontact.cases import PoroSetup, run_coupled_dfm6

ap = argparse.ArgumentParser()
ap.add_argument("--level", type=int, default=0)
ap.add_argument("--steps", type=int, default=20)
ap.add_argument("--two-sided", action="store_true")
args = ap.parse_args()

out = run_coupled_dfm6(args.level, PoroSetup(steps=args.steps), two_sided=args.two_sided)
print(f"{out['cells']} cells, {out['faces']} fracture faces, {out['seconds']:.1f}s")
print("     t     mean_pm      mean_pf      mean_df   mean_jump_t inner newton audit")
for row in out["rows"]:
    print(f"{row['t']:6.0f} {row['mean_pm']:.5e} {row['mean_pf']:.5e} {row['mean_df']:.5e} {row['mean_jump_t']:.5e}"
          f" {row['inner']:5d} {row['newton']:6d} {'pass' if row['audit_pass'] else 'FAIL'}")
