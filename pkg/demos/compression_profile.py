"""Inclined fracture under compression: tangential jump and normal
multiplier along the fracture against the closed forms.

    python demos/compression_profile.py --level 2 > profile.txt
"""
import argparse

import numpy as np

from polycontact.cases import CompressionSetup, run_compression

ap = argparse.ArgumentParser()
ap.add_argument("--level", type=int, default=1)
ap.add_argument("--two-sided", action="store_true")
args = ap.parse_args()

r = run_compression(args.level, CompressionSetup(), two_sided=args.two_sided)
print(f"# {r['faces']} fracture faces, newton {r['newton']}, rel. L2 error jump_t {r['err_jump']:.3e}, "
      f"lambda_n {r['err_lam']:.3e}, max deviation of lambda_n {r['lam_maxdev']:.2%}")
print("# tau  slip  exact_slip  lambda_n  lambda_n_exact")
for i in np.argsort(r["tau"]):
    print(f"{r['tau'][i]:.5f} {r['slip'][i]:.6e} {r['exact_slip'][i]:.6e} {r['lam_n'][i]:.6e} {r['lam_exact']:.6e}")
