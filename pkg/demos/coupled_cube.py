"""Unit cube with three intersecting fractures, 48k tetrahedra: cumulative
Newton iterations of the one- and two-sided bubble variants. Takes about
15 minutes per variant on one CPU.

    python demos/coupled_cube.py
"""
from polycontact.cases import run_coupled_cube

totals = {}
for two_sided in (False, True):
    name = "two-sided" if two_sided else "one-sided"

    def progress(row):
        print(f"  {name} t={row['t']:5.1f} inner={row['inner']:3d} newton={row['newton']:3d} "
              f"audit={'pass' if row['audit_pass'] else 'FAIL'}", flush=True)

    out = run_coupled_cube(two_sided=two_sided, progress=progress)
    cumulative = []
    acc = 0
    for row in out["rows"]:
        acc += row["newton"]
        cumulative.append(acc)
    totals[name] = cumulative
    print(f"{name}: {out['cells']} cells, {out['ndof']} displacement dofs, {out['seconds']:.0f}s")

print("step  one-sided  two-sided")
for k, (a, b) in enumerate(zip(totals["one-sided"], totals["two-sided"]), 1):
    print(f"{k:4d} {a:10d} {b:10d}")
