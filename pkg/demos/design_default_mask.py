"""
Designing the shipped phase mask
================================

Reproduces ``nowa/data/default_mask.json``: Nelder-Mead over Noll modes
4-18 from a defocus start, 5 restarts of 200 evaluations each. Takes a few
minutes on one core. Pass ``--write`` to overwrite the packaged design.
"""

import sys
from importlib import resources

from nowa import maskopt as mo
from nowa import optics

cfg = optics.OpticalConfig()
obj = mo.MaskObjective()

start = mo.starting_design("defocus", 18)
print(f"start:  {mo.objective_terms(start, cfg, obj)}")
flat = optics.ZernikeCoeffs.zeros(18)
print(f"flat:   {mo.objective_terms(flat, cfg, obj)}")

result = mo.optimize(start, cfg, obj, budget=200, restarts=5, seed=0)
print(f"best:   {result.terms}")
print(f"per restart: {[round(v, 4) for v in result.restart_best]}")
for j, c in result.coeffs.to_dict().items():
    if abs(c) > 1e-9:
        print(f"  Z{j:<2d} {c:+.4e} m")

if "--write" in sys.argv:
    target = resources.files("nowa") / "data" / "default_mask.json"
    optics.save_mask_design(result.coeffs, target)
    print(f"wrote {target}")
