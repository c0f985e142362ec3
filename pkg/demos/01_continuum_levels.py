"""Bound states of the Dirac box with a Klein step.

Finds the hybridized particle/hole levels inside the Klein window, checks
the particle-hole mirror E_n + E_(N+1-n) = V0 and prints where each level
sits relative to the mass gaps.

    python3 demos/01_continuum_levels.py
"""
import numpy as np

from kleinbox.core import paper_params
from kleinbox.dirac import build_eigenstate, find_levels, kinematics

p = paper_params((15, 15))
lo, hi = p.klein_window
print(f"Klein window: {lo:.3f} .. {hi:.3f} MHz above f0 = {p.dirac_point} MHz")

levels = find_levels(p)
print(f"{len(levels)} levels")
print(f"{'n':>3} {'E_n (MHz)':>12} {'f (MHz)':>12} {'lambda_p/a0':>12} {'lambda_h/a0':>12}")
for n, E in enumerate(levels.energies, 1):
    kin = kinematics(E, p)
    lp = 2 * np.pi / kin.k_particle / p.lattice_const
    lh = 2 * np.pi / kin.k_hole / p.lattice_const
    print(f"{n:>3} {E:12.4f} {p.dirac_point + E:12.4f} {lp:12.2f} {lh:12.2f}")

e = levels.energies
print(f"mirror residual max |E_n + E_(N+1-n) - V0| = {np.max(np.abs(e + e[::-1] - p.step_height)):.2e} MHz")

f = build_eigenstate(e[2], p)
print(f"3rd state: norm {f.norm():.12f}, walls {max(f.boundary_residuals()):.1e}, "
      f"interface {f.interface_mismatch():.1e}, kink spike ratio {f.kink_spike_ratio(0):.0f}")
