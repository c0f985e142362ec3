"""Local density of states of the left half, right half and whole chain.

Writes the three maps and the DOS as CSV and SVG into ./ldos_demo and
prints the number of in-window resonances seen in each.

    python3 demos/05_ldos_maps.py
"""
from pathlib import Path

import numpy as np

from kleinbox.core import paper_params
from kleinbox.export import svg_heatmap, svg_lines, write_map
from kleinbox.lattice import build_hamiltonian, chain_from_params, eigensolve
from kleinbox.spectroscopy import detect_peaks, ldos_map

out = Path("ldos_demo")
out.mkdir(exist_ok=True)
p = paper_params((15, 15))
spec = chain_from_params((15, 15), p)
lo, hi = spec.window
grid = np.arange(lo - 30, hi + 30, 0.05)

for name, s in (("left", spec.left_alone()), ("right", spec.right_alone()), ("whole", spec)):
    eig = eigensolve(build_hamiltonian(s))
    sites = np.arange(s.n_sites)
    m = ldos_map(eig, sites, grid)
    write_map(out / f"ldos_{name}", grid, sites, m.values.T)
    svg_heatmap(out / f"ldos_{name}.svg", sites, grid, m.values.T, f"LDOS, {name}", "site", "f (MHz)",
                hlines=(lo, hi))
    ridges = [q for q in detect_peaks(m.dos_trace(), 1e-3) if lo < q.center < hi]
    print(f"{name:>5}: {len(ridges)} in-window resonances")
    if name == "whole":
        svg_lines(out / "dos.svg", grid, [m.dos], ["DOS"], "density of states", "f (MHz)", "DOS",
                  vlines=(lo, hi))
print(f"maps written to {out.resolve()}")
