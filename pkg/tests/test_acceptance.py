"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]`` or ``[FAIL]`` line (visible with
``pytest -s`` or when run as a script) and asserts the criterion at its
stated tolerance.  Run ``python3 tests/test_acceptance.py`` for the
summary without pytest.
"""
import sys

import numpy as np
import pytest

from kleinbox.core import Geometry, make_params, paper_params
from kleinbox.dirac import (
    WINDOW_MARGIN,
    build_eigenstate,
    det_minimum_near,
    find_levels,
    interface_coefficients,
    kinematics,
    quantization_residual,
)
from kleinbox.lattice import (
    build_hamiltonian,
    chain_from_params,
    compare_intensities,
    compare_levels,
    eigensolve,
    estimate_wavevector,
    site_map,
    sublattice_envelopes,
)
from kleinbox.pipeline import run_ensemble, spectroscopy_round_trip
from kleinbox.spectroscopy import DEFAULT_GAMMA, detect_peaks, ldos_map

E1, E4 = (15, 15), (15, 9)
LEVEL_TOL_FRAC = 0.05  # criterion 4, fraction of V0
INTENSITY_TOL = 0.03  # criterion 8, frozen after one calibration run
N_SEEDS = 100


def _report(number, title, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
    return ok


def _lattice(geom, p=None):
    p = p or paper_params(geom)
    spec = chain_from_params(geom, p)
    eig = eigensolve(build_hamiltonian(spec))
    return p, spec, eig, site_map(spec, p.lattice_const)


def criterion_1():
    p, _, eig, _ = _lattice(E1)
    nc, nl = len(find_levels(p)), len(eig.window_indices)
    return _report(1, "level count", nc == 10 and nl == 10, f"continuum {nc}, lattice {nl} (want 10)")


def criterion_2():
    p, spec, _, _ = _lattice(E1)
    nl = len(eigensolve(build_hamiltonian(spec.left_alone())).window_indices)
    nr = len(eigensolve(build_hamiltonian(spec.right_alone())).window_indices)
    return _report(2, "half-chain counts", nl == 5 and nr == 5, f"left {nl}, right {nr} (want 5)")


def criterion_3():
    p, _, eig, _ = _lattice(E1)
    e = find_levels(p).energies
    cont = float(np.max(np.abs(e + e[::-1] - p.step_height)))
    el = eig.window_frequencies - p.dirac_point
    lat = float(np.max(np.abs(el + el[::-1] - p.step_height)))
    ok = cont < 1e-8 and lat < 1e-8
    return _report(3, "particle-hole symmetry", ok, f"continuum {cont:.2e}, lattice {lat:.2e} MHz (< 1e-8)")


def criterion_4():
    worst = []
    for geom in (E1, E4):
        p, _, eig, _ = _lattice(geom)
        worst.append(compare_levels(eig, p).max_abs / p.step_height)
    ok = max(worst) < LEVEL_TOL_FRAC
    return _report(4, "lattice vs continuum levels", ok,
                   f"max |dE|/V0 = {worst[0]:.4f} (E1), {worst[1]:.4f} (E4), limit {LEVEL_TOL_FRAC}")


def criterion_5():
    p, _, eig, sm = _lattice(E1)
    a0 = p.lattice_const
    lam_c = 2 * np.pi / kinematics(find_levels(p).energies[-1], p).k_particle / a0
    env = sublattice_envelopes(eig, eig.window_indices[-1], sm)
    lam_l = 2 * np.pi / estimate_wavevector(env, "left", "A").k / a0
    ok = all(abs(lam - 7.0) <= 0.15 * 7.0 for lam in (lam_c, lam_l))
    return _report(5, "minimum wavelength", ok,
                   f"continuum {lam_c:.3f} a0, lattice {lam_l:.3f} a0 (want 7 a0 +- 15%)")


def criterion_6():
    p = paper_params(E1)
    lv = find_levels(p)
    worst = dict(boundary=0.0, interface=0.0, current=0.0, norm=0.0, g=0.0, det=0.0)
    for E in lv.energies:
        f = build_eigenstate(E, p)
        worst["boundary"] = max(worst["boundary"], *f.boundary_residuals())
        worst["interface"] = max(worst["interface"], f.interface_mismatch())
        worst["current"] = max(worst["current"], float(np.max(np.abs(f.current()))))
        worst["norm"] = max(worst["norm"], abs(f.norm() - 1.0))
        worst["g"] = max(worst["g"], abs(quantization_residual(E, p)))
        worst["det"] = max(worst["det"], abs(det_minimum_near(E, p, 0.5) - E))
    limits = dict(boundary=1e-8, interface=1e-10, current=1e-8, norm=1e-8, g=1e-10, det=1e-6)
    ok = all(worst[k] < limits[k] for k in limits)
    detail = ", ".join(f"{k} {worst[k]:.1e}<{limits[k]:.0e}" for k in limits)
    return _report(6, "eigenstate integrity", ok, detail)


def criterion_7():
    p = paper_params(E1)
    E = 40.0
    r_small = [interface_coefficients(kinematics(E, p.replace(mass_energy=m))).r for m in (1e-6, 1e-9, 1e-12)]
    massless = abs(r_small[-1]) < 1e-10 and np.all(np.diff(np.abs(r_small)) < 0)
    lo, hi = p.klein_window
    # sweep toward each margin down to the solver's guard band
    eps = np.logspace(0, np.log10(2 * WINDOW_MARGIN * p.step_height), 40)
    r_lo = np.array([interface_coefficients(kinematics(lo + e, p)).r for e in eps])
    r_hi = np.array([interface_coefficients(kinematics(hi - e, p)).r for e in eps])
    monotone = bool(np.all(np.diff(r_lo) < 0) and np.all(np.diff(r_hi) < 0))
    # |r + 1| ~ sqrt(eps): the ratio settles, so the limit is r = -1
    ratio = np.abs(np.concatenate([r_lo, r_hi]) + 1) / np.sqrt(np.concatenate([eps, eps]))
    settles = bool(np.ptp(ratio[[-3, -2, -1]]) < 1e-2 * ratio[-1] and np.ptp(ratio[[37, 38, 39]]) < 1e-2 * ratio[39])
    ok = massless and monotone and settles
    return _report(7, "massless and edge limits", ok,
                   f"|r(m=1e-12)| {abs(r_small[-1]):.1e}, monotone {monotone}, |r+1| at guard {abs(r_lo[-1] + 1):.1e}/{abs(r_hi[-1] + 1):.1e} with sqrt law {settles}")


def criterion_8():
    parts, ok = [], True
    for name, geom in (("E1", E1), ("E4", E4)):
        p, _, eig, sm = _lattice(geom)
        lv = find_levels(p)
        f = build_eigenstate(lv.energies[2], p)
        dev = compare_intensities(eig, eig.window_indices[2], f, sm).max_abs
        kinks = [f.kink_spike_ratio(c) for c in (0, 1)]
        slopes = [f.intensity_slopes(c) for c in (0, 1)]
        jump = min(abs(s[0] - s[1]) for s in slopes)
        kinked = min(kinks) > 10 and jump > 1e-6
        ok &= dev < INTENSITY_TOL and kinked
        parts.append(f"{name} max-abs {dev:.4f}, kink ratio {min(kinks):.0f}")
    return _report(8, "intensity comparison", ok, "; ".join(parts) + f" (limit {INTENSITY_TOL}, ratio > 10)")


def criterion_9():
    p = paper_params(E1)
    ens = run_ensemble(p, Geometry(*E1), 2.7, range(N_SEEDS))
    m = ens.median
    hc = p.hbar_c / p.lattice_const
    checks = {
        "hbar_c": abs(m["hbar_c_over_a0_mhz"] - hc) <= 0.05 * hc,
        "mc2": abs(m["mc2_mhz"] - p.mass_energy) <= 0.15 * p.mass_energy,
        "f0": abs(m["f0_mhz"] - p.dirac_point) <= 2.0,
        "delta_f": abs(m["delta_f_mhz"] - p.step_height) <= 3.0,
    }
    ok = all(checks.values()) and not ens.failures
    detail = (f"medians over {len(ens.rows)} seeds: hbar_c/a0 {m['hbar_c_over_a0_mhz']:.2f} (61.325), "
              f"mc2 {m['mc2_mhz']:.2f} (12.894), f0-f0true {m['f0_mhz'] - p.dirac_point:+.2f}, "
              f"delta_f {m['delta_f_mhz']:.2f} (81.5); missed: "
              + (", ".join(k for k, v in checks.items() if not v) or "none"))
    return _report(9, "inverse pipeline", ok, detail)


def criterion_10():
    _, _, eig, _ = _lattice(E1)
    rt = spectroscopy_round_trip(eig, DEFAULT_GAMMA)
    cerr, ierr = float(np.max(np.abs(rt.center_errors))), float(np.max(rt.intensity_errors))
    ok = cerr < DEFAULT_GAMMA / 10 and ierr < 1e-2
    return _report(10, "spectroscopy round trip", ok,
                   f"center {cerr:.4f} MHz (< {DEFAULT_GAMMA / 10}), intensity {ierr:.1e} (< 1e-2)")


def criterion_11():
    p, spec, eig, _ = _lattice(E1)
    gamma = DEFAULT_GAMMA
    lo, hi = spec.window
    grid = np.arange(lo - 10.0, hi + 10.0, 0.01)
    dos = ldos_map(eig, np.arange(spec.n_sites), grid, gamma).dos_trace()
    peaks = sorted(q.center for q in detect_peaks(dos, 1e-3) if lo < q.center < hi)
    target = find_levels(p).frequencies(p.dirac_point)
    if len(peaks) != len(target):
        return _report(11, "DOS alignment", False, f"{len(peaks)} DOS peaks for {len(target)} levels")
    off = np.abs(np.array(peaks) - target)
    ok = bool(np.all(off < gamma / 2))
    return _report(11, "DOS alignment", ok,
                   f"max |peak - (f0+E_n)| {off.max():.3f} MHz at level {int(np.argmax(off)) + 1} (< {gamma / 2})")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_acceptance(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
