import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kleinbox.export import read_table, svg_heatmap, svg_lines, write_trace
from kleinbox.lattice import LatticeEigensystem
from kleinbox.spectroscopy import (
    ResonancePeak,
    SpectrumTrace,
    detect_peaks,
    extract_intensities,
    fit_lorentzians,
    ldos_map,
    lorentzian,
    noise_floor,
    synth_all_sites,
    synth_reflection,
)

GAMMA = 2.0


def toy_system(freqs, weights):
    """Eigensystem stand-in with one probed site carrying the given weights."""
    freqs = np.asarray(freqs, float)
    vec = np.sqrt(np.asarray(weights, float))[None, :]
    return LatticeEigensystem(freqs, vec, np.full(len(freqs), "window"), (freqs.min() - 1, freqs.max() + 1))


def test_decoupled_probe_is_unity(e1_chain):
    _, eig, _ = e1_chain
    tr = synth_reflection(eig, 0, np.linspace(6700, 6800, 501), coupling=0.0)
    assert np.all(tr.values == 1.0)


def test_single_resonance_lineshape():
    eig = toy_system([6750.0], [0.4])
    nu = np.linspace(6700, 6800, 20001)
    s = synth_reflection(eig, 0, nu, GAMMA, coupling=0.5).values
    absorb = (1 - s).real
    assert np.allclose(absorb, lorentzian(nu, 6750.0, GAMMA, 0.2), atol=1e-15)
    # half maximum of Re(1-S) and of |1-S|^2 sits at +-Gamma/2
    half = nu[absorb >= 0.1]
    assert half[-1] - half[0] == pytest.approx(GAMMA, abs=2 * (nu[1] - nu[0]))
    mag2 = np.abs(1 - s) ** 2
    half2 = nu[mag2 >= 0.5 * mag2.max()]
    assert half2[-1] - half2[0] == pytest.approx(GAMMA, abs=2 * (nu[1] - nu[0]))


def test_trace_validation():
    with pytest.raises(ValueError, match="uniform"):
        SpectrumTrace(0, np.array([0.0, 1.0, 3.0]), np.zeros(3))
    with pytest.raises(ValueError, match="ascending"):
        SpectrumTrace(0, np.array([2.0, 1.0, 0.0]), np.zeros(3))
    with pytest.raises(ValueError, match="non-finite"):
        SpectrumTrace(0, np.arange(3.0), np.array([0, np.nan, 0]))
    with pytest.raises(ValueError):
        ResonancePeak(1.0, 0.0, 1.0)


def test_noise_is_seeded_per_site(e1_chain):
    _, eig, _ = e1_chain
    nu = np.linspace(6700, 6800, 1001)
    a = synth_reflection(eig, 3, nu, noise_sigma=0.01, seed=7)
    b = synth_reflection(eig, 3, nu, noise_sigma=0.01, seed=7)
    c = synth_reflection(eig, 4, nu, noise_sigma=0.01, seed=7)
    assert np.array_equal(a.values, b.values)
    clean = synth_reflection(eig, 3, nu).values
    assert np.std(a.values - clean) == pytest.approx(0.01, rel=0.1)
    assert not np.allclose(a.values - clean, c.values - synth_reflection(eig, 4, nu).values)


def test_peaks_recover_window_levels_at_first_site(e1_chain):
    spec, eig, _ = e1_chain
    lo, hi = spec.window
    nu = np.arange(lo - 20, hi + 20, 0.02)
    peaks = detect_peaks(synth_reflection(eig, 0, nu, GAMMA), 1e-4)
    centers = np.array([p.center for p in peaks])
    for n in eig.window_indices:
        if eig.vectors[0, n] ** 2 > 1e-3:
            assert np.min(np.abs(centers - eig.frequencies[n])) < GAMMA / 10


def test_mid_chain_peak_count(e1_chain):
    spec, eig, _ = e1_chain
    lo, hi = spec.window
    nu = np.arange(lo, hi, 0.02)
    site = 29
    tr = synth_reflection(eig, site, nu, GAMMA)
    count = sum(lo < p.center < hi for p in detect_peaks(tr, 1e-4))
    strong = np.sum(eig.vectors[site, eig.window_indices] ** 2 > 1e-3)
    assert count <= 10
    assert count >= strong


@pytest.mark.parametrize("sep, expected", [(5 * GAMMA, 2), (GAMMA / 4, 1)])
def test_peak_resolution(sep, expected):
    eig = toy_system([6750.0, 6750.0 + sep], [0.5, 0.5])
    tr = synth_reflection(eig, 0, np.linspace(6730, 6780, 2501), GAMMA)
    assert len(detect_peaks(tr, 0.01)) == expected


def test_detect_on_empty_trace():
    assert detect_peaks(SpectrumTrace(0, np.arange(10.0), np.zeros(10)), 0.01) == []


def test_single_peak_fit_exact():
    eig = toy_system([6751.3], [0.3])
    tr = synth_reflection(eig, 0, np.linspace(6730, 6770, 2001), GAMMA)
    init = detect_peaks(tr, 0.01)
    fit = fit_lorentzians(tr, init, baseline=False)
    p = fit.peaks[0]
    assert p.converged
    assert p.center == pytest.approx(6751.3, rel=1e-6)
    assert p.width == pytest.approx(GAMMA, rel=1e-6)
    assert p.amplitude == pytest.approx(0.3, rel=1e-6)


def test_noisy_center_rms():
    eig = toy_system([6750.0], [1.0])
    nu = np.linspace(6735, 6765, 601)
    errs = []
    for seed in range(100):
        tr = synth_reflection(eig, 0, nu, GAMMA, noise_sigma=0.01, seed=seed)
        fit = fit_lorentzians(tr, [ResonancePeak(6750.2, 2.3, 0.9)])
        errs.append(fit.peaks[0].center - 6750.0)
    assert np.sqrt(np.mean(np.square(errs))) < GAMMA / 20


def test_overlapping_pair_separates():
    eig = toy_system([6750.0, 6754.0], [0.6, 0.4])
    nu = np.linspace(6735, 6770, 701)
    worst = 0.0
    for seed in range(30):
        tr = synth_reflection(eig, 0, nu, GAMMA, noise_sigma=0.01, seed=seed)
        init = [ResonancePeak(6749.5, 2.5, 0.5), ResonancePeak(6754.6, 2.5, 0.5)]
        fit = fit_lorentzians(tr, init)
        worst = max(worst, abs(fit.peaks[0].center - 6750.0), abs(fit.peaks[1].center - 6754.0))
    assert worst < GAMMA / 5


def test_failed_fit_keeps_initial_values():
    eig = toy_system([6750.0], [1.0])
    tr = synth_reflection(eig, 0, np.linspace(6740, 6760, 401), GAMMA)
    init = [ResonancePeak(6756.0, 0.5, 0.1)]
    fit = fit_lorentzians(tr, init, max_iter=1)
    assert not fit.peaks[0].converged
    assert fit.peaks[0].center == 6756.0 and fit.peaks[0].width == 0.5


def test_ldos_completeness_and_positivity(e1_chain):
    _, eig, _ = e1_chain
    nu = np.arange(eig.frequencies.min() - 400, eig.frequencies.max() + 400, 0.05)
    m = ldos_map(eig, np.arange(60), nu, GAMMA)
    assert np.all(m.values >= 0)
    assert np.allclose(m.integrals(), 1.0, atol=0.01)
    assert m.integrals().sum() == pytest.approx(60, rel=0.01)


def test_ldos_linear_in_weights():
    nu = np.linspace(6700, 6800, 501)
    a = ldos_map(toy_system([6740.0, 6760.0], [0.2, 0.8]), [0], nu).values
    b = ldos_map(toy_system([6740.0, 6760.0], [0.2, 0.0]), [0], nu).values
    c = ldos_map(toy_system([6740.0, 6760.0], [0.0, 0.8]), [0], nu).values
    assert np.allclose(a, b + c)


def test_dos_has_ten_window_ridges(e1_chain):
    spec, eig, _ = e1_chain
    lo, hi = spec.window
    nu = np.arange(lo - 10, hi + 10, 0.02)
    dos = ldos_map(eig, np.arange(30), nu, GAMMA).dos_trace()
    peaks = [p for p in detect_peaks(dos, 1e-3) if lo < p.center < hi]
    assert len(peaks) == 10
    assert np.allclose(sorted(p.center for p in peaks), eig.window_frequencies, atol=GAMMA / 10)


def test_extraction_matches_generating_intensity(e1_chain):
    spec, eig, _ = e1_chain
    lo, hi = spec.window
    nu = np.arange(lo - 20, hi + 20, 0.02)
    traces = synth_all_sites(eig, nu, GAMMA)
    total = SpectrumTrace(-1, nu, sum(t.absorption() for t in traces))
    fit = fit_lorentzians(total, detect_peaks(total, 0.01))
    n3 = eig.window_indices[2]
    prof = extract_intensities(traces, ResonancePeak(eig.frequencies[n3], GAMMA, 1.0), fit.peaks)
    truth = eig.vectors[:, n3] ** 2
    assert np.max(np.abs(prof.intensity - truth)) < 0.01
    assert prof.intensity.sum() == pytest.approx(1.0)
    # boundary behaviour: B weak at the left wall, A weak at the right wall
    assert prof.b[0] < prof.a[0] and prof.a[-1] < prof.b[-1]


def test_extraction_with_noise_mostly_within_bound(e1_chain):
    spec, eig, _ = e1_chain
    from kleinbox.pipeline import spectroscopy_round_trip

    worst = [spectroscopy_round_trip(eig, GAMMA, 0.01, seed).intensity_errors[2] for seed in range(20)]
    assert np.mean(np.array(worst) < 0.05) >= 0.95


def test_extraction_fails_when_fits_fail(e1_chain):
    _, eig, _ = e1_chain
    nu = np.linspace(6720, 6790, 701)
    traces = synth_all_sites(eig, nu)[:4]
    dup = [ResonancePeak(6750.0, 2.0, 1.0), ResonancePeak(6750.0, 2.0, 1.0)]
    with pytest.raises(RuntimeError, match="converged"):
        extract_intensities(traces, 0, dup)


def test_noise_floor_estimate(rng):
    y = np.sin(np.linspace(0, 3, 5000)) + 0.02 * rng.normal(size=5000)
    assert noise_floor(y) == pytest.approx(0.02, rel=0.1)


def test_trace_csv_roundtrip(tmp_path, e1_chain):
    _, eig, _ = e1_chain
    tr = synth_reflection(eig, 2, np.linspace(6700, 6800, 101), noise_sigma=0.01, seed=1)
    path = write_trace(tmp_path / "t", tr)
    header, data = read_table(path)
    assert header == ["freq_mhz", "re", "im"]
    assert np.array_equal(data[:, 0], tr.freq)
    assert np.array_equal(data[:, 1] + 1j * data[:, 2], tr.values)


def test_svg_is_well_formed(tmp_path):
    x = np.linspace(0, 1, 50)
    p1 = svg_lines(tmp_path / "a.svg", x, [x**2, np.sin(x)], ["sq", "sin"], vlines=(0.5,))
    p2 = svg_heatmap(tmp_path / "b.svg", np.arange(5), x, np.outer(x, np.ones(5)), hlines=(0.3,))
    for p in (p1, p2):
        assert ET.parse(p).getroot().tag.endswith("svg")


@settings(max_examples=30, deadline=None)
@given(
    c=st.floats(6740.0, 6760.0),
    w=st.floats(0.5, 4.0),
    a=st.floats(0.05, 1.0),
)
def test_fit_recovers_any_clean_peak(c, w, a):
    nu = np.linspace(6720, 6780, 3001)
    tr = SpectrumTrace(0, nu, lorentzian(nu, c, w, a))
    fit = fit_lorentzians(tr, detect_peaks(tr, 0.01), baseline=False)
    p = fit.peaks[0]
    assert p.center == pytest.approx(c, abs=1e-6 * w)
    assert p.width == pytest.approx(w, rel=1e-6)
    assert p.amplitude == pytest.approx(a, rel=1e-6)
