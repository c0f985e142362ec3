"""Synthetic per-site spectroscopy: reflection traces, LDOS maps, peak fits.

The reflection model is a Breit-Wigner stand-in for the measured S11 of a
probe antenna above one resonator.  For a level at f_n with weight w_n at
the probed site,

    S(nu) = 1 - i * coupling * sum_n w_n (G/2) / (nu - f_n + i G/2),

so Re(1 - S) is a sum of Lorentzians of full width G and peak height
coupling * w_n.  All fits in this module work on that absorption signal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .fitting import lm_minimize
from .lattice import LatticeEigensystem

__all__ = [
    "DEFAULT_GAMMA",
    "SpectrumTrace",
    "ResonancePeak",
    "LorentzianFit",
    "LdosMap",
    "IntensityProfile",
    "lorentzian",
    "synth_reflection",
    "synth_all_sites",
    "ldos_map",
    "noise_floor",
    "detect_peaks",
    "fit_lorentzians",
    "SiteAmplitudes",
    "site_amplitudes",
    "extract_intensities",
]

DEFAULT_GAMMA = 2.0


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) < 3:
        raise ValueError("frequency grid needs at least 3 points")
    d = np.diff(g)
    if np.any(d <= 0):
        raise ValueError("frequency grid must be strictly ascending")
    if np.ptp(d) > 1e-9 * max(abs(g).max(), 1.0):
        raise ValueError("frequency grid must be uniform")
    return g


@dataclass
class SpectrumTrace:
    """Values on a uniform ascending grid: complex S(nu) or a real LDOS."""

    probe_site: int
    freq: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.freq = _check_grid(self.freq)
        self.values = np.asarray(self.values)
        if self.values.shape != self.freq.shape:
            raise ValueError("values and grid differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trace contains non-finite values")

    @property
    def step(self) -> float:
        return float(self.freq[1] - self.freq[0])

    def absorption(self) -> np.ndarray:
        """Re(1 - S) for reflection traces, the values themselves otherwise."""
        if np.iscomplexobj(self.values):
            return (1.0 - self.values).real
        return self.values.astype(float)


@dataclass
class ResonancePeak:
    center: float
    width: float
    amplitude: float
    converged: bool = True
    stderr: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"peak width must be positive, got {self.width}")
        if self.amplitude < 0:
            raise ValueError(f"peak amplitude must be >= 0, got {self.amplitude}")


def lorentzian(nu, center, width, amplitude=1.0):
    """Peak-height-normalized Lorentzian with full width ``width``."""
    h2 = (0.5 * width) ** 2
    return amplitude * h2 / ((np.asarray(nu) - center) ** 2 + h2)


def _site_weights(eig: LatticeEigensystem, site: int) -> np.ndarray:
    if not 0 <= site < eig.vectors.shape[0]:
        raise IndexError(f"site {site} out of range 0..{eig.vectors.shape[0] - 1}")
    return eig.vectors[site, :] ** 2


def synth_reflection(
    eig: LatticeEigensystem,
    site: int,
    grid,
    gamma: float = DEFAULT_GAMMA,
    coupling: float = 1.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> SpectrumTrace:
    """Reflection trace of a probe above ``site`` (0-based, order A1, B1, ...).

    Noise is complex Gaussian with E|n|^2 = noise_sigma^2, drawn from a
    stream keyed on (seed, site) so traces do not depend on call order.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    nu = _check_grid(grid)
    w = _site_weights(eig, site)
    hg = 0.5 * gamma
    resp = (w * hg) / (nu[:, None] - eig.frequencies[None, :] + 1j * hg)
    s = 1.0 - 1j * coupling * resp.sum(axis=1)
    if noise_sigma > 0:
        rng = np.random.default_rng([int(seed), int(site)])
        s = s + (noise_sigma / np.sqrt(2)) * (
            rng.standard_normal(len(nu)) + 1j * rng.standard_normal(len(nu))
        )
    return SpectrumTrace(int(site), nu, s)


def synth_all_sites(eig, grid, gamma=DEFAULT_GAMMA, coupling=1.0, noise_sigma=0.0, seed=0):
    return [
        synth_reflection(eig, j, grid, gamma, coupling, noise_sigma, seed)
        for j in range(eig.vectors.shape[0])
    ]


@dataclass
class LdosMap:
    sites: np.ndarray
    freq: np.ndarray
    values: np.ndarray  # (n_sites, n_freq)
    gamma: float

    @property
    def dos(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def dos_trace(self) -> SpectrumTrace:
        return SpectrumTrace(-1, self.freq, self.dos)

    def integrals(self) -> np.ndarray:
        """Frequency integral of each row (trapezoid)."""
        return np.trapezoid(self.values, self.freq, axis=1)


def ldos_map(eig: LatticeEigensystem, sites, grid, gamma: float = DEFAULT_GAMMA) -> LdosMap:
    """LDOS(site, nu) = sum_n |psi_n(site)|^2 L_gamma(nu - f_n).

    L_gamma has unit area and full width ``gamma``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    nu = _check_grid(grid)
    sites = np.atleast_1d(np.asarray(sites, dtype=int))
    hg = 0.5 * gamma
    kern = (hg / np.pi) / ((nu[None, :] - eig.frequencies[:, None]) ** 2 + hg * hg)
    weights = eig.vectors[sites, :] ** 2
    return LdosMap(sites, nu, weights @ kern, float(gamma))


def noise_floor(y) -> float:
    """Robust white-noise rms from first differences (1.4826 MAD / sqrt 2)."""
    d = np.diff(np.asarray(y, float))
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / np.sqrt(2))


def detect_peaks(trace: SpectrumTrace, prominence_threshold: float) -> list[ResonancePeak]:
    """Local maxima of the absorption signal above a prominence threshold.

    Centers and heights come from a parabola through the three samples
    around each maximum; widths from the half-prominence crossing.
    """
    y = trace.absorption()
    idx, props = signal.find_peaks(y, prominence=prominence_threshold)
    if len(idx) == 0:
        return []
    widths = signal.peak_widths(y, idx, rel_height=0.5, prominence_data=(
        props["prominences"], props["left_bases"], props["right_bases"]))[0]
    h = trace.step
    peaks = []
    for i, wd in zip(idx, widths):
        c, amp = trace.freq[i], y[i]
        if 0 < i < len(y) - 1:
            y0, y1, y2 = y[i - 1], y[i], y[i + 1]
            denom = y0 - 2 * y1 + y2
            if denom < 0:
                off = 0.5 * (y0 - y2) / denom
                c = trace.freq[i] + off * h
                amp = y1 - 0.25 * (y0 - y2) * off
        peaks.append(ResonancePeak(float(c), float(max(wd * h, h)), float(max(amp, 0.0))))
    return peaks


@dataclass
class LorentzianFit:
    peaks: list[ResonancePeak]
    baseline: float
    residual_norm: float
    covariance: np.ndarray | None
    converged: bool
    message: str = ""


def _multi_model(nu, params, n_peaks, baseline):
    out = np.full_like(nu, params[-1] if baseline else 0.0)
    cols = []
    for j in range(n_peaks):
        c, w, a = params[3 * j : 3 * j + 3]
        h2 = 0.25 * w * w
        den = (nu - c) ** 2 + h2
        shape = h2 / den
        out += a * shape
        dc = a * shape * 2 * (nu - c) / den
        dw = a * (0.5 * w / den) * (1 - shape)
        cols += [dc, dw, shape]
    if baseline:
        cols.append(np.ones_like(nu))
    return out, np.column_stack(cols) if cols else np.zeros((len(nu), 0))


def fit_lorentzians(
    trace: SpectrumTrace,
    initial: list[ResonancePeak],
    baseline: bool = True,
    fit_range: tuple[float, float] | None = None,
    max_iter: int = 200,
) -> LorentzianFit:
    """Joint least-squares fit of Lorentzians (center, width, amplitude).

    A peak whose refined center drifts by more than its initial width, or
    whose fit fails, is flagged and keeps its initial values.
    """
    if not initial:
        raise ValueError("fit_lorentzians needs at least one initial peak")
    nu, y = trace.freq, trace.absorption()
    if fit_range is not None:
        sel = (nu >= fit_range[0]) & (nu <= fit_range[1])
        nu, y = nu[sel], y[sel]
    n = len(initial)
    x0 = [v for p in initial for v in (p.center, p.width, p.amplitude)]
    if baseline:
        x0.append(0.0)
    res = lm_minimize(
        lambda p: _multi_model(nu, p, n, baseline)[0] - y,
        np.array(x0),
        lambda p: _multi_model(nu, p, n, baseline)[1],
        max_iter=max_iter,
    )
    stderr = np.sqrt(np.abs(np.diag(res.covariance))) if res.covariance is not None else None
    peaks = []
    for j, p0 in enumerate(initial):
        c, w, a = res.params[3 * j : 3 * j + 3]
        ok = res.converged and w != 0 and a >= 0 and abs(c - p0.center) <= p0.width
        if ok:
            se = stderr[3 * j : 3 * j + 3] if stderr is not None else None
            peaks.append(ResonancePeak(float(c), float(abs(w)), float(a), True, se))
        else:
            peaks.append(ResonancePeak(p0.center, p0.width, p0.amplitude, False))
    return LorentzianFit(
        peaks,
        float(res.params[-1]) if baseline else 0.0,
        res.residual_norm,
        res.covariance,
        res.converged,
        res.message,
    )


@dataclass
class IntensityProfile:
    """Normalized per-site intensity of one resonance, split by sublattice."""

    level: ResonancePeak
    intensity: np.ndarray  # site order, sums to 1 over converged sites
    converged: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return self.intensity[0::2]

    @property
    def b(self) -> np.ndarray:
        return self.intensity[1::2]


def _site_amplitudes(nu, y, peaks):
    """Linear amplitude fit with fixed centers/widths plus a constant."""
    n = len(peaks)

    def model(p):
        out = np.full_like(nu, p[-1])
        for j, pk in enumerate(peaks):
            out += p[j] * lorentzian(nu, pk.center, pk.width)
        return out

    basis = np.column_stack([lorentzian(nu, pk.center, pk.width) for pk in peaks] + [np.ones_like(nu)])
    x0 = np.zeros(n + 1)
    return lm_minimize(lambda p: model(p) - y, x0, lambda p: basis)


@dataclass
class SiteAmplitudes:
    """Amplitude of every peak at every site, from fixed-shape fits."""

    peaks: list[ResonancePeak]
    amplitudes: np.ndarray  # (n_sites, n_peaks), clipped at zero
    converged: np.ndarray  # per site

    def profile(self, level: ResonancePeak | int) -> "IntensityProfile":
        if isinstance(level, (int, np.integer)):
            level = self.peaks[int(level)]
        centers = np.array([p.center for p in self.peaks])
        j = int(np.argmin(np.abs(centers - level.center)))
        ok = self.converged
        if ok.sum() < 0.5 * len(ok):
            raise RuntimeError(
                f"only {ok.sum()} of {len(ok)} site fits converged for level at {level.center:.3f} MHz"
            )
        amps = np.where(ok, self.amplitudes[:, j], 0.0)
        total = amps.sum()
        if total <= 0:
            raise RuntimeError("extracted intensities vanish at every site")
        return IntensityProfile(self.peaks[j], amps / total, ok.copy())


def site_amplitudes(
    traces: list[SpectrumTrace],
    peaks: list[ResonancePeak],
    fit_range: tuple[float, float] | None = None,
) -> SiteAmplitudes:
    """Refit only the amplitudes (plus a constant) of ``peaks`` at every site."""
    if not peaks:
        raise ValueError("need at least one peak")
    amps = np.zeros((len(traces), len(peaks)))
    ok = np.zeros(len(traces), dtype=bool)
    for i, tr in enumerate(traces):
        nu, y = tr.freq, tr.absorption()
        if fit_range is not None:
            sel = (nu >= fit_range[0]) & (nu <= fit_range[1])
            nu, y = nu[sel], y[sel]
        res = _site_amplitudes(nu, y, peaks)
        ok[i] = res.converged
        amps[i] = np.maximum(res.params[:-1], 0.0)
    return SiteAmplitudes(list(peaks), amps, ok)


def extract_intensities(
    traces: list[SpectrumTrace],
    level: ResonancePeak | int,
    peaks: list[ResonancePeak],
    fit_range: tuple[float, float] | None = None,
) -> IntensityProfile:
    """Per-site amplitude of one resonance, renormalized to unit sum.

    Centers and widths are held at ``peaks`` (e.g. from a joint fit of the
    summed spectrum) and every site refits only the amplitudes, which keeps
    weak sites from pulling the line shape.  ``level`` is a peak or an
    index into ``peaks``.  Raises RuntimeError when fewer than half of the
    site fits converge.
    """
    return site_amplitudes(traces, peaks, fit_range).profile(level)
