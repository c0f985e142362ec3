"""Forward and inverse runs: disordered half chains, parameter recovery, ensembles.

The two halves of a disordered chain share one set of draws, so the left
and right "samples" of a seed are the halves of the same physical chain
measured separately.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DiracParams, Geometry
from .dirac import DomainError
from .fitting import (
    DispersionFit,
    fit_dispersion_hole,
    fit_dispersion_particle,
    fit_level_sequence,
)
from .lattice import (
    ChainSpec,
    LatticeEigensystem,
    SiteMap,
    Tridiagonal,
    build_hamiltonian,
    chain_from_params,
    eigensolve,
    estimate_wavevector,
    site_map,
    sublattice_envelopes,
)
from .spectroscopy import (
    DEFAULT_GAMMA,
    detect_peaks,
    noise_floor,
    site_amplitudes,
    fit_lorentzians,
    SpectrumTrace,
    synth_all_sites,
)

__all__ = [
    "HalfChainData",
    "Recovery",
    "EnsembleSummary",
    "RoundTrip",
    "thread_count",
    "split_halves",
    "half_chain_data",
    "recover_parameters",
    "run_ensemble",
    "spectroscopy_round_trip",
]


def thread_count(default: int | None = None) -> int:
    """Worker count: KLEINBOX_THREADS if set, else min(8, cpu count)."""
    env = os.environ.get("KLEINBOX_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"KLEINBOX_THREADS must be an integer, got {env!r}") from None
        return max(n, 1)
    return default or min(8, os.cpu_count() or 1)


def split_halves(spec: ChainSpec) -> tuple[Tridiagonal, Tridiagonal]:
    """Left-alone and right-alone Hamiltonians cut from one disordered chain."""
    H = build_hamiltonian(spec)
    n_l = 2 * spec.n_left
    left = Tridiagonal(H.diagonal[:n_l], H.offdiagonal[: n_l - 1], H.window)
    right = Tridiagonal(H.diagonal[n_l:], H.offdiagonal[n_l:], H.window)
    return left, right


@dataclass
class HalfChainData:
    side: str
    eig: LatticeEigensystem
    sites: SiteMap
    levels: np.ndarray  # window frequencies, MHz
    wavevectors: np.ndarray  # 1/mm

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.levels, self.wavevectors])


def half_chain_data(H: Tridiagonal, side: str, n_dimers: int, a0: float) -> HalfChainData:
    """Window levels of one half chain and their envelope wavevectors."""
    eig = eigensolve(H)
    sm = SiteMap(n_dimers, 0, a0) if side == "left" else SiteMap(0, n_dimers, a0)
    idx = eig.window_indices
    ks = np.array([estimate_wavevector(sublattice_envelopes(eig, n, sm), "all").k for n in idx])
    return HalfChainData(side, eig, sm, eig.frequencies[idx], ks)


@dataclass
class Recovery:
    seed: int
    particle: DispersionFit
    hole: DispersionFit
    particle_seq: DispersionFit | None
    hole_seq: DispersionFit | None

    @property
    def delta_f(self) -> float:
        return self.hole.dirac_point - self.particle.dirac_point

    @property
    def delta_f_seq(self) -> float:
        if self.particle_seq is None or self.hole_seq is None:
            return np.nan
        return self.hole_seq.dirac_point - self.particle_seq.dirac_point

    def row(self, a0: float) -> dict:
        out = {
            "seed": self.seed,
            "mc2_mhz": self.particle.mc2,
            "hbar_c_over_a0_mhz": self.particle.hbar_c / a0,
            "f0_mhz": self.particle.dirac_point,
            "delta_f_mhz": self.delta_f,
            "converged": bool(self.particle.converged and self.hole.converged),
        }
        if self.particle_seq is not None and self.hole_seq is not None:
            out.update(
                seq_mc2_mhz=self.particle_seq.mc2,
                seq_hbar_c_over_a0_mhz=self.particle_seq.hbar_c / a0,
                seq_f0_mhz=self.particle_seq.dirac_point,
                seq_delta_f_mhz=self.delta_f_seq,
            )
        return out


def recover_parameters(
    p: DiracParams,
    geometry: Geometry | tuple[int, int],
    disorder_sigma: float,
    seed: int,
    permute: bool = False,
    sequence: bool = True,
) -> Recovery:
    """Simulate both halves of one disordered chain and fit each branch.

    The particle fit uses the left half, the hole fit the right half; the
    k-free sequence fits run on the same levels when ``sequence`` is set.
    """
    if not isinstance(geometry, Geometry):
        geometry = Geometry(*geometry)
    spec = chain_from_params(geometry, p, disorder_sigma, seed, permute)
    h_left, h_right = split_halves(spec)
    a0 = p.lattice_const
    left = half_chain_data(h_left, "left", geometry.n_left, a0)
    right = half_chain_data(h_right, "right", geometry.n_right, a0)
    if len(left.levels) < 3 or len(right.levels) < 3:
        raise DomainError(
            f"seed {seed}: too few window levels ({len(left.levels)} left, {len(right.levels)} right)"
        )
    part = fit_dispersion_particle(left.pairs)
    hole = fit_dispersion_hole(right.pairs)
    pseq = hseq = None
    if sequence and len(left.levels) >= 4 and len(right.levels) >= 4:
        pseq = fit_level_sequence(left.levels, left.sites.length, "particle")
        hseq = fit_level_sequence(right.levels, right.sites.length, "hole")
    return Recovery(int(seed), part, hole, pseq, hseq)


@dataclass
class EnsembleSummary:
    truth: dict
    rows: list[dict] = field(repr=False)
    median: dict
    spread: dict
    failures: list[tuple[int, str]]

    def table(self) -> list[dict]:
        """One row per parameter: truth, median, robust spread (1.4826 MAD)."""
        return [
            {"parameter": k, "truth": self.truth.get(k, np.nan), "median": self.median[k], "spread": self.spread[k]}
            for k in self.median
        ]


def run_ensemble(
    p: DiracParams,
    geometry: Geometry | tuple[int, int],
    disorder_sigma: float,
    seeds,
    permute: bool = False,
    threads: int | None = None,
) -> EnsembleSummary:
    """Parameter recovery over many seeds, results ordered by seed."""
    seeds = [int(s) for s in seeds]
    threads = threads or thread_count()

    def one(seed):
        try:
            return recover_parameters(p, geometry, disorder_sigma, seed, permute)
        except (DomainError, ValueError) as exc:
            return (seed, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    a0 = p.lattice_const
    rows = [r.row(a0) for r in results if isinstance(r, Recovery)]
    failures = [r for r in results if not isinstance(r, Recovery)]
    keys = [k for k in (rows[0] if rows else {}) if k not in ("seed", "converged")]
    med = {k: float(np.nanmedian([r[k] for r in rows])) for k in keys}
    spr = {
        k: float(1.4826 * np.nanmedian(np.abs(np.array([r[k] for r in rows]) - med[k])))
        for k in keys
    }
    truth = {
        "mc2_mhz": p.mass_energy,
        "hbar_c_over_a0_mhz": p.hbar_c / a0,
        "f0_mhz": p.dirac_point,
        "delta_f_mhz": p.step_height,
        "seq_mc2_mhz": p.mass_energy,
        "seq_hbar_c_over_a0_mhz": p.hbar_c / a0,
        "seq_f0_mhz": p.dirac_point,
        "seq_delta_f_mhz": p.step_height,
    }
    return EnsembleSummary(truth, rows, med, spr, failures)


@dataclass
class RoundTrip:
    true_levels: np.ndarray
    fitted_levels: np.ndarray
    center_errors: np.ndarray
    intensity_errors: np.ndarray  # max-abs per window level
    profiles: list = field(repr=False)


def spectroscopy_round_trip(
    eig: LatticeEigensystem,
    gamma: float = DEFAULT_GAMMA,
    noise_sigma: float = 0.0,
    seed: int = 0,
    grid_step: float = 0.02,
    margin: float = 20.0,
    prominence: float = 0.01,
) -> RoundTrip:
    """synth -> detect -> fit -> extract for every window level.

    Peaks are detected and fitted on the site-summed absorption; per-site
    amplitudes are then refitted with those line shapes fixed.  The
    detection threshold is ``prominence`` or eight noise rms, whichever
    is larger.
    """
    lo, hi = eig.window
    grid = np.arange(lo - margin, hi + margin, grid_step)
    traces = synth_all_sites(eig, grid, gamma, 1.0, noise_sigma, seed)
    total = SpectrumTrace(-1, grid, sum(t.absorption() for t in traces))
    threshold = max(prominence, 8.0 * noise_floor(total.values))
    fit = fit_lorentzians(total, detect_peaks(total, threshold))
    peaks = fit.peaks
    centers = np.array([q.center for q in peaks])
    wi = eig.window_indices
    true = eig.frequencies[wi]
    amps = site_amplitudes(traces, peaks)
    fitted, cerr, ierr, profiles = [], [], [], []
    for n, f in zip(wi, true):
        j = int(np.argmin(np.abs(centers - f)))
        fitted.append(centers[j])
        cerr.append(centers[j] - f)
        prof = amps.profile(j)
        profiles.append(prof)
        ierr.append(float(np.abs(prof.intensity - eig.vectors[:, n] ** 2).max()))
    return RoundTrip(true, np.array(fitted), np.array(cerr), np.array(ierr), profiles)
