"""SSH dimer chain: Hamiltonian, eigensystem, envelopes, lattice/continuum comparison.

Site order is A_1, B_1, A_2, B_2, ...; A_j sits at (j - 1/2) a0 and B_j at
j a0.  Bonds alternate v (inside a dimer) and w (between dimers), starting
with v, so for v > w the chain is in the trivial phase.  Near the gap the
eigenvectors carry a fast (-1)^j factor; envelopes are reported with it
removed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, optimize

from .core import DiracParams, Geometry
from .dirac import SpinorField, U, find_levels, NumericalError

__all__ = [
    "LevelMismatchError",
    "ChainSpec",
    "Tridiagonal",
    "LatticeEigensystem",
    "SiteMap",
    "Envelope",
    "WavevectorEstimate",
    "LevelComparison",
    "IntensityComparison",
    "chain_from_params",
    "disorder_draws",
    "build_hamiltonian",
    "eigensolve",
    "site_map",
    "sublattice_envelopes",
    "dominant_wavevector",
    "estimate_wavevector",
    "compare_levels",
    "compare_intensities",
    "continuum_site_intensities",
    "boundary_extrapolation",
]


class LevelMismatchError(ValueError):
    """Lattice and continuum disagree on the number of window levels."""


@dataclass(frozen=True)
class ChainSpec:
    n_left: int
    n_right: int
    v: float
    w: float
    onsite_left: float
    onsite_right: float
    disorder_sigma: float = 0.0
    seed: int = 0
    permute: bool = False

    def __post_init__(self):
        if self.n_left < 0 or self.n_right < 0 or self.n_left + self.n_right == 0:
            raise ValueError(f"bad dimer counts ({self.n_left}, {self.n_right})")
        if not self.v > self.w > 0:
            raise ValueError(f"need v > w > 0, got v={self.v}, w={self.w}")
        if self.disorder_sigma < 0:
            raise ValueError("disorder_sigma must be >= 0")

    @property
    def n_sites(self) -> int:
        return 2 * (self.n_left + self.n_right)

    @property
    def mass_gap(self) -> float:
        return self.v - self.w

    @property
    def window(self) -> tuple[float, float]:
        """Absolute Klein window (onsite_left + |v-w|, onsite_right - |v-w|)."""
        return (self.onsite_left + self.mass_gap, self.onsite_right - self.mass_gap)

    def left_alone(self) -> "ChainSpec":
        return replace(self, n_right=0)

    def right_alone(self) -> "ChainSpec":
        return replace(self, n_left=0)


def chain_from_params(
    counts: Geometry | tuple[int, int],
    p: DiracParams,
    disorder_sigma: float = 0.0,
    seed: int = 0,
    permute: bool = False,
) -> ChainSpec:
    """Chain equivalent to ``p``: w = hbar_c / a0, v = w + mc^2.

    On-site frequencies are f0 on the left and f0 + V0 on the right.
    ``counts`` may have a zero entry for an isolated half chain.
    """
    if isinstance(counts, Geometry):
        counts = (counts.n_left, counts.n_right)
    w = p.hbar_c / p.lattice_const
    return ChainSpec(
        int(counts[0]),
        int(counts[1]),
        v=w + p.mass_energy,
        w=w,
        onsite_left=p.dirac_point,
        onsite_right=p.dirac_point + p.step_height,
        disorder_sigma=disorder_sigma,
        seed=seed,
        permute=permute,
    )


def disorder_draws(spec: ChainSpec) -> np.ndarray:
    """Per-site on-site offsets (MHz), optionally permuted within each side.

    Draws for a given seed are the same regardless of ``permute``; the
    permutation uses an independent stream of the same seed.
    """
    n_l, n_r = 2 * spec.n_left, 2 * spec.n_right
    if spec.disorder_sigma == 0:
        return np.zeros(n_l + n_r)
    draw_ss, perm_ss = np.random.SeedSequence(spec.seed).spawn(2)
    draws = np.random.default_rng(draw_ss).normal(0.0, spec.disorder_sigma, n_l + n_r)
    if spec.permute:
        rng = np.random.default_rng(perm_ss)
        draws = np.concatenate([rng.permutation(draws[:n_l]), rng.permutation(draws[n_l:])])
    return draws


@dataclass(frozen=True)
class Tridiagonal:
    diagonal: np.ndarray
    offdiagonal: np.ndarray
    window: tuple[float, float] = (np.nan, np.nan)

    def dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.offdiagonal, 1)
            + np.diag(self.offdiagonal, -1)
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal[:, None] * x if x.ndim == 2 else self.diagonal * x
        e = self.offdiagonal[:, None] if x.ndim == 2 else self.offdiagonal
        y = y.copy()
        y[:-1] += e * x[1:]
        y[1:] += e * x[:-1]
        return y

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.sqrt(np.sum(self.diagonal**2) + 2 * np.sum(self.offdiagonal**2)))


def build_hamiltonian(spec: ChainSpec) -> Tridiagonal:
    n_l, n_r = 2 * spec.n_left, 2 * spec.n_right
    diag = np.concatenate([np.full(n_l, spec.onsite_left), np.full(n_r, spec.onsite_right)])
    diag = diag + disorder_draws(spec)
    off = np.where(np.arange(n_l + n_r - 1) % 2 == 0, spec.v, spec.w).astype(float)
    return Tridiagonal(diag, off, spec.window)


@dataclass(frozen=True)
class LatticeEigensystem:
    frequencies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    classification: np.ndarray  # 'hole_band' | 'window' | 'particle_band'
    window: tuple[float, float]

    @property
    def window_indices(self) -> np.ndarray:
        return np.flatnonzero(self.classification == "window")

    @property
    def window_frequencies(self) -> np.ndarray:
        return self.frequencies[self.window_indices]


def eigensolve(H: Tridiagonal, window: tuple[float, float] | None = None) -> LatticeEigensystem:
    """All eigenpairs of a symmetric tridiagonal matrix, ascending.

    Levels are tagged relative to ``window`` (default: the window carried by
    ``H``).
    """
    try:
        f, vec = linalg.eigh_tridiagonal(H.diagonal, H.offdiagonal)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"tridiagonal eigensolve failed: {exc}") from exc
    resid = np.linalg.norm(H.matvec(vec) - vec * f, axis=0)
    bad = np.flatnonzero(resid > 1e-9 * H.norm())
    if len(bad):
        raise NumericalError(
            f"eigenpair {bad[0]} residual {resid[bad[0]]:.3e} exceeds 1e-9*||H||"
        )
    window = H.window if window is None else window
    lo, hi = window
    cls = np.where(f <= lo, "hole_band", np.where(f >= hi, "particle_band", "window"))
    if not np.all(np.isfinite(window)):
        cls = np.full(len(f), "unclassified")
    return LatticeEigensystem(f, vec, cls, tuple(window))


@dataclass(frozen=True)
class SiteMap:
    n_left: int
    n_right: int
    a0: float

    @property
    def n_dimers(self) -> int:
        return self.n_left + self.n_right

    @property
    def x_a(self) -> np.ndarray:
        return (np.arange(1, self.n_dimers + 1) - 0.5) * self.a0

    @property
    def x_b(self) -> np.ndarray:
        return np.arange(1, self.n_dimers + 1) * self.a0

    @property
    def x_sites(self) -> np.ndarray:
        """Coordinates in site order A_1, B_1, A_2, ..."""
        out = np.empty(2 * self.n_dimers)
        out[0::2], out[1::2] = self.x_a, self.x_b
        return out

    @property
    def length(self) -> float:
        """Position of the ghost A_{N+1} site."""
        return (self.n_dimers + 0.5) * self.a0

    @property
    def step_position(self) -> float:
        return (self.n_left + 0.25) * self.a0


def site_map(spec: ChainSpec, a0: float) -> SiteMap:
    return SiteMap(spec.n_left, spec.n_right, float(a0))


@dataclass(frozen=True)
class Envelope:
    """Sublattice amplitudes (staggering removed) and intensities of one level."""

    frequency: float
    x_a: np.ndarray
    amp_a: np.ndarray
    x_b: np.ndarray
    amp_b: np.ndarray
    sites: SiteMap

    @property
    def intensity_a(self) -> np.ndarray:
        return self.amp_a**2

    @property
    def intensity_b(self) -> np.ndarray:
        return self.amp_b**2


def sublattice_envelopes(eig: LatticeEigensystem, n: int, sites: SiteMap) -> Envelope:
    vec = eig.vectors[:, n]
    if len(vec) != 2 * sites.n_dimers:
        raise ValueError("site map does not match the eigensystem size")
    stagger = (-1.0) ** np.arange(1, sites.n_dimers + 1)
    return Envelope(
        float(eig.frequencies[n]),
        sites.x_a,
        vec[0::2] * stagger,
        sites.x_b,
        vec[1::2] * stagger,
        sites,
    )


def boundary_extrapolation(env: Envelope) -> tuple[float, float]:
    """Extension of the B envelope to x=0 and the A envelope to x=d.

    Inside one uniform region each sublattice envelope is a discrete
    standing wave, so a cos+sin fit at the segment's dominant wavevector
    (sites between the wall and the step) extends it to the ghost site.
    Both values are relative to the largest envelope amplitude; a chain
    obeying the ghost-site boundary conditions gives values near zero.
    """
    sites = env.sites
    scale = max(np.abs(env.amp_a).max(), np.abs(env.amp_b).max())
    a = sites.step_position if sites.n_left and sites.n_right else np.inf

    def extend(x, y, x_wall):
        k = dominant_wavevector(x, y).k
        M = np.column_stack([np.cos(k * x), np.sin(k * x)])
        coef, *_ = np.linalg.lstsq(M, y, rcond=None)
        return abs(coef[0] * np.cos(k * x_wall) + coef[1] * np.sin(k * x_wall))

    left_sel = env.x_b < a
    right_sel = env.x_a > (a if np.isfinite(a) else -np.inf)
    left = extend(env.x_b[left_sel], env.amp_b[left_sel], 0.0)
    right = extend(env.x_a[right_sel], env.amp_a[right_sel], sites.length)
    return float(left / scale), float(right / scale)


@dataclass(frozen=True)
class WavevectorEstimate:
    k: float  # least-squares sinusoid fit (1/mm)
    k_dft: float  # zero-padded DFT peak, parabolic interpolation
    k_peaks: float  # n_peaks * pi / L
    n_peaks: int
    segment_length: float


def _sinusoid_misfit(k, x, y, offset):
    cols = [np.cos(k * x), np.sin(k * x)]
    if offset:
        cols.append(np.ones_like(x))
    M = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return float(np.sum((M @ coef - y) ** 2))


def dominant_wavevector(
    x: np.ndarray, y: np.ndarray, intensity: bool = False, pad: int = 16
) -> WavevectorEstimate:
    """Dominant spatial frequency of uniformly sampled ``y(x)``.

    A zero-padded DFT peak (refined by a parabola through the three highest
    bins) gives a first estimate.  Segments shorter than one period cannot
    be resolved that way, so the returned ``k`` comes from a least-squares
    fit of a cos+sin pair, scanned over (0, Nyquist] and polished locally.
    With ``intensity=True``, ``y`` is a squared envelope: the fit includes
    an offset and the fitted frequency is halved.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 4:
        raise ValueError(f"segment too short: {len(x)} samples, need >= 4")
    dx = float(np.mean(np.diff(x)))
    length = float(x[-1] - x[0] + dx)
    nyq = np.pi / dx

    nfft = pad * int(2 ** np.ceil(np.log2(len(y))))
    yy = y - y.mean() if intensity else y
    spec = np.abs(np.fft.rfft(yy, nfft))
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, dx)
    i = int(np.argmax(spec))
    if 0 < i < len(spec) - 1:
        a, b, c = spec[i - 1], spec[i], spec[i + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    k_dft = (i + shift) * (freqs[1] - freqs[0])

    kgrid = np.linspace(0.25 * np.pi / length, nyq, 800)
    misfit = np.array([_sinusoid_misfit(k, x, y, intensity) for k in kgrid])
    j = int(np.argmin(misfit))
    lo, hi = kgrid[max(j - 1, 0)], kgrid[min(j + 1, len(kgrid) - 1)]
    res = optimize.minimize_scalar(
        _sinusoid_misfit, bounds=(lo, hi), args=(x, y, intensity), method="bounded",
        options={"xatol": 1e-10 * nyq},
    )
    k = float(res.x)

    mag = np.abs(y) if not intensity else y
    peaks = np.flatnonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])) + 1
    n_peaks = len(peaks) + int(mag[0] > mag[1]) + int(mag[-1] > mag[-2])
    k_peaks = n_peaks * np.pi / length
    if intensity:
        k, k_dft = k / 2, k_dft / 2
    return WavevectorEstimate(k, float(k_dft), float(k_peaks), int(n_peaks), length)


def estimate_wavevector(
    env: Envelope, segment: str = "left", sublattice: str = "A"
) -> WavevectorEstimate:
    """Wavevector of one sublattice envelope over one side of the step."""
    x, y = (env.x_a, env.amp_a) if sublattice == "A" else (env.x_b, env.amp_b)
    a = env.sites.step_position
    if segment == "left":
        sel = x < a
    elif segment == "right":
        sel = x > a
    elif segment == "all":
        sel = np.ones_like(x, dtype=bool)
    else:
        raise ValueError(f"segment must be 'left', 'right' or 'all', got {segment!r}")
    return dominant_wavevector(x[sel], y[sel])


@dataclass(frozen=True)
class LevelComparison:
    lattice_energies: np.ndarray  # f_n - f0
    continuum_energies: np.ndarray  # E_n
    delta: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.delta))) if len(self.delta) else 0.0

    def rows(self):
        return list(zip(self.lattice_energies, self.continuum_energies, self.delta))


def compare_levels(
    eig: LatticeEigensystem, p: DiracParams, continuum: np.ndarray | None = None
) -> LevelComparison:
    """Pair in-window lattice levels with continuum levels by ascending order.

    ``continuum`` defaults to :func:`find_levels`; pass another level array
    (e.g. single-box levels) to compare a different model.
    """
    lo, hi = p.klein_window
    rel = eig.frequencies - p.dirac_point
    lat = rel[(rel > lo) & (rel < hi)]
    cont = find_levels(p).energies if continuum is None else np.asarray(continuum)
    if len(lat) != len(cont):
        raise LevelMismatchError(
            f"lattice has {len(lat)} window levels, continuum has {len(cont)}"
        )
    return LevelComparison(lat, cont, lat - cont)


@dataclass(frozen=True)
class IntensityComparison:
    max_abs: float
    l2: float
    lattice_a: np.ndarray
    lattice_b: np.ndarray
    continuum_a: np.ndarray
    continuum_b: np.ndarray


def continuum_site_intensities(field: SpinorField, sites: SiteMap) -> tuple[np.ndarray, np.ndarray]:
    """|psi1|^2 at A sites and |psi2|^2 at B sites, psi = U Psi, unit total."""
    a1, a2 = field.evaluate(sites.x_a)
    b1, b2 = field.evaluate(sites.x_b)
    psi_a = U[0, 0] * a1 + U[0, 1] * a2
    psi_b = U[1, 0] * b1 + U[1, 1] * b2
    ia, ib = np.abs(psi_a) ** 2, np.abs(psi_b) ** 2
    total = ia.sum() + ib.sum()
    return ia / total, ib / total


def compare_intensities(
    eig: LatticeEigensystem, n: int, field: SpinorField, sites: SiteMap
) -> IntensityComparison:
    """Site-resolved intensity deviation between lattice level n and a continuum state."""
    vec = eig.vectors[:, n]
    la, lb = vec[0::2] ** 2, vec[1::2] ** 2
    total = la.sum() + lb.sum()
    la, lb = la / total, lb / total
    ca, cb = continuum_site_intensities(field, sites)
    diff = np.concatenate([la - ca, lb - cb])
    return IntensityComparison(
        float(np.max(np.abs(diff))), float(np.sqrt(np.sum(diff**2))), la, lb, ca, cb
    )
