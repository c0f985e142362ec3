"""Continuum Dirac box with a potential step, solved in the Klein regime.

Region I (0 <= x < a, V = 0) carries particle plane waves, region II
(a <= x <= d, V = V0) carries hole plane waves.  Levels are roots of the
real quantization residual

    g(E) = cos(phi_a - phi_b) + r cos(phi_a + phi_b),
    phi_a = k a + arctan(xi),  phi_b = kappa b + arctan(zeta),

which is the reduced form of det(1 - S) = 0 for the four-channel
scattering matrix (det(1 - S) = 2 exp(i(phi_a - phi_b)) g(E)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .core import DiracParams

__all__ = [
    "DomainError",
    "NumericalError",
    "WINDOW_MARGIN",
    "U",
    "ChannelKinematics",
    "InterfaceCoefficients",
    "LevelSet",
    "SpinorField",
    "kinematics",
    "interface_coefficients",
    "quantization_residual",
    "scattering_matrix",
    "det_one_minus_s",
    "find_levels",
    "build_eigenstate",
    "build_box_eigenstate",
    "single_box_levels",
    "box_mode_energy",
    "det_minimum_near",
]

WINDOW_MARGIN = 1e-6  # fraction of V0 kept clear of each Klein-window edge

# psi = U Psi maps the Dirac spinor onto the (A, B) sublattice envelopes.
U = np.sqrt(2) / 2 * np.array([[1, 1j], [1, -1j]])


class DomainError(ValueError):
    """Energy outside the Klein window."""


class NumericalError(RuntimeError):
    """Root search or matching failed where it should not."""


@dataclass(frozen=True)
class ChannelKinematics:
    energy: float
    k_particle: float
    k_hole: float
    xi: float
    zeta: float


@dataclass(frozen=True)
class InterfaceCoefficients:
    r: float
    t: float
    r_left_wall: complex
    r_right_wall: complex
    # t_ph = exp(i pi) t_hp; t_ph = +t and t_hp = -t with this flag set.
    transmission_sign_flip: bool = True

    @property
    def t_ph(self) -> float:
        return self.t

    @property
    def t_hp(self) -> float:
        return -self.t if self.transmission_sign_flip else self.t


@dataclass(frozen=True)
class LevelSet:
    energies: np.ndarray
    residuals: np.ndarray
    window: tuple[float, float]
    kind: str = "hybrid"

    def __len__(self):
        return len(self.energies)

    def frequencies(self, f0: float) -> np.ndarray:
        return f0 + self.energies


@dataclass(frozen=True)
class SpinorField:
    """Sampled eigenspinor Psi(x) = (comp1, comp2) on ``x`` in [0, d].

    ``coefficients`` holds the plane-wave amplitudes (A, B, C, D) of the four
    channels so the field can be evaluated off-grid with :meth:`evaluate`.
    A uniform box has ``step_position = inf`` and C = D = 0.
    """

    x: np.ndarray
    comp1: np.ndarray
    comp2: np.ndarray
    energy: float
    channels: ChannelKinematics = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    step_position: float = np.inf
    box_length: float = 0.0

    def evaluate(self, x, side: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Psi at arbitrary positions.

        ``side='left'`` or ``'right'`` forces one region's formula, which is
        how the two one-sided limits at x = a are obtained.
        """
        x = np.asarray(x, dtype=float)
        ch = self.channels
        c_a, c_b, c_c, c_d = self.coefficients
        k, kap, xi, ze = ch.k_particle, ch.k_hole, ch.xi, ch.zeta
        d = self.box_length
        ep, em = np.exp(1j * k * x), np.exp(-1j * k * x)
        left1 = c_a * ep + c_b * em
        left2 = xi * (c_a * ep - c_b * em)
        if side == "left" or not np.isfinite(self.step_position):
            return left1, left2
        hp, hm = np.exp(1j * kap * (x - d)), np.exp(-1j * kap * (x - d))
        right1 = ze * (-c_c * hp + c_d * hm)
        right2 = c_c * hp + c_d * hm
        if side == "right":
            return right1, right2
        in_left = x < self.step_position
        return np.where(in_left, left1, right1), np.where(in_left, left2, right2)

    def sublattice_components(self) -> tuple[np.ndarray, np.ndarray]:
        """psi = U Psi on the grid; first entry is the A envelope."""
        psi = U @ np.vstack([self.comp1, self.comp2])
        return psi[0], psi[1]

    def current(self) -> np.ndarray:
        """Probability current Psi^dagger sigma_x Psi."""
        return 2 * np.real(np.conj(self.comp1) * self.comp2)

    def norm(self) -> float:
        """Integral of |Psi|^2 over [0, d] by adaptive quadrature of the closed form."""
        return _density_integral(self)

    def grid_norm(self) -> float:
        """Trapezoid integral on the sample grid (second order in the step)."""
        dens = np.abs(self.comp1) ** 2 + np.abs(self.comp2) ** 2
        return float(np.trapezoid(dens, self.x))

    def boundary_residuals(self) -> tuple[float, float]:
        """|Psi2/Psi1 + i| at x=0 and |Psi2/Psi1 - i| at x=d."""
        left = abs(self.comp2[0] / self.comp1[0] + 1j)
        right = abs(self.comp2[-1] / self.comp1[-1] - 1j)
        return float(left), float(right)

    def interface_mismatch(self) -> float:
        """Relative jump of the spinor across x = a."""
        a = self.step_position
        if not np.isfinite(a):
            return 0.0
        l1, l2 = self.evaluate(a, side="left")
        r1, r2 = self.evaluate(a, side="right")
        scale = max(np.hypot(abs(l1), abs(l2)), 1e-300)
        return float(np.hypot(abs(l1 - r1), abs(l2 - r2)) / scale)

    def _sublattice_intensity(self, x, side=None, component=0):
        c1, c2 = self.evaluate(x, side)
        return np.abs(U[component, 0] * c1 + U[component, 1] * c2) ** 2

    def intensity_slopes(self, component: int = 0) -> tuple[float, float]:
        """One-sided derivatives of |psi_component|^2 at x = a.

        Each region's closed form is smooth, so a central difference of
        that formula at a gives the one-sided limit.
        """
        a = self.step_position
        if not np.isfinite(a):
            raise ValueError("uniform box has no interface")
        h = 1e-6 * self.box_length
        pts = np.array([a - h, a + h])
        left = np.diff(self._sublattice_intensity(pts, "left", component))[0] / (2 * h)
        right = np.diff(self._sublattice_intensity(pts, "right", component))[0] / (2 * h)
        return float(left), float(right)

    def kink_spike_ratio(self, component: int = 0, n_cells: int = 4000) -> float:
        """Second difference at the grid node nearest a over the largest elsewhere.

        A slope discontinuity makes the node next to a stand out by a
        factor growing like 1/h; a smooth profile gives a ratio near 1.
        """
        a = self.step_position
        x = np.linspace(0.0, self.box_length, n_cells + 1)
        y = self._sublattice_intensity(x, None, component)
        d2 = np.abs(np.diff(y, 2))
        j = int(np.argmin(np.abs(x[1:-1] - a)))
        near = d2[max(j - 1, 0) : j + 2].max()
        far = np.delete(d2, np.arange(max(j - 3, 0), min(j + 4, len(d2)))).max()
        return float(near / far)


def _in_window(E, p: DiracParams):
    lo, hi = p.klein_window
    eps = WINDOW_MARGIN * p.step_height
    E = np.asarray(E, dtype=float)
    if np.any(E <= lo + eps) or np.any(E >= hi - eps) or not np.all(np.isfinite(E)):
        bad = E[(E <= lo + eps) | (E >= hi - eps) | ~np.isfinite(E)]
        first = float(np.ravel(bad)[0])
        if first <= lo + eps:
            bound = f"lower bound mc^2 + margin = {lo + eps:.9g}"
        else:
            bound = f"upper bound V0 - mc^2 - margin = {hi - eps:.9g}"
        raise DomainError(f"E = {first:.9g} MHz violates the Klein window {bound}")
    return E


def _kin_arrays(E, m, hbar_c, v0):
    k = np.sqrt(E * E - m * m) / hbar_c
    kap = np.sqrt((v0 - E) ** 2 - m * m) / hbar_c
    xi = hbar_c * k / (E + m)
    ze = hbar_c * kap / (v0 - E + m)
    return k, kap, xi, ze


def _kin_unchecked(E: float, p: DiracParams) -> ChannelKinematics:
    k, kap, xi, ze = _kin_arrays(E, p.mass_energy, p.hbar_c, p.step_height)
    return ChannelKinematics(float(E), float(k), float(kap), float(xi), float(ze))


def kinematics(E: float, p: DiracParams) -> ChannelKinematics:
    """Wavenumbers and spinor ratios of the particle and hole channels."""
    _in_window(E, p)
    return _kin_unchecked(E, p)


def _coeff_arrays(xi, ze):
    prod = xi * ze
    r = (prod - 1) / (prod + 1)
    t = np.sqrt(np.clip(1 - r * r, 0, None))
    r_left = -np.exp(2j * np.arctan(xi))
    r_right = -np.exp(-2j * np.arctan(ze))
    return r, t, r_left, r_right


def interface_coefficients(kin: ChannelKinematics) -> InterfaceCoefficients:
    r, t, r_left, r_right = _coeff_arrays(kin.xi, kin.zeta)
    return InterfaceCoefficients(float(r), float(t), complex(r_left), complex(r_right))


def _residual_unchecked(E, p: DiracParams):
    k, kap, xi, ze = _kin_arrays(E, p.mass_energy, p.hbar_c, p.step_height)
    r = (xi * ze - 1) / (xi * ze + 1)
    phi_a = k * p.step_position + np.arctan(xi)
    phi_b = kap * p.barrier_length + np.arctan(ze)
    return np.cos(phi_a - phi_b) + r * np.cos(phi_a + phi_b)


def quantization_residual(E, p: DiracParams):
    """g(E); scalar in, float out; array in, array out."""
    E = _in_window(E, p)
    g = _residual_unchecked(E, p)
    return float(g) if g.ndim == 0 else g


def scattering_matrix(E: float, p: DiracParams) -> np.ndarray:
    """4x4 S over channels (particle left, particle right, hole left, hole right)."""
    kin = kinematics(E, p)
    co = interface_coefficients(kin)
    a, b = p.step_position, p.barrier_length
    pa = np.exp(1j * kin.k_particle * a)
    pb = np.exp(-1j * kin.k_hole * b)
    S = np.zeros((4, 4), dtype=complex)
    S[0, 1] = co.r * pa
    S[0, 2] = co.t_ph * pa
    S[1, 0] = co.r_left_wall * pa
    S[2, 3] = co.r_right_wall * pb
    S[3, 1] = co.t_hp * pb
    S[3, 2] = co.r * pb
    return S


def det_one_minus_s(E: float, p: DiracParams) -> complex:
    return complex(np.linalg.det(np.eye(4) - scattering_matrix(E, p)))


def det_minimum_near(E_guess: float, p: DiracParams, half_width: float) -> float:
    """Location of the minimum of |det(1 - S)| within E_guess +- half_width.

    Golden-section search started off-centre so the answer does not just
    echo ``E_guess``.
    """
    lo, hi = p.klein_window
    eps = WINDOW_MARGIN * p.step_height
    lo = max(E_guess - half_width, lo + 2 * eps)
    hi = min(E_guess + half_width, hi - 2 * eps)
    mid = E_guess + 0.1 * min(hi - E_guess, E_guess - lo)
    res = optimize.minimize_scalar(
        lambda e: abs(det_one_minus_s(e, p)),
        bracket=(lo, mid, hi),
        method="golden",
        tol=1e-14,
    )
    return float(res.x)


def _scan_count(grid_E, p):
    g = _residual_unchecked(grid_E, p)
    s = np.sign(g)
    return np.flatnonzero(s[:-1] * s[1:] < 0), g


def find_levels(p: DiracParams, max_escalations: int = 3) -> LevelSet:
    """All quantized levels inside the Klein window.

    Uniform sign-change scan followed by bisection.  The scan is repeated on
    a 4x finer grid; if the two counts disagree the density is raised and
    the check repeated, up to ``max_escalations`` times.
    """
    lo, hi = p.klein_window
    eps = WINDOW_MARGIN * p.step_height
    lo, hi = lo + eps, hi - eps
    k_max, _, _, _ = _kin_arrays(hi, p.mass_energy, p.hbar_c, p.step_height)
    _, kap_max, _, _ = _kin_arrays(lo, p.mass_energy, p.hbar_c, p.step_height)
    estimate = (k_max * p.step_position + kap_max * p.barrier_length) / np.pi + 1
    m = int(64 * np.ceil(estimate))

    for _ in range(max_escalations + 1):
        coarse, _ = _scan_count(np.linspace(lo, hi, m), p)
        grid = np.linspace(lo, hi, 4 * m)
        fine, g = _scan_count(grid, p)
        if len(coarse) == len(fine):
            break
        m *= 4
    else:
        raise NumericalError(
            f"level count unstable after {max_escalations} grid escalations"
        )

    f = lambda e: _residual_unchecked(e, p)  # noqa: E731
    roots = []
    for i in fine:
        roots.append(optimize.bisect(f, grid[i], grid[i + 1], xtol=1e-13, rtol=1e-15, maxiter=200))
    roots = np.array(roots)
    resid = np.abs(_residual_unchecked(roots, p)) if len(roots) else np.array([])
    return LevelSet(roots, resid, (lo, hi), "hybrid")


def _matching_matrix(kin: ChannelKinematics, p: DiracParams) -> np.ndarray:
    k, kap, xi, ze = kin.k_particle, kin.k_hole, kin.xi, kin.zeta
    a, d = p.step_position, p.box_length
    ea, ema = np.exp(1j * k * a), np.exp(-1j * k * a)
    ha, hma = np.exp(1j * kap * (a - d)), np.exp(-1j * kap * (a - d))
    return np.array(
        [
            # x = 0: Psi2 + i Psi1 = 0
            [xi + 1j, -xi + 1j, 0, 0],
            # x = a: continuity of both components
            [ea, ema, ze * ha, -ze * hma],
            [xi * ea, -xi * ema, -ha, -hma],
            # x = d: Psi2 - i Psi1 = 0
            [0, 0, 1 + 1j * ze, 1 - 1j * ze],
        ],
        dtype=complex,
    )


def _grid(p: DiracParams, step: float) -> np.ndarray:
    a, d = p.step_position, p.box_length
    n1 = max(int(np.ceil(a / step)), 2)
    n2 = max(int(np.ceil((d - a) / step)), 2)
    return np.concatenate([np.linspace(0, a, n1 + 1), np.linspace(a, d, n2 + 1)[1:]])


def build_eigenstate(E_n: float, p: DiracParams, grid_step: float | None = None) -> SpinorField:
    """Normalized eigenspinor at a quantized level.

    The plane-wave amplitudes are the null vector of the 4x4 matching system
    (two walls, two continuity conditions).  The global phase makes
    Psi1(0) real and positive.
    """
    g = quantization_residual(E_n, p)
    if abs(g) > 1e-8:
        raise DomainError(f"E = {E_n!r} is not a level (|g| = {abs(g):.3e})")
    if grid_step is None:
        grid_step = p.lattice_const / 40
    kin = kinematics(E_n, p)
    M = _matching_matrix(kin, p)
    _, s, vh = np.linalg.svd(M)
    if s[-1] > 1e-6 * s[0] or s[-2] < 1e-6 * s[0]:
        raise NumericalError(
            f"matching system at E={E_n} has singular values {s}; expected a 1-d null space"
        )
    coeffs = vh[-1].conj()
    c_a, c_b = coeffs[:2]
    psi1_0 = c_a + c_b
    coeffs = coeffs * (abs(psi1_0) / psi1_0)

    x = _grid(p, grid_step)
    return _normalized_field(x, float(E_n), kin, coeffs, p.step_position, p.box_length)


def _density_integral(f: SpinorField) -> float:
    def dens(x):
        c1, c2 = f.evaluate(x)
        return float(abs(c1) ** 2 + abs(c2) ** 2)

    a, d = f.step_position, f.box_length
    pieces = [(0.0, a), (a, d)] if np.isfinite(a) else [(0.0, d)]
    total = 0.0
    for lo, hi in pieces:
        val, _ = integrate.quad(dens, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return total


def _normalized_field(x, energy, kin, coeffs, step_position, box_length) -> SpinorField:
    raw = SpinorField(x, x * 0j, x * 0j, energy, kin, coeffs, step_position, box_length)
    c1, c2 = raw.evaluate(x)
    norm = np.sqrt(_density_integral(raw))
    return SpinorField(
        x, c1 / norm, c2 / norm, energy, kin, coeffs / norm, step_position, box_length
    )


def build_box_eigenstate(
    E_n: float, L: float, p: DiracParams, grid_step: float | None = None
) -> SpinorField:
    """Particle eigenspinor of a uniform box [0, L] at V = 0.

    Only ``p.mass_energy`` and ``p.hbar_c`` are used.
    """
    m, hc = p.mass_energy, p.hbar_c
    if not E_n > m:
        raise DomainError(f"E = {E_n!r} is not above the gap edge mc^2 = {m}")
    resid = abs(np.sin(_box_phase(E_n, L, m, hc)))
    if resid > 1e-8:
        raise DomainError(f"E = {E_n!r} is not a box level (residual {resid:.3e})")
    if grid_step is None:
        grid_step = p.lattice_const / 40
    k = np.sqrt(E_n**2 - m**2) / hc
    xi = hc * k / (E_n + m)
    kin = ChannelKinematics(float(E_n), float(k), 0.0, float(xi), 0.0)
    # Psi2 + i Psi1 = 0 at x = 0; Psi1(0) = A + B real positive
    c_a = 1.0 + 0j
    c_b = c_a * (xi + 1j) / (xi - 1j)
    coeffs = np.array([c_a, c_b, 0, 0], dtype=complex)
    coeffs *= abs(c_a + c_b) / (c_a + c_b)
    n = max(int(np.ceil(L / grid_step)), 2)
    x = np.linspace(0, L, n + 1)
    return _normalized_field(x, float(E_n), kin, coeffs, np.inf, float(L))


def _box_phase(E, L, m, hbar_c):
    k = np.sqrt(np.maximum(E * E - m * m, 0.0)) / hbar_c
    xi = hbar_c * k / (E + m)
    return k * L + 2 * np.arctan(xi)


def box_mode_energy(n: int, L: float, m: float, hbar_c: float) -> float:
    """Energy of the n-th (n >= 1) particle mode of a uniform box of length L.

    Solves k L + 2 arctan(xi) = n pi, whose left side increases
    monotonically from 0 at E = m.
    """
    if n < 1:
        raise ValueError("mode index starts at 1")
    e_lo = np.sqrt(m * m + (hbar_c * (n - 1) * np.pi / L) ** 2)
    e_hi = np.sqrt(m * m + (hbar_c * n * np.pi / L) ** 2)
    f = lambda e: _box_phase(e, L, m, hbar_c) - n * np.pi  # noqa: E731
    if f(e_lo) >= 0:
        return float(e_lo)
    return float(optimize.brentq(f, e_lo, e_hi, xtol=1e-13, rtol=1e-15, maxiter=200))


def single_box_levels(
    L: float,
    p: DiracParams,
    branch: str = "particle",
    window: tuple[float, float] | None = None,
) -> LevelSet:
    """Levels of a uniform box with infinite-mass walls at both ends.

    The particle branch uses the bulk at V = 0; the hole branch sits below
    the gap of a bulk at V = V0 and is the mirror E -> V0 - E of the
    particle branch.  Only levels inside ``window`` (default: the Klein
    window) are returned.
    """
    if L <= 0:
        raise ValueError("box length must be positive")
    if branch not in ("particle", "hole"):
        raise ValueError(f"branch must be 'particle' or 'hole', got {branch!r}")
    if window is None:
        lo, hi = p.klein_window
        eps = WINDOW_MARGIN * p.step_height
        window = (lo + eps, hi - eps)
    lo, hi = window
    m, hc, v0 = p.mass_energy, p.hbar_c, p.step_height
    # particle-branch energies spanned by the window
    if branch == "particle":
        plo, phi = lo, hi
    else:
        plo, phi = v0 - hi, v0 - lo
    phi = max(phi, m)
    n_max = int(np.floor(_box_phase(phi, L, m, hc) / np.pi))
    energies = [box_mode_energy(n, L, m, hc) for n in range(1, n_max + 1)]
    energies = np.array([e for e in energies if plo < e < phi])
    resid = np.abs(np.sin(_box_phase(energies, L, m, hc)))
    if branch == "hole":
        energies, resid = (v0 - energies)[::-1], resid[::-1]
    return LevelSet(energies, resid, (lo, hi), branch)
