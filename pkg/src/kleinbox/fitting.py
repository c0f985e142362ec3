"""Inverse problem: recover (mc^2, hbar_c, f0) from particle/hole level data.

Houses the Levenberg-Marquardt engine shared with the spectroscopy fits.
The engine follows the trust-region formulation: the damping parameter is
chosen so the scaled step fits inside a radius that grows or shrinks with
the ratio of actual to predicted reduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .dirac import box_mode_energy, DomainError
from .lattice import LevelMismatchError

__all__ = [
    "FitResult",
    "lm_minimize",
    "numeric_jacobian",
    "fit_dispersion_particle",
    "fit_dispersion_hole",
    "fit_level_sequence",
    "DispersionFit",
]


@dataclass
class FitResult:
    params: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    covariance: np.ndarray | None
    message: str = ""
    gradient_norm: float = np.nan
    trace: list = field(default_factory=list, repr=False)


def numeric_jacobian(fun: Callable, x: np.ndarray, f0: np.ndarray | None = None) -> np.ndarray:
    """Central differences with step 1e-6 * max(|x_i|, 1)."""
    x = np.asarray(x, float)
    if f0 is None:
        f0 = np.asarray(fun(x), float)
    J = np.empty((len(f0), len(x)))
    for i in range(len(x)):
        h = 1e-6 * max(abs(x[i]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.asarray(fun(xp), float) - np.asarray(fun(xm), float)) / (2 * h)
    return J


def _lm_step(u, s, vt, diag, r, lam):
    """Step for damping ``lam`` in scaled variables; returns (step, ||D step||)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(s > 0, s / (s * s + lam), 0.0)
    z = -(vt.T @ (coef * (u.T @ r)))
    return z / diag, float(np.linalg.norm(z))


def _trust_region_step(u, s, vt, diag, r, radius):
    """Smallest damping whose scaled step fits inside ``radius``."""
    step, snorm = _lm_step(u, s, vt, diag, r, 0.0)
    if snorm <= radius:
        return step, snorm, 0.0
    phi = lambda lg: _lm_step(u, s, vt, diag, r, np.exp(lg))[1] - radius  # noqa: E731
    lo, hi = np.log(1e-30 * s.max() ** 2 + 1e-300), np.log(1e30 * s.max() ** 2 + 1e-300)
    lam = np.exp(optimize.brentq(phi, lo, hi, xtol=1e-8)) if phi(hi) < 0 else np.exp(hi)
    step, snorm = _lm_step(u, s, vt, diag, r, lam)
    return step, snorm, lam


def lm_minimize(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    jacobian_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    max_iter: int = 200,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
    ftol: float = 1e-15,
    factor: float = 100.0,
    record_trace: bool = False,
) -> FitResult:
    """Minimize ||r(x)||^2 by Levenberg-Marquardt.

    Stops when the largest cosine between r and a Jacobian column is below
    ``gtol``, when the scaled step drops below ``xtol`` relative to the
    scaled parameters, or after ``max_iter`` iterations.  A Jacobian whose
    condition number exceeds 1e12 at the end flags the fit as not converged.
    """
    x = np.array(x0, dtype=float)
    jac = jacobian_fn or (lambda z: numeric_jacobian(residual_fn, z))
    r = np.asarray(residual_fn(x), float)
    if r.ndim != 1 or len(r) < len(x):
        raise ValueError(
            f"need at least as many residuals ({r.size}) as parameters ({len(x)})"
        )
    cost = float(r @ r)
    trace = [(x.copy(), cost, np.nan)] if record_trace else []
    diag = None
    radius = None
    converged, message = False, "maximum iterations reached"
    gnorm = np.nan
    it = 0
    while it < max_iter:
        J = np.asarray(jac(x), float)
        colnorm = np.linalg.norm(J, axis=0)
        diag = np.where(colnorm > 0, colnorm, 1.0) if diag is None else np.maximum(diag, colnorm)
        rnorm = np.sqrt(cost)
        if rnorm == 0.0:
            gnorm = 0.0
            converged, message = True, "zero residual"
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            cosines = np.where(colnorm > 0, np.abs(J.T @ r) / (colnorm * rnorm), 0.0)
        gnorm = float(cosines.max())
        if gnorm <= gtol:
            converged, message = True, "gradient tolerance"
            break
        xnorm = float(np.linalg.norm(diag * x))
        if radius is None:
            radius = factor * xnorm if xnorm > 0 else factor
        u, s, vt = np.linalg.svd(J / diag, full_matrices=False)

        it += 1
        accepted = False
        while not accepted:
            step, snorm, lam = _trust_region_step(u, s, vt, diag, r, radius)
            x_new = x + step
            r_new = np.asarray(residual_fn(x_new), float)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            pred = r + J @ step
            predicted = cost - float(pred @ pred)
            actual = cost - cost_new
            rho = actual / predicted if predicted > 0 else -1.0
            if rho < 0.25:
                radius = 0.25 * snorm
            elif rho > 0.75 or lam == 0.0:
                radius = max(radius, 2.0 * snorm)
            accepted = rho > 1e-4
            if not accepted and radius <= xtol * xnorm:
                break
        if not accepted:
            converged, message = True, "step tolerance (no further decrease)"
            break
        cost_prev = cost
        x, r, cost = x_new, r_new, cost_new
        if record_trace:
            trace.append((x.copy(), cost, lam))
        xnorm = float(np.linalg.norm(diag * x))
        if snorm <= xtol * (xnorm + xtol):
            converged, message = True, "step tolerance"
            break
        if abs(actual) <= ftol * cost_prev and predicted <= ftol * cost_prev:
            converged, message = True, "relative reduction below ftol"
            break

    J = np.asarray(jac(x), float)
    sv = np.linalg.svd(J, compute_uv=False)
    cov = None
    if sv.max() == 0 or sv.min() <= 1e-12 * sv.max():
        converged, message = False, "rank-deficient Jacobian"
    else:
        dof = max(len(r) - len(x), 1)
        cov = cost / dof * np.linalg.inv(J.T @ J)
    return FitResult(x, float(np.sqrt(cost)), it, converged, cov, message, gnorm, trace)


# -- dispersion fits ----------------------------------------------------------


@dataclass
class DispersionFit:
    """Named view of a FitResult from the dispersion and sequence fits."""

    mc2: float
    hbar_c: float
    dirac_point: float
    result: FitResult

    @property
    def converged(self) -> bool:
        return self.result.converged


def _as_pairs(pairs):
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array of (f_n, k_n)")
    return arr[:, 0], arr[:, 1]


def _two_point_slope(f, k, ref):
    order = np.argsort(k)
    k1, k2 = k[order[0]], k[order[-1]]
    e1, e2 = (f[order[0]] - ref) ** 2, (f[order[-1]] - ref) ** 2
    if k2**2 - k1**2 <= 0 or e2 <= e1:
        return 1.0
    return float(np.sqrt((e2 - e1) / (k2**2 - k1**2)))


def _dispersion_fit(f, k, init):
    def residual(p):
        f0, m, c = p
        return (f - f0) ** 2 - m * m - c * c * k * k

    def jac(p):
        f0, m, c = p
        return np.column_stack([-2 * (f - f0), -2 * m * np.ones_like(f), -2 * c * k * k])

    res = lm_minimize(residual, init, jac)
    f0, m, c = res.params
    res.params = np.array([f0, abs(m), abs(c)])
    if not (abs(m) > 0 and abs(c) > 0):
        res.converged = False
        res.message = "degenerate fit (zero mass or velocity)"
    return DispersionFit(abs(m), abs(c), f0, res)


def fit_dispersion_particle(pairs, init: Sequence[float] | None = None) -> DispersionFit:
    """Fit (f_n - f0)^2 = mc4 + (hbar c)^2 k_n^2 for levels above the gap.

    ``init`` is (f0, mc2, hbar_c); the default starts from f0 = min(f) - 10,
    mc2 = 10 and a two-point slope for hbar_c.
    """
    f, k = _as_pairs(pairs)
    if len(f) < 3:
        raise ValueError(f"need >= 3 (f, k) pairs, got {len(f)}")
    if np.any(~np.isfinite(k)) or np.any(k < 0):
        raise DomainError("wavevectors must be real and non-negative")
    if init is None:
        f0 = f.min() - 10.0
        init = (f0, 10.0, _two_point_slope(f, k, f0))
    return _dispersion_fit(f, k, init)


def fit_dispersion_hole(pairs, init: Sequence[float] | None = None) -> DispersionFit:
    """Hole-branch counterpart for levels below the gap of the raised region.

    Fits (f0 + dF - f_n)^2 = mc4 + (hbar c)^2 kappa_n^2; the returned
    ``dirac_point`` is the raised Dirac point f0 + dF.  An imaginary
    (NaN/complex) or negative kappa raises :class:`DomainError`.
    """
    arr = np.asarray(pairs)
    if np.iscomplexobj(arr):
        if np.any(np.abs(arr.imag) > 0):
            raise DomainError("hole wavevector is imaginary (level outside the hole band)")
        arr = arr.real
    f, k = _as_pairs(arr)
    if len(f) < 3:
        raise ValueError(f"need >= 3 (f, k) pairs, got {len(f)}")
    if np.any(~np.isfinite(k)) or np.any(k < 0):
        raise DomainError("hole wavevector is imaginary or negative")
    if init is None:
        top = f.max() + 10.0
        init = (top, 10.0, _two_point_slope(f, k, top))
    return _dispersion_fit(f, k, init)


def fit_level_sequence(
    levels,
    L: float,
    branch: str = "particle",
    init: Sequence[float] | None = None,
    window: tuple[float, float] | None = None,
) -> DispersionFit:
    """Fit a box spectrum directly to a sorted level sequence, no k needed.

    The i-th measured level (counted away from the gap) is matched to mode
    i+1 of a uniform infinite-mass box of length L.  Particle levels are
    f0 + E_n, hole levels are f0' - E_n.

    If ``window`` (absolute MHz) is given, the fitted model must place the
    same number of levels inside it as were measured, otherwise
    :class:`LevelMismatchError` is raised.
    """
    lv = np.sort(np.asarray(levels, dtype=float))
    n = len(lv)
    if n < 4:
        raise ValueError(f"need >= 4 levels, got {n}")
    if branch == "particle":
        meas = lv
        sign = 1.0
    elif branch == "hole":
        meas = lv[::-1]
        sign = -1.0
    else:
        raise ValueError(f"branch must be 'particle' or 'hole', got {branch!r}")
    modes = np.arange(1, n + 1)

    def residual(p):
        f0, m, c = p
        m, c = abs(m), abs(c)
        if c == 0:
            return np.full(n, 1e6)
        model = np.array([box_mode_energy(j, L, m, c) for j in modes])
        return f0 + sign * model - meas

    if init is None:
        # crude start: spacing ~ pi c / L for the upper levels
        spacing = abs(meas[-1] - meas[-2])
        c0 = spacing * L / np.pi
        gap_edge = meas[0] - sign * 0.5 * spacing
        init = (gap_edge - sign * 10.0, 10.0, c0)
    res = lm_minimize(residual, init)
    f0, m, c = res.params
    m, c = abs(m), abs(c)
    res.params = np.array([f0, m, c])
    if window is not None:
        lo, hi = window
        count, j = 0, 1
        while True:
            e = box_mode_energy(j, L, m, c)
            if e > abs(hi - lo) + abs(f0 - lo) + abs(f0 - hi):
                break
            if lo < f0 + sign * e < hi:
                count += 1
            j += 1
        if count != n:
            raise LevelMismatchError(
                f"fitted model has {count} levels in window {window}, measured {n}"
            )
    return DispersionFit(m, c, f0, res)
