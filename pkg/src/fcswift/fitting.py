"""
Weighted nonlinear least squares and the three curve shapes used for the
memory data: exponential decay, Gaussian peak, and sin^4 saturation.

The solver is a Levenberg-Marquardt iteration with forward-difference
Jacobians, finished by a few Gauss-Newton steps with central differences.
Parameter uncertainties come from the Gauss-Newton normal matrix at the
solution; with `absolute_sigma` (the default, for Poisson error bars)
it is not rescaled by the reduced chi-square.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LN2 = math.log(2.0)


class FitError(ValueError):
    """Bad input to a fit (shape mismatch, too few points, bad error bars)."""


@dataclass
class FitResult:
    params: np.ndarray
    sigmas: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    singular: bool = False
    covariance: np.ndarray | None = field(default=None, repr=False)
    gradient_norm: float = math.nan


def _jacobian(fun, p, f0, rel_step):
    J = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = rel_step * max(abs(p[j]), 1.0)
        pj = p.copy()
        pj[j] += h
        J[:, j] = (fun(pj) - f0) / h
    return J


def _central_jacobian(fun, p, step):
    J = np.empty((fun(p).size, p.size))
    for j in range(p.size):
        h = step * max(abs(p[j]), 1.0)
        hi, lo = p.copy(), p.copy()
        hi[j] += h
        lo[j] -= h
        J[:, j] = (fun(hi) - fun(lo)) / (2.0 * h)
    return J


def fit_least_squares(model: Callable[[np.ndarray, np.ndarray], np.ndarray], x, y, yerr, init_params,
                      *, max_iter: int = 200, gtol: float = 1e-10, xtol: float = 1e-14,
                      absolute_sigma: bool = True) -> FitResult:
    """
    Minimise sum(((y - model(x, p)) / yerr)**2) from `init_params`.

    `yerr=None` gives an unweighted fit, in which case the covariance is
    scaled by the reduced chi-square.

    Returns
    -------
    FitResult
        `converged` is False if `max_iter` is reached (the best parameters so
        far are returned); `singular` marks a rank-deficient normal matrix, in
        which case `sigmas` are nan.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(init_params, dtype=float)
    if yerr is None:
        w = np.ones_like(y)
        absolute_sigma = False
    else:
        yerr = np.asarray(yerr, dtype=float)
        if yerr.shape != y.shape:
            raise FitError("yerr and y have different shapes")
        if np.any(yerr <= 0) or not np.all(np.isfinite(yerr)):
            raise FitError("yerr must be positive and finite")
        w = 1.0 / yerr
    if x.shape[0] != y.shape[0]:
        raise FitError("x and y have different lengths")
    if y.size < p.size:
        raise FitError(f"{y.size} points cannot constrain {p.size} parameters")

    def resid(q):
        return (y - model(x, q)) * w

    rel_step = math.sqrt(np.finfo(float).eps)
    r = resid(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        # model Jacobian of the residual is -J
        J = -_jacobian(resid, p, r, rel_step)
        A = J.T @ J
        g = J.T @ r
        gnorm = float(np.max(np.abs(g)) / max(1.0, math.sqrt(cost)))
        if gnorm < gtol:
            converged = True
            break
        improved = False
        while lam < 1e16:
            D = np.diag(np.maximum(np.diag(A), 1e-300))
            try:
                step = np.linalg.solve(A + lam * D, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            r_new = resid(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                small = np.all(np.abs(step) <= xtol * (np.abs(p) + xtol))
                p, r, cost_old, cost = p_new, r_new, cost, cost_new
                lam = max(lam / 10.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved:
            # no downhill step at any damping: stationary to working precision
            converged = gnorm < 1e-6
            break
        if small or (cost_old - cost) <= 1e-15 * max(cost_old, 1e-300):
            J = -_jacobian(resid, p, r, rel_step)
            gnorm = float(np.max(np.abs(J.T @ r)) / max(1.0, math.sqrt(cost)))
            converged = gnorm < 1e-6 or cost < 1e-24
            if converged:
                break

    # polish with central differences: forward-difference rounding error biases the
    # stationary point at the 1e-8 level when the residuals are not small
    # (the cost is flat to second order there, so steps are accepted while they
    # keep shrinking rather than by comparing costs)
    c_step = np.finfo(float).eps ** (1.0 / 3.0)
    prev = math.inf
    for _ in range(8):
        J = -_central_jacobian(resid, p, c_step)
        try:
            step = np.linalg.lstsq(J, r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        size = float(np.max(np.abs(step) / (np.abs(p) + 1e-300)))
        if not np.isfinite(size) or size >= prev or size > 1e-6:
            break
        r_new = resid(p + step)
        cost_new = float(r_new @ r_new)
        if not np.isfinite(cost_new) or cost_new > cost * (1.0 + 1e-12) + 1e-300:
            break
        p, r, cost, prev = p + step, r_new, cost_new, size
        if size < 1e-15:
            break

    J = -_central_jacobian(resid, p, c_step)
    A = J.T @ J
    singular = False
    cov = None
    sig = np.full(p.size, np.nan)
    if np.linalg.matrix_rank(A) < p.size:
        singular = True
    else:
        try:
            cov = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            singular = True
    if cov is not None:
        if not absolute_sigma:
            dof = y.size - p.size
            cov = cov * (cost / dof if dof > 0 else math.nan)
        sig = np.sqrt(np.abs(np.diag(cov)))
    return FitResult(params=p, sigmas=sig, residual_norm=cost, converged=converged, iterations=it,
                     singular=singular, covariance=cov, gradient_norm=gnorm)


# exponential decay -----------------------------------------------------------

@dataclass
class DecayFit:
    amplitude: float
    tau: float
    sigmas: np.ndarray
    result: FitResult
    tau_rt: float = math.nan
    tau_rt_sigma: float = math.nan


def exponential(t, p):
    return p[0] * np.exp(-t / p[1])


def fit_exponential_decay(t, y, yerr=None, *, round_trip_us: float | None = None) -> DecayFit:
    """
    Fit y = A exp(-t / tau).

    The starting point comes from a log-linear regression on the positive
    samples.  If `round_trip_us` is given, tau is also reported in round trips.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(t < 0):
        raise FitError("times must be non-negative")
    pos = y > 0
    if pos.sum() < 2:
        raise FitError("need at least two positive samples to initialise the decay fit")
    slope, icpt = np.polyfit(t[pos], np.log(y[pos]), 1)
    tau0 = -1.0 / slope if slope < 0 else (t.max() - t.min() or 1.0)
    res = fit_least_squares(exponential, t, y, yerr, [math.exp(icpt), tau0])
    A, tau = res.params
    out = DecayFit(A, tau, res.sigmas, res)
    if round_trip_us:
        out.tau_rt = tau / round_trip_us
        out.tau_rt_sigma = res.sigmas[1] / round_trip_us
    return out


# Gaussian --------------------------------------------------------------------

@dataclass
class GaussianFit:
    center: float
    fwhm: float
    amplitude: float
    offset: float
    sigmas: np.ndarray  # center, fwhm, amplitude, offset
    result: FitResult


def gaussian(x, center, fwhm, amplitude, offset=0.0):
    return offset + amplitude * np.exp(-4.0 * LN2 * (x - center) ** 2 / fwhm ** 2)


def _gaussian_logw(x, q):
    return gaussian(x, q[0], math.exp(q[1]), q[2], q[3])


def fit_gaussian(x, y, yerr=None, *, with_offset: bool = True) -> GaussianFit:
    """
    Fit y = offset + A exp(-4 ln2 (x - c)^2 / fwhm^2).

    The FWHM is fitted as log(fwhm), which keeps it positive.  The start is
    moment-based: the baseline is the lowest sample, the centre and width
    come from the centroid and variance of the baseline-subtracted data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise FitError("need at least 5 points for a Gaussian fit")
    base = float(y.min()) if with_offset else 0.0
    h = np.clip(y - base, 0.0, None)
    if h.sum() > 0:
        c0 = float((h * x).sum() / h.sum())
        var = float((h * (x - c0) ** 2).sum() / h.sum())
        fwhm0 = math.sqrt(8.0 * LN2 * var) if var > 0 else float(np.ptp(x)) / 4
    else:
        c0, fwhm0 = float(x.mean()), float(np.ptp(x)) / 4 or 1.0
    fwhm0 = max(fwhm0, 1e-6 * (float(np.ptp(x)) or 1.0))
    amp0 = float(y.max() - base)
    if with_offset:
        model, p0 = _gaussian_logw, [c0, math.log(fwhm0), amp0, base]
    else:
        model, p0 = (lambda xx, q: _gaussian_logw(xx, [q[0], q[1], q[2], 0.0])), [c0, math.log(fwhm0), amp0]
    res = fit_least_squares(model, x, y, yerr, p0)
    q = res.params
    fwhm = math.exp(q[1])
    s = res.sigmas
    sig = np.array([s[0], fwhm * s[1], s[2], s[3] if with_offset else 0.0])
    return GaussianFit(q[0], fwhm, q[2], q[3] if with_offset else 0.0, sig, res)


def deconvolve_gaussian_fwhm(measured_ghz: float, resolution_ghz: float) -> float:
    """Width of the underlying Gaussian given the measured width and a Gaussian instrument response."""
    if resolution_ghz < 0:
        raise ValueError("resolution must be non-negative")
    if resolution_ghz == 0:
        return measured_ghz
    if measured_ghz <= resolution_ghz:
        raise ValueError(f"measured width {measured_ghz} does not exceed the resolution {resolution_ghz}: "
                         "line is unresolved")
    return math.sqrt(measured_ghz ** 2 - resolution_ghz ** 2)


def convolve_gaussian_fwhm(fwhm: float, resolution: float) -> float:
    return math.hypot(fwhm, resolution)


# sin^4 -------------------------------------------------------------------------

@dataclass
class Sin4Fit:
    amplitude: float
    scale_b: float
    sigmas: np.ndarray
    result: FitResult

    @property
    def peak_energy(self) -> float:
        return math.pi / (2.0 * self.scale_b)


def sin4(P, p):
    return p[0] * np.sin(p[1] * P) ** 4


def fit_sin4(P, eta, err=None, *, p_max: float | None = 2.5, n_grid: int = 400) -> Sin4Fit:
    """
    Fit eta = A sin^4(b P) to the points with P <= `p_max`.

    The loss is multimodal in b, so b is first scanned over a grid (with the
    optimal A solved linearly at each b) before the local refinement.
    """
    P = np.asarray(P, dtype=float)
    eta = np.asarray(eta, dtype=float)
    e = np.ones_like(eta) if err is None else np.asarray(err, dtype=float)
    if p_max is not None:
        keep = P <= p_max + 1e-12
        P, eta, e = P[keep], eta[keep], e[keep]
    if P.size < 2:
        raise FitError("need at least two points inside the fit window")
    span = float(P.max())
    if span <= 0:
        raise FitError("energies must be positive")
    # first maximum somewhere between a quarter and four times the window edge
    bs = np.linspace(math.pi / (2 * 4 * span), math.pi / (2 * 0.25 * span), n_grid)
    best = None
    w = 1.0 / e ** 2
    for b in bs:
        s = np.sin(b * P) ** 4
        denom = float((w * s * s).sum())
        A = float((w * s * eta).sum() / denom) if denom > 0 else 0.0
        chi = float((w * (eta - A * s) ** 2).sum())
        if best is None or chi < best[0]:
            best = (chi, A, b)
    res = fit_least_squares(sin4, P, eta, None if err is None else e, [best[1], best[2]])
    return Sin4Fit(res.params[0], res.params[1], res.sigmas, res)
