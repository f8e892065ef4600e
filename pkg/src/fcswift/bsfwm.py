"""
Bragg-scattering four-wave mixing: conversion efficiency, pulse overlap,
XPM broadening of the converted photon, and band-pass filter transmission.

All pulse envelopes are Gaussian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.constants import c as C_LIGHT
from scipy.special import erf, erfc

# peak power of a Gaussian pulse is GAUSS_PEAK * energy / FWHM
GAUSS_PEAK = 2.0 * math.sqrt(math.log(2.0) / math.pi)  # 0.9394
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class ControlSpec:
    """
    Write or read control pulse pair.

    `total_energy_nJ` is the energy over both write and read passes, split
    evenly between the passes and between the p and q fields, so one pass
    uses half of it and each field a quarter.
    """

    total_energy_nJ: float = 2.0
    duration_fwhm_ps: float = 10.0

    def __post_init__(self):
        if self.total_energy_nJ < 0:
            raise ValueError("total_energy_nJ must be >= 0")
        if self.duration_fwhm_ps <= 0:
            raise ValueError("duration_fwhm_ps must be > 0")

    @property
    def field_energy_nJ(self) -> float:
        return self.total_energy_nJ / 4.0

    @property
    def field_peak_power_W(self) -> float:
        return GAUSS_PEAK * self.field_energy_nJ * 1e-9 / (self.duration_fwhm_ps * 1e-12)

    @property
    def peak_power_product_W2(self) -> float:
        """P**2 = P_p * P_q."""
        return self.field_peak_power_W ** 2


@dataclass(frozen=True)
class FilterSpec:
    """Super-Gaussian band-pass centred on the signal."""

    center_nm: float = 1260.0
    fwhm_ghz: float = 245.7
    order: float = 4.0

    def __post_init__(self):
        if self.fwhm_ghz <= 0:
            raise ValueError("fwhm_ghz must be > 0")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    @classmethod
    def from_bandwidth_nm(cls, center_nm: float, width_nm: float, order: float = 4.0) -> "FilterSpec":
        return cls(center_nm=center_nm, fwhm_ghz=bandwidth_nm_to_ghz(width_nm, center_nm), order=order)


def bandwidth_nm_to_ghz(width_nm: float, center_nm: float) -> float:
    """Frequency width of a narrow band, c * dlambda / lambda**2."""
    return C_LIGHT * width_nm * 1e-9 / (center_nm * 1e-9) ** 2 * 1e-9


def transform_limit_ps(bandwidth_ghz: float) -> float:
    """FWHM duration of a transform-limited Gaussian with the given spectral FWHM."""
    return 2.0 * math.log(2.0) / math.pi / bandwidth_ghz * 1e3


def conversion_efficiency(gamma: float, P2: float, L: float, delta_beta: float) -> float:
    """
    Single-pass frequency-translation probability.

    eta = (4 gamma^2 P^2 / kappa^2) sin^2(kappa L),
    kappa = sqrt((delta_beta/2)^2 + 4 gamma^2 P^2)
    """
    if P2 <= 0:
        return 0.0
    g2 = 4.0 * gamma * gamma * P2
    kappa = math.sqrt(0.25 * delta_beta * delta_beta + g2)
    return min(1.0, g2 / (kappa * kappa) * math.sin(kappa * L) ** 2)


def memory_efficiency(write: ControlSpec, read: ControlSpec, fiber, delta_beta: float,
                      overlap_write: float, overlap_read: float, filter_pass: float) -> float:
    """Write conversion x read conversion x filter, each conversion scaled by its pulse overlap."""
    for name, value in (("overlap_write", overlap_write), ("overlap_read", overlap_read),
                        ("filter_pass", filter_pass)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    eta_w = conversion_efficiency(fiber.gamma, write.peak_power_product_W2, fiber.length_m, delta_beta)
    eta_r = conversion_efficiency(fiber.gamma, read.peak_power_product_W2, fiber.length_m, delta_beta)
    return overlap_write * eta_w * overlap_read * eta_r * filter_pass


def temporal_overlap(signal_fwhm_ps: float, control_fwhm_ps: float,
                     walkoff_ps: float = 0.0, delay_offset_ps: float = 0.0) -> float:
    """
    Signal-weighted mean of the peak-normalised control intensity.

    The control is displaced by `delay_offset_ps` and its position relative to
    the signal is smeared uniformly over the total walk-off.  For zero
    walk-off this is sigma_c / S * exp(-d^2 / 2 S^2), S^2 = sigma_s^2 + sigma_c^2.
    """
    if signal_fwhm_ps <= 0 or control_fwhm_ps <= 0:
        raise ValueError("pulse durations must be positive")
    sc = control_fwhm_ps * FWHM_TO_SIGMA
    S = math.hypot(signal_fwhm_ps * FWHM_TO_SIGMA, sc)
    w = abs(walkoff_ps)
    d = delay_offset_ps
    if w < 1e-9 * S:
        return sc / S * math.exp(-d * d / (2.0 * S * S))
    root2S = math.sqrt(2.0) * S
    box = S * math.sqrt(math.pi / 2.0) / w * _erf_diff((d + w / 2) / root2S, (d - w / 2) / root2S)
    return sc / S * box


def _erf_diff(a: float, b: float) -> float:
    """erf(a) - erf(b) for a >= b, without cancellation in the far tails."""
    if b > 0:
        return erfc(b) - erfc(a)
    if a < 0:
        return erfc(-a) - erfc(-b)
    return erf(a) - erf(b)


def temporal_overlap_quadrature(signal_fwhm_ps, control_fwhm_ps, walkoff_ps=0.0, delay_offset_ps=0.0):
    """Brute-force quadrature of the same overlap; used as a check."""
    ss = signal_fwhm_ps * FWHM_TO_SIGMA
    sc = control_fwhm_ps * FWHM_TO_SIGMA

    def at_shift(u):
        f = lambda t: (np.exp(-t * t / (2 * ss * ss)) / (ss * math.sqrt(2 * math.pi))
                       * np.exp(-(t - delay_offset_ps - u) ** 2 / (2 * sc * sc)))
        return integrate.quad(f, -12 * ss + min(0, delay_offset_ps + u), 12 * ss + max(0, delay_offset_ps + u),
                              limit=200)[0]

    w = abs(walkoff_ps)
    if w == 0:
        return at_shift(0.0)
    return integrate.quad(at_shift, -w / 2, w / 2, limit=200)[0] / w


def xpm_factor_at(control: ControlSpec, xpm_factor_per_pass: float,
                  reference_peak_power_W: float | None = None) -> float:
    """Broadening factor for one conversion pass, linear in control peak power around the reference."""
    if reference_peak_power_W is None:
        return xpm_factor_per_pass
    return 1.0 + (xpm_factor_per_pass - 1.0) * control.field_peak_power_W / reference_peak_power_W


def xpm_broadening(input_fwhm_ghz: float, control: ControlSpec, xpm_factor_per_pass: float,
                   reference_peak_power_W: float | None = None) -> float:
    """Spectral FWHM after one conversion pass [GHz]."""
    if input_fwhm_ghz <= 0:
        raise ValueError("input bandwidth must be positive")
    return input_fwhm_ghz * xpm_factor_at(control, xpm_factor_per_pass, reference_peak_power_W)


def filter_transmission(spectrum_fwhm_ghz: float, filt: FilterSpec) -> float:
    """
    Fraction of a centred Gaussian spectrum passed by a super-Gaussian filter.

    The filter power transmission is exp(-ln2 * |2 nu / FWHM|^(2 order)).
    """
    if spectrum_fwhm_ghz <= 0:
        raise ValueError("spectrum width must be positive")
    return _filter_transmission(float(spectrum_fwhm_ghz), float(filt.fwhm_ghz), float(filt.order))


@lru_cache(maxsize=4096)
def _filter_transmission(spectrum_fwhm_ghz: float, filter_fwhm_ghz: float, order: float) -> float:
    sigma = spectrum_fwhm_ghz * FWHM_TO_SIGMA
    half = 0.5 * filter_fwhm_ghz
    two_n = 2.0 * order
    ln2 = math.log(2.0)

    def integrand(nu):
        return (math.exp(-0.5 * (nu / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
                * math.exp(-ln2 * (nu / half) ** two_n))

    # beyond this the filter transmits less than exp(-40)
    upper = min(12.0 * sigma, half * (40.0 / ln2) ** (1.0 / two_n))
    edges = sorted({0.0, min(half, upper), upper})
    total = sum(integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                for a, b in zip(edges[:-1], edges[1:]))
    return 2.0 * total
