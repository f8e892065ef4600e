"""
Fiber dispersion around the zero-dispersion wavelength.

The propagation constant is modeled by a cubic Taylor expansion about the
zero-dispersion frequency,

    beta_rel(delta) = beta3 * delta**3 / 6,     delta = omega - omega_zd

so that beta2(delta) = beta3 * delta and the inverse group velocity difference
between two frequencies is beta3 * (delta_a**2 - delta_b**2) / 2.  The constant
and linear terms cancel in every difference used by the rest of the package.

Internally detunings are angular frequencies in rad/ps, so with beta3 in
ps^3/m the propagation constant comes out in 1/m and beta2 in ps^2/m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.constants import c as C_LIGHT

# frequency conservation tolerance for a quartet, GHz
FREQUENCY_TOLERANCE_GHZ = 1.0


def angular_frequency(lambda_nm: float) -> float:
    """Angular frequency in rad/ps of a vacuum wavelength in nm."""
    if lambda_nm <= 0:
        raise ValueError(f"wavelength must be positive, got {lambda_nm}")
    return 2.0 * math.pi * C_LIGHT / (lambda_nm * 1e-9) * 1e-12


def wavelength_nm(omega: float) -> float:
    """Vacuum wavelength in nm of an angular frequency in rad/ps."""
    return 2.0 * math.pi * C_LIGHT / (omega * 1e12) * 1e9


def frequency_ghz(lambda_nm: float) -> float:
    return C_LIGHT / (lambda_nm * 1e-9) * 1e-9


@dataclass(frozen=True)
class FiberSpec:
    """
    Cavity fiber.

    Parameters
    ----------
    length_m : float
        Fiber length L [m]; one cavity round trip is a double pass.
    gamma : float
        Nonlinear coefficient [1/(W m)].
    lambda_zd_nm : float
        Zero-dispersion wavelength [nm].
    beta3 : float
        Third-order dispersion at the zero-dispersion wavelength [ps^3/m].
    attenuation_db_per_km : float
        Propagation loss [dB/km].
    """

    length_m: float = 5.0
    gamma: float = 0.01
    lambda_zd_nm: float = 1387.0
    beta3: float = 1e-4
    attenuation_db_per_km: float = 0.9

    def __post_init__(self):
        if self.length_m <= 0:
            raise ValueError("length_m must be > 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.beta3 == 0:
            raise ValueError("beta3 must be nonzero")
        if self.attenuation_db_per_km < 0:
            raise ValueError("attenuation_db_per_km must be >= 0")
        if self.lambda_zd_nm <= 0:
            raise ValueError("lambda_zd_nm must be > 0")

    @property
    def omega_zd(self) -> float:
        return angular_frequency(self.lambda_zd_nm)

    def detuning(self, lambda_nm: float) -> float:
        """Angular detuning from the zero-dispersion frequency [rad/ps]."""
        return angular_frequency(lambda_nm) - self.omega_zd

    def beta2(self, lambda_nm: float) -> float:
        """Group-velocity dispersion [ps^2/m]."""
        return self.beta3 * self.detuning(lambda_nm)


@dataclass(frozen=True)
class WavelengthQuartet:
    """Signal, stored, and the two control wavelengths [nm]."""

    lambda_s_nm: float = 1260.0
    lambda_t_nm: float = 1291.5
    lambda_p_nm: float = 1548.0
    lambda_q_nm: float = 1503.0

    def conservation_error_ghz(self) -> float:
        """(f_q - f_p) - (f_s - f_t) in GHz."""
        return ((frequency_ghz(self.lambda_q_nm) - frequency_ghz(self.lambda_p_nm))
                - (frequency_ghz(self.lambda_s_nm) - frequency_ghz(self.lambda_t_nm)))

    def conserves_frequency(self, tol_ghz: float = FREQUENCY_TOLERANCE_GHZ) -> bool:
        return abs(self.conservation_error_ghz()) < tol_ghz

    def with_conserving_stored(self) -> "WavelengthQuartet":
        """Same quartet with lambda_t recomputed so that frequency is conserved exactly."""
        omega_t = (angular_frequency(self.lambda_s_nm) - angular_frequency(self.lambda_q_nm)
                   + angular_frequency(self.lambda_p_nm))
        return replace(self, lambda_t_nm=wavelength_nm(omega_t))


def beta_rel(fiber: FiberSpec, lambda_nm: float) -> float:
    """Propagation constant relative to the zero-dispersion carrier [1/m]."""
    delta = fiber.detuning(lambda_nm)
    return fiber.beta3 * delta**3 / 6.0


def phase_mismatch(fiber: FiberSpec, quartet: WavelengthQuartet,
                   tol_ghz: float = FREQUENCY_TOLERANCE_GHZ) -> float:
    """
    Bragg-scattering phase mismatch beta(p) - beta(q) + beta(s) - beta(t) [1/m].

    Raises
    ------
    ValueError
        If the quartet violates frequency conservation by more than `tol_ghz`.
    """
    err = quartet.conservation_error_ghz()
    if abs(err) >= tol_ghz:
        raise ValueError(
            f"quartet violates frequency conservation by {err:.3f} GHz "
            f"(tolerance {tol_ghz} GHz)")
    return (beta_rel(fiber, quartet.lambda_p_nm) - beta_rel(fiber, quartet.lambda_q_nm)
            + beta_rel(fiber, quartet.lambda_s_nm) - beta_rel(fiber, quartet.lambda_t_nm))


def phase_matched_zdw(quartet: WavelengthQuartet) -> float:
    """
    Zero-dispersion wavelength [nm] that phase-matches the quartet.

    For a cubic dispersion curve and a frequency-conserving quartet the
    mismatch is proportional to (m_st**2 - m_pq**2), m being the pair
    midpoints measured from omega_zd, so the nontrivial root puts omega_zd
    at the mean of the four frequencies.
    """
    omegas = [angular_frequency(x) for x in (quartet.lambda_s_nm, quartet.lambda_t_nm,
                                             quartet.lambda_p_nm, quartet.lambda_q_nm)]
    return wavelength_nm(sum(omegas) / 4.0)


def walkoff(fiber: FiberSpec, lambda_a_nm: float, lambda_b_nm: float) -> float:
    """Group-delay difference per unit length, 1/v_g(a) - 1/v_g(b) [ps/m]."""
    da = fiber.detuning(lambda_a_nm)
    db = fiber.detuning(lambda_b_nm)
    return fiber.beta3 * (da * da - db * db) / 2.0


def gdd_per_round_trip(fiber: FiberSpec, cavity_length_factor: float, lambda_nm: float) -> float:
    """Group-delay dispersion accumulated in one cavity cycle [ps^2]."""
    return fiber.beta2(lambda_nm) * cavity_length_factor * fiber.length_m


def calibrate_beta3(fiber: FiberSpec, target_gdd_ps2: float, lambda_nm: float,
                    cavity_length_factor: float = 2.0) -> FiberSpec:
    """Return a copy of `fiber` whose beta3 reproduces `target_gdd_ps2` per round trip at `lambda_nm`."""
    if target_gdd_ps2 == 0:
        raise ValueError("target GDD must be nonzero")
    delta = fiber.detuning(lambda_nm)
    if delta == 0 or abs(lambda_nm - fiber.lambda_zd_nm) < 1e-12:
        raise ValueError("beta2 vanishes at the zero-dispersion wavelength; pick another wavelength")
    beta3 = target_gdd_ps2 / (cavity_length_factor * fiber.length_m * delta)
    return replace(fiber, beta3=beta3)
