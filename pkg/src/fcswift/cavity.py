"""
Stored-photon state machine for the fiber cavity.

A photon is written (coupled in and frequency-translated into the
cavity-resonant mode), circulates for an integer number of round trips while
losing energy and accumulating group-delay dispersion and, if uncorrected, a
timing offset against the laser clock, and is finally read out by the reverse
translation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .bsfwm import (ControlSpec, FilterSpec, conversion_efficiency, filter_transmission,
                    temporal_overlap, transform_limit_ps, xpm_broadening)
from .dispersion import FiberSpec, WavelengthQuartet, gdd_per_round_trip, phase_mismatch, walkoff

if TYPE_CHECKING:
    from .scenario import ScenarioSpec

FOUR_LN2 = 4.0 * math.log(2.0)
# Gaussian time-bandwidth product
TBP_GAUSS = 2.0 * math.log(2.0) / math.pi


@dataclass(frozen=True)
class CavitySpec:
    """
    Linear fiber cavity.

    `round_trip_ns` is the cycle time of the unstretched fiber.  After
    stretching, the cycle differs from the laser clock `laser_period_ns` by the
    residual `residual_mismatch_ps`, which the read timing may or may not
    compensate (`mismatch_corrected`).
    """

    round_trip_ns: float = 49.877
    loss_per_rt_db: float = 0.08
    eta_in: float = 0.55
    laser_period_ns: float = 49.938
    residual_mismatch_ps: float = 2.6
    mismatch_corrected: bool = True

    def __post_init__(self):
        if self.round_trip_ns <= 0:
            raise ValueError("round_trip_ns must be > 0")
        if not 0.0 < self.eta_in <= 1.0:
            raise ValueError("eta_in must lie in (0, 1]")
        if self.loss_per_rt_db < 0:
            raise ValueError("loss_per_rt_db must be >= 0")

    @property
    def survival_per_rt(self) -> float:
        return 10.0 ** (-self.loss_per_rt_db / 10.0)

    @property
    def storage_period_us(self) -> float:
        """Storage time per round trip, laser-locked period plus the residual mismatch."""
        return (self.laser_period_ns + self.residual_mismatch_ps * 1e-3) * 1e-3

    def mismatch_is_consistent(self) -> bool:
        """Stretching can only reduce the unstretched cycle-time mismatch."""
        return abs(self.residual_mismatch_ps) <= 1000.0 * abs(self.laser_period_ns - self.round_trip_ns) + 1e-9


@dataclass(frozen=True)
class StoredPhotonState:
    survival: float
    duration_fwhm_ps: float
    bandwidth_ghz: float
    accumulated_gdd_ps2: float = 0.0
    timing_offset_ps: float = 0.0
    round_trips: int = 0
    # duration at zero accumulated GDD
    initial_duration_ps: float | None = None

    def __post_init__(self):
        if self.initial_duration_ps is None:
            object.__setattr__(self, "initial_duration_ps", self.duration_fwhm_ps)

    @property
    def chirp(self) -> float:
        """Linear chirp parameter implied by the excess of duration x bandwidth over the transform limit."""
        excess = self.initial_duration_ps * self.bandwidth_ghz * 1e-3 / TBP_GAUSS
        return math.sqrt(max(excess * excess - 1.0, 0.0))


def chirped_gaussian_duration(initial_fwhm_ps: float, chirp: float, gdd_ps2: float) -> float:
    """
    FWHM of a linearly chirped Gaussian after group-delay dispersion `gdd_ps2`.

    tau(phi) = tau_i * sqrt((1 + C phi / T0^2)^2 + (phi / T0^2)^2),
    T0 = tau_i / (2 sqrt(ln 2)).  With C = 0 this is the transform-limited
    result tau_0 sqrt(1 + (4 ln2 phi / tau_0^2)^2).
    """
    T0sq = initial_fwhm_ps ** 2 / FOUR_LN2
    x = gdd_ps2 / T0sq
    return initial_fwhm_ps * math.sqrt((1.0 + chirp * x) ** 2 + x * x)


def control_walkoff_ps(fiber: FiberSpec, quartet: WavelengthQuartet) -> float:
    """Total relative delay between the two control fields over one pass of the fiber."""
    return abs(walkoff(fiber, quartet.lambda_p_nm, quartet.lambda_q_nm)) * fiber.length_m


def write(input_fwhm_ghz: float, write_control: ControlSpec, cavity: CavitySpec, fiber: FiberSpec,
          quartet: WavelengthQuartet, *, xpm_factor: float = 1.0, xpm_reference_W: float | None = None,
          overlap_prefactor: float = 1.0, input_duration_ps: float | None = None) -> StoredPhotonState:
    """Couple a signal photon into the cavity and translate it into the stored mode."""
    tau_in = input_duration_ps if input_duration_ps is not None else transform_limit_ps(input_fwhm_ghz)
    dbeta = phase_mismatch(fiber, quartet)
    overlap = overlap_prefactor * temporal_overlap(tau_in, write_control.duration_fwhm_ps,
                                                   control_walkoff_ps(fiber, quartet), 0.0)
    eta = conversion_efficiency(fiber.gamma, write_control.peak_power_product_W2, fiber.length_m, dbeta)
    bandwidth = xpm_broadening(input_fwhm_ghz, write_control, xpm_factor, xpm_reference_W)
    duration = max(transform_limit_ps(bandwidth), tau_in)
    return StoredPhotonState(survival=cavity.eta_in * overlap * eta, duration_fwhm_ps=duration,
                             bandwidth_ghz=bandwidth, initial_duration_ps=duration)


def advance_round_trip(state: StoredPhotonState, cavity: CavitySpec, fiber: FiberSpec, lambda_nm: float,
                       *, dispersion: bool = True) -> StoredPhotonState:
    """One cavity cycle: lumped loss, GDD, and clock drift."""
    gdd = state.accumulated_gdd_ps2
    if dispersion:
        gdd += gdd_per_round_trip(fiber, 2.0, lambda_nm)
    duration = chirped_gaussian_duration(state.initial_duration_ps, state.chirp, gdd)
    offset = state.timing_offset_ps
    if not cavity.mismatch_corrected:
        offset += cavity.residual_mismatch_ps
    return replace(state, survival=state.survival * cavity.survival_per_rt, accumulated_gdd_ps2=gdd,
                   duration_fwhm_ps=duration, timing_offset_ps=offset, round_trips=state.round_trips + 1)


def read(state: StoredPhotonState, read_control: ControlSpec, read_delay_ps: float, cavity: CavitySpec,
         fiber: FiberSpec, quartet: WavelengthQuartet, filt: FilterSpec, *, xpm_factor: float = 1.0,
         xpm_reference_W: float | None = None, overlap_prefactor: float = 1.0) -> tuple[float, float]:
    """
    Translate the stored photon back out of the cavity.

    Returns
    -------
    (probability, bandwidth_ghz)
        Retrieval probability per photon at the cavity input, and the
        spectral FWHM of the retrieved photon.
    """
    dbeta = phase_mismatch(fiber, quartet)
    overlap = overlap_prefactor * temporal_overlap(state.duration_fwhm_ps, read_control.duration_fwhm_ps,
                                                   control_walkoff_ps(fiber, quartet),
                                                   read_delay_ps - state.timing_offset_ps)
    eta = conversion_efficiency(fiber.gamma, read_control.peak_power_product_W2, fiber.length_m, dbeta)
    bandwidth = xpm_broadening(state.bandwidth_ghz, read_control, xpm_factor, xpm_reference_W)
    return state.survival * overlap * eta * filter_transmission(bandwidth, filt), bandwidth


def ring_down(cavity: CavitySpec, fiber: FiberSpec, n_max: int) -> np.ndarray:
    """Bright-pulse survival after 1..n_max round trips (loss only)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return cavity.survival_per_rt ** np.arange(1, n_max + 1)


def ring_down_lifetime_rt(loss_per_rt_db: float) -> float:
    """1/e round-trip count for a lumped per-round-trip loss."""
    return 10.0 / (loss_per_rt_db * math.log(10.0))


def stored_states(scenario: "ScenarioSpec", n_max: int, *, write_control: ControlSpec | None = None):
    """Yield the stored state after 0..n_max round trips."""
    s = scenario
    state = write(s.source.signal_bandwidth_ghz, write_control or s.write, s.cavity, s.fiber, s.quartet,
                  xpm_factor=s.calibration.xpm_write_factor, xpm_reference_W=s.xpm_reference_W,
                  overlap_prefactor=s.calibration.overlap_prefactor)
    yield state
    for _ in range(n_max):
        state = advance_round_trip(state, s.cavity, s.fiber, s.quartet.lambda_t_nm,
                                   dispersion=s.dispersion_enabled)
        yield state


def _read_at(scenario: "ScenarioSpec", state: StoredPhotonState, delay_ps: float,
             read_control: ControlSpec | None = None) -> tuple[float, float]:
    s = scenario
    return read(state, read_control or s.read, delay_ps, s.cavity, s.fiber, s.quartet, s.filter,
                xpm_factor=s.calibration.xpm_read_factor, xpm_reference_W=s.xpm_reference_W,
                overlap_prefactor=s.calibration.overlap_prefactor)


def retrieval_vs_round_trips(scenario: "ScenarioSpec", n_list: Sequence[int], *,
                             total_energy_nJ: float | None = None) -> np.ndarray:
    """Retrieval probability (per photon at the cavity input) after each storage length in `n_list`."""
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list[:-1], n_list[1:])):
        raise ValueError("n_list must be non-empty and strictly increasing")
    if n_list[0] < 0:
        raise ValueError("round-trip counts must be non-negative")
    w, r = scenario.write, scenario.read
    if total_energy_nJ is not None:
        w = replace(w, total_energy_nJ=total_energy_nJ)
        r = replace(r, total_energy_nJ=total_energy_nJ)
    wanted = set(n_list)
    out = {}
    for state in stored_states(scenario, n_list[-1], write_control=w):
        if state.round_trips in wanted:
            # the read controls are timed on the photon when the mismatch is
            # corrected, and on the bare laser clock otherwise
            delay = state.timing_offset_ps if scenario.cavity.mismatch_corrected else 0.0
            out[state.round_trips] = _read_at(scenario, state, delay, r)[0]
    return np.array([out[n] for n in n_list])


def decay_curve(scenario: "ScenarioSpec", n_list: Sequence[int]) -> list[tuple[float, float]]:
    """(storage time [us], retrieval probability) for each round-trip count."""
    probs = retrieval_vs_round_trips(scenario, n_list)
    period = scenario.cavity.storage_period_us
    return [(n * period, float(p)) for n, p in zip(n_list, probs)]


def delay_scan(scenario: "ScenarioSpec", n_round_trips: int,
               delay_grid_ps: Sequence[float]) -> list[tuple[float, float]]:
    """Retrieval probability versus read-control delay after `n_round_trips`."""
    state = None
    for state in stored_states(scenario, n_round_trips):
        pass
    return [(float(d), _read_at(scenario, state, float(d))[0]) for d in delay_grid_ps]


def one_over_e_crossing(n: Sequence[float], y: Sequence[float], reference: float | None = None) -> float:
    """
    Round-trip count where `y` first drops below reference/e, by linear
    interpolation of log(y).  `reference` defaults to the first sample.
    Returns nan if the curve never crosses.
    """
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    ref = y[0] if reference is None else reference
    level = ref / math.e
    below = np.nonzero(y < level)[0]
    if below.size == 0:
        return math.nan
    i = below[0]
    if i == 0:
        return float(n[0])
    la, lb = math.log(y[i - 1]), math.log(max(y[i], 1e-300))
    return float(n[i - 1] + (math.log(level) - la) / (lb - la) * (n[i] - n[i - 1]))
