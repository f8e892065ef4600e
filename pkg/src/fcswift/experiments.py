"""
Experiment datasets: ring-down, decay, power sweep, g2 scan, spectra, and
read-delay scans, each returned as a column table plus a fit summary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import cavity as cav
from .bsfwm import filter_transmission, xpm_broadening
from .fitting import (deconvolve_gaussian_fwhm, fit_exponential_decay, fit_gaussian, fit_sin4,
                      convolve_gaussian_fwhm)
from .scenario import ScenarioSpec
from .stats import (expected_g2, g2_cross, is_nonclassical, rates_from_probabilities, sample_counts,
                    trial_points)

EXPERIMENTS = ("ringdown", "decay", "power-sweep", "g2-scan", "spectrum", "delay-scan", "calibrate")


@dataclass
class ExperimentResult:
    name: str
    columns: list[str]
    rows: list[tuple]
    summary: dict[str, object] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def coincidence_scale(scenario: ScenarioSpec, n_trials: int | None = None) -> float:
    """Expected herald-signal coincidences per unit retrieval probability."""
    s = scenario.source
    n = n_trials or scenario.mc.n_trials
    return (n * s.pair_prob_per_pulse * s.herald_efficiency * s.signal_path_efficiency
            * s.detection_efficiency)


def poisson_errors(y, scale: float) -> np.ndarray:
    """Error bars for probabilities estimated from `scale * y` expected counts (at least one count)."""
    y = np.asarray(y, dtype=float)
    return np.sqrt(np.maximum(scale * y, 1.0)) / scale


def decay_round_trips(n_max: int) -> list[int]:
    return [1] + list(range(5, n_max + 1, 5))


def fit_decay(scenario: ScenarioSpec, n_list, retrieval):
    t = np.asarray(n_list, dtype=float) * scenario.cavity.storage_period_us
    err = poisson_errors(retrieval, coincidence_scale(scenario))
    return fit_exponential_decay(t, retrieval, err, round_trip_us=scenario.cavity.laser_period_ns * 1e-3)


def decay_lifetime_rt(scenario: ScenarioSpec, n_max: int | None = None) -> float:
    n_list = decay_round_trips(n_max or scenario.anchors.decay_max_round_trips)
    return fit_decay(scenario, n_list, cav.retrieval_vs_round_trips(scenario, n_list)).tau_rt


def effective_lifetime_rt(scenario: ScenarioSpec, n_max: int = 60) -> dict[str, float]:
    """
    Lifetimes of the retrieval curve as actually timed by `scenario`.

    ``one_over_e`` is where retrieval first falls to 1/e of its zero-storage
    value.  ``drift_equals_fwhm`` is where the uncompensated-vs-compensated
    ratio falls to 1/16, i.e. where the clock drift equals the Gaussian
    delay-scan FWHM.
    """
    n = list(range(0, n_max + 1))
    y = cav.retrieval_vs_round_trips(scenario, n)
    corrected = replace(scenario, cavity=replace(scenario.cavity, mismatch_corrected=True))
    ratio = y / cav.retrieval_vs_round_trips(corrected, n)
    return {"one_over_e": cav.one_over_e_crossing(n, y),
            "drift_equals_fwhm": cav.one_over_e_crossing(n, ratio ** (1.0 / (4.0 * math.log(2.0))))}


def ringdown(scenario: ScenarioSpec, n_max: int = 150) -> ExperimentResult:
    surv = cav.ring_down(scenario.cavity, scenario.fiber, n_max)
    n = np.arange(1, n_max + 1)
    fit = fit_exponential_decay(n, surv, 0.01 * surv)
    return ExperimentResult(
        "ringdown", ["round_trips", "survival"], [(int(k), float(v)) for k, v in zip(n, surv)],
        {"lifetime_rt": (fit.tau, fit.sigmas[1]),
         "closed_form_lifetime_rt": cav.ring_down_lifetime_rt(scenario.cavity.loss_per_rt_db)})


def decay(scenario: ScenarioSpec, n_max: int | None = None) -> ExperimentResult:
    n_list = decay_round_trips(n_max or scenario.anchors.decay_max_round_trips)
    tps = trial_points(scenario, n_list)
    path = scenario.source.signal_path_efficiency * scenario.source.detection_efficiency
    retrieval = np.array([tp.correlated / path for tp in tps])
    rows = []
    for n, tp, r in zip(n_list, tps, retrieval):
        rates = rates_from_probabilities(tp)
        rows.append((n * scenario.cavity.storage_period_us, n, float(r), rates.p_noise_coinc,
                     rates.p_accidental, rates.p_herald * tp.correlated))
    fit = fit_decay(scenario, n_list, retrieval)
    summary = {"lifetime_us": (fit.tau, fit.sigmas[1]), "lifetime_rt": (fit.tau_rt, fit.tau_rt_sigma),
               "amplitude": (fit.amplitude, fit.sigmas[0]), "converged": fit.result.converged,
               "pure_loss_lifetime_rt": cav.ring_down_lifetime_rt(scenario.cavity.loss_per_rt_db)}
    if not scenario.cavity.mismatch_corrected:
        eff = effective_lifetime_rt(scenario)
        summary["effective_lifetime_rt"] = eff["one_over_e"]
        summary["drift_equals_fwhm_rt"] = eff["drift_equals_fwhm"]
    return ExperimentResult(
        "decay", ["storage_us", "round_trips", "retrieval_prob", "noise_prob", "accidental_prob",
                  "signal_coinc_prob"], rows, summary)


def memory_efficiency_at(scenario: ScenarioSpec, total_energy_nJ: float, n_round_trips: int) -> float:
    """Internal memory efficiency (retrieval divided by the in-coupling) at one control energy."""
    r = cav.retrieval_vs_round_trips(scenario, [n_round_trips], total_energy_nJ=total_energy_nJ)[0]
    return float(r / scenario.cavity.eta_in)


def efficiency_peak(scenario: ScenarioSpec, n_round_trips: int, bounds=(0.5, 3.5)) -> tuple[float, float]:
    """(energy, efficiency) at the first maximum of the memory efficiency."""
    res = minimize_scalar(lambda e: -memory_efficiency_at(scenario, e, n_round_trips), bounds=bounds,
                          method="bounded", options={"xatol": 1e-6})
    return float(res.x), float(-res.fun)


def power_sweep(scenario: ScenarioSpec, n_round_trips: int | None = None,
                energies=None) -> ExperimentResult:
    n = n_round_trips or scenario.anchors.efficiency_round_trips
    energies = np.round(np.arange(0.1, 3.51, 0.1), 10) if energies is None else np.asarray(energies)
    eta = np.array([memory_efficiency_at(scenario, e, n) for e in energies])
    scale = coincidence_scale(scenario) * scenario.cavity.eta_in
    err = poisson_errors(eta, scale)
    eta_in = scenario.cavity.eta_in
    rows = [(float(e), float(v), float(s), float(v * eta_in)) for e, v, s in zip(energies, eta, err)]
    fit = fit_sin4(energies, eta, err, p_max=2.5)
    e_pk, eta_pk = efficiency_peak(scenario, n)
    i = int(np.argmax(eta))
    return ExperimentResult(
        "power-sweep", ["total_energy_nJ", "eta_mem", "eta_mem_err", "eta_total"], rows,
        {"round_trips": n, "peak_eta_mem": eta_pk, "peak_energy_nJ": e_pk,
         "grid_peak_eta_mem": float(eta[i]), "grid_peak_energy_nJ": float(energies[i]),
         "eta_total_at_peak": eta_pk * eta_in,
         "sin4_amplitude": (fit.amplitude, fit.sigmas[0]), "sin4_scale_b": (fit.scale_b, fit.sigmas[1]),
         "sin4_peak_energy_nJ": fit.peak_energy, "converged": fit.result.converged})


def nonclassical_horizon(scenario: ScenarioSpec, n_trials: int | None = None, n_max: int = 150) -> float:
    """
    Round trips at which the analytic g2 minus its expected sigma falls to 2
    (linear interpolation); 0 if it is not above 2 after one round trip, nan
    if it never falls within `n_max`.
    """
    n_trials = n_trials or scenario.mc.n_trials
    n = list(range(1, n_max + 1))
    margin = []
    for tp in trial_points(scenario, n):
        est = expected_g2(rates_from_probabilities(tp), n_trials)
        margin.append(est.value - est.sigma - 2.0)
    if margin[0] <= 0:
        return 0.0
    return _first_crossing(n, margin)


def _first_crossing(n, margin) -> float:
    for i in range(1, len(n)):
        if margin[i - 1] > 0 >= margin[i]:
            return float(n[i - 1] + margin[i - 1] / (margin[i - 1] - margin[i]) * (n[i] - n[i - 1]))
    return math.nan


def g2_scan(scenario: ScenarioSpec, n_max: int = 100, n_trials: int | None = None,
            seed: int | None = None, workers: int | None = None) -> ExperimentResult:
    n_trials = n_trials or scenario.mc.n_trials
    seed = scenario.mc.seed if seed is None else seed
    workers = workers or scenario.mc.workers
    n_list = [0] + decay_round_trips(n_max)
    rows = []
    margin_mc = []
    zmax = 0.0
    for n, tp in zip(n_list, trial_points(scenario, n_list)):
        counts = sample_counts(tp, n_trials, seed, stream=n, workers=workers)
        mc = g2_cross(counts)
        an = expected_g2(rates_from_probabilities(tp), n_trials)
        z = abs(mc.value - an.value) / mc.sigma
        zmax = max(zmax, z)
        margin_mc.append(mc.value - mc.sigma - 2.0)
        rows.append((n * scenario.cavity.storage_period_us, n, mc.value, mc.sigma,
                     int(is_nonclassical(mc.value, mc.sigma)), an.value, an.sigma,
                     counts.herald_counts, counts.signal_counts, counts.coincidence_counts))
    return ExperimentResult(
        "g2-scan", ["storage_us", "round_trips", "g2", "g2_sigma", "nonclassical_flag", "g2_analytic",
                    "g2_analytic_sigma", "herald_counts", "signal_counts", "coincidence_counts"], rows,
        {"g2_input": (rows[0][2], rows[0][3]), "g2_input_analytic": rows[0][5],
         "nonclassical_horizon_rt": nonclassical_horizon(scenario, n_trials),
         "nonclassical_horizon_mc_rt": _first_crossing(n_list[1:], margin_mc[1:]),
         "max_mc_analytic_z": zmax, "n_trials": n_trials, "seed": seed})


def spectra_fwhm(scenario: ScenarioSpec) -> tuple[float, float, float]:
    """Input, stored, and retrieved spectral FWHM [GHz]."""
    bw_in = scenario.source.signal_bandwidth_ghz
    stored = xpm_broadening(bw_in, scenario.write, scenario.calibration.xpm_write_factor,
                            scenario.xpm_reference_W)
    retrieved = xpm_broadening(stored, scenario.read, scenario.calibration.xpm_read_factor,
                               scenario.xpm_reference_W)
    return bw_in, stored, retrieved


def spectrum(scenario: ScenarioSpec, peak_counts: float = 1e4) -> ExperimentResult:
    """Monochromator-measured spectra, fitted and deconvolved back to the underlying widths."""
    res = scenario.anchors.monochromator_resolution_ghz
    widths = spectra_fwhm(scenario)
    nu = np.arange(-800.0, 800.0 + 1e-9, 5.0)
    measured = [np.exp(-4 * math.log(2) * nu ** 2 / convolve_gaussian_fwhm(w, res) ** 2) for w in widths]
    f = scenario.filter
    filt = np.exp(-math.log(2) * np.abs(2 * nu / f.fwhm_ghz) ** (2 * f.order))
    rows = [tuple(float(v) for v in r) for r in zip(nu, *measured, filt)]
    summary = {}
    for label, w, m in zip(("input", "stored", "retrieved"), widths, measured):
        fit = fit_gaussian(nu, m, poisson_errors(m, peak_counts))
        summary[f"{label}_measured_fwhm_ghz"] = (fit.fwhm, fit.sigmas[1])
        summary[f"{label}_fwhm_ghz"] = deconvolve_gaussian_fwhm(fit.fwhm, res)
    summary["retrieved_filter_blocked"] = 1.0 - filter_transmission(widths[2], f)
    summary["input_filter_blocked"] = 1.0 - filter_transmission(widths[0], f)
    return ExperimentResult("spectrum", ["offset_ghz", "input", "stored", "retrieved", "filter"], rows, summary)


def delay_scan(scenario: ScenarioSpec, n_round_trips: int = 1, half_span_ps: float = 45.0,
               step_ps: float = 0.5) -> ExperimentResult:
    drift = 0.0 if scenario.cavity.mismatch_corrected else n_round_trips * scenario.cavity.residual_mismatch_ps
    # delays are relative to the compensated read timing; uncorrected, the photon drifts off it
    lo = min(0.0, drift) - half_span_ps
    hi = max(0.0, drift) + half_span_ps
    grid = np.round(np.arange(lo, hi + step_ps / 2, step_ps), 9)
    scan = cav.delay_scan(scenario, n_round_trips, grid)
    x = np.array([d for d, _ in scan])
    y = np.array([p for _, p in scan])
    fit = fit_gaussian(x, y, poisson_errors(y, coincidence_scale(scenario)))
    return ExperimentResult(
        "delay-scan", ["delay_ps", "retrieval_prob"], [(float(a), float(b)) for a, b in scan],
        {"round_trips": n_round_trips, "fwhm_ps": (fit.fwhm, fit.sigmas[1]),
         "center_ps": (fit.center, fit.sigmas[0]), "peak": (fit.amplitude, fit.sigmas[2]),
         "converged": fit.result.converged})


def scan_fwhm_ps(scenario: ScenarioSpec, n_round_trips: int) -> float:
    return delay_scan(scenario, n_round_trips).summary["fwhm_ps"][0]
