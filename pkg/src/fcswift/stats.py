"""
Herald/signal detection statistics.

Per trial (one write/read cycle) the model has these independent processes:

* a photon pair from the pump pulse at t=0 (probability `mu`), whose herald is
  detected with `herald_efficiency` and whose signal reaches the detector with
  the correlated transmission `r`;
* when the pump is not gated, a fresh pair born in the read time bin whose
  signal leaks straight through the cavity to the detector (`leak`);
* Raman noise from the control pulses (Poisson, threshold detection);
* detector dark counts.

The detectors are click/no-click.  `analytic_rates` gives the exact per-trial
probabilities; `monte_carlo_trials` samples the same processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bsfwm import conversion_efficiency, temporal_overlap, transform_limit_ps
from .cavity import control_walkoff_ps, retrieval_vs_round_trips
from .dispersion import phase_mismatch

BATCH_TRIALS = 1 << 22


@dataclass(frozen=True)
class SourceSpec:
    """
    SPDC source and signal/herald paths.

    `signal_path_efficiency` is the probability that a heralded signal photon
    reaches the memory input; times the cavity coupling it gives the
    heralding efficiency.  `detection_efficiency` covers everything after the
    memory except the band-pass filter.  `gate_leakage` is the residual pump
    transmission of the optional gate in the read bin.
    """

    pair_prob_per_pulse: float = 0.005
    herald_efficiency: float = 0.3
    signal_path_efficiency: float = 0.165
    detection_efficiency: float = 0.5
    rep_rate_hz: float = 80.1e6
    trial_rate_hz: float = 181e3
    signal_bandwidth_ghz: float = 81.0
    spdc_gated: bool = False
    gate_leakage: float = 0.01

    def __post_init__(self):
        for name in ("pair_prob_per_pulse", "herald_efficiency", "signal_path_efficiency",
                     "detection_efficiency", "gate_leakage"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.rep_rate_hz >= self.trial_rate_hz > 0:
            raise ValueError("need rep_rate_hz >= trial_rate_hz > 0")
        if self.signal_bandwidth_ghz <= 0:
            raise ValueError("signal_bandwidth_ghz must be > 0")

    @property
    def read_bin_pair_prob(self) -> float:
        """Pair probability in the read time bin."""
        return self.pair_prob_per_pulse * (self.gate_leakage if self.spdc_gated else 1.0)


@dataclass(frozen=True)
class NoiseSpec:
    noise_mean_per_shot: float = 3.5e-4
    dark_count_prob: float = 0.0

    def __post_init__(self):
        if self.noise_mean_per_shot < 0 or self.dark_count_prob < 0:
            raise ValueError("noise rates must be non-negative")


@dataclass(frozen=True)
class CountsRecord:
    n_trials: int
    herald_counts: int
    signal_counts: int
    coincidence_counts: int
    # herald coincidences with a read-bin SPDC signal / with a Raman noise click
    accidental_counts: int = 0
    noise_coincidence_counts: int = 0

    def __post_init__(self):
        if self.coincidence_counts > min(self.herald_counts, self.signal_counts):
            raise ValueError("coincidences exceed singles")
        if max(self.herald_counts, self.signal_counts) > self.n_trials:
            raise ValueError("singles exceed trials")
        if max(self.accidental_counts, self.noise_coincidence_counts) > self.coincidence_counts:
            raise ValueError("accidental or noise coincidences exceed coincidences")


class Rates(NamedTuple):
    p_herald: float
    p_signal: float
    p_coinc: float
    p_accidental: float = 0.0
    p_noise_coinc: float = 0.0

    @property
    def g2(self) -> float:
        return self.p_coinc / (self.p_herald * self.p_signal)


class G2Estimate(NamedTuple):
    value: float
    sigma: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.value)


@dataclass(frozen=True)
class TrialProbabilities:
    """Per-trial probabilities of each independent process."""

    mu: float
    herald: float
    correlated: float
    leak_click: float
    noise_click: float
    dark: float


def trial_probabilities(source: SourceSpec, noise: NoiseSpec, memory_retrieval_prob: float, *,
                        leak_transmission: float = 0.0, controls_on: bool = True) -> TrialProbabilities:
    """
    Resolve a scenario point into per-trial process probabilities.

    `memory_retrieval_prob` is the probability that a photon at the cavity
    input is retrieved (for the t=0 reference, the bare cavity transmission).
    `leak_transmission` is the probability that a signal photon born in the
    read bin passes the cavity unconverted.
    """
    if not 0.0 <= memory_retrieval_prob <= 1.0:
        raise ValueError("memory_retrieval_prob must lie in [0, 1]")
    path = source.signal_path_efficiency * source.detection_efficiency
    return TrialProbabilities(
        mu=source.pair_prob_per_pulse,
        herald=source.herald_efficiency,
        correlated=path * memory_retrieval_prob,
        leak_click=source.read_bin_pair_prob * path * leak_transmission,
        noise_click=-math.expm1(-noise.noise_mean_per_shot) if controls_on else 0.0,
        dark=noise.dark_count_prob,
    )


def rates_from_probabilities(tp: TrialProbabilities) -> Rates:
    no_bg = (1.0 - tp.leak_click) * (1.0 - tp.noise_click) * (1.0 - tp.dark)
    p_h = tp.mu * tp.herald
    p_s = 1.0 - (1.0 - tp.mu * tp.correlated) * no_bg
    p_sh = p_h * (1.0 - (1.0 - tp.correlated) * no_bg)
    return Rates(p_h, p_s, p_sh, p_h * tp.leak_click, p_h * tp.noise_click)


def analytic_rates(source: SourceSpec, noise: NoiseSpec, memory_retrieval_prob: float, *,
                   leak_transmission: float = 0.0, controls_on: bool = True) -> Rates:
    """Exact per-trial herald, signal, and coincidence probabilities."""
    return rates_from_probabilities(trial_probabilities(
        source, noise, memory_retrieval_prob, leak_transmission=leak_transmission, controls_on=controls_on))


def accidental_probability(N_s: float, N_h: float, R: float) -> float:
    """Accidental coincidence probability N_s N_h / R^2 for singles rates at repetition rate R."""
    if N_s < 0 or N_h < 0:
        raise ValueError("rates must be non-negative")
    if R <= 0:
        raise ValueError("repetition rate must be positive")
    return N_s * N_h / (R * R)


def g2_from_counts(n_trials: float, herald: float, signal: float, coinc: float) -> G2Estimate:
    """
    g2 = C T / (H S) with first-order Poisson error propagation.

    When C = 0 the value is 0 and the sigma is evaluated with C replaced by 1.
    Zero singles give an undefined estimate (nan, nan).
    """
    if herald <= 0 or signal <= 0:
        return G2Estimate(math.nan, math.nan)
    scale = n_trials / (herald * signal)
    c_eff = max(coinc, 1.0)
    sigma = c_eff * scale * math.sqrt(1.0 / c_eff + 1.0 / herald + 1.0 / signal)
    return G2Estimate(coinc * scale, sigma)


def g2_cross(counts: CountsRecord) -> G2Estimate:
    return g2_from_counts(counts.n_trials, counts.herald_counts, counts.signal_counts,
                          counts.coincidence_counts)


def expected_g2(rates: Rates, n_trials: float) -> G2Estimate:
    """Analytic g2 with the sigma expected from mean counts over `n_trials`."""
    return g2_from_counts(n_trials, rates.p_herald * n_trials, rates.p_signal * n_trials,
                          rates.p_coinc * n_trials)


def is_nonclassical(g2_value: float, g2_sigma: float) -> bool:
    """One-sigma exceedance of the classical bound g2 = 2."""
    if g2_sigma < 0:
        raise ValueError("sigma must be non-negative")
    return g2_value - g2_sigma > 2.0


def _bernoulli_indices(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Sorted indices of successes among n Bernoulli(p) trials."""
    if p <= 0.0 or n == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n, dtype=np.int64)
    k = int(rng.binomial(n, p))
    if k > n // 8:
        return np.nonzero(rng.random(n) < p)[0]
    return np.sort(rng.choice(n, size=k, replace=False))


def _thin(rng: np.random.Generator, idx: np.ndarray, p: float) -> np.ndarray:
    if p >= 1.0:
        return idx
    return idx[rng.random(idx.size) < p]


def _run_batch(tp: TrialProbabilities, seed: int, stream: int, batch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, batch)))
    pairs = _bernoulli_indices(rng, n, tp.mu)
    heralds = _thin(rng, pairs, tp.herald)
    correlated = _thin(rng, pairs, tp.correlated)
    leak = _bernoulli_indices(rng, n, tp.leak_click)
    noise = _bernoulli_indices(rng, n, tp.noise_click)
    dark = _bernoulli_indices(rng, n, tp.dark)
    signal = np.union1d(np.union1d(correlated, leak), np.union1d(noise, dark))
    return np.array([
        heralds.size,
        signal.size,
        np.intersect1d(heralds, signal, assume_unique=True).size,
        np.intersect1d(heralds, leak, assume_unique=True).size,
        np.intersect1d(heralds, noise, assume_unique=True).size,
    ], dtype=np.int64)


def sample_counts(tp: TrialProbabilities, n_trials: int, seed: int, *, stream: int = 0,
                  workers: int = 1) -> CountsRecord:
    """
    Sample `n_trials` trials of the processes in `tp`.

    Trials are split into fixed-size batches; batch k draws from a stream
    keyed by (seed, stream, k), so the result does not depend on `workers`.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sizes = [BATCH_TRIALS] * (n_trials // BATCH_TRIALS)
    if n_trials % BATCH_TRIALS:
        sizes.append(n_trials % BATCH_TRIALS)
    jobs = [(tp, seed, stream, k, n) for k, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_batch(*a), jobs))
    else:
        parts = [_run_batch(*a) for a in jobs]
    h, s, c, acc, nc = (int(x) for x in np.sum(parts, axis=0))
    return CountsRecord(n_trials, h, s, c, acc, nc)


def leak_transmission(scenario) -> float:
    """Probability that a signal photon born in the read bin exits the cavity unconverted."""
    sc = scenario
    tau_in = transform_limit_ps(sc.source.signal_bandwidth_ghz)
    overlap = sc.calibration.overlap_prefactor * temporal_overlap(
        tau_in, sc.read.duration_fwhm_ps, control_walkoff_ps(sc.fiber, sc.quartet), 0.0)
    eta = conversion_efficiency(sc.fiber.gamma, sc.read.peak_power_product_W2, sc.fiber.length_m,
                                phase_mismatch(sc.fiber, sc.quartet))
    return sc.cavity.eta_in * (1.0 - overlap * eta)


def trial_points(scenario, n_list) -> list[TrialProbabilities]:
    """
    Per-trial process probabilities after each storage length in `n_list`.

    Zero round trips is the input reference: the photon passes the cavity with
    the controls off, so there is no Raman noise and no separate read bin.
    """
    n_list = [int(n) for n in n_list]
    stored = [n for n in n_list if n > 0]
    retrieval = dict(zip(stored, retrieval_vs_round_trips(scenario, stored))) if stored else {}
    leak = leak_transmission(scenario)
    out = []
    for n in n_list:
        if n == 0:
            out.append(trial_probabilities(scenario.source, scenario.noise, scenario.cavity.eta_in,
                                           controls_on=False))
        else:
            out.append(trial_probabilities(scenario.source, scenario.noise, float(retrieval[n]),
                                           leak_transmission=leak))
    return out


def monte_carlo_trials(scenario, n_trials: int, seed: int, *, n_round_trips: int = 10,
                       workers: int = 1) -> CountsRecord:
    """Sample herald/signal counts after `n_round_trips` of storage (0 is the input reference)."""
    tp = trial_points(scenario, [n_round_trips])[0]
    return sample_counts(tp, n_trials, seed, stream=n_round_trips, workers=workers)


def g2_vs_storage(scenario, n_list, *, n_trials: int | None = None, seed: int | None = None,
                  monte_carlo: bool = False, workers: int = 1) -> list[tuple[float, float, float]]:
    """
    g2 after each storage length in `n_list`, as (storage_us, g2, sigma).

    Analytic by default, with the sigma expected from mean counts over
    `n_trials`; sampled when `monte_carlo` is set.
    """
    n_trials = n_trials or scenario.mc.n_trials
    seed = scenario.mc.seed if seed is None else seed
    period = scenario.cavity.storage_period_us
    out = []
    for n, tp in zip(n_list, trial_points(scenario, n_list)):
        if monte_carlo:
            est = g2_cross(sample_counts(tp, n_trials, seed, stream=int(n), workers=workers))
        else:
            est = expected_g2(rates_from_probabilities(tp), n_trials)
        out.append((n * period, est.value, est.sigma))
    return out
