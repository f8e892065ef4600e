import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcswift import cavity as cav
from fcswift.bsfwm import ControlSpec, FilterSpec, transform_limit_ps
from fcswift.dispersion import FiberSpec, WavelengthQuartet, phase_matched_zdw
from fcswift.scenario import default_scenario

LN2 = math.log(2.0)
RING_DOWN_RT = 54.2868102379064785      # 10 / (0.08 ln 10)
LOSS_FOR_100_RT = 0.0434294481903251828  # 10 / (100 ln 10)
SURVIVAL_008DB = 10 ** -0.008


def fft_duration_oracle(fwhm, chirp, gdd, n=1 << 16):
    """Propagate A(t) = exp(-(1 + iC) t^2 / 2 T0^2) through exp(i gdd w^2 / 2) and measure the FWHM."""
    T0 = fwhm / (2 * math.sqrt(LN2))
    span = 60 * fwhm + 40 * abs(gdd) / fwhm
    t = np.linspace(-span / 2, span / 2, n, endpoint=False)
    dt = t[1] - t[0]
    a = np.exp(-(1 + 1j * chirp) * t ** 2 / (2 * T0 ** 2))
    w = 2 * np.pi * np.fft.fftfreq(n, dt)
    # spectrum with the e^{+i w t} convention, then back with e^{-i w t}
    spec = np.fft.ifft(a) * np.exp(0.5j * gdd * w ** 2)
    out = np.abs(np.fft.fft(spec)) ** 2
    half = out.max() / 2
    idx = np.nonzero(out >= half)[0]
    i0, i1 = idx[0], idx[-1]
    left = t[i0 - 1] + (half - out[i0 - 1]) / (out[i0] - out[i0 - 1]) * dt
    right = t[i1] + (out[i1] - half) / (out[i1] - out[i1 + 1]) * dt
    return right - left


@pytest.fixture(scope="module")
def scenario():
    return default_scenario()


def test_cavity_spec_validation_and_period():
    c = cav.CavitySpec()
    assert c.survival_per_rt == pytest.approx(SURVIVAL_008DB, rel=1e-14)
    assert c.storage_period_us == pytest.approx(0.0499406, rel=1e-12)
    assert c.mismatch_is_consistent()
    assert not replace(c, residual_mismatch_ps=100.0).mismatch_is_consistent()
    for kw in ({"round_trip_ns": 0}, {"eta_in": 1.2}, {"eta_in": 0.0}, {"loss_per_rt_db": -0.1}):
        with pytest.raises(ValueError):
            cav.CavitySpec(**kw)


def test_transform_limited_duration_example():
    assert transform_limit_ps(81.0) == pytest.approx(5.44, abs=0.01)
    d = cav.chirped_gaussian_duration(5.44, 0.0, 30 * 0.31)
    assert d == pytest.approx(7.21528137519231070, rel=1e-12)
    assert d == pytest.approx(fft_duration_oracle(5.44, 0.0, 9.3), rel=1e-4)


@pytest.mark.parametrize("fwhm,chirp,gdd", [(5.44, 1.2, 3.1), (6.0, 0.5, -4.0), (5.44, 1.51, 9.3),
                                            (8.0, 0.0, 20.0)])
def test_chirped_duration_against_fft_propagation(fwhm, chirp, gdd):
    assert cav.chirped_gaussian_duration(fwhm, chirp, gdd) == pytest.approx(
        fft_duration_oracle(fwhm, chirp, gdd), rel=1e-4)


def test_chirp_from_excess_bandwidth():
    tl = transform_limit_ps(130.0)
    s = cav.StoredPhotonState(1.0, 5.44, 130.0)
    assert s.chirp == pytest.approx(math.sqrt((5.44 / tl) ** 2 - 1), rel=1e-12)
    assert cav.StoredPhotonState(1.0, tl, 130.0).chirp == pytest.approx(0.0, abs=1e-6)


def _perfect_setup():
    q = WavelengthQuartet().with_conserving_stored()
    fiber = FiberSpec(lambda_zd_nm=phase_matched_zdw(q), beta3=3e-4, gamma=0.01)
    # controls much longer than the signal and matched so 2 gamma P L = pi/2
    P = (math.pi / 2) / (2 * fiber.gamma * fiber.length_m)
    dur = 1e6
    energy = 4 * P * dur * 1e-12 / 0.9394372786996513 * 1e9
    return q, fiber, ControlSpec(energy, dur)


def test_perfect_write():
    q, fiber, control = _perfect_setup()
    c = cav.CavitySpec(eta_in=1.0)
    s = cav.write(81.0, control, c, fiber, q)
    assert s.survival == pytest.approx(1.0, abs=1e-5)
    assert s.round_trips == 0 and s.accumulated_gdd_ps2 == 0 and s.timing_offset_ps == 0
    assert s.bandwidth_ghz == 81.0
    assert s.duration_fwhm_ps == pytest.approx(transform_limit_ps(81.0))


def test_advance_round_trip_examples(scenario):
    s = cav.StoredPhotonState(1.0, 5.44, 81.0)
    unc = replace(scenario.cavity, mismatch_corrected=False)
    for _ in range(10):
        s = cav.advance_round_trip(s, unc, scenario.fiber, scenario.quartet.lambda_t_nm)
    assert s.round_trips == 10
    assert s.timing_offset_ps == pytest.approx(26.0, rel=1e-12)
    assert s.survival == pytest.approx(SURVIVAL_008DB ** 10, rel=1e-12)
    assert s.accumulated_gdd_ps2 == pytest.approx(3.1, rel=1e-9)
    t = cav.StoredPhotonState(1.0, 5.44, 81.0)
    t = cav.advance_round_trip(t, scenario.cavity, scenario.fiber, scenario.quartet.lambda_t_nm)
    assert t.timing_offset_ps == 0.0


def test_thirty_round_trip_broadening(scenario):
    s = cav.StoredPhotonState(1.0, transform_limit_ps(81.0), 81.0)
    for _ in range(30):
        s = cav.advance_round_trip(s, scenario.cavity, scenario.fiber, scenario.quartet.lambda_t_nm)
    assert s.duration_fwhm_ps == pytest.approx(7.2, abs=0.05)


def test_ring_down():
    c = cav.CavitySpec()
    r = cav.ring_down(c, FiberSpec(), 200)
    assert r[0] == pytest.approx(SURVIVAL_008DB)
    assert cav.ring_down_lifetime_rt(0.08) == pytest.approx(RING_DOWN_RT, rel=1e-14)
    assert cav.one_over_e_crossing(np.arange(1, 201), r, reference=1.0) == pytest.approx(RING_DOWN_RT, abs=0.05)
    assert np.all(cav.ring_down(replace(c, loss_per_rt_db=0.0), FiberSpec(), 20) == 1.0)
    assert cav.ring_down_lifetime_rt(LOSS_FOR_100_RT) == pytest.approx(100.0, rel=1e-12)
    with pytest.raises(ValueError):
        cav.ring_down(c, FiberSpec(), 0)


def test_stored_and_retrieved_bandwidth(scenario):
    states = list(cav.stored_states(scenario, 3))
    assert states[0].bandwidth_ghz == pytest.approx(130.0, rel=1e-12)
    _, bw = cav._read_at(scenario, states[-1], 0.0)
    assert bw == pytest.approx(275.0, rel=1e-12)


def test_total_efficiency_at_ten_round_trips(scenario):
    r = cav.retrieval_vs_round_trips(scenario, [10])[0]
    assert r == pytest.approx(0.060, abs=0.003)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 60), loss=st.floats(0, 1), corrected=st.booleans(), disp=st.booleans())
def test_state_invariants_along_advance(n, loss, corrected, disp):
    sc = default_scenario()
    c = replace(sc.cavity, loss_per_rt_db=loss, mismatch_corrected=corrected)
    s = cav.write(81.0, sc.write, c, sc.fiber, sc.quartet, xpm_factor=130 / 81)
    tl = transform_limit_ps(s.bandwidth_ghz)
    assert s.duration_fwhm_ps == pytest.approx(s.initial_duration_ps)
    prev = s
    for _ in range(n):
        s = cav.advance_round_trip(prev, c, sc.fiber, sc.quartet.lambda_t_nm, dispersion=disp)
        assert 0 <= s.survival <= prev.survival <= 1
        assert s.duration_fwhm_ps >= prev.duration_fwhm_ps - 1e-12
        assert s.duration_fwhm_ps >= tl - 1e-12
        assert s.round_trips == prev.round_trips + 1
        prev = s


def test_decay_without_dispersion_is_exponential(scenario):
    nd = replace(scenario, dispersion_enabled=False)
    y = cav.retrieval_vs_round_trips(nd, list(range(0, 101)))
    ratios = y[1:] / y[:-1]
    np.testing.assert_allclose(ratios, SURVIVAL_008DB, rtol=1e-12)


def test_decay_curve_times(scenario):
    pts = cav.decay_curve(scenario, [1, 10, 70])
    assert [p[0] for p in pts] == pytest.approx([0.0499406, 0.499406, 3.495842])
    assert pts[0][1] > pts[1][1] > pts[2][1]


def test_dispersion_only_shortens_lifetime(scenario):
    n = list(range(0, 101))
    with_d = cav.retrieval_vs_round_trips(scenario, n)
    without = cav.retrieval_vs_round_trips(replace(scenario, dispersion_enabled=False), n)
    assert np.all(with_d <= without * (1 + 1e-12))
    assert cav.one_over_e_crossing(n, with_d) < cav.one_over_e_crossing(n, without)


def test_delay_scan_symmetric_and_peaked(scenario):
    grid = np.arange(-40, 40.5, 0.5)
    scan = cav.delay_scan(scenario, 1, grid)
    y = np.array([p for _, p in scan])
    np.testing.assert_allclose(y, y[::-1], rtol=1e-12)
    assert grid[np.argmax(y)] == 0.0


@pytest.mark.parametrize("n", [1, 5, 12])
def test_delay_scan_tracks_drift_when_uncorrected(scenario, n):
    unc = replace(scenario, cavity=replace(scenario.cavity, mismatch_corrected=False))
    grid = np.arange(-20, 60.25, 0.25)
    scan = cav.delay_scan(unc, n, grid)
    assert grid[int(np.argmax([p for _, p in scan]))] == pytest.approx(2.6 * n, abs=0.13)


def test_one_over_e_crossing():
    n = np.arange(0, 50)
    y = np.exp(-n / 7.5)
    assert cav.one_over_e_crossing(n, y) == pytest.approx(7.5, rel=1e-12)
    assert math.isnan(cav.one_over_e_crossing([0, 1], [1.0, 0.9]))


def test_retrieval_rejects_bad_lists(scenario):
    with pytest.raises(ValueError):
        cav.retrieval_vs_round_trips(scenario, [])
    with pytest.raises(ValueError):
        cav.retrieval_vs_round_trips(scenario, [5, 3])
    with pytest.raises(ValueError):
        cav.retrieval_vs_round_trips(scenario, [-1, 2])


def test_filter_transmission_applied_on_read(scenario):
    states = list(cav.stored_states(scenario, 1))
    wide = replace(scenario, filter=FilterSpec(fwhm_ghz=1e6))
    p_filtered, _ = cav._read_at(scenario, states[-1], 0.0)
    p_open, _ = cav._read_at(wide, states[-1], 0.0)
    assert p_filtered / p_open == pytest.approx(0.70, abs=1e-9)
