from dataclasses import replace

import pytest

from fcswift import default_scenario
from fcswift import experiments as ex
from fcswift.calibration import calibrate_scenario, reset_free_constants
from fcswift.scenario import CalibrationError, dumps


@pytest.fixture(scope="module")
def shipped():
    return default_scenario()


@pytest.fixture(scope="module")
def calibrated(shipped):
    return calibrate_scenario(shipped)


def test_shipped_file_is_calibration_fixed_point(shipped, calibrated):
    s, report = calibrated
    assert report.passed
    assert dumps(s) == dumps(shipped)


def test_idempotent(calibrated):
    s, _ = calibrated
    again, _ = calibrate_scenario(s)
    assert again == s


def test_independent_of_starting_free_constants(shipped, calibrated):
    neutral, _ = calibrate_scenario(reset_free_constants(shipped))
    assert dumps(neutral) == dumps(calibrated[0])


def test_report_lists_every_anchor(calibrated):
    _, report = calibrated
    names = {c.name for c in report.checks}
    assert {"gdd_per_rt_ps2", "stored_bandwidth_ghz", "retrieved_bandwidth_ghz", "filter_blocked_fraction",
            "peak_memory_efficiency", "peak_energy_nJ", "decay_lifetime_rt", "scan_fwhm_ps", "g2_input",
            "heralding_efficiency", "nonclassical_round_trips"} <= names
    assert all(line.endswith("PASS") for line in report.lines() if line.startswith("anchor"))


def test_larger_gdd_anchor_shortens_lifetime(shipped, calibrated):
    more = replace(shipped, anchors=replace(shipped.anchors, gdd_per_rt_ps2=0.31 * 1.5))
    s, _ = calibrate_scenario(more, check=False)
    assert ex.decay_lifetime_rt(s) < ex.decay_lifetime_rt(calibrated[0])


def test_unreachable_filter_anchor_raises(shipped):
    bad = replace(shipped, anchors=replace(shipped.anchors, filter_blocked_fraction=0.99))
    with pytest.raises(CalibrationError, match="filter order"):
        calibrate_scenario(bad)


def test_out_of_tolerance_anchor_attaches_report(shipped):
    bad = replace(shipped, anchors=replace(shipped.anchors, decay_lifetime_rt=10.0))
    with pytest.raises(CalibrationError, match="decay_lifetime_rt") as info:
        calibrate_scenario(bad)
    assert info.value.report is not None
    assert "decay_lifetime_rt" in {c.name for c in info.value.report.failures()}


def test_unrepairable_quartet_raises(shipped):
    bad = replace(shipped, quartet=replace(shipped.quartet, lambda_t_nm=1300.0))
    with pytest.raises(CalibrationError, match="frequency conservation"):
        calibrate_scenario(bad)
