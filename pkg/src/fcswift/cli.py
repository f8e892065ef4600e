"""
Command-line experiment runner.

    fcswift <experiment> [--config PATH] [--out DIR] [options]

Each experiment writes ``<out>/<experiment>.csv`` (comma-separated, with
``#`` metadata lines and a header row) and ``<out>/<experiment>_fit.txt``.
Exit codes: 0 ok, 1 config error, 2 usage error, 3 calibration failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .calibration import calibrate_scenario
from .scenario import (SCHEMA_VERSION, CalibrationError, ConfigError, ScenarioSpec, default_scenario_path,
                       dumps, load, validate_config)

EXIT_OK, EXIT_CONFIG, EXIT_USAGE, EXIT_CALIBRATION = 0, 1, 2, 3
COMMANDS = ex.EXPERIMENTS + ("validate",)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fcswift", description="Fiber-cavity quantum memory simulator.")
    p.add_argument("experiment", choices=COMMANDS, metavar="experiment",
                   help="one of: " + ", ".join(COMMANDS))
    p.add_argument("--config", type=Path, default=None,
                   help="scenario file (default: the shipped calibrated scenario)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    p.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed")
    p.add_argument("--trials", type=int, default=None, help="Monte-Carlo trials per scan point")
    p.add_argument("--workers", type=int, default=None, help="Monte-Carlo worker threads")
    p.add_argument("--round-trips", type=int, default=None,
                   help="storage length for delay-scan and power-sweep; scan length for decay, "
                        "g2-scan, and ringdown")
    p.add_argument("--no-dispersion", action="store_true", help="disable intra-cavity dispersion")
    p.add_argument("--gate-spdc", action="store_true", help="gate the pair source in the read time bin")
    p.add_argument("--uncorrected-mismatch", action="store_true",
                   help="time the read controls on the laser clock, not on the drifting photon")
    return p


def apply_overrides(s: ScenarioSpec, args) -> ScenarioSpec:
    mc = s.mc
    if args.seed is not None:
        mc = replace(mc, seed=args.seed)
    if args.trials is not None:
        mc = replace(mc, n_trials=args.trials)
    if args.workers is not None:
        mc = replace(mc, workers=args.workers)
    s = replace(s, mc=mc)
    if args.no_dispersion:
        s = replace(s, dispersion_enabled=False)
    if args.gate_spdc:
        s = replace(s, source=replace(s.source, spdc_gated=True))
    if args.uncorrected_mismatch:
        s = replace(s, cavity=replace(s.cavity, mismatch_corrected=False))
    return s


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def _header(scenario: ScenarioSpec, experiment: str) -> list[str]:
    return [f"# experiment: {experiment}", f"# schema_version: {SCHEMA_VERSION}",
            f"# scenario_hash: {scenario.digest()}", f"# seed: {scenario.mc.seed}"]


def write_result(result: ex.ExperimentResult, scenario: ScenarioSpec, out: Path) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    data = out / f"{result.name}.csv"
    lines = _header(scenario, result.name) + [",".join(result.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in result.rows]
    data.write_text("\n".join(lines) + "\n", encoding="utf-8")
    fit = out / f"{result.name}_fit.txt"
    fit.write_text("\n".join(_header(scenario, result.name) + summary_lines(result.summary)) + "\n",
                   encoding="utf-8")
    return data, fit


def summary_lines(summary: dict) -> list[str]:
    out = []
    for k, v in summary.items():
        if isinstance(v, tuple):
            out.append(f"{k} = {_fmt(v[0])} +/- {_fmt(v[1])}")
        else:
            out.append(f"{k} = {_fmt(v)}")
    return out


def run_experiment(name: str, scenario: ScenarioSpec, round_trips: int | None = None) -> ex.ExperimentResult:
    if name == "ringdown":
        return ex.ringdown(scenario, round_trips or 150)
    if name == "decay":
        return ex.decay(scenario, round_trips)
    if name == "power-sweep":
        return ex.power_sweep(scenario, round_trips)
    if name == "g2-scan":
        return ex.g2_scan(scenario, round_trips or 100)
    if name == "spectrum":
        return ex.spectrum(scenario)
    if name == "delay-scan":
        return ex.delay_scan(scenario, scenario.anchors.scan_round_trips if round_trips is None else round_trips)
    raise ValueError(f"unknown experiment {name!r}")


def _validate(path: Path) -> int:
    checks = validate_config(path)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}" + (f"  ({c.detail})" if c.detail else ""))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CONFIG


def _calibrate(scenario: ScenarioSpec, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    try:
        calibrated, report = calibrate_scenario(scenario)
    except CalibrationError as exc:
        if exc.report is not None:
            (out / "calibration_report.txt").write_text("\n".join(exc.report.lines()) + "\n", encoding="utf-8")
        print(f"fcswift: calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    (out / "calibrated.scenario").write_text(dumps(calibrated), encoding="utf-8")
    (out / "calibration_report.txt").write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
    print("\n".join(report.lines()))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    config = args.config or default_scenario_path()
    if args.experiment == "validate":
        return _validate(config)
    if args.round_trips is not None and args.round_trips < 0:
        print("fcswift: --round-trips must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = load(config)
        scenario = apply_overrides(scenario, args)
    except (ConfigError, ValueError) as exc:
        print(f"fcswift: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.experiment == "calibrate":
        return _calibrate(scenario, args.out)
    if not scenario.calibration.calibrated:
        print("fcswift: warning: scenario is not calibrated; run `fcswift calibrate` first", file=sys.stderr)
    try:
        result = run_experiment(args.experiment, scenario, args.round_trips)
    except ValueError as exc:
        print(f"fcswift: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    data, fit = write_result(result, scenario, args.out)
    print("\n".join(summary_lines(result.summary)))
    print(f"wrote {data} and {fit}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
