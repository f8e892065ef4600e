"""
Scenario configuration: loading, saving, and validation.

A scenario is a flat sectioned key/value file (INI syntax) with one section
per component.  Unknown keys and unparsable values are reported by
`section.key`.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .bsfwm import ControlSpec, FilterSpec
from .cavity import CavitySpec
from .dispersion import FiberSpec, WavelengthQuartet
from .stats import NoiseSpec, SourceSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Unreadable or invalid scenario file."""


class CalibrationError(RuntimeError):
    """A calibration anchor could not be reached within its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class MonteCarloSpec:
    n_trials: int = 10_000_000
    seed: int = 20240601
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class CalibrationSpec:
    """Free model constants pinned by `calibrate_scenario`."""

    xpm_write_factor: float = 1.0
    xpm_read_factor: float = 1.0
    xpm_reference_energy_nJ: float = 2.0
    overlap_prefactor: float = 1.0
    calibrated: bool = False

    def __post_init__(self):
        if self.xpm_write_factor < 1 or self.xpm_read_factor < 1:
            raise ValueError("XPM factors must be >= 1")
        if not 0.0 < self.overlap_prefactor <= 1.0:
            raise ValueError("overlap_prefactor must lie in (0, 1]")
        if self.xpm_reference_energy_nJ <= 0:
            raise ValueError("xpm_reference_energy_nJ must be > 0")


@dataclass(frozen=True)
class AnchorSpec:
    """Measured values the calibration is pinned to."""

    gdd_per_rt_ps2: float = 0.31
    stored_bandwidth_ghz: float = 130.0
    retrieved_bandwidth_ghz: float = 275.0
    filter_blocked_fraction: float = 0.30
    peak_memory_efficiency: float = 0.109
    peak_energy_nJ: float = 2.0
    efficiency_round_trips: int = 10
    decay_lifetime_rt: float = 32.8
    scan_fwhm_ps: float = 13.6
    scan_round_trips: int = 1
    g2_input: float = 180.0
    heralding_efficiency: float = 0.091
    nonclassical_round_trips: float = 70.0
    monochromator_resolution_ghz: float = 100.0
    decay_max_round_trips: int = 100


@dataclass(frozen=True)
class ScenarioSpec:
    fiber: FiberSpec = field(default_factory=FiberSpec)
    cavity: CavitySpec = field(default_factory=CavitySpec)
    quartet: WavelengthQuartet = field(default_factory=WavelengthQuartet)
    write: ControlSpec = field(default_factory=ControlSpec)
    read: ControlSpec = field(default_factory=ControlSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)
    source: SourceSpec = field(default_factory=SourceSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    mc: MonteCarloSpec = field(default_factory=MonteCarloSpec)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    anchors: AnchorSpec = field(default_factory=AnchorSpec)
    dispersion_enabled: bool = True
    schema_version: int = SCHEMA_VERSION

    @property
    def xpm_reference_W(self) -> float:
        ref = ControlSpec(self.calibration.xpm_reference_energy_nJ, self.write.duration_fwhm_ps)
        return ref.field_peak_power_W

    def with_control_duration(self, duration_ps: float) -> "ScenarioSpec":
        return replace(self, write=replace(self.write, duration_fwhm_ps=duration_ps),
                       read=replace(self.read, duration_fwhm_ps=duration_ps))

    def with_energy(self, total_energy_nJ: float) -> "ScenarioSpec":
        return replace(self, write=replace(self.write, total_energy_nJ=total_energy_nJ),
                       read=replace(self.read, total_energy_nJ=total_energy_nJ))

    def digest(self) -> str:
        """Short hash of everything that affects results (the worker count does not)."""
        canonical = replace(self, mc=replace(self.mc, workers=1))
        return hashlib.sha256(dumps(canonical).encode()).hexdigest()[:16]


# (section name, ScenarioSpec attribute)
SECTIONS = [
    ("fiber", "fiber"), ("cavity", "cavity"), ("quartet", "quartet"), ("write", "write"),
    ("read", "read"), ("filter", "filter"), ("source", "source"), ("noise", "noise"),
    ("mc", "mc"), ("calibration", "calibration"), ("anchors", "anchors"),
]


def _component_class(attr):
    return type(getattr(ScenarioSpec(), attr))


def _parse_value(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {raw!r}") from None


def _read_parser(text: str, origin: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return cp


def raw_sections(text: str, origin: str = "<scenario>") -> dict[str, dict[str, object]]:
    """Parse the file into typed per-section dicts without building the components."""
    cp = _read_parser(text, origin)
    known = {s for s, _ in SECTIONS} | {"meta"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{origin}: unknown section [{sec}]")
    out: dict[str, dict[str, object]] = {}
    for sec, attr in SECTIONS:
        defaults = getattr(ScenarioSpec(), attr)
        names = {f.name for f in dataclasses.fields(defaults)}
        vals: dict[str, object] = {}
        if cp.has_section(sec):
            for key, raw in cp.items(sec):
                if key not in names:
                    raise ConfigError(f"{origin}: unknown key {sec}.{key}")
                vals[key] = _parse_value(raw, getattr(defaults, key), f"{origin}: {sec}.{key}")
        out[sec] = vals
    meta = {}
    if cp.has_section("meta"):
        for key, raw in cp.items("meta"):
            if key == "schema_version":
                meta[key] = _parse_value(raw, 1, f"{origin}: meta.schema_version")
            elif key == "dispersion_enabled":
                meta[key] = _parse_value(raw, True, f"{origin}: meta.dispersion_enabled")
            else:
                raise ConfigError(f"{origin}: unknown key meta.{key}")
    out["meta"] = meta
    return out


def loads(text: str, origin: str = "<scenario>") -> ScenarioSpec:
    raw = raw_sections(text, origin)
    version = raw["meta"].get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{origin}: meta.schema_version {version} is not supported "
                          f"(expected {SCHEMA_VERSION})")
    parts = {}
    for sec, attr in SECTIONS:
        cls = _component_class(attr)
        try:
            parts[attr] = cls(**raw[sec])
        except ValueError as exc:
            raise ConfigError(f"{origin}: [{sec}] {exc}") from None
    return ScenarioSpec(**parts, dispersion_enabled=raw["meta"].get("dispersion_enabled", True))


def load(path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, str(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def dumps(scenario: ScenarioSpec) -> str:
    buf = io.StringIO()
    buf.write("[meta]\n")
    buf.write(f"schema_version = {scenario.schema_version}\n")
    buf.write(f"dispersion_enabled = {_fmt(scenario.dispersion_enabled)}\n")
    for sec, attr in SECTIONS:
        comp = getattr(scenario, attr)
        buf.write(f"\n[{sec}]\n")
        for f in dataclasses.fields(comp):
            buf.write(f"{f.name} = {_fmt(getattr(comp, f.name))}\n")
    return buf.getvalue()


def default_scenario_path() -> Path:
    return Path(str(resources.files("fcswift") / "data" / "paper.scenario"))


def default_scenario() -> ScenarioSpec:
    return load(default_scenario_path())


# validation --------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _in_unit(v) -> bool:
    return 0.0 <= v <= 1.0


def validate_text(text: str, origin: str = "<scenario>") -> list[Check]:
    """Run every invariant check on a scenario text and report each result."""
    try:
        raw = raw_sections(text, origin)
    except ConfigError as exc:
        return [Check("parse", False, str(exc))]
    checks = [Check("parse", True)]
    d = {sec: {**dataclasses.asdict(getattr(ScenarioSpec(), attr)), **raw[sec]} for sec, attr in SECTIONS}

    def add(name, ok, detail=""):
        checks.append(Check(name, bool(ok), detail))

    add("meta.schema_version", raw["meta"].get("schema_version", SCHEMA_VERSION) == SCHEMA_VERSION,
        f"expected {SCHEMA_VERSION}")
    fb, cv, qt, so = d["fiber"], d["cavity"], d["quartet"], d["source"]
    add("fiber.length_m > 0", fb["length_m"] > 0)
    add("fiber.gamma > 0", fb["gamma"] > 0)
    add("fiber.beta3 != 0", fb["beta3"] != 0)
    add("fiber.attenuation_db_per_km >= 0", fb["attenuation_db_per_km"] >= 0)
    lam_ok = all(qt[k] > 0 for k in qt)
    add("quartet wavelengths > 0", lam_ok)
    if lam_ok:
        q = WavelengthQuartet(**qt)
        err = q.conservation_error_ghz()
        add("quartet frequency conservation", abs(err) < 1.0, f"(f_q - f_p) - (f_s - f_t) = {err:.3f} GHz")
        lo = max(qt["lambda_s_nm"], qt["lambda_t_nm"])
        hi = min(qt["lambda_p_nm"], qt["lambda_q_nm"])
        add("fiber.lambda_zd_nm between signal and control bands", lo < fb["lambda_zd_nm"] < hi,
            f"{lo} < {fb['lambda_zd_nm']} < {hi}")
    add("cavity.round_trip_ns > 0", cv["round_trip_ns"] > 0)
    add("cavity.eta_in in (0, 1]", 0 < cv["eta_in"] <= 1, f"eta_in = {cv['eta_in']}")
    add("cavity.loss_per_rt_db >= 0", cv["loss_per_rt_db"] >= 0)
    add("cavity.residual_mismatch_ps consistent with cycle times",
        abs(cv["residual_mismatch_ps"]) <= 1000 * abs(cv["laser_period_ns"] - cv["round_trip_ns"]) + 1e-9,
        f"|{cv['residual_mismatch_ps']}| ps <= 1000 * |{cv['laser_period_ns']} - {cv['round_trip_ns']}| ps")
    for sec in ("write", "read"):
        add(f"{sec}.total_energy_nJ >= 0", d[sec]["total_energy_nJ"] >= 0)
        add(f"{sec}.duration_fwhm_ps > 0", d[sec]["duration_fwhm_ps"] > 0)
    add("filter.fwhm_ghz > 0", d["filter"]["fwhm_ghz"] > 0)
    add("filter.order >= 1", d["filter"]["order"] >= 1)
    for k in ("pair_prob_per_pulse", "herald_efficiency", "signal_path_efficiency",
              "detection_efficiency", "gate_leakage"):
        add(f"source.{k} in [0, 1]", _in_unit(so[k]), f"{k} = {so[k]}")
    add("source.rep_rate_hz >= trial_rate_hz > 0", so["rep_rate_hz"] >= so["trial_rate_hz"] > 0)
    add("noise rates >= 0", d["noise"]["noise_mean_per_shot"] >= 0 and d["noise"]["dark_count_prob"] >= 0)
    add("mc.n_trials >= 1", d["mc"]["n_trials"] >= 1)
    cb = d["calibration"]
    add("calibration.overlap_prefactor in (0, 1]", 0 < cb["overlap_prefactor"] <= 1)
    add("calibration XPM factors >= 1", cb["xpm_write_factor"] >= 1 and cb["xpm_read_factor"] >= 1)
    if all(c.passed for c in checks):
        try:
            loads(text, origin)
            add("construct", True)
        except ConfigError as exc:
            add("construct", False, str(exc))
    return checks


def validate_config(path) -> list[Check]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        return [Check("read", False, f"cannot read {path}: {exc.strerror}")]
    return validate_text(text, str(path))
