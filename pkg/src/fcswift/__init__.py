"""Simulator and analysis toolkit for a fiber-cavity quantum memory based on Bragg-scattering four-wave mixing."""

from .scenario import ScenarioSpec, default_scenario, load, loads

__all__ = ["ScenarioSpec", "default_scenario", "load", "loads"]
__version__ = "0.1.0"
