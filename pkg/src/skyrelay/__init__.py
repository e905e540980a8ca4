"""Packet-level simulator of UAV-to-vehicle data dissemination through one
mmWave base station."""

__version__ = "0.1.0"

from .metrics import MetricRecord  # noqa: E402
from .scenario import CellConfig, ScenarioKind, Simulation, build_scenario, simulate  # noqa: E402

__all__ = ["CellConfig", "MetricRecord", "ScenarioKind", "Simulation", "build_scenario",
           "simulate", "__version__"]
