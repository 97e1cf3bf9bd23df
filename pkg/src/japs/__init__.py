"""Cooperative multi-static ISAC network simulator: joint active/passive
sensing with coexisting downlink and uplink communication, optimized by
alternating SCA-penalty transmit beamforming and fractional-programming
uplink updates."""

__version__ = "0.1.0"

from .metrics import BeamformerSolution, MetricsReport, detection_probability
from .orchestrator import AlgorithmOptions, RunTrace, Scheme, optimize
from .scenario import ChannelSet, Geometry, ScenarioConfig, Tolerances, Topology, make_scenario

__all__ = [
    "AlgorithmOptions", "BeamformerSolution", "ChannelSet", "Geometry",
    "MetricsReport", "RunTrace", "ScenarioConfig", "Scheme", "Tolerances",
    "Topology", "detection_probability", "make_scenario", "optimize",
    "__version__",
]
