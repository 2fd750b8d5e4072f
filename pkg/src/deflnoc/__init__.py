"""Latency model and cycle-accurate simulator for priority-aware NoCs with
deflection routing."""

from __future__ import annotations

from .canonical import CanonicalInput, CanonicalResult, ServiceProcess, UnstableError, solve_canonical
from .network import LatencyReport, MultiClassSystem, NonConvergenceError, end_to_end_latency, solve_system
from .simulator import LoopSimConfig, SimConfig, run, run_loop
from .topology import DeflectConfig, NocTopology, route_yx
from .traffic import BurstProfile, GGeoParams, TrafficMatrix, ggeo_from_burstiness

__all__ = [
    "BurstProfile",
    "CanonicalInput",
    "CanonicalResult",
    "DeflectConfig",
    "GGeoParams",
    "LatencyReport",
    "LoopSimConfig",
    "MultiClassSystem",
    "NocTopology",
    "NonConvergenceError",
    "ServiceProcess",
    "SimConfig",
    "TrafficMatrix",
    "UnstableError",
    "end_to_end_latency",
    "ggeo_from_burstiness",
    "route_yx",
    "run",
    "run_loop",
    "solve_canonical",
    "solve_system",
]
