"""3-D FDTD solver for patch scenes: Yee grid, CPML, lumped port, S11 extraction."""

from .engine import CurrentSource, Probe, Simulation
from .grid import C0, EPS0, ETA0, MU0, LumpedPort, LumpedResistor, YeeGrid, courant_dt
from .runner import TimeSeries, port_s11, run, run_grid
from .scene import GaussianPulse, PatchScene, SimulationSpec, SuperstrateProfile, build_scene, port_test_grid
from .sweep import SweepResult, simulate_trace, sweep_thickness

__all__ = [
    "C0",
    "EPS0",
    "ETA0",
    "MU0",
    "CurrentSource",
    "GaussianPulse",
    "LumpedPort",
    "LumpedResistor",
    "PatchScene",
    "Probe",
    "Simulation",
    "SimulationSpec",
    "SuperstrateProfile",
    "SweepResult",
    "TimeSeries",
    "YeeGrid",
    "build_scene",
    "courant_dt",
    "port_s11",
    "port_test_grid",
    "run",
    "run_grid",
    "simulate_trace",
    "sweep_thickness",
]
