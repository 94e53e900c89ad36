"""Running a patch simulation and turning port signals into S11."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import OutOfBandError
from ..sparams import FrequencyTrace
from .engine import Simulation
from .grid import YeeGrid
from .scene import GaussianPulse, SimulationSpec, build_scene

log = logging.getLogger(__name__)

STABILITY_CHECK_EVERY = 500


@dataclass
class TimeSeries:
    """Port samples of one run.

    ``port_voltage[n]`` is taken at ``(n + 1) * dt`` and ``port_current[n]``
    at ``(n + 1/2) * dt``.  ``decayed`` is False when the run hit its step cap
    before the port energy fell below the requested fraction of its peak.
    """

    port_voltage: np.ndarray
    port_current: np.ndarray
    dt: float
    excitation: GaussianPulse | None = None
    decayed: bool = True
    energy_log: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.port_voltage) != len(self.port_current):
            raise ValueError("voltage and current series differ in length")

    @property
    def voltage_times(self) -> np.ndarray:
        return (np.arange(len(self.port_voltage)) + 1.0) * self.dt

    @property
    def current_times(self) -> np.ndarray:
        return (np.arange(len(self.port_current)) + 0.5) * self.dt


def run_grid(
    grid: YeeGrid,
    pulse: GaussianPulse,
    max_steps: int,
    energy_decay: float = 1e-5,
    safety: float = 0.99,
    resistance: float | None = None,
) -> TimeSeries:
    """Drive the lumped port of ``grid`` with ``pulse`` until the port energy has decayed."""
    sim = Simulation(grid, safety=safety)
    dt = sim.dt
    r = grid.port.resistance if resistance is None else resistance
    f_lo = max(pulse.band[0], 0.1 * pulse.center)
    window = max(16, int(math.ceil(2.0 / (f_lo * 1e9 * dt))))
    src_end = int(math.ceil(2 * pulse.t0 / dt))

    v = np.zeros(max_steps)
    cur = np.zeros(max_steps)
    peak = 0.0
    block = 0.0
    decayed = False
    energy_log = []
    n_done = max_steps
    for n in range(max_steps):
        vs = pulse((n + 0.5) * dt) if n <= src_end else 0.0
        sim.step(port_voltage=vs)
        # H is at n + 1/2 and E at n + 1 after the step
        cur[n] = sim.port_current()
        v[n] = sim.port_voltage()
        block += v[n] ** 2 + (r * cur[n]) ** 2
        if (n + 1) % window == 0:
            peak = max(peak, block)
            energy_log.append((n + 1, block))
            if n > src_end and peak > 0 and block < energy_decay * peak:
                decayed = True
                n_done = n + 1
                break
            block = 0.0
        if (n + 1) % STABILITY_CHECK_EVERY == 0:
            sim.check_stable()
    sim.check_stable()
    if not decayed:
        log.warning("port energy did not decay below %.1e of peak within %d steps", energy_decay, max_steps)
    return TimeSeries(v[:n_done].copy(), cur[:n_done].copy(), dt, pulse, decayed, energy_log)


def run(spec: SimulationSpec) -> TimeSeries:
    """Simulate the patch scene of ``spec`` and record the port voltage and current."""
    grid = build_scene(spec)
    log.info("grid %s cells (%d), pml %d", grid.shape, grid.n_cells, spec.pml_layers)
    return run_grid(
        grid,
        spec.excitation,
        spec.time_steps,
        energy_decay=spec.energy_decay,
        safety=spec.courant_safety,
    )


def _dft(x: np.ndarray, t: np.ndarray, f_hz: np.ndarray) -> np.ndarray:
    out = np.empty(f_hz.size, dtype=complex)
    for m, f in enumerate(f_hz):
        out[m] = np.sum(x * np.exp(-2j * np.pi * f * t))
    return out


def port_s11(series: TimeSeries, reference_resistance: float = 50.0, freq_grid=None, check_band: bool = True) -> FrequencyTrace:
    """Reflection coefficient at the port from the recorded V and I.

    Incident and reflected waves are ``a = (V + R I) / 2 sqrt(R)`` and
    ``b = (V - R I) / 2 sqrt(R)``; the half-step offset between V and I is
    handled by transforming each on its own time axis.
    """
    if freq_grid is None:
        lo, hi = series.excitation.band
        freq_grid = np.linspace(lo, hi, 601)
    f = np.asarray(freq_grid, dtype=float)
    if check_band and series.excitation is not None:
        lo, hi = series.excitation.band
        if f.min() < lo - 1e-9 or f.max() > hi + 1e-9:
            raise OutOfBandError(f"frequency grid {f.min()}..{f.max()} GHz outside excited band {lo}..{hi} GHz")
    if not series.decayed:
        log.warning("computing S11 from a series that did not decay")
    fh = f * 1e9
    vf = _dft(series.port_voltage, series.voltage_times, fh)
    if_ = _dft(series.port_current, series.current_times, fh)
    r = reference_resistance
    a = (vf + r * if_) / (2 * math.sqrt(r))
    b = (vf - r * if_) / (2 * math.sqrt(r))
    return FrequencyTrace(f, b / a, metadata={"decayed": series.decayed})
