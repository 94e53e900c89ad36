"""Independent simulations over a list of deposit thicknesses."""

from __future__ import annotations

import logging
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..sparams import FrequencyTrace
from .runner import port_s11, run
from .scene import SimulationSpec

log = logging.getLogger(__name__)


@dataclass
class SweepResult:
    thickness: float
    trace: FrequencyTrace | None
    decayed: bool = True
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def simulate_trace(spec: SimulationSpec, freq_grid=None) -> tuple[FrequencyTrace, bool]:
    series = run(spec)
    trace = port_s11(series, spec.port_resistance, freq_grid)
    return trace, series.decayed


def _one(args) -> SweepResult:
    spec, t, freq_grid, threads = args
    if threads:
        import numba

        numba.set_num_threads(threads)
    try:
        trace, decayed = simulate_trace(spec.with_thickness(t), freq_grid)
        return SweepResult(t, trace, decayed)
    except Exception as exc:  # reported per thickness
        log.error("thickness %g mm failed: %s", t, exc)
        return SweepResult(t, None, False, f"{type(exc).__name__}: {exc}")


def sweep_thickness(
    spec_template: SimulationSpec,
    thicknesses,
    parallelism: int = 1,
    freq_grid=None,
) -> list[SweepResult]:
    """One simulation per thickness, ordered by thickness.

    Each run is single-process and deterministic, so the output does not
    depend on ``parallelism``.
    """
    ts = sorted(float(t) for t in thicknesses)
    grid = None if freq_grid is None else np.asarray(freq_grid, float)
    if parallelism <= 1 or len(ts) <= 1:
        return [_one((spec_template, t, grid, None)) for t in ts]
    workers = min(parallelism, len(ts))
    threads = max(1, (mp.cpu_count() or 1) // workers)
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_one, [(spec_template, t, grid, threads) for t in ts]))
