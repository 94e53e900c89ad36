"""Leapfrog time stepping on a :class:`YeeGrid`."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import InstabilityError
from . import kernels
from .grid import EPS0, MU0, YeeGrid, _edge_average, courant_dt, pml_axis, update_coefficients

#: field magnitude treated as divergence
DIVERGENCE_LIMIT = 1e12


@dataclass
class CurrentSource:
    """Soft current source ``I(t)`` (amperes) on one E edge; ``component`` is 0, 1 or 2."""

    component: int
    index: tuple[int, int, int]
    waveform: Callable[[float], float]


@dataclass
class Probe:
    component: str  # "ex", "ey", "ez", "hx", "hy", "hz"
    index: tuple[int, int, int]
    samples: list = field(default_factory=list)


class Simulation:
    """Fields, coefficients and CPML state for one grid.

    A simulation instance is mutated by :meth:`step` and must not be shared
    between threads while stepping.
    """

    def __init__(self, grid: YeeGrid, dt: float | None = None, safety: float = 0.99):
        grid.check()
        self.grid = grid
        self.dt = courant_dt(grid, safety) if dt is None else dt
        nx, ny, nz = grid.shape
        f32 = np.float32
        self.ex = np.zeros((nx, ny + 1, nz + 1), f32)
        self.ey = np.zeros((nx + 1, ny, nz + 1), f32)
        self.ez = np.zeros((nx + 1, ny + 1, nz), f32)
        self.hx = np.zeros((nx + 1, ny, nz), f32)
        self.hy = np.zeros((nx, ny + 1, nz), f32)
        self.hz = np.zeros((nx, ny, nz + 1), f32)
        (self.ca_x, self.cb_x), (self.ca_y, self.cb_y), (self.ca_z, self.cb_z) = update_coefficients(grid, self.dt)
        self.ch = f32(self.dt / MU0)

        self.axes = []
        scale_e, scale_h = [], []
        for a, n in enumerate(grid.shape):
            lo, hi = grid.pml[2 * a], grid.pml[2 * a + 1]
            pa = pml_axis(n, lo, hi, grid.cell[a], self.dt)
            self.axes.append(pa)
            scale_e.append((1.0 / (pa.kappa_e * grid.cell[a])).astype(f32))
            scale_h.append((1.0 / (pa.kappa_h * grid.cell[a])).astype(f32))
        self.sx_e, self.sy_e, self.sz_e = scale_e
        self.sx_h, self.sy_h, self.sz_h = scale_h
        self._pml_views = self._build_pml_views()
        self._edge_eps = None
        self.n = 0

    def _build_pml_views(self):
        e = (self.ex, self.ey, self.ez)
        h = (self.hx, self.hy, self.hz)
        cb = (self.cb_x, self.cb_y, self.cb_z)
        views = []
        for a, pa in enumerate(self.axes):
            if pa.e_idx.size == 0 and pa.h_idx.size == 0:
                continue
            b, c = (a + 1) % 3, (a + 2) % 3

            def mv(arr):
                return np.moveaxis(arr, a, 0)

            e_b, e_c, h_b, h_c = mv(e[b]), mv(e[c]), mv(h[b]), mv(h[c])
            cb_b, cb_c = mv(cb[b]), mv(cb[c])
            psi_eb = np.zeros((pa.e_idx.size,) + e_b.shape[1:], np.float32)
            psi_ec = np.zeros((pa.e_idx.size,) + e_c.shape[1:], np.float32)
            psi_hb = np.zeros((pa.h_idx.size,) + h_b.shape[1:], np.float32)
            psi_hc = np.zeros((pa.h_idx.size,) + h_c.shape[1:], np.float32)
            inv_d = np.float32(1.0 / self.grid.cell[a])
            views.append((e_b, e_c, h_b, h_c, cb_b, cb_c, psi_eb, psi_ec, psi_hb, psi_hc, pa, inv_d))
        return views

    def step(self, port_voltage: float = 0.0, sources: Sequence[CurrentSource] = ()):
        """Advance H to ``n + 1/2`` and E to ``n + 1``.

        ``port_voltage`` is the source EMF of the lumped port at ``n + 1/2``.
        """
        kernels.update_h(self.hx, self.hy, self.hz, self.ex, self.ey, self.ez, self.ch, self.sx_h, self.sy_h, self.sz_h)
        for e_b, e_c, h_b, h_c, _, _, _, _, psi_hb, psi_hc, pa, inv_d in self._pml_views:
            if pa.h_idx.size:
                kernels.pml_h(h_b, h_c, e_b, e_c, psi_hb, psi_hc, pa.h_idx, pa.h_b, pa.h_c, inv_d, self.ch)
        kernels.update_e(
            self.ex, self.ey, self.ez, self.hx, self.hy, self.hz,
            self.ca_x, self.cb_x, self.ca_y, self.cb_y, self.ca_z, self.cb_z,
            self.sx_e, self.sy_e, self.sz_e,
        )
        for e_b, e_c, h_b, h_c, cb_b, cb_c, psi_eb, psi_ec, _, _, pa, inv_d in self._pml_views:
            if pa.e_idx.size:
                kernels.pml_e(e_b, e_c, h_b, h_c, cb_b, cb_c, psi_eb, psi_ec, pa.e_idx, pa.e_b, pa.e_c, inv_d)

        t_half = (self.n + 0.5) * self.dt
        port = self.grid.port
        if port is not None and port_voltage != 0.0:
            dx, dy, _ = self.grid.cell
            # Vs/R is the same on every series edge
            j_src = port_voltage / (port.resistance * dx * dy)
            ks = slice(port.k0, port.k1)
            self.ez[port.i, port.j, ks] -= (self.cb_z[port.i, port.j, ks] * j_src).astype(np.float32)
        for src in sources:
            arr, cb = ((self.ex, self.cb_x), (self.ey, self.cb_y), (self.ez, self.cb_z))[src.component]
            d = self.grid.cell
            area = d[(src.component + 1) % 3] * d[(src.component + 2) % 3]
            arr[src.index] -= np.float32(cb[src.index] * src.waveform(t_half) / area)
        self.n += 1

    # --- observables -------------------------------------------------------------

    def port_voltage(self) -> float:
        """``V = -sum(Ez dz)`` across the port edges (at integer time)."""
        p = self.grid.port
        return -float(np.sum(self.ez[p.i, p.j, p.k0 : p.k1], dtype=np.float64)) * self.grid.cell[2]

    def port_current(self) -> float:
        """Loop integral of H around the port edges, averaged over the series edges (half-integer time)."""
        p = self.grid.port
        dx, dy, _ = self.grid.cell
        i, j = p.i, p.j
        ks = slice(p.k0, p.k1)
        loop = (self.hy[i, j, ks].astype(np.float64) - self.hy[i - 1, j, ks]) * dy - (
            self.hx[i, j, ks].astype(np.float64) - self.hx[i, j - 1, ks]
        ) * dx
        return float(np.mean(loop))

    def energy(self) -> float:
        """Total electromagnetic energy in joules (cell-centred approximation)."""
        dv = float(np.prod(self.grid.cell))
        if self._edge_eps is None:
            self._edge_eps = [_edge_average(self.grid.eps_r, axis) for axis in range(3)]
        we = 0.0
        for arr, eps in zip((self.ex, self.ey, self.ez), self._edge_eps):
            we += float(np.sum(eps * arr.astype(np.float64) ** 2))
        wh = sum(float(np.sum(a.astype(np.float64) ** 2)) for a in (self.hx, self.hy, self.hz))
        return 0.5 * dv * (EPS0 * we + MU0 * wh)

    def max_field(self) -> float:
        return float(max(np.max(np.abs(a)) for a in (self.ex, self.ey, self.ez)))

    def check_stable(self):
        m = self.max_field()
        if not math.isfinite(m) or m > DIVERGENCE_LIMIT:
            raise InstabilityError(f"field diverged at step {self.n}: max |E| = {m:.3e} V/m")

    def sample(self, probe: Probe) -> float:
        return float(getattr(self, probe.component)[probe.index])
