"""Yee lattice storage: materials, PEC edges, CPML profiles and the time step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

C0 = 299792458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0**2)
ETA0 = MU0 * C0

# CPML grading
PML_ORDER = 3
PML_KAPPA_MAX = 5.0
PML_ALPHA_MAX = 0.05


@dataclass(frozen=True)
class LumpedPort:
    """Resistive voltage source on the z-directed edges ``(i, j, k0..k1-1)``."""

    i: int
    j: int
    k0: int
    k1: int
    resistance: float

    @property
    def n_edges(self) -> int:
        return self.k1 - self.k0


@dataclass(frozen=True)
class LumpedResistor:
    """Passive resistor on the z-directed edges ``(i, j, k0..k1-1)``."""

    i: int
    j: int
    k0: int
    k1: int
    resistance: float


@dataclass
class YeeGrid:
    """Voxelised scene on a uniform Yee lattice.

    ``eps_r`` and ``sigma`` are per-cell (``shape``); PEC sheets are boolean
    masks over the tangential E edges.  ``pml`` gives the CPML thickness in
    cells on the faces ``(x-, x+, y-, y+, z-, z+)``; a face without PML is a
    PEC wall.
    """

    shape: tuple[int, int, int]
    cell: tuple[float, float, float]  # metres
    eps_r: np.ndarray
    sigma: np.ndarray
    pec_x: np.ndarray
    pec_y: np.ndarray
    pec_z: np.ndarray
    pml: tuple[int, int, int, int, int, int]
    port: LumpedPort | None = None
    resistors: list[LumpedResistor] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, shape, cell, pml=(0,) * 6):
        nx, ny, nz = shape
        if np.isscalar(cell):
            cell = (cell, cell, cell)
        return cls(
            shape=(nx, ny, nz),
            cell=tuple(float(c) for c in cell),
            eps_r=np.ones(shape, dtype=np.float32),
            sigma=np.zeros(shape, dtype=np.float32),
            pec_x=np.zeros((nx, ny + 1, nz + 1), dtype=bool),
            pec_y=np.zeros((nx + 1, ny, nz + 1), dtype=bool),
            pec_z=np.zeros((nx + 1, ny + 1, nz), dtype=bool),
            pml=tuple(int(p) for p in pml),
        )

    def check(self):
        nx, ny, nz = self.shape
        expected = {
            "eps_r": self.shape,
            "sigma": self.shape,
            "pec_x": (nx, ny + 1, nz + 1),
            "pec_y": (nx + 1, ny, nz + 1),
            "pec_z": (nx + 1, ny + 1, nz),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.any(self.eps_r < 1.0):
            raise ValueError("relative permittivity below 1 in grid")
        if self.port is not None:
            p = self.port
            if not (0 < p.i < nx and 0 < p.j < ny and 0 <= p.k0 < p.k1 <= nz):
                raise ValueError("port outside grid")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))


def courant_dt(grid: YeeGrid, safety: float = 0.99) -> float:
    """Largest stable leapfrog step scaled by ``safety``."""
    if not 0 < safety <= 1:
        raise ValueError("safety must be in (0, 1]")
    dx, dy, dz = grid.cell
    return safety / (C0 * math.sqrt(1 / dx**2 + 1 / dy**2 + 1 / dz**2))


def _edge_average(cell_vals: np.ndarray, axis: int) -> np.ndarray:
    """Average per-cell values onto the edges parallel to ``axis``.

    Edges interior to the lattice touch four cells; boundary edges touch fewer
    and are averaged over the cells that exist.
    """
    others = [a for a in range(3) if a != axis]
    pad = [(0, 0)] * 3
    for a in others:
        pad[a] = (1, 1)
    vals = np.pad(cell_vals.astype(np.float64), pad)
    cnt = np.pad(np.ones_like(cell_vals, dtype=np.float64), pad)

    def four(arr):
        out = 0.0
        for da in (0, 1):
            for db in (0, 1):
                sl = [slice(None)] * 3
                sl[others[0]] = slice(da, da + arr.shape[others[0]] - 1)
                sl[others[1]] = slice(db, db + arr.shape[others[1]] - 1)
                out = out + arr[tuple(sl)]
        return out

    return four(vals) / four(cnt)


def update_coefficients(grid: YeeGrid, dt: float):
    """``(ca, cb)`` arrays for Ex, Ey, Ez including PEC edges and lumped elements."""
    out = []
    nx, ny, nz = grid.shape
    for axis, pec in enumerate((grid.pec_x, grid.pec_y, grid.pec_z)):
        eps = _edge_average(grid.eps_r, axis) * EPS0
        sig = _edge_average(grid.sigma, axis)
        if axis == 2:
            dl = grid.cell[2]
            area = grid.cell[0] * grid.cell[1]
            for r in grid.resistors:
                sig[r.i, r.j, r.k0 : r.k1] += dl / ((r.resistance / (r.k1 - r.k0)) * area)
            if grid.port is not None:
                p = grid.port
                sig[p.i, p.j, p.k0 : p.k1] += dl / ((p.resistance / p.n_edges) * area)
        loss = sig * dt / (2 * eps)
        ca = (1 - loss) / (1 + loss)
        cb = (dt / eps) / (1 + loss)
        mask = pec.copy()
        # tangential E on the outer faces is a PEC wall
        for a in range(3):
            if a == axis:
                continue
            sl = [slice(None)] * 3
            sl[a] = 0
            mask[tuple(sl)] = True
            sl[a] = -1
            mask[tuple(sl)] = True
        ca[mask] = 0.0
        cb[mask] = 0.0
        out.append((ca.astype(np.float32), cb.astype(np.float32)))
    return out


@dataclass
class PmlAxis:
    """CPML data for one axis: slab indices and recursive-convolution coefficients."""

    e_idx: np.ndarray
    e_b: np.ndarray
    e_c: np.ndarray
    h_idx: np.ndarray
    h_b: np.ndarray
    h_c: np.ndarray
    kappa_e: np.ndarray  # full length n+1 (integer positions)
    kappa_h: np.ndarray  # full length n (half positions)


def _profile(depth: np.ndarray, npml_cells: int, d: float, dt: float):
    """Grading of sigma, kappa and alpha for normalised depth in [0, 1]."""
    sigma_max = 0.8 * (PML_ORDER + 1) / (ETA0 * d)
    g = depth**PML_ORDER
    sigma = sigma_max * g
    kappa = 1.0 + (PML_KAPPA_MAX - 1.0) * g
    alpha = np.where(depth > 0, PML_ALPHA_MAX * (1.0 - depth), 0.0)
    b = np.exp(-(sigma / kappa + alpha) * dt / EPS0)
    denom = sigma * kappa + kappa**2 * alpha
    c = np.where(denom > 0, sigma / np.where(denom > 0, denom, 1.0) * (b - 1.0), 0.0)
    return kappa, b, c


def pml_axis(n: int, lo: int, hi: int, d: float, dt: float) -> PmlAxis:
    """CPML profile along an axis of ``n`` cells with ``lo``/``hi`` layers."""
    pos_e = np.arange(n + 1, dtype=float)
    pos_h = np.arange(n, dtype=float) + 0.5

    def depth(pos):
        dep = np.zeros_like(pos)
        if lo:
            dep = np.maximum(dep, (lo - pos) / lo)
        if hi:
            dep = np.maximum(dep, (pos - (n - hi)) / hi)
        return np.clip(dep, 0.0, 1.0)

    de, dh = depth(pos_e), depth(pos_h)
    ke, be, ce = _profile(de, lo, d, dt)
    kh, bh, chh = _profile(dh, lo, d, dt)
    e_idx = np.nonzero((de > 0) & (pos_e > 0) & (pos_e < n))[0]
    h_idx = np.nonzero(dh > 0)[0]
    return PmlAxis(
        e_idx=e_idx.astype(np.int64),
        e_b=be[e_idx].astype(np.float32),
        e_c=ce[e_idx].astype(np.float32),
        h_idx=h_idx.astype(np.int64),
        h_b=bh[h_idx].astype(np.float32),
        h_c=chh[h_idx].astype(np.float32),
        kappa_e=ke,
        kappa_h=kh,
    )
