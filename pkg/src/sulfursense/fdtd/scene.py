"""Patch scenes and their voxelisation onto a Yee grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigurationError
from ..stackup import LayerStack, PatchGeometry, reference_geometry, reference_stack
from .grid import C0, EPS0, LumpedPort, LumpedResistor, YeeGrid

MIN_PML = 6


@dataclass(frozen=True)
class SuperstrateProfile:
    """Deposit height over the wall.

    ``uniform``: flat layer of ``t_max``.  ``wavy``: raised cosine
    ``t_max - amplitude * (1 + cos(2 pi x / period)) / 2`` with ``x``
    measured along the resonant length from the patch centre.
    """

    kind: str = "uniform"
    t_max: float = 0.0
    amplitude: float | None = None
    period: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "wavy"):
            raise ConfigurationError(f"unknown superstrate profile {self.kind!r}")
        if self.t_max < 0:
            raise ConfigurationError("profile thickness must be >= 0")
        if self.kind == "wavy":
            if self.amplitude is not None and not 0 <= self.amplitude <= self.t_max:
                raise ConfigurationError("wavy amplitude must lie in [0, t_max]")
            if self.period is not None and self.period <= 0:
                raise ConfigurationError("wavy period must be positive")

    @classmethod
    def uniform(cls, t: float) -> "SuperstrateProfile":
        return cls("uniform", float(t))

    @classmethod
    def wavy(cls, t_max: float, amplitude: float | None = None, period: float | None = None) -> "SuperstrateProfile":
        return cls("wavy", float(t_max), amplitude, period)

    def height(self, x, resonant_length: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.full_like(x, self.t_max)
        amp = self.t_max / 2 if self.amplitude is None else self.amplitude
        period = resonant_length if self.period is None else self.period
        return self.t_max - amp * (1 + np.cos(2 * math.pi * x / period)) / 2

    def with_thickness(self, t: float) -> "SuperstrateProfile":
        if self.kind == "wavy" and self.amplitude is not None:
            # keep the relative waviness when rescaling
            frac = self.amplitude / self.t_max if self.t_max > 0 else 0.5
            return replace(self, t_max=float(t), amplitude=frac * float(t))
        return replace(self, t_max=float(t))


@dataclass(frozen=True)
class PatchScene:
    """Coax-fed patch on a ground-backed stack.

    ``ground_size`` of ``None`` makes the ground plane the whole wall (the
    pipe), otherwise a finite ``(x, y)`` rectangle in mm centred on the patch.
    ``margins`` of ``None`` picks a quarter wavelength at the top of the
    excited band.  ``deposit_offset`` (mm) is deposit that lies out of the
    sensor's view: a sensor mounted that far back from the flow only sees
    ``max(t - deposit_offset, 0)``.
    """

    geom: PatchGeometry = field(default_factory=reference_geometry)
    stack: LayerStack = field(default_factory=reference_stack)
    profile: SuperstrateProfile = field(default_factory=SuperstrateProfile)
    ground_size: tuple[float, float] | None = None
    margins: float | None = None
    deposit_offset: float = 0.0

    def __post_init__(self):
        if self.deposit_offset < 0:
            raise ConfigurationError("deposit_offset must be >= 0")
        if self.ground_size is not None:
            gx, gy = self.ground_size
            if gx < self.geom.resonant_length or gy < self.geom.width:
                raise ConfigurationError("ground plane must be at least as large as the patch")

    def with_thickness(self, t: float) -> "PatchScene":
        return replace(self, profile=self.profile.with_thickness(t))


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian-modulated sine; ``bandwidth`` is the full width at -20 dB of the spectrum."""

    center: float = 9.0  # GHz
    bandwidth: float = 6.0  # GHz
    amplitude: float = 1.0  # volts

    @property
    def tau(self) -> float:
        return 2 * math.sqrt(math.log(10)) / (math.pi * self.bandwidth * 1e9)

    @property
    def t0(self) -> float:
        return 4.5 * self.tau

    @property
    def band(self) -> tuple[float, float]:
        return self.center - self.bandwidth / 2, self.center + self.bandwidth / 2

    def __call__(self, t: float) -> float:
        u = (t - self.t0) / self.tau
        if abs(u) > 8:
            return 0.0
        return self.amplitude * math.exp(-u * u) * math.sin(2 * math.pi * self.center * 1e9 * (t - self.t0))


@dataclass(frozen=True)
class SimulationSpec:
    scene: PatchScene = field(default_factory=PatchScene)
    cell_size: float = 0.254  # mm
    pml_layers: int = 10
    time_steps: int = 20000
    excitation: GaussianPulse = field(default_factory=GaussianPulse)
    port_resistance: float = 50.0
    energy_decay: float = 1e-5
    courant_safety: float = 0.99

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ConfigurationError("cell_size must be positive")
        if self.pml_layers < MIN_PML:
            raise ConfigurationError(f"pml_layers must be >= {MIN_PML}")
        if self.port_resistance <= 0:
            raise ConfigurationError("port_resistance must be positive")
        if self.time_steps <= 0:
            raise ConfigurationError("time_steps must be positive")

    def with_thickness(self, t: float) -> "SimulationSpec":
        return replace(self, scene=self.scene.with_thickness(t))


def _cells(length: float, d: float) -> int:
    return int(round(length / d))


def build_scene(spec: SimulationSpec) -> YeeGrid:
    """Voxelise ``spec.scene``.

    The patch and the ground plane are PEC sheets on lattice planes; the
    substrate, optional cover and deposit extend laterally through the PML
    (the wall is covered everywhere).  The top of the deposit is sampled per
    x-column; the cell it cuts through gets a thickness-weighted permittivity.
    """
    scene = spec.scene
    geom, stack = scene.geom, scene.stack
    d = spec.cell_size
    f_hi = spec.excitation.band[1]

    eps_max = max(
        stack.substrate.relative_permittivity,
        stack.ambient.relative_permittivity,
        stack.superstrate.relative_permittivity if stack.superstrate is not None else 1.0,
        stack.cover.relative_permittivity if stack.cover is not None else 1.0,
    )
    lam_min = C0 / (f_hi * 1e9) / math.sqrt(eps_max) * 1e3
    if geom.substrate_height / d < 2 - 1e-9:
        raise ConfigurationError(
            f"cell {d} mm resolves the substrate height {geom.substrate_height} mm with fewer than 2 cells"
        )
    if lam_min / d < 20 - 1e-9:
        raise ConfigurationError(
            f"cell {d} mm resolves the shortest wavelength {lam_min:.3f} mm with fewer than 20 cells"
        )
    quarter = C0 / (f_hi * 1e9) / 4 * 1e3
    margin = quarter if scene.margins is None else scene.margins
    if margin < quarter - 1e-9:
        raise ConfigurationError(f"margins {margin} mm below a quarter wavelength ({quarter:.3f} mm)")

    npml = spec.pml_layers
    m = int(math.ceil(margin / d - 1e-9))
    n_len = _cells(geom.resonant_length, d)
    n_wid = _cells(geom.width, d)
    n_sub = _cells(geom.substrate_height, d)
    n_cov = _cells(stack.cover.thickness, d) if stack.cover is not None else 0

    finite_ground = scene.ground_size is not None
    if finite_ground:
        gx = _cells(scene.ground_size[0], d)
        gy = _cells(scene.ground_size[1], d)
        ext_x, ext_y = max(gx, n_len), max(gy, n_wid)
    else:
        ext_x, ext_y = n_len, n_wid
    nx = 2 * npml + 2 * m + ext_x
    ny = 2 * npml + 2 * m + ext_y

    # deposit heights per x column, in mm, measured from the patch centre
    px0 = npml + m + (ext_x - n_len) // 2
    py0 = npml + m + (ext_y - n_wid) // 2
    xc = (np.arange(nx) + 0.5 - px0 - n_len / 2) * d
    heights_cols = np.clip(scene.profile.height(xc, geom.resonant_length) - scene.deposit_offset, 0.0, None)
    t_top = float(np.max(heights_cols)) if heights_cols.size else 0.0

    k_gnd = npml + m if finite_ground else 0
    k_patch = k_gnd + n_sub
    k_dep0 = k_patch + n_cov
    n_dep = int(math.ceil(t_top / d - 1e-9))
    nz = k_dep0 + n_dep + m + npml

    grid = YeeGrid.empty((nx, ny, nz), d * 1e-3, pml=(npml, npml, npml, npml, npml if finite_ground else 0, npml))
    eps = grid.eps_r
    sig = grid.sigma
    f_ref = spec.excitation.center * 1e9

    def fill(k0, k1, layer):
        eps[:, :, k0:k1] = layer.relative_permittivity
        sig[:, :, k0:k1] = 2 * math.pi * f_ref * EPS0 * layer.relative_permittivity * layer.loss_tangent

    fill(k_dep0, nz, stack.ambient)
    if finite_ground:
        fill(0, k_gnd, stack.ambient)
    fill(k_gnd, k_patch, stack.substrate)
    if stack.cover is not None and n_cov:
        fill(k_patch, k_dep0, stack.cover)

    dep = stack.superstrate
    if dep is not None and t_top > 0:
        e_dep, e_amb = dep.relative_permittivity, stack.ambient.relative_permittivity
        s_dep = 2 * math.pi * f_ref * EPS0 * e_dep * dep.loss_tangent
        s_amb = 2 * math.pi * f_ref * EPS0 * e_amb * stack.ambient.loss_tangent
        kz = np.arange(n_dep)
        # fraction of each deposit-region cell below the deposit surface
        frac = np.clip(heights_cols[:, None] / d - kz[None, :], 0.0, 1.0)
        eps[:, :, k_dep0 : k_dep0 + n_dep] = (frac * e_dep + (1 - frac) * e_amb)[:, None, :]
        sig[:, :, k_dep0 : k_dep0 + n_dep] = (frac * s_dep + (1 - frac) * s_amb)[:, None, :]

    # ground plane
    if finite_ground:
        gx0 = npml + m
        gy0 = npml + m
        grid.pec_x[gx0 : gx0 + ext_x, gy0 : gy0 + ext_y + 1, k_gnd] = True
        grid.pec_y[gx0 : gx0 + ext_x + 1, gy0 : gy0 + ext_y, k_gnd] = True
    # an infinite ground sits on the z- wall, which is PEC already
    # patch
    grid.pec_x[px0 : px0 + n_len, py0 : py0 + n_wid + 1, k_patch] = True
    grid.pec_y[px0 : px0 + n_len + 1, py0 : py0 + n_wid, k_patch] = True

    ip = px0 + int(round(n_len / 2 + geom.feed_offset / d))
    jp = py0 + int(round(n_wid / 2))
    if not px0 < ip < px0 + n_len:
        raise ConfigurationError("feed falls outside the patch after voxelisation")
    grid.port = LumpedPort(ip, jp, k_gnd, k_patch, spec.port_resistance)
    grid.info.update(
        patch=(px0, py0, n_len, n_wid),
        k_ground=k_gnd,
        k_patch=k_patch,
        k_deposit=k_dep0,
        n_deposit=n_dep,
        column_heights=heights_cols,
        margin_cells=m,
    )
    grid.check()
    return grid


def port_test_grid(
    termination: str,
    cell_size: float = 0.254,
    pml_layers: int = 8,
    n_sub: int = 2,
    margin: int = 12,
    resistance: float = 50.0,
) -> YeeGrid:
    """Small air grid with a port under a 3x3 pad, for port bookkeeping checks.

    ``termination`` is ``"short"`` (PEC posts from the pad to ground on the
    four neighbouring edges), ``"load"`` (four ``4 * resistance`` resistors on
    those edges, a matched load in parallel) or ``"open"``.
    """
    d = cell_size * 1e-3
    n = 2 * pml_layers + 2 * margin + 3
    nz = n_sub + margin + pml_layers
    grid = YeeGrid.empty((n, n, nz), d, pml=(pml_layers,) * 4 + (0, pml_layers))
    c = n // 2
    grid.pec_x[c - 1 : c + 1, c - 1 : c + 2, n_sub] = True
    grid.pec_y[c - 1 : c + 2, c - 1 : c + 1, n_sub] = True
    grid.port = LumpedPort(c, c, 0, n_sub, resistance)
    nbrs = [(c + 1, c), (c - 1, c), (c, c + 1), (c, c - 1)]
    if termination == "short":
        for i, j in nbrs:
            grid.pec_z[i, j, 0:n_sub] = True
    elif termination == "load":
        for i, j in nbrs:
            grid.resistors.append(LumpedResistor(i, j, 0, n_sub, 4 * resistance))
    elif termination != "open":
        raise ValueError(f"unknown termination {termination!r}")
    grid.check()
    return grid
