"""Analytic and quasi-static resonance models of a covered rectangular patch.

Lengths are in millimetres and frequencies in GHz throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Literal, Sequence

from . import laplace
from .errors import DomainError

C0 = 299792458.0
SEMI_INFINITE = math.inf


@dataclass(frozen=True)
class DielectricLayer:
    relative_permittivity: float
    loss_tangent: float = 0.0
    thickness: float = SEMI_INFINITE

    def __post_init__(self):
        if not self.relative_permittivity >= 1.0:
            raise DomainError(f"relative permittivity must be >= 1, got {self.relative_permittivity}")
        if not self.loss_tangent >= 0.0:
            raise DomainError(f"loss tangent must be >= 0, got {self.loss_tangent}")
        if not self.thickness >= 0.0:
            raise DomainError(f"thickness must be >= 0, got {self.thickness}")


#: Rogers RT/Duroid 5880, 0.508 mm
ROGERS_5880 = DielectricLayer(2.2, 0.0009, 0.508)
#: natural gas, treated as free space
NATURAL_GAS = DielectricLayer(1.0, 0.0)
SULFUR_EPS = 3.5
SULFUR_LOSS_TANGENT = 0.001
#: plexiglass pipe wall used for externally mounted sensors (unvalidated defaults)
PLEXIGLASS = DielectricLayer(2.6, 0.006, 5.0)


def sulfur(thickness: float, loss_tangent: float = SULFUR_LOSS_TANGENT) -> DielectricLayer:
    return DielectricLayer(SULFUR_EPS, loss_tangent, thickness)


@dataclass(frozen=True)
class LayerStack:
    """Substrate below the patch plane and the slabs stacked above it.

    ``cover`` is an optional slab between the patch and the deposit (the
    plexiglass wall for an externally mounted sensor).  A superstrate of zero
    thickness is the same as no superstrate.
    """

    substrate: DielectricLayer
    superstrate: DielectricLayer | None = None
    ambient: DielectricLayer = NATURAL_GAS
    cover: DielectricLayer | None = None

    def __post_init__(self):
        if math.isinf(self.substrate.thickness) or self.substrate.thickness <= 0:
            raise DomainError("substrate needs a finite positive thickness")
        if self.superstrate is not None and math.isinf(self.superstrate.thickness):
            raise DomainError("superstrate must have finite thickness; use ambient for a halfspace")

    @property
    def superstrate_thickness(self) -> float:
        return 0.0 if self.superstrate is None else self.superstrate.thickness

    def with_superstrate_thickness(self, t: float) -> "LayerStack":
        layer = self.superstrate if self.superstrate is not None else sulfur(0.0)
        return replace(self, superstrate=replace(layer, thickness=float(t)))

    def without_superstrate_contrast(self) -> "LayerStack":
        """Same stack with the superstrate permittivity set to 1."""
        if self.superstrate is None:
            return self
        return replace(self, superstrate=replace(self.superstrate, relative_permittivity=1.0, loss_tangent=0.0))

    def layers_above(self) -> list[tuple[float, float]]:
        """``(eps_r, thickness)`` from the patch plane upward, ambient last."""
        out = []
        for layer in (self.cover, self.superstrate):
            if layer is not None and layer.thickness > 0:
                out.append((layer.relative_permittivity, layer.thickness))
        out.append((self.ambient.relative_permittivity, SEMI_INFINITE))
        return out


@dataclass(frozen=True)
class PatchGeometry:
    """Rectangular patch; ``feed_offset`` is measured from the centre along the resonant length."""

    resonant_length: float
    width: float
    substrate_height: float
    feed_offset: float = 0.0

    def __post_init__(self):
        if self.resonant_length <= 0 or self.width <= 0 or self.substrate_height <= 0:
            raise DomainError("patch dimensions must be positive")
        if abs(self.feed_offset) >= self.resonant_length / 2:
            raise DomainError("feed must lie inside the patch")

    def scaled(self, s: float) -> "PatchGeometry":
        return PatchGeometry(self.resonant_length * s, self.width * s, self.substrate_height * s, self.feed_offset * s)


@dataclass(frozen=True)
class EffectivePermittivity:
    eps_e0: float
    eps_e: float

    @property
    def delta_eps(self) -> float:
        return self.eps_e - self.eps_e0


def reference_geometry(feed_offset: float = 2.0) -> PatchGeometry:
    """The 10 GHz sensing patch: 9.7 mm resonant length, 11.69 mm wide, 0.508 mm substrate."""
    return PatchGeometry(9.7, 11.69, ROGERS_5880.thickness, feed_offset)


def reference_stack(t: float = 0.0) -> LayerStack:
    return LayerStack(ROGERS_5880, sulfur(t), NATURAL_GAS)


def eff_eps_uncovered(geom: PatchGeometry, substrate_eps: float) -> float:
    """Hammerstad closed form for the effective permittivity of an uncovered strip."""
    if geom.width <= 0 or geom.substrate_height <= 0:
        raise DomainError("non-positive strip dimensions")
    if substrate_eps < 1:
        raise DomainError("substrate permittivity must be >= 1")
    er = substrate_eps
    return (er + 1) / 2 + (er - 1) / 2 / math.sqrt(1 + 12 * geom.substrate_height / geom.width)


def fringe_extension(width: float, height: float, eps_e: float) -> float:
    """Hammerstad length extension of one open end of a patch, in the units of ``height``."""
    u = width / height
    return 0.412 * height * (eps_e + 0.3) * (u + 0.264) / ((eps_e - 0.258) * (u + 0.8))


@lru_cache(maxsize=512)
def _capacitance(substrate_eps, substrate_height, strip_width, layers, air, width_factor, height_factor, cells_per_h):
    cs = laplace.make_cross_section(substrate_eps, substrate_height, strip_width, layers, width_factor, height_factor)
    return laplace.solve_capacitance(cs, air=air, cells_per_h=cells_per_h)


def cross_section_capacitance(
    stack: LayerStack,
    strip_width: float,
    mode: Literal["with-dielectrics", "air-filled"] = "with-dielectrics",
    *,
    width_factor: float = 20.0,
    height_factor: float = 40.0,
    cells_per_h: float = 16.0,
) -> float:
    """Quasi-static capacitance per unit length (F/m) of a strip of ``strip_width`` mm on ``stack``.

    The effective permittivity of the line is the ratio of the
    ``"with-dielectrics"`` and ``"air-filled"`` values.
    """
    if mode not in ("with-dielectrics", "air-filled"):
        raise ValueError(f"unknown mode {mode!r}")
    if strip_width <= 0:
        raise DomainError("strip width must be positive")
    layers = tuple(stack.layers_above())
    air = mode == "air-filled"
    if air:
        # the air-filled solve only depends on the layer boundaries through the grid
        layers = tuple((1.0, t) for _, t in layers)
    return _capacitance(
        1.0 if air else stack.substrate.relative_permittivity,
        stack.substrate.thickness,
        float(strip_width),
        layers,
        air,
        width_factor,
        height_factor,
        cells_per_h,
    )


def _line_eps(stack: LayerStack, width: float) -> float:
    c = cross_section_capacitance(stack, width, "with-dielectrics")
    c_air = cross_section_capacitance(stack, width, "air-filled")
    return c / c_air


def _check_height(geom: PatchGeometry, stack: LayerStack):
    if not math.isclose(geom.substrate_height, stack.substrate.thickness, rel_tol=1e-9):
        raise DomainError(
            f"geometry substrate height {geom.substrate_height} mm does not match "
            f"stack substrate thickness {stack.substrate.thickness} mm"
        )


def eff_eps_covered(geom: PatchGeometry, stack: LayerStack) -> EffectivePermittivity:
    """Effective permittivity of the patch line with and without the superstrate contrast.

    Both values come from the same capacitance solver; the uncovered one is
    obtained by setting the superstrate permittivity to 1, so the difference
    isolates the loading of the deposit.
    """
    _check_height(geom, stack)
    bare = stack.without_superstrate_contrast()
    eps_e0 = _line_eps(bare, geom.width)
    if stack.superstrate_thickness == 0 or stack.superstrate.relative_permittivity == 1.0:
        return EffectivePermittivity(eps_e0, eps_e0)
    eps_e = _line_eps(stack, geom.width)
    return EffectivePermittivity(eps_e0, eps_e)


def fractional_shift(eps: EffectivePermittivity) -> float:
    """Relative downward shift of the resonance caused by a change in effective permittivity.

    ``(x/2) / (1 + x/2)`` with ``x = delta_eps / eps_e0``; first-order accurate
    against the exact ``1 - sqrt(eps_e0 / eps_e)``.
    """
    if eps.eps_e0 < 1:
        raise DomainError("eps_e0 must be >= 1")
    if eps.delta_eps < 0:
        raise DomainError("delta_eps must be >= 0")
    half = 0.5 * eps.delta_eps / eps.eps_e0
    return half / (1 + half)


def resonance_from_eps(geom: PatchGeometry, eps_e: float) -> float:
    """Half-wave transmission-line resonance in GHz for a given effective permittivity."""
    dl = fringe_extension(geom.width, geom.substrate_height, eps_e)
    length_m = (geom.resonant_length + 2 * dl) * 1e-3
    return C0 / (2 * length_m * math.sqrt(eps_e)) / 1e9


def patch_resonance(geom: PatchGeometry, stack: LayerStack) -> float:
    """Resonant frequency (GHz) of the patch under ``stack``."""
    return resonance_from_eps(geom, eff_eps_covered(geom, stack).eps_e)


def forward_curve(geom: PatchGeometry, stack_template: LayerStack, thicknesses: Sequence[float]):
    """Model calibration curve (thickness mm -> resonance GHz) over ``thicknesses``."""
    from .inversion import CalibrationCurve, build_calibration

    ts = [float(t) for t in thicknesses]
    if len(ts) < 2 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise DomainError("thicknesses must be strictly increasing with at least two entries")
    freqs = [patch_resonance(geom, stack_template.with_superstrate_thickness(t)) for t in ts]
    if stack_template.superstrate is not None and stack_template.superstrate.relative_permittivity == 1.0:
        # no contrast: the curve is flat and cannot serve as a calibration
        return CalibrationCurve.flat(ts, freqs)
    return build_calibration(list(zip(ts, freqs)), "frequency", source="model")


def thickness_sweep(a: float, b: float, step: float) -> list[float]:
    """Inclusive range ``a:b:step``; the end point is always included."""
    if step <= 0 or b < a:
        raise DomainError("sweep needs a <= b and step > 0")
    n = int(math.floor((b - a) / step + 1e-9))
    pts = [a + i * step for i in range(n + 1)]
    if b - pts[-1] > 1e-9:
        pts.append(b)
    return [round(p, 12) for p in pts]


def iter_model_rows(geom: PatchGeometry, stack: LayerStack, thicknesses: Iterable[float]):
    """Rows ``(t, eps_e, f_r, fractional_shift)`` for a thickness sweep."""
    for t in thicknesses:
        eps = eff_eps_covered(geom, stack.with_superstrate_thickness(t))
        yield t, eps.eps_e, resonance_from_eps(geom, eps.eps_e), fractional_shift(eps)
