"""Calibration curves and thickness inversion, including two-sensor fusion."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CalibrationError

FREQUENCY = "frequency"
MAGNITUDE = "magnitude"

IN_RANGE = "in-range"
BELOW_RANGE = "below-range"
SATURATED = "saturated"
AMBIGUOUS = "ambiguous"

#: VNA sweep step assumed when no resolution is given, GHz
DEFAULT_F_RESOLUTION = 0.01
#: magnitude reading resolution assumed when none is given, dB
DEFAULT_DB_RESOLUTION = 0.1

DEFAULT_SENSOR_RANGES = {"AR1": (0.0, 7.0), "AR2": (7.0, 12.0)}


@dataclass(frozen=True)
class CalibrationCurve:
    """Monotone thickness (mm) to observable mapping.

    ``kind`` is ``"frequency"`` (dip frequency in GHz, decreasing with
    thickness) or ``"magnitude"`` (|S11| in dB at ``f0`` GHz, monotone either
    way).  Between nodes the curve is linear.
    """

    kind: str
    nodes: tuple[tuple[float, float], ...]
    f0: float | None = None
    source: str = "measured"
    sensor: str | None = None
    valid_range: tuple[float, float] | None = None
    invertible: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.valid_range is None:
            object.__setattr__(self, "valid_range", (self.nodes[0][0], self.nodes[-1][0]))

    @classmethod
    def flat(cls, thicknesses, observables, kind=FREQUENCY, source="model"):
        """A non-invertible curve for model output with no thickness contrast."""
        return cls(kind, tuple(zip(map(float, thicknesses), map(float, observables))), source=source, invertible=False)

    @property
    def thickness(self) -> np.ndarray:
        return np.array([t for t, _ in self.nodes])

    @property
    def observable(self) -> np.ndarray:
        return np.array([o for _, o in self.nodes])

    def interpolate(self, t: float) -> float:
        """Observable at thickness ``t`` (inside the node span)."""
        ts, obs = self.thickness, self.observable
        if not ts[0] <= t <= ts[-1]:
            raise ValueError(f"thickness {t} outside curve nodes {ts[0]}..{ts[-1]}")
        return float(np.interp(t, ts, obs))


@dataclass(frozen=True)
class ThicknessEstimate:
    thickness: float
    uncertainty: float
    status: str
    sensor_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "thickness_mm": self.thickness,
            "uncertainty_mm": self.uncertainty,
            "status": self.status,
            "sensor": self.sensor_id,
        }


def build_calibration(
    points: Iterable[tuple[float, float]],
    kind: str = FREQUENCY,
    f0: float | None = None,
    source: str = "measured",
    sensor: str | None = None,
    valid_range: tuple[float, float] | None = None,
) -> CalibrationCurve:
    """Validate ``(thickness, observable)`` points and build a curve."""
    pts = [(float(t), float(o)) for t, o in points]
    if kind not in (FREQUENCY, MAGNITUDE):
        raise CalibrationError(f"unknown observable kind {kind!r}")
    if kind == MAGNITUDE and f0 is None:
        raise CalibrationError("a magnitude curve needs its reading frequency f0")
    if len(pts) < 2:
        raise CalibrationError("a calibration curve needs at least two points")
    for (t0, o0), (t1, o1) in zip(pts, pts[1:]):
        if t1 <= t0:
            raise CalibrationError(f"thickness not strictly increasing between {t0} and {t1} mm")
    diffs = [o1 - o0 for (_, o0), (_, o1) in zip(pts, pts[1:])]
    sign = 1 if diffs[0] > 0 else -1
    for ((t0, o0), (t1, o1)), dif in zip(zip(pts, pts[1:]), diffs):
        if dif == 0 or (dif > 0) != (sign > 0):
            raise CalibrationError(f"observable not strictly monotone between ({t0}, {o0}) and ({t1}, {o1})")
    if kind == FREQUENCY and sign > 0:
        raise CalibrationError("dip frequency must decrease with thickness")
    if valid_range is not None:
        lo, hi = valid_range
        if lo > pts[0][0] or hi < pts[-1][0]:
            raise CalibrationError("valid range must span the nodes")
    return CalibrationCurve(kind, tuple(pts), f0, source, sensor, valid_range)


def _invert(curve: CalibrationCurve, value: float, resolution: float, sensor: str | None) -> ThicknessEstimate:
    if not curve.invertible:
        raise CalibrationError("curve has no thickness contrast and cannot be inverted")
    ts, obs = curve.thickness, curve.observable
    sensor = sensor if sensor is not None else curve.sensor
    slopes = np.diff(obs) / np.diff(ts)
    increasing = obs[-1] > obs[0]
    # position along the curve measured from the thin end
    beyond_thin = value < obs[0] if increasing else value > obs[0]
    beyond_thick = value > obs[-1] if increasing else value < obs[-1]
    if beyond_thin:
        return ThicknessEstimate(float(ts[0]), abs(resolution / slopes[0]), BELOW_RANGE, sensor)
    if beyond_thick:
        return ThicknessEstimate(float(ts[-1]), abs(resolution / slopes[-1]), SATURATED, sensor)
    hit = np.nonzero(obs == value)[0]
    if hit.size:
        i = int(hit[0])
        near = [abs(slopes[s]) for s in (i - 1, i) if 0 <= s < slopes.size]
        return ThicknessEstimate(float(ts[i]), abs(resolution) / min(near), IN_RANGE, sensor)
    # segment whose observable interval brackets the value
    key = obs if increasing else -obs
    v = value if increasing else -value
    i = int(np.searchsorted(key, v)) - 1
    i = min(max(i, 0), slopes.size - 1)
    t = ts[i] + (value - obs[i]) / slopes[i]
    return ThicknessEstimate(float(t), abs(resolution / slopes[i]), IN_RANGE, sensor)


def invert_frequency(
    curve: CalibrationCurve, f_meas: float, f_resolution: float = DEFAULT_F_RESOLUTION, sensor: str | None = None
) -> ThicknessEstimate:
    """Thickness from a measured dip frequency (GHz)."""
    if curve.kind != FREQUENCY:
        raise CalibrationError("invert_frequency needs a frequency curve")
    return _invert(curve, float(f_meas), f_resolution, sensor)


def invert_magnitude(
    curve: CalibrationCurve, s11_db: float, db_resolution: float = DEFAULT_DB_RESOLUTION, sensor: str | None = None
) -> ThicknessEstimate:
    """Thickness from |S11| in dB read at the curve's ``f0``."""
    if curve.kind != MAGNITUDE:
        raise CalibrationError("invert_magnitude needs a magnitude curve")
    return _invert(curve, float(s11_db), db_resolution, sensor)


def fuse(
    estimates: Sequence[ThicknessEstimate],
    sensor_ranges: Mapping[str, tuple[float, float]] | None = None,
) -> ThicknessEstimate:
    """Pick one thickness from several sensors.

    In-range estimates whose sensor range contains the value win, smallest
    uncertainty first; then any in-range estimate; if every sensor is out of
    range, the saturated sensor with the highest range (or, when none is
    saturated, the below-range sensor with the lowest range).
    """
    if not estimates:
        raise ValueError("fuse needs at least one estimate")
    ranges = dict(DEFAULT_SENSOR_RANGES if sensor_ranges is None else sensor_ranges)

    def rng(e):
        return ranges.get(e.sensor_id, (-np.inf, np.inf))

    def order(e):
        return (e.uncertainty, str(e.sensor_id), e.thickness)

    in_range = [e for e in estimates if e.status == IN_RANGE]
    covered = [e for e in in_range if rng(e)[0] <= e.thickness <= rng(e)[1]]
    if covered:
        return min(covered, key=order)
    if in_range:
        return min(in_range, key=order)
    saturated = [e for e in estimates if e.status == SATURATED]
    if saturated:
        return max(saturated, key=lambda e: (rng(e)[1], e.thickness, str(e.sensor_id)))
    return min(estimates, key=lambda e: (rng(e)[0], e.thickness, str(e.sensor_id)))


# --- persistence --------------------------------------------------------------------


def curve_to_csv(curve: CalibrationCurve, comments: Sequence[str] = ()) -> str:
    """CSV text: ``#`` comment lines, a metadata row, the column row, then the nodes."""
    out = io.StringIO()
    for c in comments:
        out.write(f"# {c}\n")
    meta = [f"kind={curve.kind}", f"f0_ghz={'' if curve.f0 is None else repr(curve.f0)}", f"source={curve.source}"]
    if curve.sensor:
        meta.append(f"sensor={curve.sensor}")
    lo, hi = curve.valid_range
    meta.append(f"valid_range_mm={lo!r}:{hi!r}")
    out.write(",".join(meta) + "\n")
    col = "frequency_ghz" if curve.kind == FREQUENCY else "s11_db"
    out.write(f"thickness_mm,{col}\n")
    for t, o in curve.nodes:
        out.write(f"{t!r},{o!r}\n")
    return out.getvalue()


def curve_from_csv(text: str) -> CalibrationCurve:
    rows = [r for r in csv.reader(line for line in text.splitlines() if line.strip() and not line.startswith("#"))]
    if len(rows) < 4:
        raise CalibrationError("calibration CSV needs a metadata row, a column row and two nodes")
    meta = {}
    for item in rows[0]:
        if "=" not in item:
            raise CalibrationError(f"bad metadata entry {item!r}")
        k, v = item.split("=", 1)
        meta[k.strip()] = v.strip()
    if "kind" not in meta:
        raise CalibrationError("calibration CSV does not name its kind")
    f0 = float(meta["f0_ghz"]) if meta.get("f0_ghz") else None
    valid = None
    if meta.get("valid_range_mm"):
        lo, hi = meta["valid_range_mm"].split(":")
        valid = (float(lo), float(hi))
    try:
        pts = [(float(t), float(o)) for t, o in rows[2:]]
    except ValueError as exc:
        raise CalibrationError(f"non-numeric node: {exc}") from None
    return build_calibration(pts, meta["kind"], f0, meta.get("source", "measured"), meta.get("sensor"), valid)


def load_curve(path) -> CalibrationCurve:
    return curve_from_csv(Path(path).read_text())


def bundled_curve(sensor: str) -> CalibrationCurve:
    """Default curve shipped for ``"AR1"`` or ``"AR2"``."""
    name = {"AR1": "ar1.csv", "AR2": "ar2.csv"}[sensor.upper()]
    return curve_from_csv(resources.files("sulfursense.data").joinpath(name).read_text())


def load_calibration_dir(path) -> dict[str, CalibrationCurve]:
    """Curves keyed by sensor id from every ``*.csv`` in a directory."""
    out = {}
    for p in sorted(Path(path).glob("*.csv")):
        curve = load_curve(p)
        sensor = curve.sensor or p.stem.upper()
        out[sensor] = curve
    return out
