"""One-port reflection traces: Touchstone I/O and dip analysis."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EdgeDipError, RangeError, TouchstoneError

#: tolerated excess of |S11| over 1 from numerical noise
MAX_MAGNITUDE = 1.05

_UNIT_SCALE = {"HZ": 1e-9, "KHZ": 1e-6, "MHZ": 1e-3, "GHZ": 1.0}


@dataclass
class FrequencyTrace:
    """Complex reflection coefficient sampled over frequency (GHz)."""

    frequencies: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.frequencies.ndim != 1 or self.frequencies.shape != self.values.shape:
            raise ValueError("frequencies and values must be 1-D and of equal length")
        if self.frequencies.size < 2:
            raise ValueError("a trace needs at least two points")
        if not np.all(np.isfinite(self.frequencies)) or not np.all(np.isfinite(self.values)):
            raise ValueError("trace contains non-finite samples")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        worst = float(np.max(np.abs(self.values)))
        if worst > MAX_MAGNITUDE:
            raise ValueError(f"|S11| = {worst:.4f} exceeds {MAX_MAGNITUDE}")

    def __len__(self):
        return self.frequencies.size

    @property
    def db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.values))


@dataclass(frozen=True)
class DipResult:
    f_res: float  # GHz
    depth_db: float
    prominence_db: float


# --- Touchstone ---------------------------------------------------------------------


def _parse_option_line(line: str, lineno: int) -> tuple[float, str, float]:
    tokens = line[1:].split()
    unit, fmt, ref = "GHZ", "MA", 50.0
    seen = set()
    it = iter(range(len(tokens)))
    for i in it:
        tok = tokens[i].upper()
        if tok in _UNIT_SCALE:
            key, unit = "unit", tok
        elif tok in ("RI", "MA", "DB"):
            key, fmt = "format", tok
        elif tok == "S":
            key = "parameter"
        elif tok in ("Y", "Z", "H", "G"):
            raise TouchstoneError(f"only S parameters are supported, found {tok}", lineno)
        elif tok == "R":
            key = "reference"
            try:
                ref = float(tokens[i + 1])
            except (IndexError, ValueError):
                raise TouchstoneError("option 'R' must be followed by a number", lineno) from None
            if not ref > 0:
                raise TouchstoneError("reference resistance must be positive", lineno)
            next(it, None)
        else:
            raise TouchstoneError(f"unknown option token {tokens[i]!r}", lineno)
        if key in seen:
            raise TouchstoneError(f"duplicate {key} in option line", lineno)
        seen.add(key)
    return _UNIT_SCALE[unit], fmt, ref


def _to_complex(a: float, b: float, fmt: str) -> complex:
    if fmt == "RI":
        return complex(a, b)
    mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
    ang = math.radians(b)
    return complex(mag * math.cos(ang), mag * math.sin(ang))


def parse_touchstone(text: str) -> FrequencyTrace:
    """Parse the text of a one-port Touchstone v1 file."""
    option = None
    freqs, vals = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported", lineno)
        if line.startswith("#"):
            if option is not None:
                raise TouchstoneError("second option line", lineno)
            option = _parse_option_line(line, lineno)
            continue
        if option is None:
            raise TouchstoneError("data before the option line", lineno)
        parts = line.split()
        if len(parts) != 3:
            raise TouchstoneError(f"expected 3 columns for a 1-port file, found {len(parts)}", lineno)
        try:
            f, a, b = (float(p) for p in parts)
        except ValueError:
            raise TouchstoneError(f"non-numeric data {line!r}", lineno) from None
        if not all(math.isfinite(x) for x in (f, a, b)):
            raise TouchstoneError("non-finite value", lineno)
        scale, fmt, _ = option
        f *= scale
        if freqs and f <= freqs[-1]:
            raise TouchstoneError("frequencies must be strictly increasing", lineno)
        if fmt == "MA" and a < 0:
            raise TouchstoneError("negative magnitude", lineno)
        v = _to_complex(a, b, fmt)
        if abs(v) > MAX_MAGNITUDE:
            raise TouchstoneError(f"|S11| = {abs(v):.4f} exceeds {MAX_MAGNITUDE}", lineno)
        freqs.append(f)
        vals.append(v)
    if option is None:
        raise TouchstoneError("missing option line")
    if len(freqs) < 1:
        raise TouchstoneError("no data lines")
    if len(freqs) == 1:
        # single-point files are legal Touchstone but not a trace; keep them readable
        return _single_point(freqs[0], vals[0], option[2])
    return FrequencyTrace(np.array(freqs), np.array(vals), {"reference_resistance": option[2]})


class SinglePointTrace(FrequencyTrace):
    """A Touchstone file with one data row (spot measurement)."""

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)


def _single_point(f, v, ref) -> FrequencyTrace:
    return SinglePointTrace(np.array([f]), np.array([v]), {"reference_resistance": ref})


def read_touchstone(source) -> FrequencyTrace:
    """Read a one-port Touchstone file from a path or from its text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and os.path.exists(source)):
        text = Path(source).read_text()
    else:
        text = source
    return parse_touchstone(text)


def write_touchstone(trace: FrequencyTrace, fmt: str = "RI", reference: float = 50.0) -> str:
    """Touchstone text for ``trace``; numbers carry 12 significant digits."""
    fmt = fmt.upper()
    if fmt not in ("RI", "MA", "DB"):
        raise ValueError(f"unknown Touchstone format {fmt!r}")
    out = io.StringIO()
    for key in sorted(trace.metadata):
        out.write(f"! {key}: {trace.metadata[key]}\n")
    out.write(f"# GHz S {fmt} R {reference:g}\n")
    for f, v in zip(trace.frequencies, trace.values):
        if fmt == "RI":
            a, b = v.real, v.imag
        else:
            mag = abs(v)
            a = mag if fmt == "MA" else (20.0 * math.log10(mag) if mag > 0 else -400.0)
            b = math.degrees(math.atan2(v.imag, v.real))
        out.write(f"{f:.12g} {a:.12g} {b:.12g}\n")
    return out.getvalue()


def trace_csv(trace: FrequencyTrace) -> str:
    """CSV with columns freq_ghz, re, im, mag_db, phase_deg."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["freq_ghz", "re", "im", "mag_db", "phase_deg"])
    for f, v, db, ph in zip(trace.frequencies, trace.values, trace.db, trace.phase_deg):
        w.writerow([f"{f:.12g}", f"{v.real:.12g}", f"{v.imag:.12g}", f"{db:.12g}", f"{ph:.12g}"])
    return out.getvalue()


# --- analysis -----------------------------------------------------------------------


def _vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Vertex of the parabola through three points with distinct abscissae."""
    (x0, x1, x2), (y0, y1, y2) = x, y
    d01 = (y1 - y0) / (x1 - x0)
    d12 = (y2 - y1) / (x2 - x1)
    a = (d12 - d01) / (x2 - x0)
    if a <= 0:
        return float(x1), float(y1)
    # y = y1 + d * (x - x1) + a * (x - x1)^2 with slope d at x1
    d = d01 + a * (x1 - x0)
    xv = x1 - d / (2 * a)
    yv = y1 - d * d / (4 * a)
    return float(xv), float(yv)


def find_dip_db(freqs: np.ndarray, db: np.ndarray) -> DipResult:
    """Global minimum of a dB trace, refined by parabolic interpolation."""
    freqs = np.asarray(freqs, dtype=float)
    db = np.asarray(db, dtype=float)
    if freqs.size < 5:
        raise ValueError("dip extraction needs at least 5 points")
    m = int(np.argmin(db))
    if m == 0 or m == db.size - 1:
        raise EdgeDipError(f"reflection minimum at the sweep edge ({freqs[m]:.6g} GHz)")
    if not np.isfinite(db[m]):
        # perfect match on a sample: the sample itself is the resonance
        f_res, depth = float(freqs[m]), -math.inf
    else:
        f_res, depth = _vertex(freqs[m - 1 : m + 2], db[m - 1 : m + 2])
        depth = min(depth, float(db[m]))
    prominence = min(float(np.max(db[:m])), float(np.max(db[m + 1 :]))) - depth
    return DipResult(f_res, min(depth, 0.0), prominence)


def find_dip(trace: FrequencyTrace) -> DipResult:
    """Resonance dip of a reflection trace."""
    return find_dip_db(trace.frequencies, trace.db)


def bandwidth(trace: FrequencyTrace, threshold_db: float = -10.0) -> tuple[float, float] | None:
    """Contiguous band around the dip where ``|S11|`` stays at or below ``threshold_db``."""
    f, db = trace.frequencies, trace.db
    m = int(np.argmin(db))
    if db[m] > threshold_db:
        return None

    def crossing(inside: int, outside: int) -> float:
        y0, y1 = db[inside], db[outside]
        if not np.isfinite(y0):
            return float(f[inside])
        return float(f[inside] + (threshold_db - y0) * (f[outside] - f[inside]) / (y1 - y0))

    lo = m
    while lo > 0 and db[lo - 1] <= threshold_db:
        lo -= 1
    hi = m
    while hi < db.size - 1 and db[hi + 1] <= threshold_db:
        hi += 1
    f_lo = float(f[0]) if lo == 0 else crossing(lo, lo - 1)
    f_hi = float(f[-1]) if hi == db.size - 1 else crossing(hi, hi + 1)
    if 0 < m < db.size - 1 and f.size >= 5:
        # the refined dip can sit slightly past a crossing when the band is one sample wide
        f_res = find_dip_db(f, db).f_res
        f_lo, f_hi = min(f_lo, f_res), max(f_hi, f_res)
    return f_lo, f_hi


def unwrap_phase(trace: FrequencyTrace) -> np.ndarray:
    """Continuous phase in radians; successive steps lie in (-pi, pi]."""
    ph = np.angle(trace.values)
    if ph[0] == -math.pi:
        ph[0] = math.pi
    step = np.diff(ph)
    step = step - 2 * math.pi * np.ceil((step - math.pi) / (2 * math.pi))
    return np.concatenate([[ph[0]], ph[0] + np.cumsum(step)])


def magnitude_at(trace: FrequencyTrace, f: float) -> float:
    """|S11| in dB at ``f`` GHz by linear interpolation of the dB samples."""
    fr = trace.frequencies
    if not fr[0] <= f <= fr[-1]:
        raise RangeError(f"{f} GHz outside trace span {fr[0]}..{fr[-1]} GHz")
    i = int(np.searchsorted(fr, f))
    db = trace.db
    if fr[i] == f:
        return float(db[i])
    w = (f - fr[i - 1]) / (fr[i] - fr[i - 1])
    return float(db[i - 1] + w * (db[i] - db[i - 1]))
