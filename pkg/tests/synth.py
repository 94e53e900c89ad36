"""Synthetic reflection traces for tests."""

import json
import math

import numpy as np

FREQS = np.round(np.arange(7.5, 11.0 + 1e-9, 0.005), 6)


def rlc_s11(f0_ghz, freqs=FREQS, r=50.0, l_h=2e-9, z0=50.0):
    """Series RLC reflection with resonance at ``f0_ghz`` (a perfect match when r == z0)."""
    c = 1.0 / ((2 * math.pi * f0_ghz * 1e9) ** 2 * l_h)
    w = 2 * math.pi * np.asarray(freqs) * 1e9
    z = r + 1j * w * l_h + 1 / (1j * w * c)
    return (z - z0) / (z + z0)


def record_line(ts, sensor, f0_ghz, freqs=FREQS, **extra):
    s = rlc_s11(f0_ghz, freqs)
    obj = {"ts": ts, "sensor": sensor, "trace": {"freq_ghz": list(map(float, freqs)), "re": s.real.tolist(), "im": s.imag.tolist()}}
    obj.update(extra)
    return json.dumps(obj)


# (name, text, offending line) for one-port Touchstone inputs that must be rejected
MALFORMED = [
    ("two-port option", "# GHz Y RI R 50\n1 0 0\n", 1),
    ("bad reference", "# GHz S RI R abc\n1 0 0\n", 1),
    ("negative reference", "# GHz S RI R -50\n1 0 0\n", 1),
    ("unknown token", "# GHz S RI Q 50\n1 0 0\n", 1),
    ("duplicate format", "# GHz S RI MA\n1 0 0\n", 1),
    ("second option line", "# GHz S RI R 50\n1 0 0\n# GHz S RI R 50\n", 3),
    ("v2 keyword", "[Version] 2.0\n# GHz S RI R 50\n", 1),
    ("data before option", "1 0 0\n# GHz S RI R 50\n", 1),
    ("two-port columns", "# GHz S RI R 50\n1 0 0 0 0 0 0 0 0\n", 2),
    ("too few columns", "# GHz S RI R 50\n1 0.5 0\n2 0.5\n", 3),
    ("non-numeric", "# GHz S RI R 50\n1 0.5 zero\n", 2),
    ("non-finite", "# GHz S RI R 50\n1 nan 0\n", 2),
    ("decreasing frequency", "# GHz S RI R 50\n2 0 0\n1 0 0\n", 3),
    ("repeated frequency", "! c\n# GHz S RI R 50\n1 0 0\n1 0 0\n", 4),
    ("negative magnitude", "# GHz S MA R 50\n1 -0.5 0\n", 2),
    ("gain above one", "# GHz S DB R 50\n1 3 0\n", 2),
]

