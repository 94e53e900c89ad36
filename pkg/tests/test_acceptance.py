"""Acceptance criteria 1 to 12, one test each.

Each test records a pass/fail line that is printed in the terminal summary.
FDTD runs on the default patch grid are shared with ``test_fdtd.py`` through
the ``patch_runs`` session fixture.
"""

import filecmp
import json
import math
import resource
import time
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from conftest import ACCEPTANCE
from synth import MALFORMED, record_line
from test_fdtd import cavity_peak, pml_decay

from sulfursense import cli, inversion, stackup
from sulfursense import monitor as mon
from sulfursense.errors import CalibrationError, TouchstoneError
from sulfursense.sparams import FrequencyTrace, read_touchstone, write_touchstone

GEOM = stackup.reference_geometry()


def report(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_c01_analytic_onset():
    stackup._capacitance.cache_clear()
    start = time.perf_counter()
    f = stackup.patch_resonance(GEOM, stackup.reference_stack(0.0))
    elapsed = time.perf_counter() - start
    err = abs(f - 10.15) / 10.15
    report(1, err <= 0.02 and elapsed < 1.0, f"f_r = {f:.4f} GHz (error {err:.2%}, limit 2%), {elapsed:.2f} s")


def test_c02_fdtd_onset(patch_runs):
    trace, decayed, dip, elapsed = patch_runs.get(0.0)
    err = abs(dip.f_res - 10.15) / 10.15
    rss_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024**2
    ok = err <= 0.04 and elapsed <= 1800 and rss_gb <= 8 and decayed
    report(2, ok, f"dip {dip.f_res:.4f} GHz (error {err:.2%}, limit 4%), {elapsed:.0f} s, peak RSS {rss_gb:.2f} GB")


def test_c03_per_step_shift(patch_runs):
    shift = patch_runs.dip(0.0) - patch_runs.dip(2.0)
    report(3, 0.3 <= shift <= 0.7, f"dip(0 mm) - dip(2 mm) = {shift:.3f} GHz (band 0.3 to 0.7)")


def test_c04_monotone_loading(patch_runs):
    ts = [0, 1, 2, 4, 6]
    fdtd = [patch_runs.dip(t) for t in ts]
    analytic = [stackup.patch_resonance(GEOM, stackup.reference_stack(t)) for t in ts]
    wavy_t = [1, 3, 5]
    wavy = [patch_runs.dip(t, "wavy") for t in wavy_t]
    drop = wavy[0] - wavy[-1]

    def decreasing(xs):
        return all(b < a for a, b in zip(xs, xs[1:]))

    ok = decreasing(fdtd) and decreasing(analytic) and decreasing(wavy) and 0.6 <= drop <= 1.2
    fmt = lambda xs: ", ".join(f"{x:.3f}" for x in xs)  # noqa: E731
    report(
        4,
        ok,
        f"FDTD [{fmt(fdtd)}], analytic [{fmt(analytic)}], wavy 1/3/5 mm [{fmt(wavy)}], wavy drop {drop:.3f} GHz (band 0.6 to 1.2)",
    )


def test_c05_first_order_shift():
    rng = np.random.default_rng(20240301)
    eps0 = rng.uniform(1.0, 12.0, 1000)
    x = rng.uniform(0.0, 0.2, 1000)
    start = time.perf_counter()
    worst = 0.0
    ok = True
    for e0, xi in zip(eps0, x):
        eps = stackup.EffectivePermittivity(float(e0), float(e0 * (1 + xi)))
        xe = eps.delta_eps / eps.eps_e0
        root = math.sqrt(1 + xe)
        exact = xe / (root * (1 + root))
        rel = abs(stackup.fractional_shift(eps) - exact) / exact
        worst = max(worst, rel / (xe / 2))
        ok &= rel <= xe / 2
    elapsed = time.perf_counter() - start
    report(5, ok and elapsed < 1.0, f"1000 pairs, worst error / (x/2) = {worst:.3f}, {elapsed:.3f} s")


def test_c06_cavity():
    start = time.perf_counter()
    peak, exact = cavity_peak(), 14.142
    err = abs(peak - exact) / exact
    elapsed = time.perf_counter() - start
    report(6, err <= 0.02 and elapsed < 300, f"TE101 peak {peak:.3f} GHz vs {exact:.3f} GHz (error {err:.2%}), {elapsed:.0f} s")


def test_c07_pml():
    ratio = pml_decay()
    report(7, ratio <= 1e-6, f"late-time energy / peak = {ratio:.2e} (limit 1e-6)")


def test_c08_inversion_round_trip(patch_runs):
    worst = 0.0
    rng = np.random.default_rng(8)
    for sensor in ("AR1", "AR2"):
        curve = inversion.bundled_curve(sensor)
        pts = [t for t, _ in curve.nodes] + list(rng.uniform(curve.thickness[0], curve.thickness[-1], 50))
        for t in pts:
            back = inversion.invert_frequency(curve, curve.interpolate(t)).thickness
            worst = max(worst, abs(back - t))
    # calibration from an FDTD sweep, checked on a held-out FDTD thickness
    nodes = [0, 1, 2, 4, 6]
    try:
        cal = inversion.build_calibration([(t, patch_runs.dip(t)) for t in nodes], source="simulated")
    except CalibrationError as exc:
        report(8, False, f"bundled curves max error {worst:.1e} mm; FDTD calibration rejected: {exc}")
    est = inversion.invert_frequency(cal, patch_runs.dip(3.0))
    err = abs(est.thickness - 3.0)
    ok = worst <= 1e-9 and err <= 0.25
    report(8, ok, f"bundled curves max error {worst:.1e} mm; FDTD-calibrated held-out 3 mm -> {est.thickness:.3f} mm (limit 0.25)")


def test_c09_bundled_anchors():
    cases = [("AR1", 10.15, 0.0), ("AR1", 8.30, 7.0), ("AR2", 9.7, 8.0), ("AR2", 8.7, 12.0)]
    got = [inversion.invert_frequency(inversion.bundled_curve(s), f).thickness for s, f, _ in cases]
    ok = all(g == t for g, (_, _, t) in zip(got, cases))
    report(9, ok, ", ".join(f"{s} {f} GHz -> {g} mm" for (s, f, _), g in zip(cases, got)))


def test_c10_touchstone():
    rng = np.random.default_rng(10)
    f = np.sort(rng.uniform(1, 20, 200))
    v = rng.uniform(0.001, 1, 200) * np.exp(1j * rng.uniform(-np.pi, np.pi, 200))
    tr = FrequencyTrace(f, v)
    worst = 0.0
    for fmt in ("RI", "MA", "DB"):
        back = read_touchstone(write_touchstone(tr, fmt))
        worst = max(worst, float(np.max(np.abs(back.values - v) / np.abs(v))), float(np.max(np.abs(back.frequencies - f) / f)))
    rejected = 0
    for _, text, line in MALFORMED:
        try:
            read_touchstone(text)
        except TouchstoneError as exc:
            rejected += exc.lineno == line
    ok = worst <= 1e-9 and rejected == len(MALFORMED) >= 10
    report(10, ok, f"round trip max relative error {worst:.1e}; {rejected}/{len(MALFORMED)} malformed files rejected with line numbers")


def test_c11_monitor_end_to_end(tmp_path):
    start = time.perf_counter()
    curve = stackup.forward_curve(GEOM, stackup.reference_stack(), stackup.thickness_sweep(0, 7, 0.25))
    curve = inversion.build_calibration(curve.nodes, source="model", sensor="AR1")
    rate = 0.05
    t0 = datetime(2024, 3, 1, tzinfo=timezone.utc)
    lines = []
    for k in range(100):
        t = rate * k
        f = stackup.patch_resonance(GEOM, stackup.reference_stack(t))
        ts = (t0 + timedelta(hours=k)).isoformat()
        lines.append(record_line(ts, "AR1", f))
    journal, alerts = tmp_path / "journal.jsonl", tmp_path / "alerts.jsonl"
    cfg = mon.AlarmConfig(thickness_mm=3.0)
    m = mon.Monitor({"AR1": curve}, cfg, journal, alerts, echo_alarms=False)
    acks = m.ingest_lines(lines)
    got = mon.rate_estimate(m.series, "AR1", timedelta(hours=200))
    events = [json.loads(x) for x in alerts.read_text().splitlines()]
    thickness_events = [e for e in events if e["kind"] == mon.THICKNESS_ALARM]
    replayed = mon.Monitor({"AR1": curve}, cfg, journal, echo_alarms=False)
    replayed.replay()
    exact = replayed.series == m.series and all(
        a.to_json() == b.to_json() for a, b in zip(replayed.series.records("AR1"), m.series.records("AR1"))
    )
    elapsed = time.perf_counter() - start
    rate_err = abs(got - rate) / rate
    ok = all(a["ok"] for a in acks) and rate_err <= 0.05 and len(thickness_events) == 1 and exact and elapsed < 60
    report(
        11,
        ok,
        f"rate {got:.5f} mm/h (error {rate_err:.2%}), {len(thickness_events)} thickness alarm, replay exact: {exact}, {elapsed:.1f} s",
    )


def test_c12_parallel_sweep_determinism(tmp_path):
    base = ["sweep", "--thickness", "0:3:1", "--steps", "400"]
    one, eight = tmp_path / "jobs1", tmp_path / "jobs8"
    c1 = cli.main(base + ["--jobs", "1", "--out-dir", str(one)])
    c8 = cli.main(base + ["--jobs", "8", "--out-dir", str(eight)])
    names = sorted(p.name for p in one.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(one, eight, names, shallow=False)
    ok = c1 == c8 == 0 and len(match) == len(names) == 5 and not mismatch and not errors
    report(12, ok, f"{len(match)}/{len(names)} output files bit-identical between --jobs 1 and --jobs 8")
