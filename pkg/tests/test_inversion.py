import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sulfursense import inversion as inv
from sulfursense.errors import CalibrationError

AR1 = inv.bundled_curve("AR1")
AR2 = inv.bundled_curve("AR2")


def test_bundled_nodes():
    assert AR1.nodes == ((0.0, 10.15), (2.0, 9.65), (4.0, 9.15), (6.0, 8.65), (7.0, 8.3))
    assert AR2.nodes == ((8.0, 9.7), (12.0, 8.7))
    assert AR1.sensor == "AR1" and AR2.sensor == "AR2"
    assert AR1.valid_range == (0.0, 7.0)


@pytest.mark.parametrize(
    "curve, f, t",
    [(AR1, 10.15, 0.0), (AR1, 8.30, 7.0), (AR2, 9.7, 8.0), (AR2, 8.7, 12.0)],
)
def test_anchor_nodes_exact(curve, f, t):
    est = inv.invert_frequency(curve, f)
    assert est.thickness == t
    assert est.status == inv.IN_RANGE


def test_interior_interpolation():
    est = inv.invert_frequency(AR1, 9.40)
    assert est.thickness == pytest.approx(3.0, abs=1e-12)
    # slope 0.25 GHz/mm between 2 and 4 mm
    assert est.uncertainty == pytest.approx(0.01 / 0.25)


def test_out_of_range_statuses():
    above = inv.invert_frequency(AR1, 11.0)
    assert above.status == inv.BELOW_RANGE and above.thickness == 0.0
    below = inv.invert_frequency(AR1, 8.0)
    assert below.status == inv.SATURATED and below.thickness == 7.0


def test_uncertainty_scaling():
    a = inv.invert_frequency(AR1, 9.4, 0.01)
    b = inv.invert_frequency(AR1, 9.4, 0.03)
    assert b.uncertainty == pytest.approx(3 * a.uncertainty)
    # last segment is steeper (0.35 GHz/mm) so the same resolution gives less uncertainty
    c = inv.invert_frequency(AR1, 8.4, 0.01)
    assert c.uncertainty == pytest.approx(0.01 / 0.35)


@pytest.mark.parametrize("curve", [AR1, AR2], ids=["AR1", "AR2"])
def test_round_trip_nodes_and_random(curve):
    for t, _ in curve.nodes:
        assert inv.invert_frequency(curve, curve.interpolate(t)).thickness == t
    rng = np.random.default_rng(7)
    lo, hi = curve.thickness[0], curve.thickness[-1]
    for t in rng.uniform(lo, hi, 50):
        assert inv.invert_frequency(curve, curve.interpolate(t)).thickness == pytest.approx(t, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    steps=st.lists(st.floats(0.1, 3.0), min_size=1, max_size=8),
    drops=st.lists(st.floats(0.01, 2.0), min_size=8, max_size=8),
    u=st.floats(0.0, 1.0),
)
def test_round_trip_any_monotone_curve(steps, drops, u):
    ts = np.concatenate([[0.0], np.cumsum(steps)])
    fs = 12.0 - np.concatenate([[0.0], np.cumsum(drops[: len(steps)])])
    curve = inv.build_calibration(zip(ts, fs))
    t = u * ts[-1]
    assert inv.invert_frequency(curve, curve.interpolate(t)).thickness == pytest.approx(t, abs=1e-9)


def test_build_rejects():
    with pytest.raises(CalibrationError, match="9.65"):
        inv.build_calibration([(0, 10.0), (1, 9.65), (2, 9.65)])
    with pytest.raises(CalibrationError):
        inv.build_calibration([(0, 9.0), (1, 10.0)])
    with pytest.raises(CalibrationError):
        inv.build_calibration([(0, 10.0), (0, 9.0)])
    with pytest.raises(CalibrationError):
        inv.build_calibration([(0, 10.0)])
    with pytest.raises(CalibrationError):
        inv.build_calibration([(0, -10.0), (1, -12.0)], kind=inv.MAGNITUDE)
    with pytest.raises(CalibrationError):
        inv.build_calibration([(0, -10.0), (1, -12.0), (2, -11.0)], kind=inv.MAGNITUDE, f0=9.0)
    with pytest.raises(CalibrationError):
        inv.build_calibration([(0, 10.0), (1, 9.0)], valid_range=(0.5, 1.0))


def test_magnitude_curve_either_direction():
    rising = inv.build_calibration([(0, -20.0), (2, -12.0), (4, -6.0)], inv.MAGNITUDE, f0=9.5)
    assert inv.invert_magnitude(rising, -12.0).thickness == 2.0
    assert inv.invert_magnitude(rising, -3.0).status == inv.SATURATED
    assert inv.invert_magnitude(rising, -25.0).status == inv.BELOW_RANGE
    falling = inv.build_calibration([(0, -6.0), (2, -12.0)], inv.MAGNITUDE, f0=9.5)
    assert inv.invert_magnitude(falling, -9.0).thickness == pytest.approx(1.0)
    assert inv.invert_magnitude(falling, -9.0).uncertainty == pytest.approx(0.1 / 3.0)
    with pytest.raises(CalibrationError):
        inv.invert_frequency(rising, 9.0)
    with pytest.raises(CalibrationError):
        inv.invert_magnitude(AR1, -10.0)


def test_flat_curve_not_invertible():
    flat = inv.CalibrationCurve.flat([0, 1], [10.0, 10.0])
    with pytest.raises(CalibrationError):
        inv.invert_frequency(flat, 10.0)


# --- fusion -------------------------------------------------------------------------


def est(t, u, status, sensor):
    return inv.ThicknessEstimate(t, u, status, sensor)


def test_fuse_saturated_ar1_defers_to_ar2():
    out = inv.fuse([est(7.0, 0.03, inv.SATURATED, "AR1"), est(9.0, 0.04, inv.IN_RANGE, "AR2")])
    assert out.thickness == 9.0 and out.sensor_id == "AR2"


def test_fuse_single_and_below_range():
    one = est(2.0, 0.1, inv.IN_RANGE, "AR1")
    assert inv.fuse([one]) == one
    out = inv.fuse([est(3.0, 0.1, inv.IN_RANGE, "AR1"), est(8.0, 0.04, inv.BELOW_RANGE, "AR2")])
    assert out.thickness == 3.0 and out.sensor_id == "AR1"


def test_fuse_prefers_estimate_inside_its_range():
    # AR2 in-range on its curve but outside its nominal range loses to AR1
    out = inv.fuse([est(5.0, 0.2, inv.IN_RANGE, "AR1"), est(6.5, 0.01, inv.IN_RANGE, "AR2")])
    assert out.sensor_id == "AR1"
    out = inv.fuse([est(5.0, 0.2, inv.IN_RANGE, "AR1"), est(5.5, 0.01, inv.IN_RANGE, "AR1b")], {"AR1": (0, 7), "AR1b": (0, 7)})
    assert out.sensor_id == "AR1b"


def test_fuse_all_out_of_range():
    sat = [est(7.0, 0.03, inv.SATURATED, "AR1"), est(12.0, 0.04, inv.SATURATED, "AR2")]
    out = inv.fuse(sat)
    assert out.sensor_id == "AR2" and out.status == inv.SATURATED
    below = [est(0.0, 0.03, inv.BELOW_RANGE, "AR1"), est(8.0, 0.04, inv.BELOW_RANGE, "AR2")]
    assert inv.fuse(below).sensor_id == "AR1"


def test_fuse_permutation_invariant():
    pool = [
        est(3.0, 0.1, inv.IN_RANGE, "AR1"),
        est(3.0, 0.1, inv.IN_RANGE, "X"),
        est(8.0, 0.04, inv.BELOW_RANGE, "AR2"),
        est(7.0, 0.03, inv.SATURATED, "AR1"),
    ]
    results = {inv.fuse(list(p)) for p in itertools.permutations(pool)}
    assert len(results) == 1


def test_fuse_empty():
    with pytest.raises(ValueError):
        inv.fuse([])


# --- persistence --------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    curve = inv.build_calibration([(0, -20.0), (2.5, -12.0)], inv.MAGNITUDE, f0=9.25, source="model", sensor="EXT", valid_range=(0, 3))
    text = inv.curve_to_csv(curve, ["from a sweep"])
    assert text.startswith("# from a sweep\n")
    assert inv.curve_from_csv(text) == curve
    (tmp_path / "ext.csv").write_text(text)
    (tmp_path / "ar1.csv").write_text(inv.curve_to_csv(AR1))
    loaded = inv.load_calibration_dir(tmp_path)
    assert sorted(loaded) == ["AR1", "EXT"]
    assert loaded["AR1"] == AR1


def test_csv_rejects_garbage():
    with pytest.raises(CalibrationError):
        inv.curve_from_csv("kind=frequency\nthickness_mm,frequency_ghz\n0,10\n")
    with pytest.raises(CalibrationError):
        inv.curve_from_csv("kind=frequency\nthickness_mm,frequency_ghz\n0,10\n1,x\n")
    with pytest.raises(CalibrationError):
        inv.curve_from_csv("nokind\nthickness_mm,frequency_ghz\n0,10\n1,9\n")


def test_estimate_dict():
    d = est(1.0, 0.1, inv.IN_RANGE, "AR1").to_dict()
    assert d == {"thickness_mm": 1.0, "uncertainty_mm": 0.1, "status": "in-range", "sensor": "AR1"}
