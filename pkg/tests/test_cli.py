import csv
import io
import json
import os
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from synth import FREQS, record_line, rlc_s11

from sulfursense import cli
from sulfursense.config import DEFAULT_CONFIG, SceneConfig, schema
from sulfursense.errors import ConfigurationError
from sulfursense.fdtd import SimulationSpec
from sulfursense.sparams import FrequencyTrace, read_touchstone, write_touchstone

ROOT = Path(__file__).resolve().parents[1]


def run_cli(args, capsys):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- config -------------------------------------------------------------------------


def test_default_config_is_default_spec():
    spec = SceneConfig().simulation_spec()
    assert spec == SimulationSpec()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigurationError, match="geometry"):
        SceneConfig({"geometry": {"length": 3}})
    with pytest.raises(ConfigurationError, match="<root>"):
        SceneConfig({"extra": 1})


def test_override_precedence():
    cfg = SceneConfig({"stack": {"superstrate": {"profile": {"t_mm": 1.0}}}})
    assert cfg.thickness == 1.0
    assert cfg.override({"stack.superstrate.profile.t_mm": 2.5, "solver.cell_mm": None}).thickness == 2.5
    assert cfg.data["solver"] == DEFAULT_CONFIG["solver"]


def test_schema_shipped_in_docs():
    assert json.loads((ROOT / "docs" / "scene.schema.json").read_text()) == schema()


def test_config_builds_cover_and_offset(tmp_path):
    doc = {
        "geometry": {"ground_size_mm": [40, 40], "deposit_offset_mm": 7.0},
        "stack": {"cover": {"eps_r": 2.6, "tan_d": 0.006, "thickness_mm": 5.0}},
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    spec = SceneConfig.load(p).simulation_spec()
    assert spec.scene.ground_size == (40, 40)
    assert spec.scene.deposit_offset == 7.0
    assert spec.scene.stack.cover.relative_permittivity == 2.6


# --- model --------------------------------------------------------------------------


def test_model_default_sweep(capsys):
    code, out, _ = run_cli(["model"], capsys)
    assert code == 0
    r = rows(out)
    assert len(r) == 8
    fr = [float(x["fr_ghz"]) for x in r]
    assert all(b < a for a, b in zip(fr, fr[1:]))
    assert list(r[0]) == ["thickness_mm", "eps_e", "fr_ghz", "frac_shift"]


def test_model_step_larger_than_span(capsys, tmp_path):
    out = tmp_path / "m.csv"
    code, _, _ = run_cli(["model", "--thickness-sweep", "0:2:5", "--out", out], capsys)
    assert code == 0
    assert [x["thickness_mm"] for x in rows(out.read_text())] == ["0", "2"]


def test_model_malformed_config(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"stack": {"substrate": {"eps_r": "high"}}}))
    code, _, err = run_cli(["model", "--config", p], capsys)
    assert code != 0
    assert "stack/substrate/eps_r" in err
    p.write_text("{not json")
    assert run_cli(["model", "--config", p], capsys)[0] == 2


def test_flag_overrides_file(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"stack": {"substrate": {"eps_r": 2.2}}}))
    a = rows(run_cli(["model", "--config", p, "--thickness-sweep", "0"], capsys)[1])
    b = rows(run_cli(["model", "--config", p, "--substrate-eps-r", "3.0", "--thickness-sweep", "0"], capsys)[1])
    assert float(b[0]["fr_ghz"]) < float(a[0]["fr_ghz"])


# --- usage --------------------------------------------------------------------------


def test_help_documents_every_flag():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
            if action.option_strings and action.dest != "help":
                assert action.help, (name, action.dest)


def test_usage_exit_codes(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["bogus"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["model", "--thickness-sweep"])
    assert info.value.code == 2
    assert run_cli(["sweep", "--thickness", "3:1:1"], capsys)[0] == 2
    assert run_cli(["invert", "--freq", "9"], capsys)[0] == 2
    assert run_cli(["invert", "--sensor", "AR1"], capsys)[0] == 2


def test_simulate_resolution_error(capsys):
    code, _, err = run_cli(["simulate", "--cell-mm", "0.4"], capsys)
    assert code == 2
    assert "substrate height" in err


def test_simulate_deterministic(capsys, tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / f"s{k}.s1p"
        code, _, _ = run_cli(["simulate", "--steps", "400", "--t-mm", "1", "--out", p, "--csv", tmp_path / f"s{k}.csv"], capsys)
        assert code == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    assert len(read_touchstone(tmp_path / "s0.s1p")) == 601
    assert (tmp_path / "s0.csv").read_text().startswith("freq_ghz,re,im,mag_db,phase_deg")


def test_simulate_energy_log(capsys, tmp_path):
    log_path = tmp_path / "energy.csv"
    code, _, _ = run_cli(["simulate", "--steps", "1500", "--out", tmp_path / "s.s1p", "--energy-log", log_path], capsys)
    assert code == 0
    rows = log_path.read_text().splitlines()
    assert rows[0] == "step,port_energy,relative" and len(rows) > 2
    rel = [float(r.split(",")[2]) for r in rows[1:]]
    assert max(rel) == 1.0 and min(rel) < 1.0


# --- invert / calibrate -------------------------------------------------------------


def test_invert_bundled(capsys):
    code, out, _ = run_cli(["invert", "--sensor", "AR1", "--freq", "8.30"], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["thickness_mm"] == 7.0 and d["status"] == "in-range" and d["sensor"] == "AR1"
    d = json.loads(run_cli(["invert", "--sensor", "AR1", "--freq", "11"], capsys)[1])
    assert d["status"] == "below-range"


def test_invert_trace_and_fusion(capsys, tmp_path):
    p = tmp_path / "m.s1p"
    p.write_text(write_touchstone(FrequencyTrace(FREQS, rlc_s11(8.9))))
    d = json.loads(run_cli(["invert", "--sensor", "AR1", "--sensor", "AR2", "--input", p], capsys)[1])
    assert d["f_res_ghz"] == pytest.approx(8.9, abs=0.005)
    # AR1 reads 5.0 mm in its range; AR2 reads 10.0 mm in its range; smaller uncertainty wins
    assert len(d["estimates"]) == 2
    assert d["thickness_mm"] == pytest.approx(5.0, abs=0.03)


def fake_sweep(dirpath, points):
    dirpath.mkdir()
    with open(dirpath / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["thickness_mm", "f_res_ghz", "depth_db"])
        for t, f in points:
            (dirpath / cli.sweep_file_name(t)).write_text(write_touchstone(FrequencyTrace(FREQS, rlc_s11(f, r=30.0))))
            w.writerow([t, f, -20])


def test_calibrate_from_sweep_and_round_trip(capsys, tmp_path):
    sweep = tmp_path / "sweep"
    points = [(0.0, 10.1), (1.0, 9.8), (2.0, 9.6), (4.0, 9.4)]
    fake_sweep(sweep, points)
    cal = tmp_path / "cal.csv"
    assert run_cli(["calibrate", "--sweep-dir", sweep, "--sensor", "S1", "--out", cal], capsys)[0] == 0
    for t, _ in points:
        d = json.loads(run_cli(["invert", "--curve", cal, "--input", sweep / cli.sweep_file_name(t)], capsys)[1])
        assert d["thickness_mm"] == pytest.approx(t, abs=0.25)
    mag = tmp_path / "mag.csv"
    code = run_cli(["calibrate", "--sweep-dir", sweep, "--kind", "magnitude", "--f0", "9.0", "--out", mag], capsys)[0]
    assert code == 0
    d = json.loads(run_cli(["invert", "--curve", mag, "--input", sweep / cli.sweep_file_name(2.0)], capsys)[1])
    assert d["thickness_mm"] == pytest.approx(2.0, abs=0.25)
    assert run_cli(["calibrate", "--sweep-dir", sweep, "--kind", "magnitude"], capsys)[0] == 2


def test_calibrate_model(capsys):
    code, out, _ = run_cli(["calibrate", "--thickness-sweep", "0:7:1", "--sensor", "AR1"], capsys)
    assert code == 0
    assert out.splitlines()[0].startswith("kind=frequency,f0_ghz=,source=model,sensor=AR1")
    assert len(out.splitlines()) == 2 + 8


# --- sweep --------------------------------------------------------------------------


def test_sweep_small(capsys, tmp_path):
    out = tmp_path / "sw"
    code, _, _ = run_cli(["sweep", "--thickness", "0:1:1", "--steps", "300", "--out-dir", out], capsys)
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["summary.csv", "t_0.000mm.s1p", "t_1.000mm.s1p"]
    assert [r["thickness_mm"] for r in rows((out / "summary.csv").read_text())] == ["0", "1"]


# --- monitor ------------------------------------------------------------------------


def start_monitor(*args):
    proc = subprocess.Popen(
        [sys.executable, "-m", "sulfursense.cli", "monitor", "--listen", "127.0.0.1:0", *map(str, args)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    deadline = time.time() + 60
    while time.time() < deadline:
        line = proc.stderr.readline()
        if line.startswith("listening on"):
            host, port = line.split()[-1].rsplit(":", 1)
            return proc, (host, int(port))
        if not line and proc.poll() is not None:
            break
    proc.kill()
    raise RuntimeError("monitor did not start")


def send(addr, lines):
    with socket.create_connection(addr, timeout=20) as s:
        f = s.makefile("rw", encoding="utf-8", newline="\n")
        out = []
        for line in lines:
            f.write(line + "\n")
            f.flush()
            out.append(json.loads(f.readline()))
        return out


def iso(h):
    return f"2024-03-01T{h:02d}:00:00Z"


def test_monitor_smoke(tmp_path):
    proc, addr = start_monitor("--journal", tmp_path / "j.jsonl")
    try:
        ack = send(addr, [record_line(iso(0), "AR1", 9.40)])
    finally:
        proc.terminate()
        proc.wait(10)
    assert ack[0]["ok"] and ack[0]["thickness_mm"] == pytest.approx(3.0, abs=0.03)
    assert len((tmp_path / "j.jsonl").read_text().splitlines()) == 1


def test_monitor_port_in_use():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        res = subprocess.run(
            [sys.executable, "-m", "sulfursense.cli", "monitor", "--listen", f"127.0.0.1:{port}"],
            capture_output=True,
            text=True,
            timeout=60,
        )
    assert res.returncode == 1
    assert "error" in res.stderr


def test_monitor_replay_restores_series(tmp_path):
    journal, alerts = tmp_path / "j.jsonl", tmp_path / "a.jsonl"
    proc, addr = start_monitor("--journal", journal, "--alerts", alerts, "--alert-thickness", 3.0)
    try:
        send(addr, [record_line(iso(h), "AR1", 9.9 - 0.125 * h) for h in range(6)])
    finally:
        proc.terminate()
        proc.wait(10)
    assert len(alerts.read_text().splitlines()) == 1
    # with replay the crossing is already known, so a later record raises nothing new
    proc, addr = start_monitor("--journal", journal, "--alerts", alerts, "--alert-thickness", 3.0, "--replay")
    try:
        send(addr, [record_line(iso(7), "AR1", 9.15)])
    finally:
        proc.terminate()
        proc.wait(10)
    assert len(alerts.read_text().splitlines()) == 1
    assert len(journal.read_text().splitlines()) == 7
