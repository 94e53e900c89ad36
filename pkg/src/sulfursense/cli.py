"""``sulfursense`` command line: model, simulate, sweep, calibrate, invert, monitor.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import logging
import sys
from datetime import timedelta
from pathlib import Path

from . import inversion, stackup
from .config import SceneConfig
from .errors import ConfigurationError, DomainError, SulfurSenseError
from .sparams import find_dip, magnitude_at, read_touchstone, trace_csv, write_touchstone

log = logging.getLogger("sulfursense")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# flag dest -> config path; flags win over the file
SCENE_FLAGS = {
    "resonant_length_mm": ("geometry.resonant_length_mm", float, "patch resonant length (mm)"),
    "width_mm": ("geometry.width_mm", float, "patch width (mm)"),
    "feed_offset_mm": ("geometry.feed_offset_mm", float, "feed position from the patch centre along the length (mm)"),
    "deposit_offset_mm": ("geometry.deposit_offset_mm", float, "deposit hidden from the sensor (mm)"),
    "substrate_eps_r": ("stack.substrate.eps_r", float, "substrate relative permittivity"),
    "substrate_tan_d": ("stack.substrate.tan_d", float, "substrate loss tangent"),
    "h_mm": ("stack.substrate.h_mm", float, "substrate height (mm)"),
    "eps_r": ("stack.superstrate.eps_r", float, "deposit relative permittivity"),
    "tan_d": ("stack.superstrate.tan_d", float, "deposit loss tangent"),
    "profile": ("stack.superstrate.profile.kind", str, "deposit profile: uniform or wavy"),
    "t_mm": ("stack.superstrate.profile.t_mm", float, "deposit thickness, peak for wavy (mm)"),
    "amplitude_mm": ("stack.superstrate.profile.amplitude_mm", float, "wavy peak-to-trough amplitude (mm)"),
    "period_mm": ("stack.superstrate.profile.period_mm", float, "wavy period (mm)"),
    "ambient_eps_r": ("stack.ambient.eps_r", float, "ambient relative permittivity"),
}
SOLVER_FLAGS = {
    "cell_mm": ("solver.cell_mm", float, "FDTD cell size (mm)"),
    "pml": ("solver.pml", int, "PML thickness (cells)"),
    "steps": ("solver.steps", int, "maximum time steps"),
    "f0_ghz": ("solver.pulse.f0_ghz", float, "excitation centre frequency (GHz)"),
    "bw_ghz": ("solver.pulse.bw_ghz", float, "excitation -20 dB bandwidth (GHz)"),
}


def parse_range(text: str) -> list[float]:
    """``a:b:step`` (or ``a`` alone) into an inclusive list of thicknesses."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected a:b:step") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise UsageError(f"bad range {text!r}; expected a:b:step")
    a, b, step = nums
    if b < a:
        raise UsageError(f"empty range {text!r}")
    if step <= 0:
        raise UsageError(f"range step must be positive in {text!r}")
    return stackup.thickness_sweep(a, b, step)


def _add_flags(p: argparse.ArgumentParser, table: dict, title: str):
    g = p.add_argument_group(title)
    for dest, (_, typ, help_) in table.items():
        g.add_argument("--" + dest.replace("_", "-"), dest=dest, type=typ, default=None, help=help_)


def _add_config(p: argparse.ArgumentParser, solver: bool):
    p.add_argument("--config", type=Path, help="scene JSON file (defaults apply to omitted keys)")
    _add_flags(p, SCENE_FLAGS, "scene overrides")
    if solver:
        _add_flags(p, SOLVER_FLAGS, "solver overrides")


def _scene_config(args, solver: bool) -> SceneConfig:
    cfg = SceneConfig.load(args.config) if args.config else SceneConfig()
    table = dict(SCENE_FLAGS, **(SOLVER_FLAGS if solver else {}))
    return cfg.override({path: getattr(args, dest) for dest, (path, _, _) in table.items()})


def _open_out(path):
    if path is None or str(path) == "-":
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _write_text(path, text: str):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# --- subcommands --------------------------------------------------------------------


def cmd_model(args) -> int:
    cfg = _scene_config(args, solver=False)
    ts = parse_range(args.thickness_sweep)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["thickness_mm", "eps_e", "fr_ghz", "frac_shift"])
    for t, eps_e, fr, frac in stackup.iter_model_rows(cfg.geometry(), cfg.stack(), ts):
        w.writerow([_fmt(t), _fmt(eps_e), _fmt(fr), _fmt(frac)])
    _write_text(args.out, out.getvalue())
    return EXIT_OK


def _simulate(spec, thickness: float):
    from .fdtd.runner import port_s11, run

    series = run(spec)
    trace = port_s11(series, spec.port_resistance)
    trace.metadata.update(thickness_mm=_fmt(thickness))
    return trace, series


def energy_log_csv(series) -> str:
    """Port energy per sampling window: step, energy (V^2 summed) and fraction of the peak."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["step", "port_energy", "relative"])
    peak = max((e for _, e in series.energy_log), default=0.0)
    for n, e in series.energy_log:
        w.writerow([n, _fmt(e), _fmt(e / peak if peak > 0 else 0.0)])
    return out.getvalue()


def cmd_simulate(args) -> int:
    cfg = _scene_config(args, solver=True)
    spec = cfg.simulation_spec()
    trace, series = _simulate(spec, cfg.thickness)
    if not series.decayed:
        log.warning("simulation hit the step cap before the port energy decayed")
    _write_text(args.out, write_touchstone(trace, args.format, spec.port_resistance))
    if args.csv:
        _write_text(args.csv, trace_csv(trace))
    if args.energy_log:
        _write_text(args.energy_log, energy_log_csv(series))
    try:
        dip = find_dip(trace)
        log.info("dip %.4f GHz, %.2f dB", dip.f_res, dip.depth_db)
    except SulfurSenseError as exc:
        log.warning("%s", exc)
    return EXIT_OK


def sweep_file_name(t: float) -> str:
    return f"t_{t:.3f}mm.s1p"


def cmd_sweep(args) -> int:
    from .fdtd.sweep import sweep_thickness

    ts = parse_range(args.thickness)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    cfg = _scene_config(args, solver=True)
    spec = cfg.simulation_spec()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = sweep_thickness(spec, ts, parallelism=args.jobs)
    rows = []
    failed = 0
    for r in results:
        if not r.ok:
            failed += 1
            rows.append([_fmt(r.thickness), "", ""])
            continue
        r.trace.metadata.update(thickness_mm=_fmt(r.thickness))
        (out_dir / sweep_file_name(r.thickness)).write_text(write_touchstone(r.trace, args.format, spec.port_resistance))
        try:
            dip = find_dip(r.trace)
            rows.append([_fmt(r.thickness), _fmt(dip.f_res), _fmt(dip.depth_db)])
        except SulfurSenseError as exc:
            log.warning("t = %g mm: %s", r.thickness, exc)
            rows.append([_fmt(r.thickness), "", ""])
    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["thickness_mm", "f_res_ghz", "depth_db"])
        w.writerows(rows)
    if failed:
        log.error("%d of %d simulations failed", failed, len(results))
        return EXIT_RUNTIME
    return EXIT_OK


def _read_summary(path: Path) -> list[tuple[float, str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [(float(r["thickness_mm"]), r["f_res_ghz"], r["depth_db"]) for r in rows]


def cmd_calibrate(args) -> int:
    valid = None
    if args.valid_range:
        lo, _, hi = args.valid_range.partition(":")
        valid = (float(lo), float(hi))
    if args.kind == inversion.MAGNITUDE and args.f0 is None:
        raise UsageError("--kind magnitude needs --f0")
    if args.sweep_dir:
        sweep_dir = Path(args.sweep_dir)
        rows = _read_summary(sweep_dir / "summary.csv")
        points = []
        for t, f_res, _ in rows:
            if args.kind == inversion.FREQUENCY:
                if not f_res:
                    raise ConfigurationError(f"sweep has no dip for t = {t} mm")
                points.append((t, float(f_res)))
            else:
                trace = read_touchstone(sweep_dir / sweep_file_name(t))
                points.append((t, magnitude_at(trace, args.f0)))
        source = "simulated"
    else:
        if args.kind != inversion.FREQUENCY:
            raise UsageError("the analytic model only yields frequency curves; use --sweep-dir")
        cfg = _scene_config(args, solver=False)
        ts = parse_range(args.thickness_sweep)
        curve = stackup.forward_curve(cfg.geometry(), cfg.stack(), ts)
        if not curve.invertible:
            raise ConfigurationError("deposit has no permittivity contrast; the model curve is flat")
        points = list(curve.nodes)
        source = "model"
    curve = inversion.build_calibration(points, args.kind, args.f0, source, args.sensor, valid)
    _write_text(args.out, inversion.curve_to_csv(curve))
    return EXIT_OK


def _curves(args) -> list[inversion.CalibrationCurve]:
    curves = [inversion.load_curve(p) for p in args.curve or []]
    curves += [inversion.bundled_curve(s) for s in args.sensor or []]
    if not curves:
        raise UsageError("give at least one --curve or --sensor")
    return curves


def cmd_invert(args) -> int:
    curves = _curves(args)
    sources = [x is not None for x in (args.input, args.freq, args.s11_db)]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --input, --freq, --s11-db")
    trace = read_touchstone(Path(args.input)) if args.input else None
    report: dict = {}
    estimates = []
    for curve in curves:
        sensor = curve.sensor
        if curve.kind == inversion.FREQUENCY:
            if args.s11_db is not None:
                raise UsageError("--s11-db needs a magnitude curve")
            f = args.freq
            if trace is not None:
                f = find_dip(trace).f_res
                report.setdefault("f_res_ghz", f)
            est = inversion.invert_frequency(curve, f, args.f_resolution, sensor)
        else:
            if args.freq is not None:
                raise UsageError("--freq needs a frequency curve")
            db = args.s11_db if trace is None else magnitude_at(trace, curve.f0)
            est = inversion.invert_magnitude(curve, db, args.db_resolution, sensor)
        estimates.append(est)
    if len(estimates) == 1:
        report.update(estimates[0].to_dict())
    else:
        report.update(inversion.fuse(estimates).to_dict())
        report["estimates"] = [e.to_dict() for e in estimates]
    _write_text(args.out, json.dumps(report, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_monitor(args) -> int:
    from .monitor import AlarmConfig, Monitor, serve_async, split_address

    if args.calibration:
        cals = inversion.load_calibration_dir(args.calibration)
        if not cals:
            raise ConfigurationError(f"no calibration curves in {args.calibration}")
    else:
        cals = {s: inversion.bundled_curve(s) for s in ("AR1", "AR2")}
    try:
        host, port = split_address(args.listen)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mon = Monitor(
        cals,
        AlarmConfig(args.alert_thickness, args.alert_rate, args.hysteresis, timedelta(hours=args.rate_window_h)),
        journal_path=Path(args.journal) if args.journal else None,
        alarm_path=Path(args.alerts) if args.alerts else None,
        f_resolution=args.f_resolution,
    )
    if args.replay:
        n = mon.replay()
        log.info("replayed %d journal records", n)

    async def main():
        ready = asyncio.Event()
        server = asyncio.create_task(serve_async(mon, host, port, ready))
        waiter = asyncio.create_task(ready.wait())
        done, _ = await asyncio.wait({server, waiter}, return_when=asyncio.FIRST_COMPLETED)
        if server in done:
            waiter.cancel()
            return server.result()
        h, p = mon.bound
        print(f"listening on {h}:{p}", file=sys.stderr, flush=True)
        await server

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sulfursense", description="Microwave sensing of sulfur deposits with a patch antenna.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    m = sub.add_parser("model", help="analytic resonance versus deposit thickness (CSV)")
    _add_config(m, solver=False)
    m.add_argument("--thickness-sweep", default="0:7:1", help="thicknesses a:b:step in mm, end inclusive (default 0:7:1)")
    m.add_argument("--out", help="output CSV (default stdout)")
    m.set_defaults(func=cmd_model)

    s = sub.add_parser("simulate", help="FDTD reflection trace of one scene (Touchstone)")
    _add_config(s, solver=True)
    s.add_argument("--out", help="output .s1p (default stdout)")
    s.add_argument("--csv", help="also write the trace as CSV here")
    s.add_argument("--energy-log", help="also write the port energy decay as CSV here")
    s.add_argument("--format", choices=["RI", "MA", "DB"], default="RI", help="Touchstone number format (default RI)")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="FDTD traces over deposit thicknesses plus a dip summary")
    _add_config(w, solver=True)
    w.add_argument("--thickness", required=True, help="thicknesses a:b:step in mm, end inclusive")
    w.add_argument("--jobs", type=int, default=1, help="parallel simulations (default 1); output does not depend on it")
    w.add_argument("--out-dir", default="sweep", help="output directory (default ./sweep)")
    w.add_argument("--format", choices=["RI", "MA", "DB"], default="RI", help="Touchstone number format (default RI)")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="build a calibration curve from a sweep or from the analytic model")
    _add_config(c, solver=False)
    c.add_argument("--sweep-dir", help="directory written by 'sweep'; without it the analytic model is used")
    c.add_argument("--thickness-sweep", default="0:7:0.25", help="model nodes a:b:step in mm (default 0:7:0.25)")
    c.add_argument("--kind", choices=[inversion.FREQUENCY, inversion.MAGNITUDE], default=inversion.FREQUENCY, help="observable (default frequency)")
    c.add_argument("--f0", type=float, help="reading frequency in GHz for magnitude curves")
    c.add_argument("--sensor", help="sensor id stored with the curve")
    c.add_argument("--valid-range", help="validity range lo:hi in mm (default node span)")
    c.add_argument("--out", help="output CSV (default stdout)")
    c.set_defaults(func=cmd_calibrate)

    i = sub.add_parser("invert", help="deposit thickness from a measurement (JSON)")
    i.add_argument("--curve", action="append", help="calibration CSV (repeat to fuse sensors)")
    i.add_argument("--sensor", action="append", choices=["AR1", "AR2"], help="bundled curve (repeatable)")
    i.add_argument("--input", help="measured .s1p trace")
    i.add_argument("--freq", type=float, help="measured dip frequency (GHz)")
    i.add_argument("--s11-db", type=float, help="measured |S11| in dB at the curve's f0")
    i.add_argument("--f-resolution", type=float, default=inversion.DEFAULT_F_RESOLUTION, help="frequency resolution in GHz (default %(default)s)")
    i.add_argument("--db-resolution", type=float, default=inversion.DEFAULT_DB_RESOLUTION, help="magnitude resolution in dB (default %(default)s)")
    i.add_argument("--out", help="output JSON (default stdout)")
    i.set_defaults(func=cmd_invert)

    n = sub.add_parser("monitor", help="TCP ingest service with journal and alarms")
    n.add_argument("--listen", default="127.0.0.1:7878", help="host:port to bind (default %(default)s; port 0 picks one)")
    n.add_argument("--calibration", help="directory of calibration CSVs keyed by sensor (default bundled AR1/AR2)")
    n.add_argument("--journal", help="append-only record journal (JSON lines)")
    n.add_argument("--alerts", help="alarm sink file (JSON lines); alarms also go to stderr")
    n.add_argument("--alert-thickness", type=float, help="thickness alarm threshold (mm)")
    n.add_argument("--alert-rate", type=float, help="deposition-rate alarm threshold (mm/h)")
    n.add_argument("--hysteresis", type=float, default=0.1, help="re-arm fraction below a threshold (default %(default)s)")
    n.add_argument("--rate-window-h", type=float, default=24.0, help="rate regression window in hours (default %(default)s)")
    n.add_argument("--f-resolution", type=float, default=inversion.DEFAULT_F_RESOLUTION, help="frequency resolution in GHz (default %(default)s)")
    n.add_argument("--replay", action="store_true", help="load the journal before serving")
    n.set_defaults(func=cmd_monitor)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sulfursense {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, DomainError) as exc:
        print(f"sulfursense {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SulfurSenseError, ValueError, OSError) as exc:
        print(f"sulfursense {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
