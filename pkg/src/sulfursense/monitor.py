"""Deposition monitoring: record ingestion, time series, rates, alarms and the TCP service."""

from __future__ import annotations

import asyncio
import bisect
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EdgeDipError, SulfurSenseError
from .inversion import (
    DEFAULT_F_RESOLUTION,
    FREQUENCY,
    IN_RANGE,
    SATURATED,
    CalibrationCurve,
    ThicknessEstimate,
    invert_frequency,
    invert_magnitude,
)
from .sparams import FrequencyTrace, find_dip, magnitude_at, read_touchstone

log = logging.getLogger(__name__)

THICKNESS_ALARM = "thickness-threshold"
RATE_ALARM = "rate-threshold"
SATURATION_ALARM = "sensor-saturated"


class Rejected(SulfurSenseError, ValueError):
    """An input line could not be turned into a record; ``reason`` is machine readable."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class JournalError(SulfurSenseError, OSError):
    """The journal could not be written; intake must stop."""


@dataclass(frozen=True)
class DepositionRecord:
    timestamp: datetime
    sensor_id: str
    estimate: ThicknessEstimate
    source_trace_ref: str = ""

    def to_json(self) -> str:
        e = self.estimate
        return json.dumps(
            {
                "ts": self.timestamp.isoformat(),
                "sensor": self.sensor_id,
                "thickness_mm": e.thickness,
                "uncertainty_mm": e.uncertainty,
                "status": e.status,
                "ref": self.source_trace_ref,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "DepositionRecord":
        d = json.loads(line)
        est = ThicknessEstimate(d["thickness_mm"], d["uncertainty_mm"], d["status"], d["sensor"])
        return cls(parse_timestamp(d["ts"]), d["sensor"], est, d.get("ref", ""))


@dataclass(frozen=True)
class AlarmEvent:
    timestamp: datetime
    sensor_id: str
    kind: str
    value: float
    threshold: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "ts": self.timestamp.isoformat(),
                "sensor": self.sensor_id,
                "kind": self.kind,
                "value": self.value,
                "threshold": self.threshold,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class AlarmConfig:
    thickness_mm: float | None = None
    rate_mm_per_h: float | None = None
    hysteresis: float = 0.1
    rate_window: timedelta = timedelta(hours=24)

    def __post_init__(self):
        if not 0 <= self.hysteresis < 1:
            raise ValueError("hysteresis must be in [0, 1)")


class DepositionSeries:
    """Per-sensor records kept in timestamp order.

    Out-of-order arrivals are inserted at their time position; records with
    equal timestamps keep arrival order.  With a ``retention`` window, records
    older than the newest one minus the window are dropped.
    """

    def __init__(self, retention: timedelta | None = None):
        self.retention = retention
        self._records: dict[str, list[DepositionRecord]] = {}
        self._keys: dict[str, list[datetime]] = {}

    def add(self, record: DepositionRecord):
        recs = self._records.setdefault(record.sensor_id, [])
        keys = self._keys.setdefault(record.sensor_id, [])
        pos = bisect.bisect_right(keys, record.timestamp)
        recs.insert(pos, record)
        keys.insert(pos, record.timestamp)
        if self.retention is not None:
            cutoff = keys[-1] - self.retention
            drop = bisect.bisect_left(keys, cutoff)
            if drop:
                del recs[:drop]
                del keys[:drop]

    def records(self, sensor_id: str) -> list[DepositionRecord]:
        return list(self._records.get(sensor_id, []))

    @property
    def sensors(self) -> list[str]:
        return sorted(self._records)

    def __len__(self):
        return sum(len(r) for r in self._records.values())

    def __eq__(self, other):
        return isinstance(other, DepositionSeries) and self._records == other._records


# --- ingestion ----------------------------------------------------------------------


def parse_timestamp(text: str) -> datetime:
    """RFC 3339 instant converted to UTC."""
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        raise ValueError("timestamp lacks a UTC offset")
    return ts.astimezone(timezone.utc)


def _trace_from_json(obj) -> FrequencyTrace:
    if not isinstance(obj, dict):
        raise ValueError("trace must be an object")
    f = obj["freq_ghz"]
    re_ = obj["re"]
    im = obj["im"]
    if not (len(f) == len(re_) == len(im)):
        raise ValueError("trace arrays differ in length")
    return FrequencyTrace(np.asarray(f, float), np.asarray(re_, float) + 1j * np.asarray(im, float))


def estimate_from_trace(
    trace: FrequencyTrace,
    curve: CalibrationCurve,
    sensor: str,
    f_resolution: float = DEFAULT_F_RESOLUTION,
) -> ThicknessEstimate:
    """Dip extraction (or fixed-frequency magnitude) followed by inversion."""
    if curve.kind == FREQUENCY:
        dip = find_dip(trace)
        return invert_frequency(curve, dip.f_res, f_resolution, sensor=sensor)
    return invert_magnitude(curve, magnitude_at(trace, curve.f0), sensor=sensor)


def ingest_record(
    line: str,
    calibrations: Mapping[str, CalibrationCurve],
    f_resolution: float = DEFAULT_F_RESOLUTION,
) -> DepositionRecord:
    """Parse one JSON line and turn its trace into a thickness record.

    Raises :class:`Rejected` with a machine-readable ``reason``.
    """
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise Rejected("malformed-json", str(exc)) from None
    if not isinstance(obj, dict):
        raise Rejected("malformed-json", "line is not a JSON object")
    for key in ("ts", "sensor"):
        if key not in obj:
            raise Rejected(f"missing-field:{key}")
    if "trace" not in obj and "s1p_path" not in obj:
        raise Rejected("missing-field:trace")
    try:
        ts = parse_timestamp(obj["ts"])
    except (ValueError, TypeError) as exc:
        raise Rejected("bad-timestamp", str(exc)) from None
    sensor = obj["sensor"]
    if not isinstance(sensor, str) or sensor not in calibrations:
        raise Rejected(f"unknown-sensor:{sensor}")
    if "trace" in obj:
        ref = "inline"
        try:
            trace = _trace_from_json(obj["trace"])
        except (KeyError, TypeError, ValueError) as exc:
            raise Rejected("bad-trace", str(exc)) from None
    else:
        ref = str(obj["s1p_path"])
        try:
            trace = read_touchstone(Path(ref))
        except OSError as exc:
            raise Rejected("unreadable-s1p", str(exc)) from None
        except ValueError as exc:
            raise Rejected("bad-trace", str(exc)) from None
    try:
        est = estimate_from_trace(trace, calibrations[sensor], sensor, f_resolution)
    except EdgeDipError as exc:
        raise Rejected("edge-dip", str(exc)) from None
    except ValueError as exc:
        raise Rejected("bad-trace", str(exc)) from None
    return DepositionRecord(ts, sensor, est, ref)


# --- analysis -----------------------------------------------------------------------


def _hours(ts: Iterable[datetime], origin: datetime) -> np.ndarray:
    return np.array([(t - origin).total_seconds() / 3600.0 for t in ts])


def _ols_slope(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.size < 2:
        return None
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0:
        return None
    return float(np.dot(dx, y - y.mean()) / sxx)


def rate_estimate(
    series: DepositionSeries, sensor_id: str, window: timedelta, until: datetime | None = None
) -> float | None:
    """Least-squares deposition rate (mm/h) over in-range records in the window ending at ``until``.

    Returns ``None`` when fewer than two usable records fall in the window.
    """
    recs = series.records(sensor_id)
    if until is None:
        if not recs:
            return None
        until = recs[-1].timestamp
    start = until - window
    use = [r for r in recs if start <= r.timestamp <= until and r.estimate.status == IN_RANGE]
    if len(use) < 2:
        return None
    x = _hours((r.timestamp for r in use), use[0].timestamp)
    y = np.array([r.estimate.thickness for r in use])
    return _ols_slope(x, y)


class _Latch:
    """Upward-crossing detector with hysteresis re-arm."""

    def __init__(self, threshold: float, hysteresis: float):
        self.threshold = threshold
        self.rearm = threshold * (1 - hysteresis)
        self.armed = True

    def feed(self, value: float) -> bool:
        if self.armed and value >= self.threshold:
            self.armed = False
            return True
        if not self.armed and value < self.rearm:
            self.armed = True
        return False


def evaluate_alarms(series: DepositionSeries, config: AlarmConfig) -> list[AlarmEvent]:
    """Alarm events for the whole series, in sensor then time order.

    The result depends only on the stored records, never on how they were
    delivered.
    """
    events = []
    for sensor in series.sensors:
        recs = series.records(sensor)
        thick = _Latch(config.thickness_mm, config.hysteresis) if config.thickness_mm is not None else None
        rate = _Latch(config.rate_mm_per_h, config.hysteresis) if config.rate_mm_per_h is not None else None
        in_saturation = False
        for idx, rec in enumerate(recs):
            est = rec.estimate
            if thick is not None and est.status in (IN_RANGE, SATURATED):
                if thick.feed(est.thickness):
                    events.append(AlarmEvent(rec.timestamp, sensor, THICKNESS_ALARM, est.thickness, thick.threshold))
            if rate is not None and est.status == IN_RANGE:
                sub = _prefix_rate(recs[: idx + 1], config.rate_window)
                if sub is not None and rate.feed(sub):
                    events.append(AlarmEvent(rec.timestamp, sensor, RATE_ALARM, sub, rate.threshold))
            if est.status == SATURATED and not in_saturation:
                events.append(AlarmEvent(rec.timestamp, sensor, SATURATION_ALARM, est.thickness, est.thickness))
            in_saturation = est.status == SATURATED
    return events


def _prefix_rate(recs: list[DepositionRecord], window: timedelta) -> float | None:
    until = recs[-1].timestamp
    use = [r for r in recs if r.timestamp >= until - window and r.estimate.status == IN_RANGE]
    if len(use) < 2:
        return None
    x = _hours((r.timestamp for r in use), use[0].timestamp)
    return _ols_slope(x, np.array([r.estimate.thickness for r in use]))


# --- service ------------------------------------------------------------------------


def read_journal(path) -> list[DepositionRecord]:
    p = Path(path)
    if not p.exists():
        return []
    return [DepositionRecord.from_json(line) for line in p.read_text().splitlines() if line.strip()]


def _event_key(ev: AlarmEvent):
    return (ev.sensor_id, ev.kind, ev.timestamp)


@dataclass
class Monitor:
    """Single serialized ingest pipeline: series, journal and alarm sinks."""

    calibrations: Mapping[str, CalibrationCurve]
    alarm_config: AlarmConfig = field(default_factory=AlarmConfig)
    journal_path: Path | None = None
    alarm_path: Path | None = None
    f_resolution: float = DEFAULT_F_RESOLUTION
    retention: timedelta | None = None
    echo_alarms: bool = True

    def __post_init__(self):
        self.series = DepositionSeries(self.retention)
        self.rejected = 0
        self.accepted = 0
        self._emitted: set = set()
        self.journal_failed = False
        self.bound = None

    def replay(self) -> int:
        """Load the journal into the series; alarms already implied by it are not re-emitted."""
        if self.journal_path is None:
            return 0
        recs = read_journal(self.journal_path)
        for r in recs:
            self.series.add(r)
        self._emitted = {_event_key(e) for e in evaluate_alarms(self.series, self.alarm_config)}
        return len(recs)

    def _journal(self, rec: DepositionRecord):
        if self.journal_path is None:
            return
        try:
            with open(self.journal_path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")
                fh.flush()
        except OSError as exc:
            raise JournalError(f"journal write failed: {exc}") from exc

    def _alarms(self) -> list[AlarmEvent]:
        new = [e for e in evaluate_alarms(self.series, self.alarm_config) if _event_key(e) not in self._emitted]
        for ev in new:
            self._emitted.add(_event_key(ev))
            line = ev.to_json()
            if self.alarm_path is not None:
                with open(self.alarm_path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            if self.echo_alarms:
                print(line, file=sys.stderr, flush=True)
        return new

    def handle_line(self, line: str) -> dict:
        """Process one input line and return its acknowledgement."""
        try:
            rec = ingest_record(line, self.calibrations, self.f_resolution)
        except Rejected as exc:
            self.rejected += 1
            return {"ok": False, "thickness_mm": None, "status": "rejected", "reason": exc.reason}
        self._journal(rec)
        self.series.add(rec)
        self.accepted += 1
        self._alarms()
        est = rec.estimate
        return {"ok": True, "thickness_mm": est.thickness, "status": est.status, "reason": None}

    def ingest_lines(self, lines: Iterable[str]) -> list[dict]:
        return [self.handle_line(line) for line in lines if line.strip()]


async def _handle_connection(monitor: Monitor, lock: asyncio.Lock, stop: asyncio.Event, reader, writer):
    peer = writer.get_extra_info("peername")
    try:
        while not stop.is_set():
            raw = await reader.readline()
            if not raw:
                break
            text = raw.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            async with lock:
                try:
                    ack = monitor.handle_line(text)
                except JournalError as exc:
                    log.error("%s", exc)
                    monitor.journal_failed = True
                    stop.set()
                    ack = {"ok": False, "thickness_mm": None, "status": "rejected", "reason": "journal-failure"}
            writer.write((json.dumps(ack) + "\n").encode())
            await writer.drain()
    except (ConnectionError, asyncio.IncompleteReadError) as exc:
        log.info("connection %s dropped: %s", peer, exc)
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except ConnectionError:
            pass


async def serve_async(monitor: Monitor, host: str, port: int, ready: asyncio.Event | None = None, stop: asyncio.Event | None = None):
    """Accept line-delimited TCP connections until ``stop`` is set.

    Raises :class:`JournalError` if intake stopped because the journal failed.
    """
    lock = asyncio.Lock()
    stop = stop or asyncio.Event()
    server = await asyncio.start_server(lambda r, w: _handle_connection(monitor, lock, stop, r, w), host, port)
    monitor.bound = server.sockets[0].getsockname()[:2]
    if ready is not None:
        ready.set()
    async with server:
        await stop.wait()
    if monitor.journal_failed:
        raise JournalError("journal failure")


def serve(listen_address: str, monitor: Monitor):
    """Blocking service loop on ``host:port``."""
    host, port = split_address(listen_address)
    asyncio.run(serve_async(monitor, host, port))


def split_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        raise ValueError(f"listen address {addr!r} must be host:port")
    return host or "127.0.0.1", int(port)
