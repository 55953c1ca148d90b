"""Scenario-driven node simulator.

Replays a sensor timeline and monochrome frames through the wire protocol
to a UDP/TCP sink, a capture file, or an in-memory list. Telemetry readings
hold the last event value (step interpolation); at time_scale=0 the whole
run is deterministic and emitted in exact event order.
"""
from __future__ import annotations

import os
import random
import socket
import struct
import time
from dataclasses import dataclass, field
from fractions import Fraction

import yaml

from .errors import ScenarioError, TransportError
from .images import MONO_HEIGHT, MONO_WIDTH, load_pgm
from .protocol import (
    FRAME_IMAGE_CHUNK,
    FRAME_IMAGE_MANIFEST,
    chunk_image,
    encode_chunk,
    encode_manifest,
    frame,
    from_physical,
    PhysicalReading,
    telemetry_frame,
)

CAPTURE_LEN_PREFIX = ">I"   # 4-byte big-endian length before each raw frame

READING_KEYS = {
    "lux", "temp_c", "humidity_pct", "pressure_hpa", "audio_rms",
    "accel_mps2", "wind_mps",
}


@dataclass(frozen=True)
class ScenarioEvent:
    t_offset: float
    reading: PhysicalReading


@dataclass(frozen=True)
class ScenarioImage:
    t_offset: float
    path: str


@dataclass(frozen=True)
class Scenario:
    node_id: int
    events: tuple[ScenarioEvent, ...]
    images: tuple[ScenarioImage, ...] = ()
    telemetry_rate_hz: float = 1.0
    duration_s: float | None = None
    acoustic: tuple[dict, ...] = ()   # optional {x, y, intensity} source dicts

    def end_time(self) -> float:
        """Explicit duration, else one telemetry period past the last event."""
        if self.duration_s is not None:
            return self.duration_s
        last = 0.0
        if self.events:
            last = max(last, self.events[-1].t_offset)
        if self.images:
            last = max(last, max(i.t_offset for i in self.images))
        return last + 1.0 / self.telemetry_rate_hz


@dataclass
class NodeConfig:
    gateway_address: str = "127.0.0.1:7440"
    transport: str = "udp"
    time_scale: float = 0.0
    drop_probability: float = 0.0
    reorder_window: int = 0
    seed: int = 0
    capture_path: str | None = None

    def __post_init__(self):
        if self.time_scale < 0:
            raise ScenarioError("time_scale must be >= 0")
        if self.transport not in ("udp", "tcp"):
            raise ScenarioError(f"unknown transport {self.transport!r}")


def _parse_reading(doc: dict, where: str) -> PhysicalReading:
    unknown = set(doc) - READING_KEYS
    if unknown:
        raise ScenarioError(f"{where}: unknown reading fields {sorted(unknown)}")
    try:
        reading = PhysicalReading(
            lux=float(doc.get("lux", 0.0)),
            temp_c=float(doc.get("temp_c", -40.0)),
            humidity_pct=float(doc.get("humidity_pct", 0.0)),
            pressure_hpa=float(doc.get("pressure_hpa", 300.0)),
            audio_rms=float(doc.get("audio_rms", 0.0)),
            accel_mps2=tuple(doc.get("accel_mps2", (0.0, 0.0, 0.0))),
            wind_mps=None if doc.get("wind_mps") is None else float(doc["wind_mps"]),
        )
        reading.validate()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    return reading


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario document (YAML)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = yaml.safe_load(f)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path!r}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        ctx = f" at line {mark.line + 1}" if mark else ""
        raise ScenarioError(f"scenario parse error{ctx}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")

    events = []
    prev_t = None
    for i, ev in enumerate(doc.get("events") or []):
        if "t" not in ev:
            raise ScenarioError(f"events[{i}]: missing 't' offset")
        t = float(ev["t"])
        if prev_t is not None and t <= prev_t:
            raise ScenarioError(
                f"events[{i}]: t={t} not strictly increasing (previous {prev_t})")
        prev_t = t
        reading = _parse_reading({k: v for k, v in ev.items() if k != "t"},
                                 f"events[{i}]")
        events.append(ScenarioEvent(t_offset=t, reading=reading))

    base_dir = os.path.dirname(os.path.abspath(path))
    images = []
    for i, im in enumerate(doc.get("images") or []):
        if "t" not in im or "path" not in im:
            raise ScenarioError(f"images[{i}]: needs 't' and 'path'")
        img_path = im["path"]
        if not os.path.isabs(img_path):
            img_path = os.path.join(base_dir, img_path)
        if not os.path.exists(img_path):
            raise ScenarioError(f"images[{i}]: file {img_path!r} does not exist")
        try:
            mono = load_pgm(img_path)
        except Exception as exc:
            raise ScenarioError(f"images[{i}]: cannot decode {img_path!r}: {exc}") from exc
        if (mono.width, mono.height) != (MONO_WIDTH, MONO_HEIGHT):
            raise ScenarioError(
                f"images[{i}]: {mono.width}x{mono.height}, "
                f"expected {MONO_WIDTH}x{MONO_HEIGHT}")
        images.append(ScenarioImage(t_offset=float(im["t"]), path=img_path))

    acoustic = []
    for i, src in enumerate(doc.get("acoustic") or []):
        for key in ("x", "y", "intensity"):
            if key not in src:
                raise ScenarioError(f"acoustic[{i}]: missing {key!r}")
        acoustic.append({"x": int(src["x"]), "y": int(src["y"]),
                         "intensity": float(src["intensity"])})

    rate = float(doc.get("telemetry_rate_hz", 1.0))
    if rate <= 0:
        raise ScenarioError(f"telemetry_rate_hz={rate} must be positive")
    duration = doc.get("duration_s")
    return Scenario(
        node_id=int(doc.get("node_id", 0)),
        events=tuple(events),
        images=tuple(sorted(images, key=lambda im: im.t_offset)),
        telemetry_rate_hz=rate,
        duration_s=None if duration is None else float(duration),
        acoustic=tuple(acoustic),
    )


def reading_at(scenario: Scenario, t: float) -> PhysicalReading | None:
    """Step-hold interpolation: the last event at or before t; the first
    event's value before it; None when the scenario has no events."""
    if not scenario.events:
        return None
    current = scenario.events[0].reading
    for ev in scenario.events:
        if ev.t_offset <= t:
            current = ev.reading
        else:
            break
    return current


def iter_frames(scenario: Scenario):
    """Deterministic emission schedule: yields (t_offset, frame_bytes).

    Telemetry ticks run on an exact rational grid from t=0 while t < end;
    each image becomes one manifest plus its chunk frames at its t_offset.
    A single sequence counter covers all frames of the node. Ties at one
    instant order telemetry before images.
    """
    period = Fraction(1) / Fraction(scenario.telemetry_rate_hz).limit_denominator(10 ** 6)
    end = Fraction(scenario.end_time()).limit_denominator(10 ** 6)
    schedule: list[tuple[Fraction, int, object]] = []
    k = 0
    while k * period < end:
        schedule.append((k * period, 0, None))
        k += 1
    for idx, im in enumerate(scenario.images):
        schedule.append((Fraction(im.t_offset).limit_denominator(10 ** 6), 1 + idx, im))
    schedule.sort(key=lambda s: (s[0], s[1]))

    seq = 0
    image_id = 0
    for t, _, item in schedule:
        if item is None:
            reading = reading_at(scenario, float(t))
            if reading is None:
                continue
            rec = from_physical(reading, node_id=scenario.node_id, seq=seq)
            yield float(t), telemetry_frame(rec)
            seq = (seq + 1) & 0xFFFF
        else:
            mono = load_pgm(item.path)
            manifest, chunks = chunk_image(mono, image_id)
            yield float(t), frame(FRAME_IMAGE_MANIFEST, scenario.node_id, seq,
                                  encode_manifest(manifest))
            seq = (seq + 1) & 0xFFFF
            for c in chunks:
                yield float(t), frame(FRAME_IMAGE_CHUNK, scenario.node_id, seq,
                                      encode_chunk(c))
                seq = (seq + 1) & 0xFFFF
            image_id = (image_id + 1) & 0xFF


class LossyLink:
    """Deterministic transport shim: seeded drops and bounded reordering."""

    def __init__(self, send, drop_probability: float = 0.0,
                 reorder_window: int = 0, seed: int = 0):
        self._send = send
        self._drop = drop_probability
        self._window = reorder_window
        self._rng = random.Random(seed)
        self._buffer: list[bytes] = []

    def send(self, data: bytes) -> None:
        if self._drop > 0 and self._rng.random() < self._drop:
            return
        if self._window <= 1:
            self._send(data)
            return
        self._buffer.append(data)
        if len(self._buffer) >= self._window:
            self.flush()

    def flush(self) -> None:
        self._rng.shuffle(self._buffer)
        for item in self._buffer:
            self._send(item)
        self._buffer.clear()


class _UdpSink:
    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._addr = (host, port)

    def send(self, data: bytes) -> None:
        self._sock.sendto(data, self._addr)

    def close(self) -> None:
        self._sock.close()


class _TcpSink:
    """Length-prefixed frames over one TCP connection."""

    def __init__(self, host: str, port: int, retries: int = 5):
        last_exc = None
        for attempt in range(retries):
            try:
                self._sock = socket.create_connection((host, port), timeout=5.0)
                break
            except OSError as exc:
                last_exc = exc
                time.sleep(0.1 * (attempt + 1))
        else:
            raise TransportError(f"cannot connect to {host}:{port}: {last_exc}")

    def send(self, data: bytes) -> None:
        self._sock.sendall(struct.pack(CAPTURE_LEN_PREFIX, len(data)) + data)

    def close(self) -> None:
        self._sock.close()


class _CaptureSink:
    def __init__(self, path: str):
        self._f = open(path, "wb")

    def send(self, data: bytes) -> None:
        self._f.write(struct.pack(CAPTURE_LEN_PREFIX, len(data)) + data)

    def close(self) -> None:
        self._f.close()


def read_capture(path: str) -> list[bytes]:
    """Load a capture file back into its frame list."""
    frames = []
    with open(path, "rb") as f:
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise ScenarioError(f"capture {path!r}: truncated length prefix")
            (n,) = struct.unpack(CAPTURE_LEN_PREFIX, head)
            data = f.read(n)
            if len(data) != n:
                raise ScenarioError(f"capture {path!r}: truncated frame body")
            frames.append(data)
    return frames


def run(scenario: Scenario, config: NodeConfig) -> int:
    """Replay the scenario; returns the number of frames handed to the sink
    (before the lossy shim). Honors time_scale for pacing."""
    if config.capture_path:
        sink = _CaptureSink(config.capture_path)
    else:
        host, _, port = config.gateway_address.rpartition(":")
        if config.transport == "udp":
            sink = _UdpSink(host or "127.0.0.1", int(port))
        else:
            sink = _TcpSink(host or "127.0.0.1", int(port))
    link = LossyLink(sink.send, config.drop_probability,
                     config.reorder_window, config.seed)
    count = 0
    start = time.monotonic()
    try:
        for t, data in iter_frames(scenario):
            if config.time_scale > 0:
                target = start + t * config.time_scale
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            link.send(data)
            count += 1
        link.flush()
    finally:
        sink.close()
    return count
