"""Bit-exact wire format for telemetry and image transport.

One telemetry sample packs into a 138-bit sensor block (16-bit light,
3x20-bit environment, 14-bit audio RMS, 3x16-bit acceleration), padded with
zero bits to 18 bytes. Frames wrap payloads in a fixed header plus
CRC-16/CCITT-FALSE. Images travel as a manifest frame plus <=1024-byte
chunk frames that reassemble in any order.

Everything here is a pure function over byte sequences; no shared state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    CorruptFrameError,
    FieldRangeError,
    FramingError,
    IncompleteFrameError,
    NotAFrameError,
    ProtocolError,
)
from .images import MonoImage

MAGIC = b"\x50\x47"
VERSION = 0x01

FRAME_TELEMETRY = 0x01
FRAME_IMAGE_CHUNK = 0x02
FRAME_IMAGE_MANIFEST = 0x03
FRAME_TELEMETRY_EXT = 0x04

HEADER_LEN = 10
CRC_LEN = 2
MAX_PAYLOAD = 1400
CHUNK_PIXEL_BYTES = 1024

# Field widths of the packed sensor block, in packing order.
_FIELD_BITS = (
    ("lux_raw", 16),
    ("temp_q", 20),
    ("hum_q", 20),
    ("press_q", 20),
    ("audio_q", 14),
    ("accel_x", 16),
    ("accel_y", 16),
    ("accel_z", 16),
)
SENSOR_BLOCK_BITS = sum(bits for _, bits in _FIELD_BITS)  # 138
TELEMETRY_PAYLOAD_LEN = math.ceil(SENSOR_BLOCK_BITS / 8)  # 18 bytes, 6 pad bits
WIND_BITS = 10
TELEMETRY_EXT_PAYLOAD_LEN = math.ceil((SENSOR_BLOCK_BITS + WIND_BITS) / 8)  # 19 bytes

# Physical scale factors (quantized fixed point, see to_physical/from_physical).
ACCEL_FULL_SCALE = 2 * 9.80665      # +/- 2 g in m/s^2
ACCEL_LSB = ACCEL_FULL_SCALE / 32768.0
AUDIO_FULL_SCALE = 16383
TEMP_OFFSET_C = -40.0
PRESS_OFFSET_HPA = 300.0

TEMP_RANGE_C = (-40.0, 85.0)
HUM_RANGE_PCT = (0.0, 100.0)
PRESS_RANGE_HPA = (300.0, 1100.0)
LUX_RANGE = (0.0, 65535.0)
WIND_RANGE_MPS = (0.0, 102.3)


@dataclass(frozen=True)
class TelemetryRecord:
    """One quantized sensor sample as it travels on the wire."""

    node_id: int = 0
    seq: int = 0
    lux_raw: int = 0
    temp_q: int = 0
    hum_q: int = 0
    press_q: int = 0
    audio_q: int = 0
    accel_x: int = 0
    accel_y: int = 0
    accel_z: int = 0
    wind_q: int | None = None   # 10-bit, 0.1 m/s steps; only in extended frames

    def validate(self) -> None:
        _check_range("node_id", self.node_id, 0, 0xFFFF)
        _check_range("seq", self.seq, 0, 0xFFFF)
        _check_range("lux_raw", self.lux_raw, 0, 0xFFFF)
        _check_range("temp_q", self.temp_q, 0, 0xFFFFF)
        _check_range("hum_q", self.hum_q, 0, 0xFFFFF)
        _check_range("press_q", self.press_q, 0, 0xFFFFF)
        _check_range("audio_q", self.audio_q, 0, 0x3FFF)
        _check_range("accel_x", self.accel_x, -32768, 32767)
        _check_range("accel_y", self.accel_y, -32768, 32767)
        _check_range("accel_z", self.accel_z, -32768, 32767)
        if self.wind_q is not None:
            _check_range("wind_q", self.wind_q, 0, 0x3FF)


@dataclass(frozen=True)
class PhysicalReading:
    """Sensor values in engineering units; accel_mag is the vector norm
    unless set explicitly (summaries store a mean of magnitudes there)."""

    lux: float = 0.0
    temp_c: float = -40.0
    humidity_pct: float = 0.0
    pressure_hpa: float = 300.0
    audio_rms: float = 0.0
    accel_mps2: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel_mag: float | None = None
    wind_mps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "accel_mps2", tuple(float(v) for v in self.accel_mps2))
        if self.accel_mag is None:
            object.__setattr__(self, "accel_mag", math.hypot(*self.accel_mps2))

    def validate(self) -> None:
        _check_frange("lux", self.lux, *LUX_RANGE)
        _check_frange("temp_c", self.temp_c, *TEMP_RANGE_C)
        _check_frange("humidity_pct", self.humidity_pct, *HUM_RANGE_PCT)
        _check_frange("pressure_hpa", self.pressure_hpa, *PRESS_RANGE_HPA)
        _check_frange("audio_rms", self.audio_rms, 0.0, 1.0)
        for axis, v in zip("xyz", self.accel_mps2):
            _check_frange(f"accel_{axis}", v, -ACCEL_FULL_SCALE, ACCEL_FULL_SCALE)
        if self.wind_mps is not None:
            _check_frange("wind_mps", self.wind_mps, *WIND_RANGE_MPS)

    def to_dict(self) -> dict:
        return {
            "lux": self.lux,
            "temp_c": self.temp_c,
            "humidity_pct": self.humidity_pct,
            "pressure_hpa": self.pressure_hpa,
            "audio_rms": self.audio_rms,
            "accel_mps2": list(self.accel_mps2),
            "accel_mag": self.accel_mag,
            "wind_mps": self.wind_mps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalReading":
        return cls(
            lux=d.get("lux", 0.0),
            temp_c=d.get("temp_c", -40.0),
            humidity_pct=d.get("humidity_pct", 0.0),
            pressure_hpa=d.get("pressure_hpa", 300.0),
            audio_rms=d.get("audio_rms", 0.0),
            accel_mps2=tuple(d.get("accel_mps2", (0.0, 0.0, 0.0))),
            accel_mag=d.get("accel_mag"),
            wind_mps=d.get("wind_mps"),
        )


@dataclass(frozen=True)
class WireFrame:
    frame_type: int
    node_id: int
    seq: int
    payload: bytes


@dataclass(frozen=True)
class ImageManifest:
    image_id: int
    width: int
    height: int
    total_chunks: int


@dataclass(frozen=True)
class ImageChunk:
    image_id: int
    chunk_index: int
    total_chunks: int
    pixel_bytes: bytes


@dataclass(frozen=True)
class Incomplete:
    """Partial reassembly result: which chunk indices are still missing."""

    missing_indices: list[int] = field(default_factory=list)


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise FieldRangeError(f"{name} must be an integer, got {value!r}")
    if not lo <= value <= hi:
        raise FieldRangeError(f"{name}={value} outside {lo}..{hi}")


def _check_frange(name: str, value: float, lo: float, hi: float) -> None:
    if not lo <= value <= hi:
        raise FieldRangeError(f"{name}={value} outside [{lo}, {hi}]")


# --- CRC-16/CCITT-FALSE -----------------------------------------------------

def _make_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
        table.append(crc)
    return table


_CRC_TABLE = _make_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


# --- telemetry payload codec -------------------------------------------------

def encode_telemetry(rec: TelemetryRecord) -> bytes:
    """Pack the sensor block MSB-first into 18 bytes (6 zero pad bits)."""
    rec.validate()
    acc = 0
    for name, bits in _FIELD_BITS:
        v = getattr(rec, name)
        if name.startswith("accel"):
            v &= 0xFFFF  # two's complement
        acc = (acc << bits) | v
    acc <<= 8 * TELEMETRY_PAYLOAD_LEN - SENSOR_BLOCK_BITS  # zero pad
    return acc.to_bytes(TELEMETRY_PAYLOAD_LEN, "big")


def decode_telemetry(payload: bytes, node_id: int = 0, seq: int = 0) -> TelemetryRecord:
    """Inverse of encode_telemetry. node_id/seq live in the frame header,
    so callers supply them; pad bits must be zero."""
    if len(payload) != TELEMETRY_PAYLOAD_LEN:
        raise FramingError(
            f"telemetry payload is {len(payload)} bytes, expected {TELEMETRY_PAYLOAD_LEN}")
    acc = int.from_bytes(payload, "big")
    pad = 8 * TELEMETRY_PAYLOAD_LEN - SENSOR_BLOCK_BITS
    if acc & ((1 << pad) - 1):
        raise FramingError("nonzero pad bits in telemetry payload")
    acc >>= pad
    fields = {}
    for name, bits in reversed(_FIELD_BITS):
        v = acc & ((1 << bits) - 1)
        acc >>= bits
        if name.startswith("accel") and v >= 1 << 15:
            v -= 1 << 16
        fields[name] = v
    return TelemetryRecord(node_id=node_id, seq=seq, **fields)


def encode_telemetry_ext(rec: TelemetryRecord) -> bytes:
    """Extended block with the 10-bit wind field appended (19 bytes, 4 pad bits)."""
    if rec.wind_q is None:
        raise FieldRangeError("wind_q required for extended telemetry")
    rec.validate()
    acc = 0
    for name, bits in _FIELD_BITS:
        v = getattr(rec, name)
        if name.startswith("accel"):
            v &= 0xFFFF
        acc = (acc << bits) | v
    acc = (acc << WIND_BITS) | rec.wind_q
    acc <<= 8 * TELEMETRY_EXT_PAYLOAD_LEN - SENSOR_BLOCK_BITS - WIND_BITS
    return acc.to_bytes(TELEMETRY_EXT_PAYLOAD_LEN, "big")


def decode_telemetry_ext(payload: bytes, node_id: int = 0, seq: int = 0) -> TelemetryRecord:
    if len(payload) != TELEMETRY_EXT_PAYLOAD_LEN:
        raise FramingError(
            f"extended telemetry payload is {len(payload)} bytes, "
            f"expected {TELEMETRY_EXT_PAYLOAD_LEN}")
    acc = int.from_bytes(payload, "big")
    pad = 8 * TELEMETRY_EXT_PAYLOAD_LEN - SENSOR_BLOCK_BITS - WIND_BITS
    if acc & ((1 << pad) - 1):
        raise FramingError("nonzero pad bits in extended telemetry payload")
    acc >>= pad
    wind_q = acc & ((1 << WIND_BITS) - 1)
    acc >>= WIND_BITS
    fields = {}
    for name, bits in reversed(_FIELD_BITS):
        v = acc & ((1 << bits) - 1)
        acc >>= bits
        if name.startswith("accel") and v >= 1 << 15:
            v -= 1 << 16
        fields[name] = v
    return TelemetryRecord(node_id=node_id, seq=seq, wind_q=wind_q, **fields)


# --- framing ------------------------------------------------------------------

def frame(frame_type: int, node_id: int, seq: int, payload: bytes) -> bytes:
    _check_range("frame_type", frame_type, 0, 0xFF)
    _check_range("node_id", node_id, 0, 0xFFFF)
    _check_range("seq", seq, 0, 0xFFFF)
    if len(payload) > MAX_PAYLOAD:
        raise FieldRangeError(f"payload_len={len(payload)} exceeds {MAX_PAYLOAD}")
    head = (MAGIC + bytes([VERSION, frame_type])
            + node_id.to_bytes(2, "big") + seq.to_bytes(2, "big")
            + len(payload).to_bytes(2, "big") + payload)
    return head + crc16(head).to_bytes(2, "big")


def unframe(data: bytes) -> WireFrame:
    """Parse one complete frame; the buffer must contain exactly one frame."""
    if len(data) < HEADER_LEN:
        if len(data) >= 2 and data[:2] != MAGIC:
            raise NotAFrameError("bad magic")
        raise IncompleteFrameError(f"{len(data)} bytes is shorter than a frame header")
    if data[:2] != MAGIC:
        raise NotAFrameError("bad magic")
    if data[2] != VERSION:
        raise NotAFrameError(f"unsupported version 0x{data[2]:02x}")
    payload_len = int.from_bytes(data[8:10], "big")
    total = HEADER_LEN + payload_len + CRC_LEN
    if len(data) < total:
        raise IncompleteFrameError(f"frame declares {total} bytes, buffer has {len(data)}")
    if len(data) > total:
        raise CorruptFrameError(f"{len(data) - total} trailing bytes after frame")
    stated = int.from_bytes(data[total - CRC_LEN:total], "big")
    if crc16(data[:total - CRC_LEN]) != stated:
        raise CorruptFrameError("crc mismatch")
    return WireFrame(
        frame_type=data[3],
        node_id=int.from_bytes(data[4:6], "big"),
        seq=int.from_bytes(data[6:8], "big"),
        payload=bytes(data[HEADER_LEN:HEADER_LEN + payload_len]),
    )


# --- image chunking -------------------------------------------------------------

def chunk_image(img: MonoImage, image_id: int,
                chunk_bytes: int = CHUNK_PIXEL_BYTES) -> tuple[ImageManifest, list[ImageChunk]]:
    _check_range("image_id", image_id, 0, 0xFF)
    if not 1 <= chunk_bytes <= CHUNK_PIXEL_BYTES:
        raise FieldRangeError(f"chunk_bytes={chunk_bytes} outside 1..{CHUNK_PIXEL_BYTES}")
    data = img.tobytes()
    total = math.ceil(len(data) / chunk_bytes)
    manifest = ImageManifest(image_id=image_id, width=img.width,
                             height=img.height, total_chunks=total)
    chunks = [
        ImageChunk(image_id=image_id, chunk_index=i, total_chunks=total,
                   pixel_bytes=data[i * chunk_bytes:(i + 1) * chunk_bytes])
        for i in range(total)
    ]
    return manifest, chunks


def reassemble(manifest: ImageManifest, chunks: list[ImageChunk]) -> MonoImage | Incomplete:
    """Rebuild the image from any ordering/duplication of its chunk set."""
    parts: dict[int, bytes] = {}
    for c in chunks:
        if c.image_id != manifest.image_id:
            raise ProtocolError(
                f"chunk image_id {c.image_id} does not match manifest {manifest.image_id}")
        if c.total_chunks != manifest.total_chunks:
            raise ProtocolError(
                f"chunk declares total_chunks={c.total_chunks}, "
                f"manifest says {manifest.total_chunks}")
        if not 0 <= c.chunk_index < manifest.total_chunks:
            raise ProtocolError(f"chunk_index {c.chunk_index} out of range")
        prev = parts.get(c.chunk_index)
        if prev is not None and prev != c.pixel_bytes:
            raise ProtocolError(f"conflicting payloads for chunk {c.chunk_index}")
        parts[c.chunk_index] = c.pixel_bytes
    missing = sorted(set(range(manifest.total_chunks)) - set(parts))
    if missing:
        return Incomplete(missing_indices=missing)
    data = b"".join(parts[i] for i in range(manifest.total_chunks))
    if len(data) != manifest.width * manifest.height:
        raise ProtocolError(
            f"reassembled {len(data)} bytes, manifest expects "
            f"{manifest.width * manifest.height}")
    return MonoImage.frombytes(data, manifest.width, manifest.height)


def encode_manifest(m: ImageManifest) -> bytes:
    _check_range("image_id", m.image_id, 0, 0xFF)
    _check_range("width", m.width, 1, 0xFFFF)
    _check_range("height", m.height, 1, 0xFFFF)
    _check_range("total_chunks", m.total_chunks, 1, 0xFFFF)
    return (bytes([m.image_id]) + m.width.to_bytes(2, "big")
            + m.height.to_bytes(2, "big") + m.total_chunks.to_bytes(2, "big"))


def decode_manifest(payload: bytes) -> ImageManifest:
    if len(payload) != 7:
        raise FramingError(f"manifest payload is {len(payload)} bytes, expected 7")
    return ImageManifest(
        image_id=payload[0],
        width=int.from_bytes(payload[1:3], "big"),
        height=int.from_bytes(payload[3:5], "big"),
        total_chunks=int.from_bytes(payload[5:7], "big"),
    )


def encode_chunk(c: ImageChunk) -> bytes:
    _check_range("image_id", c.image_id, 0, 0xFF)
    _check_range("chunk_index", c.chunk_index, 0, 0xFFFF)
    _check_range("total_chunks", c.total_chunks, 1, 0xFFFF)
    if c.chunk_index >= c.total_chunks:
        raise FieldRangeError(
            f"chunk_index={c.chunk_index} not below total_chunks={c.total_chunks}")
    if len(c.pixel_bytes) > CHUNK_PIXEL_BYTES:
        raise FieldRangeError(f"chunk carries {len(c.pixel_bytes)} pixel bytes, max 1024")
    return (bytes([c.image_id]) + c.chunk_index.to_bytes(2, "big")
            + c.total_chunks.to_bytes(2, "big") + c.pixel_bytes)


def decode_chunk(payload: bytes) -> ImageChunk:
    if len(payload) < 5:
        raise FramingError(f"chunk payload is {len(payload)} bytes, expected >= 5")
    c = ImageChunk(
        image_id=payload[0],
        chunk_index=int.from_bytes(payload[1:3], "big"),
        total_chunks=int.from_bytes(payload[3:5], "big"),
        pixel_bytes=bytes(payload[5:]),
    )
    if c.chunk_index >= c.total_chunks:
        raise FramingError(
            f"chunk_index={c.chunk_index} not below total_chunks={c.total_chunks}")
    return c


# --- physical unit conversions ----------------------------------------------------

def to_physical(rec: TelemetryRecord) -> PhysicalReading:
    """Dequantize a wire record into engineering units."""
    rec.validate()
    ax = rec.accel_x * ACCEL_LSB
    ay = rec.accel_y * ACCEL_LSB
    az = rec.accel_z * ACCEL_LSB
    return PhysicalReading(
        lux=float(min(rec.lux_raw, 65535)),
        temp_c=rec.temp_q / 100.0 + TEMP_OFFSET_C,
        humidity_pct=rec.hum_q / 100.0,
        pressure_hpa=rec.press_q / 100.0 + PRESS_OFFSET_HPA,
        audio_rms=rec.audio_q / AUDIO_FULL_SCALE,
        accel_mps2=(ax, ay, az),
        wind_mps=None if rec.wind_q is None else rec.wind_q / 10.0,
    )


def from_physical(p: PhysicalReading, node_id: int = 0, seq: int = 0) -> TelemetryRecord:
    """Quantize engineering units onto the wire scales (0.01-unit fixed point
    for environment fields; raw lux; 14-bit audio; +/-2 g accel)."""
    p.validate()
    accel_raw = tuple(
        max(-32768, min(32767, round(v / ACCEL_LSB))) for v in p.accel_mps2)
    return TelemetryRecord(
        node_id=node_id,
        seq=seq,
        lux_raw=max(0, min(65535, round(p.lux))),
        temp_q=round((p.temp_c - TEMP_OFFSET_C) * 100),
        hum_q=round(p.humidity_pct * 100),
        press_q=round((p.pressure_hpa - PRESS_OFFSET_HPA) * 100),
        audio_q=max(0, min(AUDIO_FULL_SCALE, round(p.audio_rms * AUDIO_FULL_SCALE))),
        accel_x=accel_raw[0],
        accel_y=accel_raw[1],
        accel_z=accel_raw[2],
        wind_q=None if p.wind_mps is None else max(0, min(1023, round(p.wind_mps * 10))),
    )


# --- convenience: full telemetry frames ------------------------------------------

def telemetry_frame(rec: TelemetryRecord) -> bytes:
    """Wrap a record in a wire frame; extended frame type when wind is present."""
    if rec.wind_q is None:
        return frame(FRAME_TELEMETRY, rec.node_id, rec.seq, encode_telemetry(rec))
    return frame(FRAME_TELEMETRY_EXT, rec.node_id, rec.seq, encode_telemetry_ext(rec))


def parse_telemetry_frame(wf: WireFrame) -> TelemetryRecord:
    if wf.frame_type == FRAME_TELEMETRY:
        return decode_telemetry(wf.payload, node_id=wf.node_id, seq=wf.seq)
    if wf.frame_type == FRAME_TELEMETRY_EXT:
        return decode_telemetry_ext(wf.payload, node_id=wf.node_id, seq=wf.seq)
    raise FramingError(f"frame type 0x{wf.frame_type:02x} is not telemetry")
