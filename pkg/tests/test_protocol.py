"""Wire format: packing, CRC, framing, chunking, physical conversions."""
import math
import random

import pytest

from edgegen import protocol as P
from edgegen.errors import (
    CorruptFrameError,
    FieldRangeError,
    FramingError,
    IncompleteFrameError,
    NotAFrameError,
    ProtocolError,
)
from edgegen.images import MonoImage
import numpy as np

from reference_vision import ref_crc16


def random_record(rng: random.Random, wind: bool = False) -> P.TelemetryRecord:
    return P.TelemetryRecord(
        node_id=rng.randrange(0x10000),
        seq=rng.randrange(0x10000),
        lux_raw=rng.randrange(0x10000),
        temp_q=rng.randrange(0x100000),
        hum_q=rng.randrange(0x100000),
        press_q=rng.randrange(0x100000),
        audio_q=rng.randrange(0x4000),
        accel_x=rng.randrange(-32768, 32768),
        accel_y=rng.randrange(-32768, 32768),
        accel_z=rng.randrange(-32768, 32768),
        wind_q=rng.randrange(0x400) if wind else None,
    )


# --- sensor block ---

def test_sensor_block_is_exactly_138_bits():
    assert P.SENSOR_BLOCK_BITS == 138
    assert P.SENSOR_BLOCK_BITS == 16 + 3 * 20 + 14 + 3 * 16
    assert P.TELEMETRY_PAYLOAD_LEN == 18


def test_encode_all_zero_record():
    assert P.encode_telemetry(P.TelemetryRecord()) == bytes(18)


def test_encode_max_lux_leads_msb_first():
    payload = P.encode_telemetry(P.TelemetryRecord(lux_raw=0xFFFF))
    assert payload[:2] == b"\xff\xff"
    assert payload[2:] == bytes(16)


def test_decode_all_zero():
    assert P.decode_telemetry(bytes(18)) == P.TelemetryRecord()


def test_roundtrip_10000_random_records():
    rng = random.Random(1234)
    for _ in range(10_000):
        rec = random_record(rng)
        back = P.decode_telemetry(P.encode_telemetry(rec),
                                  node_id=rec.node_id, seq=rec.seq)
        assert back == rec


def test_roundtrip_extended_with_wind():
    rng = random.Random(99)
    for _ in range(2_000):
        rec = random_record(rng, wind=True)
        payload = P.encode_telemetry_ext(rec)
        assert len(payload) == 19
        back = P.decode_telemetry_ext(payload, node_id=rec.node_id, seq=rec.seq)
        assert back == rec


def test_decode_rejects_wrong_length():
    with pytest.raises(FramingError):
        P.decode_telemetry(bytes(17))
    with pytest.raises(FramingError):
        P.decode_telemetry(bytes(19))


def test_decode_rejects_nonzero_pad_bits():
    payload = bytearray(18)
    payload[-1] = 0x01
    with pytest.raises(FramingError):
        P.decode_telemetry(bytes(payload))


def test_encode_rejects_out_of_range_and_names_field():
    with pytest.raises(FieldRangeError, match="audio_q"):
        P.encode_telemetry(P.TelemetryRecord(audio_q=0x4000))
    with pytest.raises(FieldRangeError, match="temp_q"):
        P.encode_telemetry(P.TelemetryRecord(temp_q=-1))
    with pytest.raises(FieldRangeError, match="accel_x"):
        P.encode_telemetry(P.TelemetryRecord(accel_x=32768))


# --- crc ---

def test_crc16_check_value():
    assert P.crc16(b"123456789") == 0x29B1
    assert ref_crc16(b"123456789") == 0x29B1


def test_crc16_empty_is_init():
    assert P.crc16(b"") == 0xFFFF


def test_crc16_matches_bitwise_reference():
    rng = random.Random(7)
    for _ in range(200):
        data = rng.randbytes(rng.randrange(0, 64))
        assert P.crc16(data) == ref_crc16(data)


def test_crc16_detects_every_single_bit_flip():
    rng = random.Random(11)
    for size in (1, 7, 64, 2048):
        data = bytearray(rng.randbytes(size))
        base = P.crc16(bytes(data))
        for _ in range(min(8 * size, 256)):
            bit = rng.randrange(8 * size)
            data[bit // 8] ^= 1 << (bit % 8)
            assert P.crc16(bytes(data)) != base
            data[bit // 8] ^= 1 << (bit % 8)


# --- framing ---

def test_frame_header_layout():
    payload = P.encode_telemetry(P.TelemetryRecord())
    framed = P.frame(P.FRAME_TELEMETRY, 7, 0, payload)
    assert len(framed) == 30
    assert framed[:4] == b"\x50\x47\x01\x01"
    assert framed[4:6] == (7).to_bytes(2, "big")


def test_unframe_roundtrip_random():
    rng = random.Random(21)
    for _ in range(100):
        ft = rng.choice([1, 2, 3, 4])
        node, seq = rng.randrange(0x10000), rng.randrange(0x10000)
        payload = rng.randbytes(rng.randrange(0, 1400))
        wf = P.unframe(P.frame(ft, node, seq, payload))
        assert (wf.frame_type, wf.node_id, wf.seq, wf.payload) == (ft, node, seq, payload)


def test_frame_rejects_oversized_payload():
    with pytest.raises(FieldRangeError):
        P.frame(1, 0, 0, bytes(1401))


def test_unframe_bad_magic():
    framed = bytearray(P.frame(1, 1, 1, b"abc"))
    framed[0] ^= 0xFF
    with pytest.raises(NotAFrameError):
        P.unframe(bytes(framed))


def test_unframe_crc_mismatch():
    framed = bytearray(P.frame(1, 1, 1, b"abc"))
    framed[-1] ^= 0x01
    with pytest.raises(CorruptFrameError):
        P.unframe(bytes(framed))


def test_unframe_truncation():
    framed = P.frame(1, 1, 1, b"abcdef")
    with pytest.raises(IncompleteFrameError):
        P.unframe(framed[:-3])


def test_every_single_bit_flip_is_detected():
    rng = random.Random(31)
    for _ in range(50):
        payload = rng.randbytes(rng.randrange(0, 64))
        framed = P.frame(rng.choice([1, 2, 3, 4]), rng.randrange(0x10000),
                         rng.randrange(0x10000), payload)
        for bit in range(8 * len(framed)):
            corrupted = bytearray(framed)
            corrupted[bit // 8] ^= 1 << (bit % 8)
            with pytest.raises(FramingError):
                P.unframe(bytes(corrupted))


# --- image chunking ---

def fixture_image(rng: random.Random | None = None, w: int = 324, h: int = 244) -> MonoImage:
    rng = rng or random.Random(5)
    data = rng.randbytes(w * h)
    return MonoImage.frombytes(data, w, h)


def test_chunk_count_for_full_frame():
    img = fixture_image()
    manifest, chunks = P.chunk_image(img, image_id=3)
    assert manifest.total_chunks == 78 == math.ceil(324 * 244 / 1024)
    assert all(len(c.pixel_bytes) <= 1024 for c in chunks)
    assert sum(len(c.pixel_bytes) for c in chunks) == 324 * 244


def test_reassemble_shuffled():
    rng = random.Random(17)
    img = fixture_image(rng)
    manifest, chunks = P.chunk_image(img, image_id=9)
    rng.shuffle(chunks)
    assert P.reassemble(manifest, chunks) == img


def test_reassemble_reports_missing():
    img = fixture_image()
    manifest, chunks = P.chunk_image(img, image_id=1)
    dropped = [c for c in chunks if c.chunk_index != 5]
    result = P.reassemble(manifest, dropped)
    assert isinstance(result, P.Incomplete)
    assert result.missing_indices == [5]


def test_reassemble_tolerates_identical_duplicates():
    img = fixture_image()
    manifest, chunks = P.chunk_image(img, image_id=1)
    assert P.reassemble(manifest, chunks + chunks[:10]) == img


def test_reassemble_rejects_conflicting_total():
    img = fixture_image()
    manifest, chunks = P.chunk_image(img, image_id=1)
    bad = P.ImageChunk(image_id=1, chunk_index=0,
                       total_chunks=manifest.total_chunks + 1,
                       pixel_bytes=chunks[0].pixel_bytes)
    with pytest.raises(ProtocolError):
        P.reassemble(manifest, chunks + [bad])


def test_reassemble_rejects_conflicting_duplicate_bytes():
    img = fixture_image()
    manifest, chunks = P.chunk_image(img, image_id=1)
    bad = P.ImageChunk(image_id=1, chunk_index=2,
                       total_chunks=manifest.total_chunks,
                       pixel_bytes=bytes(len(chunks[2].pixel_bytes)))
    with pytest.raises(ProtocolError):
        P.reassemble(manifest, chunks + [bad])


def test_chunk_wire_roundtrip():
    img = fixture_image()
    manifest, chunks = P.chunk_image(img, image_id=4)
    assert P.decode_manifest(P.encode_manifest(manifest)) == manifest
    for c in chunks[:5]:
        assert P.decode_chunk(P.encode_chunk(c)) == c


# --- physical conversions ---

def test_temperature_quantization_matches_reported_value():
    reading = P.to_physical(P.TelemetryRecord(temp_q=6952))
    assert reading.temp_c == pytest.approx(29.52, abs=1e-9)


def test_zero_record_is_scale_origin():
    reading = P.to_physical(P.TelemetryRecord())
    assert reading.lux == 0
    assert reading.temp_c == pytest.approx(-40.0)
    assert reading.humidity_pct == 0.0
    assert reading.pressure_hpa == pytest.approx(300.0)
    assert reading.audio_rms == 0.0


def test_accel_full_scale():
    reading = P.to_physical(P.TelemetryRecord(accel_x=32767))
    assert abs(reading.accel_mps2[0] - 19.6127) < 1e-3


def test_quantization_error_bounds():
    rng = random.Random(41)
    for _ in range(2_000):
        original = P.PhysicalReading(
            lux=rng.uniform(0, 65535),
            temp_c=rng.uniform(-40, 85),
            humidity_pct=rng.uniform(0, 100),
            pressure_hpa=rng.uniform(300, 1100),
            audio_rms=rng.uniform(0, 1),
            accel_mps2=(rng.uniform(-19, 19), rng.uniform(-19, 19), rng.uniform(-19, 19)),
            wind_mps=rng.uniform(0, 102.3),
        )
        back = P.to_physical(P.from_physical(original))
        assert abs(back.temp_c - original.temp_c) <= 0.005 + 1e-9
        assert abs(back.humidity_pct - original.humidity_pct) <= 0.005 + 1e-9
        assert abs(back.pressure_hpa - original.pressure_hpa) <= 0.005 + 1e-9
        assert abs(back.lux - round(original.lux)) < 1e-9
        assert abs(back.audio_rms - original.audio_rms) <= 0.5 / 16383 + 1e-9
        for a, b in zip(back.accel_mps2, original.accel_mps2):
            assert abs(a - b) <= P.ACCEL_LSB / 2 + 1e-9
        assert abs(back.wind_mps - original.wind_mps) <= 0.05 + 1e-9


def test_from_physical_rejects_out_of_range():
    with pytest.raises(FieldRangeError):
        P.from_physical(P.PhysicalReading(humidity_pct=130.0))
    with pytest.raises(FieldRangeError):
        P.from_physical(P.PhysicalReading(temp_c=-41.0))


def test_figure_values_are_exactly_representable():
    cases = [
        (8407, 29.52, 63.11, 1006.87),
        (2372, 29.82, 66.52, 1002.98),
        (65535, 34.51, 63.14, 1006.42),
        (0, 26.85, 79.26, 1004.63),
    ]
    for lux, temp, hum, press in cases:
        rec = P.from_physical(P.PhysicalReading(
            lux=lux, temp_c=temp, humidity_pct=hum, pressure_hpa=press))
        back = P.to_physical(rec)
        assert back.lux == lux
        assert back.temp_c == pytest.approx(temp, abs=1e-9)
        assert back.humidity_pct == pytest.approx(hum, abs=1e-9)
        assert back.pressure_hpa == pytest.approx(press, abs=1e-9)


def test_telemetry_frame_dispatch():
    rec = P.TelemetryRecord(node_id=6, seq=2, lux_raw=100)
    wf = P.unframe(P.telemetry_frame(rec))
    assert wf.frame_type == P.FRAME_TELEMETRY
    assert P.parse_telemetry_frame(wf) == rec

    rec_w = P.TelemetryRecord(node_id=6, seq=3, lux_raw=100, wind_q=22)
    wf = P.unframe(P.telemetry_frame(rec_w))
    assert wf.frame_type == P.FRAME_TELEMETRY_EXT
    assert P.parse_telemetry_frame(wf) == rec_w


def test_mono_image_equality_is_bytewise():
    a = MonoImage(np.zeros((4, 6), dtype=np.uint8))
    b = MonoImage(np.zeros((4, 6), dtype=np.uint8))
    assert a == b and a.tobytes() == b.tobytes()
