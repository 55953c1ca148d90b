"""Scenario loading, deterministic replay, capture files, lossy shim."""
import os
import socket

import pytest

from edgegen import protocol as P
from edgegen.errors import ScenarioError
from edgegen.simnode import (
    LossyLink,
    NodeConfig,
    Scenario,
    ScenarioEvent,
    iter_frames,
    load_scenario,
    read_capture,
    reading_at,
    run,
)
from edgegen.protocol import PhysicalReading

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def scn(path: str) -> str:
    return os.path.join(FIXTURES, path)


# --- loading ---

def test_load_e1_scenario_matches_caption_values():
    scenario = load_scenario(scn("e1.scn"))
    assert scenario.node_id == 1
    assert len(scenario.events) == 1
    r = scenario.events[0].reading
    assert r.lux == 8407
    assert r.temp_c == 29.52
    assert r.humidity_pct == 63.11
    assert r.pressure_hpa == 1006.87
    assert r.wind_mps == 0.0
    assert len(scenario.images) == 1


def test_load_scenario_with_no_events_is_valid(tmp_path):
    p = tmp_path / "empty.scn"
    p.write_text("node_id: 9\nevents: []\n")
    scenario = load_scenario(str(p))
    assert scenario.events == ()
    assert list(iter_frames(scenario)) == []


def test_load_scenario_rejects_range_violation(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text(
        "node_id: 1\nevents:\n  - t: 0.0\n    humidity_pct: 130\n")
    with pytest.raises(ScenarioError, match="humidity"):
        load_scenario(str(p))


def test_load_scenario_rejects_non_increasing_times(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text(
        "node_id: 1\nevents:\n  - t: 1.0\n    lux: 5\n  - t: 1.0\n    lux: 6\n")
    with pytest.raises(ScenarioError, match="strictly increasing"):
        load_scenario(str(p))


def test_load_scenario_rejects_missing_image(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text(
        "node_id: 1\nevents: []\nimages:\n  - t: 0.0\n    path: nope.pgm\n")
    with pytest.raises(ScenarioError, match="does not exist"):
        load_scenario(str(p))


def test_load_scenario_rejects_wrong_image_size(tmp_path):
    from edgegen.images import MonoImage, save_pgm
    import numpy as np

    img_path = tmp_path / "small.pgm"
    save_pgm(MonoImage(np.zeros((10, 10), dtype=np.uint8)), str(img_path))
    p = tmp_path / "bad.scn"
    p.write_text(
        "node_id: 1\nevents: []\nimages:\n  - t: 0.0\n    path: small.pgm\n")
    with pytest.raises(ScenarioError, match="expected 324x244"):
        load_scenario(str(p))


def test_load_scenario_parse_error_has_line_context(tmp_path):
    p = tmp_path / "broken.scn"
    p.write_text("node_id: 1\nevents:\n  - t: 0.0\n   lux: [unclosed\n")
    with pytest.raises(ScenarioError, match="line"):
        load_scenario(str(p))


def test_load_scenario_acoustic_sources():
    scenario = load_scenario(scn("acoustic.scn"))
    assert len(scenario.acoustic) == 3
    assert scenario.acoustic[2] == {"x": 260, "y": 140, "intensity": 0.9}


# --- emission schedule ---

def test_e1_emits_one_telemetry_one_manifest_78_chunks():
    frames = list(iter_frames(load_scenario(scn("e1.scn"))))
    assert len(frames) == 1 + 1 + 78
    kinds = [P.unframe(f).frame_type for _, f in frames]
    assert kinds[0] == P.FRAME_TELEMETRY_EXT     # wind present in e1
    assert kinds[1] == P.FRAME_IMAGE_MANIFEST
    assert kinds[2:] == [P.FRAME_IMAGE_CHUNK] * 78


def test_all_emitted_frames_are_protocol_valid_with_increasing_seq():
    frames = list(iter_frames(load_scenario(scn("e1.scn"))))
    seqs = [P.unframe(f).seq for _, f in frames]
    assert seqs == list(range(len(frames)))


def test_constant_reading_duration_10_gives_10_identical_payloads():
    reading = PhysicalReading(lux=100, temp_c=20, humidity_pct=50,
                              pressure_hpa=1000)
    scenario = Scenario(node_id=2, events=(ScenarioEvent(0.0, reading),),
                        telemetry_rate_hz=1.0, duration_s=10.0)
    frames = list(iter_frames(scenario))
    assert len(frames) == 10
    payloads = {P.unframe(f).payload for _, f in frames}
    assert len(payloads) == 1
    assert [P.unframe(f).seq for _, f in frames] == list(range(10))


def test_deterministic_byte_identical_runs():
    scenario = load_scenario(scn("sequence.scn"))
    a = [f for _, f in iter_frames(scenario)]
    b = [f for _, f in iter_frames(scenario)]
    assert a == b


def test_step_hold_interpolation():
    a = PhysicalReading(lux=10)
    b = PhysicalReading(lux=20)
    scenario = Scenario(node_id=1,
                        events=(ScenarioEvent(0.0, a), ScenarioEvent(2.5, b)),
                        telemetry_rate_hz=1.0, duration_s=5.0)
    assert reading_at(scenario, -1.0).lux == 10   # before first event: first value
    assert reading_at(scenario, 2.4).lux == 10
    assert reading_at(scenario, 2.5).lux == 20
    frames = list(iter_frames(scenario))
    assert len(frames) == 5
    luxes = [P.parse_telemetry_frame(P.unframe(f)).lux_raw for _, f in frames]
    assert luxes == [10, 10, 10, 20, 20]


def test_sequence_scenario_emits_five_states():
    frames = list(iter_frames(load_scenario(scn("sequence.scn"))))
    telemetry = [P.parse_telemetry_frame(P.unframe(f))
                 for _, f in frames
                 if P.unframe(f).frame_type in (P.FRAME_TELEMETRY, P.FRAME_TELEMETRY_EXT)]
    assert [t.lux_raw for t in telemetry] == [65535, 16556, 3089, 536, 0]


# --- capture + replay ---

def test_capture_roundtrip(tmp_path):
    scenario = load_scenario(scn("e1.scn"))
    capture = str(tmp_path / "run.cap")
    sent = run(scenario, NodeConfig(time_scale=0.0, capture_path=capture))
    assert sent == 80
    frames = read_capture(capture)
    assert frames == [f for _, f in iter_frames(scenario)]


def test_read_capture_truncated(tmp_path):
    scenario = load_scenario(scn("e1.scn"))
    capture = str(tmp_path / "run.cap")
    run(scenario, NodeConfig(time_scale=0.0, capture_path=capture))
    data = open(capture, "rb").read()
    bad = str(tmp_path / "trunc.cap")
    open(bad, "wb").write(data[:-7])
    with pytest.raises(ScenarioError, match="truncated"):
        read_capture(bad)


def test_empty_capture_is_empty_list(tmp_path):
    p = tmp_path / "empty.cap"
    p.write_bytes(b"")
    assert read_capture(str(p)) == []


# --- transports ---

def test_udp_run_delivers_frames():
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    sink.settimeout(5.0)
    port = sink.getsockname()[1]
    scenario = Scenario(node_id=3,
                        events=(ScenarioEvent(0.0, PhysicalReading(lux=1)),),
                        telemetry_rate_hz=1.0, duration_s=3.0)
    sent = run(scenario, NodeConfig(gateway_address=f"127.0.0.1:{port}",
                                    transport="udp", time_scale=0.0))
    assert sent == 3
    got = [sink.recvfrom(4096)[0] for _ in range(3)]
    sink.close()
    assert got == [f for _, f in iter_frames(scenario)]


def test_lossy_link_is_deterministic():
    sent_a, sent_b = [], []
    link_a = LossyLink(sent_a.append, drop_probability=0.3, seed=42)
    link_b = LossyLink(sent_b.append, drop_probability=0.3, seed=42)
    frames = [bytes([i]) for i in range(200)]
    for f in frames:
        link_a.send(f)
        link_b.send(f)
    assert sent_a == sent_b
    assert 0 < len(sent_a) < 200


def test_lossy_link_reorders_within_window():
    out = []
    link = LossyLink(out.append, reorder_window=8, seed=7)
    frames = [bytes([i]) for i in range(64)]
    for f in frames:
        link.send(f)
    link.flush()
    assert sorted(out) == frames
    assert out != frames


def test_node_config_validation():
    with pytest.raises(ScenarioError):
        NodeConfig(time_scale=-1.0)
    with pytest.raises(ScenarioError):
        NodeConfig(transport="carrier-pigeon")
