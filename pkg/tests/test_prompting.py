"""Sensor summaries, descriptor categories, template and LLM prompt paths."""
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from edgegen.errors import BackendError, PreconditionError
from edgegen.prompting import (
    DescriptorSet,
    LlmClientConfig,
    STYLE_PRESETS,
    SensorSummary,
    build_prompt,
    describe,
    light_category_index,
    llm_prompt,
    llm_request_body,
    sensor_text,
    summarize,
)
from edgegen.protocol import PhysicalReading
from edgegen.vision import MotionLevel

# The five exemplar sensor rows used throughout the descriptor tests.
ROWS = {
    "a": dict(lux=65535, temp_c=34.51, humidity_pct=63.14, pressure_hpa=1006.42, wind=0.4),
    "b": dict(lux=3089, temp_c=27.42, humidity_pct=82.03, pressure_hpa=1004.32, wind=2.6),
    "c": dict(lux=16556, temp_c=30.69, humidity_pct=67.07, pressure_hpa=1003.70, wind=0.0),
    "d": dict(lux=536, temp_c=27.79, humidity_pct=73.83, pressure_hpa=1003.53, wind=1.5),
    "e": dict(lux=0, temp_c=26.85, humidity_pct=79.26, pressure_hpa=1004.63, wind=0.0),
}


def row_summary(name: str, motion: MotionLevel = MotionLevel.NONE) -> SensorSummary:
    row = ROWS[name]
    mean = PhysicalReading(lux=row["lux"], temp_c=row["temp_c"],
                           humidity_pct=row["humidity_pct"],
                           pressure_hpa=row["pressure_hpa"], wind_mps=row["wind"])
    return SensorSummary(mean=mean, window=(0.0, 1.0), motion_level=motion,
                         wind_mps=row["wind"])


def reading(**kw) -> PhysicalReading:
    return PhysicalReading(**kw)


# --- summarize ---

def test_summarize_single_sample_is_identity():
    r = reading(lux=100, temp_c=21.5, humidity_pct=40, pressure_hpa=1000,
                audio_rms=0.25, accel_mps2=(0.3, 0.0, 0.4))
    s = summarize([(5.0, r)])
    assert s.mean.lux == 100
    assert s.mean.temp_c == 21.5
    assert s.mean.audio_rms == 0.25
    assert s.mean.accel_mag == pytest.approx(0.5)
    assert s.window == (5.0, 5.0)


def test_summarize_arithmetic_mean():
    a = reading(temp_c=20.0)
    b = reading(temp_c=30.0)
    s = summarize([(0.0, a), (1.0, b)])
    assert s.mean.temp_c == pytest.approx(25.0)


def test_summarize_motion_from_mean_magnitude():
    a = reading(accel_mps2=(1.0, 0.0, 0.0))
    b = reading(accel_mps2=(1.4, 0.0, 0.0))
    s = summarize([(0.0, a), (1.0, b)])
    assert s.mean.accel_mag == pytest.approx(1.2)
    assert s.motion_level is MotionLevel.SLIGHT


def test_summarize_empty_window_rejected():
    with pytest.raises(PreconditionError):
        summarize([])


def test_summarize_wind_mean_of_present_values():
    a = reading(wind_mps=1.0)
    b = reading(wind_mps=None)
    c = reading(wind_mps=3.0)
    s = summarize([(0.0, a), (1.0, b), (2.0, c)])
    assert s.wind_mps == pytest.approx(2.0)
    assert summarize([(0.0, b)]).wind_mps is None


# --- describe ---

def test_describe_row_a_intensely_sunny_and_hot():
    d = describe(row_summary("a"))
    assert d.light == "intensely sunny"
    assert d.temperature == "hot"


def test_describe_row_e_complete_darkness():
    d = describe(row_summary("e"))
    assert d.light == "complete darkness"
    assert d.humidity == "humid"


def test_describe_row_d_dim_and_breezy():
    d = describe(row_summary("d"))
    assert d.light == "dim, heavily overcast"
    assert d.wind == "slightly breezy"


def test_describe_all_rows_light_categories():
    expected = {
        "a": "intensely sunny",
        "b": "overcast",
        "c": "sunny",
        "d": "dim",
        "e": "complete darkness",
    }
    for name, needle in expected.items():
        assert needle in describe(row_summary(name)).light


def test_describe_monotone_in_lux():
    prev = -1
    for i in range(1000):
        lux = i * 65535 / 999
        idx = light_category_index(lux)
        assert idx >= prev
        prev = idx
    assert light_category_index(0) == 0
    assert light_category_index(65535) == 4


def test_describe_wind_boundaries():
    def wind_phrase(w):
        s = SensorSummary(mean=reading(wind_mps=w), window=(0, 0),
                          motion_level=MotionLevel.NONE, wind_mps=w)
        return describe(s).wind

    assert wind_phrase(0.0) == "calm, no wind"
    assert wind_phrase(0.4) == "slightly breezy"
    assert wind_phrase(1.99) == "slightly breezy"
    assert wind_phrase(2.0) == "noticeable breeze"
    assert wind_phrase(None) == ""


def test_describe_motion_phrases():
    assert describe(row_summary("a", MotionLevel.NONE)).motion == ""
    assert describe(row_summary("a", MotionLevel.SLIGHT)).motion == "slight motion blur"
    assert describe(row_summary("a", MotionLevel.OBVIOUS)).motion == "obvious motion blur"


# --- style presets ---

def test_exactly_four_presets_with_fixed_control_modes():
    assert set(STYLE_PRESETS) == {"realistic", "artistic", "chinese_painting", "van_gogh"}
    assert STYLE_PRESETS["realistic"].control_mode == "segment"
    assert STYLE_PRESETS["artistic"].control_mode == "canny"
    assert STYLE_PRESETS["chinese_painting"].control_mode == "segment"
    assert STYLE_PRESETS["van_gogh"].control_mode == "lineart"


# --- build_prompt ---

def test_build_prompt_row_a_realistic():
    bundle = build_prompt(row_summary("a"), "realistic")
    assert "intensely sunny" in bundle.positive
    assert "hot" in bundle.positive
    assert bundle.negative
    assert bundle.provenance == "template"
    assert bundle.control_mode == "segment"


def test_build_prompt_deterministic():
    s = row_summary("b")
    assert build_prompt(s, "artistic", "add a river") == \
        build_prompt(s, "artistic", "add a river")


def test_build_prompt_motion_phrase_exactly_once():
    bundle = build_prompt(row_summary("c", MotionLevel.OBVIOUS), "realistic")
    assert bundle.positive.count("obvious motion blur") == 1


def test_build_prompt_includes_instruction():
    bundle = build_prompt(row_summary("c"), "van_gogh", "focus on the horizon")
    assert "focus on the horizon" in bundle.positive


def test_build_prompt_snapshots_for_all_rows():
    prefix = "ultra-high-resolution photograph of the scene"
    tail = "8k UHD, high dynamic range, highly detailed"
    expected = {
        "a": f"{prefix}, intensely sunny, hot, humid, slightly breezy, {tail}",
        "b": f"{prefix}, overcast, cloud-covered, warm, very humid, muggy, "
             f"noticeable breeze, {tail}",
        "c": f"{prefix}, bright, sunny, clear skies, hot, humid, calm, no wind, {tail}",
        "d": f"{prefix}, dim, heavily overcast, warm, humid, slightly breezy, {tail}",
        "e": f"{prefix}, complete darkness, warm, humid, calm, no wind, {tail}",
    }
    for name, positive in expected.items():
        assert build_prompt(row_summary(name), "realistic").positive == positive


def test_camera_tail_is_optional_and_deterministic():
    s = row_summary("a")
    plain = build_prompt(s, "realistic")
    tailed = build_prompt(s, "realistic", camera_tail=True)
    assert plain.positive != tailed.positive
    assert any(c in tailed.positive for c in ("Canon", "Leica", "Sony", "Nikon"))
    assert tailed == build_prompt(s, "realistic", camera_tail=True)


def test_every_bundle_has_nonempty_prompts():
    for style in STYLE_PRESETS:
        for name in ROWS:
            bundle = build_prompt(row_summary(name), style)
            assert bundle.positive and bundle.negative


# --- llm client ---

class _ScriptedHandler(BaseHTTPRequestHandler):
    reply: dict = {}
    captured: list = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        n = int(self.headers.get("Content-Length", "0"))
        type(self).captured.append(json.loads(self.rfile.read(n)))
        data = json.dumps(type(self).reply).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class scripted_llm:
    def __init__(self, reply: dict):
        self.reply = reply

    def __enter__(self):
        class Handler(_ScriptedHandler):
            reply = self.reply
            captured = []

        self.handler = Handler
        self.httpd = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def test_llm_prompt_uses_reply():
    with scripted_llm({"positive": "a canned scene", "negative": "bad things"}) as srv:
        bundle = llm_prompt(row_summary("a"), "realistic", "",
                            LlmClientConfig(url=srv.url))
    assert bundle.positive == "a canned scene"
    assert bundle.negative == "bad things"
    assert bundle.provenance == "llm"


def test_llm_prompt_falls_back_on_empty_positive():
    with scripted_llm({"positive": "", "negative": "x"}) as srv:
        bundle = llm_prompt(row_summary("a"), "realistic", "",
                            LlmClientConfig(url=srv.url, fallback=True))
    assert bundle.provenance == "template"
    assert "intensely sunny" in bundle.positive


def test_llm_prompt_without_fallback_errors():
    with scripted_llm({"positive": "", "negative": "x"}) as srv:
        with pytest.raises(BackendError):
            llm_prompt(row_summary("a"), "realistic", "",
                       LlmClientConfig(url=srv.url, fallback=False))


def test_llm_prompt_transport_failure():
    with pytest.raises(BackendError):
        llm_prompt(row_summary("a"), "realistic", "",
                   LlmClientConfig(url="http://127.0.0.1:9", timeout_s=0.5))


def test_llm_request_schema_has_all_sensor_fields_with_units():
    body = llm_request_body(row_summary("a"), "realistic", "make it vivid")
    sensor = body["sensor"]
    assert set(sensor) == {"lux", "temp_c", "humidity_pct", "pressure_hpa", "wind_mps"}
    text = body["sensor_text"]
    for unit in ("Lux", "Celsius", "%", "hPa", "m/s"):
        assert unit in text
    assert "65535" in text
    assert body["style"] == "realistic"
    assert body["user_instruction"] == "make it vivid"
    assert "image_caption" in body


def test_llm_request_body_is_what_the_wire_sees():
    with scripted_llm({"positive": "p", "negative": "n"}) as srv:
        llm_prompt(row_summary("d"), "artistic", "night mood",
                   LlmClientConfig(url=srv.url))
        sent = srv.handler.captured[0]
    assert sent["sensor"]["lux"] == 536
    assert "hPa" in sent["sensor_text"]
    assert sent["user_instruction"] == "night mood"


def test_sensor_text_includes_acceleration_when_moving():
    text = sensor_text(row_summary("a", MotionLevel.OBVIOUS))
    assert "m/s^2" in text


def test_descriptor_phrases_drop_empty_entries():
    d = DescriptorSet(light="l", temperature="t", humidity="h", wind="", motion="")
    assert d.phrases() == ["l", "t", "h"]
