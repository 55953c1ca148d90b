"""Bandwidth constants, power model, session statistics."""
import os

import pytest

from edgegen import accounting as A
from edgegen.errors import StorageError


# --- bandwidth ---

def test_paper_mode_constants_verbatim():
    r = A.bandwidth_report("paper")
    assert r.telemetry_bits_per_frame == 138
    assert r.image_pixels == 78_568
    assert r.image_bits == 628_544
    assert r.total_input_bits == 628_682
    assert r.output_bits == 16_912_896


def test_paper_mode_ratio_rounds_to_around_27():
    r = A.bandwidth_report("paper")
    assert r.ratio == pytest.approx(26.90, abs=0.01)
    assert 26.5 <= r.ratio <= 27.5


def test_actual_mode_uses_true_buffer_geometry():
    r = A.bandwidth_report("actual")
    assert r.image_pixels == 324 * 244 == 79_056
    assert r.image_bits == 632_448
    assert r.total_input_bits == 632_586
    assert r.output_bits == 16_912_896


def test_published_kb_rounding_is_bits_over_8():
    assert A.PUBLISHED_TOTAL_INPUT_BITS / 8 / 1000 == pytest.approx(
        A.PUBLISHED_INPUT_KBS, abs=0.001)


def test_bandwidth_mode_validation():
    with pytest.raises(ValueError):
        A.bandwidth_report("imagined")


def test_output_bits():
    assert A.output_bits(968, 728, 24) == 16_912_896
    assert A.output_bits(1, 1, 8) == 8
    assert A.output_bits(324, 244, 8) == 632_448
    with pytest.raises(ValueError):
        A.output_bits(0, 10, 8)


# --- power ---

def test_default_profile_upper_bound():
    assert A.power_estimate() == pytest.approx(7.372, abs=0.001)


def test_power_empty_is_zero():
    assert A.power_estimate([]) == 0.0


def test_power_duty_scaling():
    profile = [
        A.PowerComponent("mcu", 5.0),
        A.PowerComponent("imager", 2.0, duty_cycle=0.1),
        A.PowerComponent("env_sensor", 3.6e-3 * 3.3),
        A.PowerComponent("light_sensor", 0.36),
    ]
    assert A.power_estimate(profile) == pytest.approx(5.572, abs=0.001)


def test_power_linear_in_duty_and_additive():
    c = lambda d: [A.PowerComponent("x", 8.0, duty_cycle=d)]
    assert A.power_estimate(c(0.5)) == pytest.approx(A.power_estimate(c(1.0)) / 2)
    both = c(0.25) + [A.PowerComponent("y", 3.0)]
    assert A.power_estimate(both) == pytest.approx(
        A.power_estimate(c(0.25)) + A.power_estimate([A.PowerComponent("y", 3.0)]))


def test_power_component_validation():
    with pytest.raises(ValueError):
        A.PowerComponent("x", 1.0, duty_cycle=1.5)
    with pytest.raises(ValueError):
        A.PowerComponent("x", -1.0)


# --- session stats ---

def test_fresh_session_all_zero(tmp_path):
    from edgegen.gateway import SessionStore

    store = SessionStore(str(tmp_path), session="fresh")
    store.close()
    stats = A.session_stats(os.path.join(str(tmp_path), "fresh"))
    assert stats.to_dict() == {"frames": 0, "bytes_in": 0, "images": 0,
                               "generations": 0, "bytes_out": 0}


def test_session_stats_counts_after_replay(tmp_path):
    from edgegen.gateway import Gateway, SessionStore
    from edgegen.simnode import iter_frames, load_scenario

    fixtures = os.path.join(os.path.dirname(__file__), "..", "fixtures")
    scenario = load_scenario(os.path.join(fixtures, "e1.scn"))
    frames = [f for _, f in iter_frames(scenario)]
    gw = Gateway(SessionStore(str(tmp_path), session="s1"), workers=1)
    try:
        for f in frames:
            gw.ingest(f)
        job_id = gw.submit_generation(1, "artistic", seed=4)
        deadline = __import__("time").time() + 30
        while __import__("time").time() < deadline:
            if gw.job(job_id).state in ("done", "failed"):
                break
        assert gw.job(job_id).state == "done"
    finally:
        gw.close()
    stats = A.session_stats(os.path.join(str(tmp_path), "s1"))
    assert stats.frames == len(frames) == 80
    assert stats.bytes_in == sum(len(f) for f in frames)
    assert stats.images == 1
    assert stats.generations == 1
    png = os.path.join(str(tmp_path), "s1", "generations", f"{job_id}.png")
    assert stats.bytes_out == os.path.getsize(png) > 0


def test_session_stats_missing_dir():
    with pytest.raises(StorageError):
        A.session_stats("/nonexistent/session/dir")


def test_format_report_renders_aligned_text():
    text = A.format_report(A.bandwidth_report("paper"), power_mw=A.power_estimate())
    assert "628,682" in text
    assert "16,912,896" in text
    assert "26.90" in text
    assert "7.372" in text
