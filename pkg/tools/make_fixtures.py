#!/usr/bin/env python3
"""Regenerate the committed fixtures.

Scene images are synthetic desk-scale stand-ins (flat regions + simple
shapes) sized like the real imager frames. Golden control images are
produced by the naive reference implementations in tests/reference_vision.py
and cross-checked against the production path before being written.
"""
from __future__ import annotations

import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "tests"))

from edgegen.images import ControlImage, MonoImage, save_pgm, save_ppm  # noqa: E402
from edgegen.vision import SEGMENT_PALETTE, canny, segment_quantize  # noqa: E402
import reference_vision as ref  # noqa: E402

FIXTURES = os.path.join(ROOT, "fixtures")
W, H = 324, 244


def scene_e1() -> MonoImage:
    """Sky gradient over dark ground, a billboard with an inner panel, a
    disk and a slab. All region boundaries exceed the default strong
    threshold so the golden edge map shows every feature outline."""
    px = np.zeros((H, W), dtype=np.uint8)
    for y in range(92):
        px[y, :] = 220 - (y * 20) // 92          # sky: 220 down to 201
    px[92:, :] = 40                               # ground
    px[18:80, 40:140] = 25                        # billboard in the sky
    px[36:64, 72:108] = 205                       # bright inner panel
    yy, xx = np.mgrid[0:H, 0:W]
    disk = (yy - 54) ** 2 + (xx - 248) ** 2 <= 26 ** 2
    px[disk] = 25                                 # dark disk in the sky
    px[170:205, 210:300] = 205                    # bright slab on the ground
    return MonoImage(px)


def scene_e2() -> MonoImage:
    """Diagonal band, two disks and a dark pillar on a mid ground."""
    px = np.full((H, W), 150, dtype=np.uint8)
    yy, xx = np.mgrid[0:H, 0:W]
    band = np.abs(2 * yy - xx - 60) < 36
    px[band] = 96
    disk1 = (yy - 70) ** 2 + (xx - 90) ** 2 <= 34 ** 2
    px[disk1] = 220
    disk2 = (yy - 150) ** 2 + (xx - 240) ** 2 <= 26 ** 2
    px[disk2] = 52
    px[30:210, 290:306] = 40
    px[200:244, :] = 120
    return MonoImage(px)


SCENARIOS = {
    # Single-event scenes mirroring the four style experiments.
    "e1.scn": """\
# artistic / edge-control scene
node_id: 1
telemetry_rate_hz: 1
events:
  - t: 0.0
    lux: 8407
    temp_c: 29.52
    humidity_pct: 63.11
    pressure_hpa: 1006.87
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 0.0
images:
  - t: 0.0
    path: e1.pgm
""",
    "e2.scn": """\
# realistic / segmentation-control scene
node_id: 2
telemetry_rate_hz: 1
events:
  - t: 0.0
    lux: 2372
    temp_c: 29.82
    humidity_pct: 66.52
    pressure_hpa: 1002.98
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 2.2
images:
  - t: 0.0
    path: e2.pgm
""",
    "motion_slight.scn": """\
node_id: 3
telemetry_rate_hz: 1
events:
  - t: 0.0
    lux: 3196
    temp_c: 28.04
    humidity_pct: 71.54
    pressure_hpa: 1003.64
    audio_rms: 0.0
    accel_mps2: [1.2, 0.0, 0.0]
    wind_mps: 0.0
images:
  - t: 0.0
    path: e1.pgm
""",
    "motion_obvious.scn": """\
node_id: 3
telemetry_rate_hz: 1
events:
  - t: 0.0
    lux: 3196
    temp_c: 28.04
    humidity_pct: 71.54
    pressure_hpa: 1003.64
    audio_rms: 0.0
    accel_mps2: [3.8, 0.0, 0.0]
    wind_mps: 0.0
images:
  - t: 0.0
    path: e1.pgm
""",
    # Five time-varying states over one held frame (descending daylight).
    "sequence.scn": """\
node_id: 4
telemetry_rate_hz: 1
duration_s: 5
events:
  - t: 0.0
    lux: 65535
    temp_c: 34.51
    humidity_pct: 63.14
    pressure_hpa: 1006.42
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 0.4
  - t: 1.0
    lux: 16556
    temp_c: 30.69
    humidity_pct: 67.07
    pressure_hpa: 1003.70
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 0.0
  - t: 2.0
    lux: 3089
    temp_c: 27.42
    humidity_pct: 82.03
    pressure_hpa: 1004.32
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 2.6
  - t: 3.0
    lux: 536
    temp_c: 27.79
    humidity_pct: 73.83
    pressure_hpa: 1003.53
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 1.5
  - t: 4.0
    lux: 0
    temp_c: 26.85
    humidity_pct: 79.26
    pressure_hpa: 1004.63
    audio_rms: 0.0
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 0.0
images:
  - t: 0.0
    path: e1.pgm
""",
    "acoustic.scn": """\
node_id: 5
telemetry_rate_hz: 1
events:
  - t: 0.0
    lux: 2372
    temp_c: 29.82
    humidity_pct: 66.52
    pressure_hpa: 1002.98
    audio_rms: 0.62
    accel_mps2: [0.0, 0.0, 0.0]
    wind_mps: 0.0
images:
  - t: 0.0
    path: e2.pgm
acoustic:
  - {x: 80, y: 120, intensity: 0.2}
  - {x: 160, y: 100, intensity: 0.5}
  - {x: 260, y: 140, intensity: 0.9}
""",
    # 60 telemetry samples, no image: gateway ingestion/persistence runs.
    "stream60.scn": """\
node_id: 7
telemetry_rate_hz: 1
duration_s: 60
events:
  - t: 0.0
    lux: 5000
    temp_c: 25.0
    humidity_pct: 55.0
    pressure_hpa: 1008.0
    audio_rms: 0.1
    accel_mps2: [0.2, 0.1, 0.0]
    wind_mps: 1.0
""",
}


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)
    os.makedirs(os.path.join(FIXTURES, "vision"), exist_ok=True)

    e1 = scene_e1()
    e2 = scene_e2()
    save_pgm(e1, os.path.join(FIXTURES, "e1.pgm"))
    save_pgm(e2, os.path.join(FIXTURES, "e2.pgm"))

    square = np.zeros((H, W), dtype=np.uint8)
    square[72:172, 112:212] = 255
    save_pgm(MonoImage(square), os.path.join(FIXTURES, "square.pgm"))
    print("wrote e1.pgm / e2.pgm / square.pgm")

    for name, text in SCENARIOS.items():
        with open(os.path.join(FIXTURES, name), "w", encoding="utf-8") as f:
            f.write(text)
    print(f"wrote {len(SCENARIOS)} scenario files")

    # Golden edge map from the reference implementation, cross-checked.
    px_list = e1.pixels.astype(int).tolist()
    golden_mask = ref.ref_canny(px_list, 50, 150)
    impl_mask = canny(e1, 50, 150).mask
    assert (np.array(golden_mask) == impl_mask).all(), \
        "production canny deviates from the reference"
    golden = MonoImage(np.array(golden_mask, dtype=np.uint8) * 255)
    save_pgm(golden, os.path.join(FIXTURES, "vision", "e1_canny.pgm"))
    print("wrote vision/e1_canny.pgm (reference-produced)")

    colors, count = ref.ref_segment_quantize(px_list, 6, SEGMENT_PALETTE)
    golden_seg = np.array(colors, dtype=np.uint8)
    impl_seg = segment_quantize(e1, 6)
    assert (golden_seg == impl_seg.pixels).all(), \
        "production segmentation deviates from the reference"
    assert count == impl_seg.components
    save_ppm(ControlImage(golden_seg, mode="segment"),
             os.path.join(FIXTURES, "vision", "e1_segment.ppm"))
    print(f"wrote vision/e1_segment.ppm ({count} components, reference-produced)")


if __name__ == "__main__":
    main()
