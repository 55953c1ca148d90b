"""Bandwidth and power arithmetic plus live session statistics.

Two bandwidth modes exist side by side: `paper` reproduces the originally
published figures verbatim (including their 78,568-pixel count, which
differs from a true 324x244 buffer); `actual` recomputes from the real
buffer geometry. Neither is corrected toward the other.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import StorageError
from .protocol import SENSOR_BLOCK_BITS

# Published-mode constants, asserted verbatim by the test suite.
PUBLISHED_IMAGE_PIXELS = 78_568
PUBLISHED_IMAGE_BITS = 628_544          # 78,568 px * 8 bits
PUBLISHED_TOTAL_INPUT_BITS = 628_682    # image + 138-bit sensor block
PUBLISHED_INPUT_KBS = 78.585            # the published rounding of bits/8 in kB

ACTUAL_IMAGE_PIXELS = 324 * 244         # 79,056
ACTUAL_IMAGE_BITS = ACTUAL_IMAGE_PIXELS * 8

OUTPUT_WIDTH = 968
OUTPUT_HEIGHT = 728
OUTPUT_DEPTH_BITS = 24


@dataclass(frozen=True)
class BandwidthReport:
    mode: str
    telemetry_bits_per_frame: int
    image_pixels: int
    image_bits: int
    total_input_bits: int
    output_bits: int

    @property
    def ratio(self) -> float:
        return self.output_bits / self.total_input_bits

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "telemetry_bits_per_frame": self.telemetry_bits_per_frame,
            "image_pixels": self.image_pixels,
            "image_bits": self.image_bits,
            "total_input_bits": self.total_input_bits,
            "output_bits": self.output_bits,
            "ratio": self.ratio,
        }


@dataclass(frozen=True)
class PowerComponent:
    name: str
    active_power_mw: float
    duty_cycle: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.duty_cycle <= 1.0:
            raise ValueError(f"duty_cycle={self.duty_cycle} outside [0, 1]")
        if self.active_power_mw < 0:
            raise ValueError(f"active_power_mw={self.active_power_mw} negative")


# Datasheet-derived component powers. The MCU and imager figures are vendor
# upper bounds used as point values, so the profile total is an upper bound.
DEFAULT_POWER_PROFILE = (
    PowerComponent("mcu", 5.0),
    PowerComponent("imager", 2.0),
    PowerComponent("env_sensor", 3.6e-3 * 3.3),    # 3.6 uA at 3.3 V, 1 Hz
    PowerComponent("light_sensor", 0.12 * 3.0),    # 0.12 mA at 3.0 V
)


def output_bits(w: int, h: int, depth: int) -> int:
    if w <= 0 or h <= 0 or depth <= 0:
        raise ValueError("output_bits arguments must be positive")
    return w * h * depth


def bandwidth_report(mode: str = "paper") -> BandwidthReport:
    """mode 'paper' uses the published constants verbatim; 'actual' uses the
    true 324x244 buffer size."""
    out = output_bits(OUTPUT_WIDTH, OUTPUT_HEIGHT, OUTPUT_DEPTH_BITS)
    if mode == "paper":
        return BandwidthReport(
            mode=mode,
            telemetry_bits_per_frame=SENSOR_BLOCK_BITS,
            image_pixels=PUBLISHED_IMAGE_PIXELS,
            image_bits=PUBLISHED_IMAGE_BITS,
            total_input_bits=PUBLISHED_TOTAL_INPUT_BITS,
            output_bits=out,
        )
    if mode == "actual":
        return BandwidthReport(
            mode=mode,
            telemetry_bits_per_frame=SENSOR_BLOCK_BITS,
            image_pixels=ACTUAL_IMAGE_PIXELS,
            image_bits=ACTUAL_IMAGE_BITS,
            total_input_bits=ACTUAL_IMAGE_BITS + SENSOR_BLOCK_BITS,
            output_bits=out,
        )
    raise ValueError(f"unknown bandwidth mode {mode!r}; use 'paper' or 'actual'")


def power_estimate(components=DEFAULT_POWER_PROFILE) -> float:
    """Average power in mW: sum of active power times duty cycle."""
    return sum(c.active_power_mw * c.duty_cycle for c in components)


@dataclass
class SessionStats:
    frames: int = 0
    bytes_in: int = 0
    images: int = 0
    generations: int = 0
    bytes_out: int = 0

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "bytes_in": self.bytes_in,
            "images": self.images,
            "generations": self.generations,
            "bytes_out": self.bytes_out,
        }


def session_stats(session_dir: str) -> SessionStats:
    """Recount live statistics from a session's persisted logs and blobs."""
    stats = SessionStats()
    if not os.path.isdir(session_dir):
        raise StorageError(f"session directory {session_dir!r} does not exist")
    frames_log = os.path.join(session_dir, "frames.log")
    if os.path.exists(frames_log):
        try:
            with open(frames_log, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    stats.frames += 1
                    stats.bytes_in += int(rec.get("bytes", 0))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"cannot read {frames_log}: {exc}") from exc
    images_dir = os.path.join(session_dir, "images")
    if os.path.isdir(images_dir):
        stats.images = sum(1 for n in os.listdir(images_dir) if n.endswith(".pgm"))
    gen_dir = os.path.join(session_dir, "generations")
    if os.path.isdir(gen_dir):
        for name in os.listdir(gen_dir):
            if name.endswith(".png"):
                stats.generations += 1
                stats.bytes_out += os.path.getsize(os.path.join(gen_dir, name))
    return stats


def format_report(report: BandwidthReport, power_mw: float | None = None) -> str:
    """Aligned text rendering for the CLI."""
    lines = [
        f"bandwidth mode        : {report.mode}",
        f"telemetry bits/frame  : {report.telemetry_bits_per_frame:>12,}",
        f"image pixels          : {report.image_pixels:>12,}",
        f"image bits            : {report.image_bits:>12,}",
        f"total input bits      : {report.total_input_bits:>12,}",
        f"output bits           : {report.output_bits:>12,}",
        f"output/input ratio    : {report.ratio:>12.2f}",
    ]
    if power_mw is not None:
        lines.append(f"avg power (upper bound): {power_mw:>11.3f} mW")
    return "\n".join(lines)

