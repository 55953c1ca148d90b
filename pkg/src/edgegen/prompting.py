"""Turn sensor summaries into positive/negative prompt pairs.

The template engine is a deterministic category lookup plus string
assembly; an HTTP client can delegate the same job to an external language
model and falls back to the template on malformed replies.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import requests

from .errors import BackendError, PreconditionError
from .protocol import PhysicalReading
from .vision import MotionLevel, classify_motion

log = logging.getLogger(__name__)

STYLES = ("realistic", "artistic", "chinese_painting", "van_gogh")

# Instruction text sent to an LLM backend alongside the numeric readings.
LLM_SYSTEM_INSTRUCTION = (
    "Please provide a unified description of the attached monochrome image, "
    "integrating the following sensor data. Reply with a JSON object holding "
    "a 'positive' and a 'negative' prompt for an image diffusion model."
)

DEFAULT_NEGATIVE = (
    "deformed, distorted, disfigured, poorly drawn, bad anatomy, wrong anatomy, "
    "extra limb, missing limb, floating limbs, mutated hands, fused fingers, "
    "out of focus, long neck, blurry, watermark, text, low quality, jpeg artifacts"
)
PAINTING_NEGATIVE = DEFAULT_NEGATIVE + ", photograph, photorealistic, 3d render"

# Cosmetic camera-body tails, rotated deterministically when enabled.
CAMERA_TAILS = (
    "shot with a Canon EOS-1D X Mark III",
    "captured with a Leica SL2",
    "shot with a Sony Alpha A9",
    "captured with a Nikon D850",
    "shot with a Canon EOS R6",
)


@dataclass(frozen=True)
class StylePreset:
    name: str
    control_mode: str
    scaffold: str
    negative: str
    quality_tail: str


STYLE_PRESETS: dict[str, StylePreset] = {
    "realistic": StylePreset(
        name="realistic",
        control_mode="segment",
        scaffold="ultra-high-resolution photograph of the scene",
        negative=DEFAULT_NEGATIVE,
        quality_tail="8k UHD, high dynamic range, highly detailed",
    ),
    "artistic": StylePreset(
        name="artistic",
        control_mode="canny",
        scaffold="expressive artistic rendering of the scene",
        negative=DEFAULT_NEGATIVE,
        quality_tail="vivid colors, fine detail, 8k UHD",
    ),
    "chinese_painting": StylePreset(
        name="chinese_painting",
        control_mode="segment",
        scaffold=("traditional Chinese ink painting of the scene, "
                  "delicate brushwork and ink washes"),
        negative=PAINTING_NEGATIVE,
        quality_tail="serene composition, rice paper texture",
    ),
    "van_gogh": StylePreset(
        name="van_gogh",
        control_mode="lineart",
        scaffold=("oil painting of the scene in the style of Van Gogh, "
                  "bold swirling brushstrokes"),
        negative=PAINTING_NEGATIVE,
        quality_tail="thick impasto texture, vibrant palette",
    ),
}


@dataclass(frozen=True)
class SensorSummary:
    """Arithmetic mean of a telemetry window plus its motion classification."""

    mean: PhysicalReading
    window: tuple[float, float]
    motion_level: MotionLevel
    wind_mps: float | None = None


@dataclass(frozen=True)
class DescriptorSet:
    light: str
    temperature: str
    humidity: str
    wind: str
    motion: str

    def phrases(self) -> list[str]:
        return [p for p in (self.light, self.temperature, self.humidity,
                            self.wind, self.motion) if p]


@dataclass(frozen=True)
class PromptBundle:
    positive: str
    negative: str
    style: str
    control_mode: str
    provenance: str = "template"

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise PreconditionError("prompt bundle requires non-empty positive and negative")


def summarize(window: list[tuple[float, PhysicalReading]]) -> SensorSummary:
    """Per-field arithmetic means; motion level from the mean of the
    per-sample acceleration magnitudes (not the magnitude of the mean)."""
    if not window:
        raise PreconditionError("cannot summarize an empty telemetry window")
    n = len(window)
    readings = [r for _, r in window]
    mean_accel = tuple(sum(r.accel_mps2[i] for r in readings) / n for i in range(3))
    mean_mag = sum(r.accel_mag for r in readings) / n
    winds = [r.wind_mps for r in readings if r.wind_mps is not None]
    wind = sum(winds) / len(winds) if winds else None
    mean = PhysicalReading(
        lux=sum(r.lux for r in readings) / n,
        temp_c=sum(r.temp_c for r in readings) / n,
        humidity_pct=sum(r.humidity_pct for r in readings) / n,
        pressure_hpa=sum(r.pressure_hpa for r in readings) / n,
        audio_rms=sum(r.audio_rms for r in readings) / n,
        accel_mps2=mean_accel,
        accel_mag=mean_mag,
        wind_mps=wind,
    )
    return SensorSummary(
        mean=mean,
        window=(window[0][0], window[-1][0]),
        motion_level=classify_motion(mean_mag),
        wind_mps=wind,
    )


# Ordered category tables; boundaries sit between the exemplar readings the
# categories were derived from.
LIGHT_CATEGORIES = (
    (1.0, "complete darkness"),
    (1000.0, "dim, heavily overcast"),
    (10000.0, "overcast, cloud-covered"),
    (30000.0, "bright, sunny, clear skies"),
    (float("inf"), "intensely sunny"),
)
TEMP_CATEGORIES = (
    (15.0, "cool"),
    (25.0, "mild"),
    (30.0, "warm"),
    (float("inf"), "hot"),
)
HUMIDITY_CATEGORIES = (
    (60.0, "dry"),
    (80.0, "humid"),
    (float("inf"), "very humid, muggy"),
)


def light_category_index(lux: float) -> int:
    for i, (upper, _) in enumerate(LIGHT_CATEGORIES):
        if lux < upper:
            return i
    return len(LIGHT_CATEGORIES) - 1


def _lookup(value: float, table) -> str:
    for upper, phrase in table:
        if value < upper:
            return phrase
    return table[-1][1]


def describe(summary: SensorSummary) -> DescriptorSet:
    """Deterministic category phrases for each sensed quantity."""
    wind = summary.wind_mps
    if wind is None:
        wind_phrase = ""
    elif wind == 0:
        wind_phrase = "calm, no wind"
    elif wind < 2.0:
        wind_phrase = "slightly breezy"
    else:
        wind_phrase = "noticeable breeze"
    motion_phrase = {
        MotionLevel.NONE: "",
        MotionLevel.SLIGHT: "slight motion blur",
        MotionLevel.OBVIOUS: "obvious motion blur",
    }[summary.motion_level]
    return DescriptorSet(
        light=_lookup(summary.mean.lux, LIGHT_CATEGORIES),
        temperature=_lookup(summary.mean.temp_c, TEMP_CATEGORIES),
        humidity=_lookup(summary.mean.humidity_pct, HUMIDITY_CATEGORIES),
        wind=wind_phrase,
        motion=motion_phrase,
    )


def build_prompt(summary: SensorSummary, style: str, user_instruction: str = "",
                 camera_tail: bool = False) -> PromptBundle:
    """Template backend: scaffold + descriptor phrases + instruction + tail."""
    preset = STYLE_PRESETS.get(style)
    if preset is None:
        raise PreconditionError(f"unknown style {style!r}; choose one of {STYLES}")
    parts = [preset.scaffold]
    parts.extend(describe(summary).phrases())
    if user_instruction:
        parts.append(user_instruction.strip())
    parts.append(preset.quality_tail)
    if camera_tail:
        parts.append(CAMERA_TAILS[int(summary.mean.lux) % len(CAMERA_TAILS)])
    return PromptBundle(
        positive=", ".join(parts),
        negative=preset.negative,
        style=style,
        control_mode=preset.control_mode,
        provenance="template",
    )


@dataclass
class LlmClientConfig:
    url: str
    timeout_s: float = 10.0
    fallback: bool = True


def sensor_text(summary: SensorSummary) -> str:
    """Human-readable sensor block with units, as embedded in LLM requests."""
    m = summary.mean
    lines = [
        f"Ambient light intensity: {m.lux:.0f} Lux",
        f"Temperature: {m.temp_c:.2f} Celsius",
        f"Humidity: {m.humidity_pct:.2f} %",
        f"Pressure: {m.pressure_hpa:.2f} hPa",
        f"Wind Velocity: {0.0 if summary.wind_mps is None else summary.wind_mps:.1f} m/s",
    ]
    if summary.motion_level is not MotionLevel.NONE:
        lines.append(f"Acceleration: {m.accel_mag:.1f} m/s^2")
    return "; ".join(lines)


def llm_request_body(summary: SensorSummary, style: str, user_instruction: str,
                     image_caption: str | None = None) -> dict:
    m = summary.mean
    return {
        "system": LLM_SYSTEM_INSTRUCTION,
        "sensor": {
            "lux": m.lux,
            "temp_c": m.temp_c,
            "humidity_pct": m.humidity_pct,
            "pressure_hpa": m.pressure_hpa,
            "wind_mps": summary.wind_mps,
        },
        "sensor_text": sensor_text(summary),
        "style": style,
        "user_instruction": user_instruction,
        "image_caption": image_caption,
    }


def llm_prompt(summary: SensorSummary, style: str, user_instruction: str,
               config: LlmClientConfig) -> PromptBundle:
    """Ask an external LLM for the prompt pair; fall back to the template
    when the reply is malformed and fallback is enabled."""
    preset = STYLE_PRESETS.get(style)
    if preset is None:
        raise PreconditionError(f"unknown style {style!r}; choose one of {STYLES}")
    body = llm_request_body(summary, style, user_instruction)
    try:
        resp = requests.post(f"{config.url.rstrip('/')}/v1/prompt", json=body,
                             timeout=config.timeout_s)
        resp.raise_for_status()
        data = resp.json()
    except (requests.RequestException, ValueError) as exc:
        raise BackendError(f"LLM backend request failed: {exc}") from exc

    positive = data.get("positive") if isinstance(data, dict) else None
    negative = data.get("negative") if isinstance(data, dict) else None
    if not positive or not isinstance(positive, str):
        if config.fallback:
            log.warning("LLM reply missing positive prompt; using template fallback")
            return build_prompt(summary, style, user_instruction)
        raise BackendError("LLM reply missing a positive prompt")
    if not negative or not isinstance(negative, str):
        negative = preset.negative
    return PromptBundle(
        positive=positive,
        negative=negative,
        style=style,
        control_mode=preset.control_mode,
        provenance="llm",
    )
