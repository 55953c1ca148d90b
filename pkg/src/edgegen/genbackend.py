"""Two-step generation pipeline and its backends.

Step 1 extracts a conditioning image from the monochrome frame according to
the style preset; step 2 builds the prompt pair and asks a backend for the
high-resolution RGB output. The HTTP backend talks to any server honoring
the /v1/generate contract; the stub backend is a fully deterministic,
offline stand-in so every downstream contract stays testable.
"""
from __future__ import annotations

import base64
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import BackendError, ContractViolationError, ParameterError
from .images import AcousticSource, ControlImage, MonoImage, png_to_rgb, rgb_to_png
from .prompting import (
    LlmClientConfig,
    PromptBundle,
    SensorSummary,
    STYLE_PRESETS,
    build_prompt,
    describe,
    light_category_index,
    llm_prompt,
)
from .vision import (
    canny,
    draw_acoustic_overlay,
    edge_to_control,
    line_art,
    motion_blur,
    segment_quantize,
    upscale,
    upscale_control,
)

OUT_WIDTH = 968
OUT_HEIGHT = 728
DEFAULT_SEGMENT_LEVELS = 6
GENERATE_TIMEOUT_S = 120.0

# Stub tuning: brightness gain per light category (dark..intensely sunny)
# and RGB gain triple per temperature category (cool..hot).
STUB_LIGHT_GAIN = (0.25, 0.55, 0.80, 1.00, 1.15)
STUB_TEMP_TINT = {
    "cool": (0.85, 0.95, 1.15),
    "mild": (0.95, 1.00, 1.05),
    "warm": (1.05, 1.00, 0.95),
    "hot": (1.15, 1.00, 0.80),
}
STUB_NOISE_AMPLITUDE = 4
STUB_CONTROL_ALPHA_PCT = 25


@dataclass(frozen=True)
class GenerationRequest:
    prompts: PromptBundle
    control: ControlImage
    seed: int
    backend_id: str
    out_width: int = OUT_WIDTH
    out_height: int = OUT_HEIGHT
    source_mono: MonoImage | None = None
    summary: SensorSummary | None = None
    acoustic: tuple[AcousticSource, ...] = ()

    def __post_init__(self):
        if self.out_width <= 0 or self.out_height <= 0:
            raise ParameterError("output dimensions must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError("seed must fit in 64 bits")


@dataclass(frozen=True)
class GenerationResult:
    image: np.ndarray             # (out_height, out_width, 3) uint8
    backend_id: str
    seed: int
    stage_timings: dict = field(default_factory=dict)
    control_mode: str = ""
    prompts: PromptBundle | None = None


class StubBackend:
    """Deterministic offline generator: upscale, tint by temperature,
    scale brightness by light category, composite the control image,
    blur by motion level, then draw acoustic overlays. All randomness
    comes from a counter-based generator keyed on the seed."""

    backend_id = "stub"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        if request.source_mono is None or request.summary is None:
            raise ParameterError("stub backend needs the source mono image and summary")
        t0 = time.perf_counter()
        w, h = request.out_width, request.out_height

        base = upscale(request.source_mono, w, h).pixels.astype(np.int64)
        desc = describe(request.summary)
        gain_num = round(STUB_LIGHT_GAIN[light_category_index(request.summary.mean.lux)] * 1024)
        tint = STUB_TEMP_TINT[desc.temperature]
        rgb = np.empty((h, w, 3), dtype=np.int64)
        for c in range(3):
            tint_num = round(tint[c] * 1024)
            rgb[:, :, c] = (base * gain_num * tint_num) >> 20

        noise = _counter_noise(request.seed, h, w)
        rgb += noise[:, :, None]

        control = request.control
        if (control.width, control.height) != (w, h):
            control = upscale_control(control, w, h)
        rgb = (3 * rgb + control.pixels.astype(np.int64) + 2) // 4
        rgb = np.clip(rgb, 0, 255).astype(np.uint8)

        img = ControlImage(rgb, mode=control.mode)
        img = motion_blur(img, request.summary.motion_level)
        if request.acoustic:
            img = draw_acoustic_overlay(img, list(request.acoustic))

        out = img.pixels
        assert out.shape == (h, w, 3)
        return GenerationResult(
            image=out,
            backend_id=self.backend_id,
            seed=request.seed,
            stage_timings={"generate_ms": (time.perf_counter() - t0) * 1000.0},
            control_mode=request.control.mode,
        )


def _counter_noise(seed: int, h: int, w: int) -> np.ndarray:
    """splitmix64 over pixel counters, mapped to +/-STUB_NOISE_AMPLITUDE."""
    idx = np.arange(h * w, dtype=np.uint64) + np.uint64((seed & (2 ** 63 - 1)) * 2 + 1)
    z = idx * np.uint64(0x9E3779B97F4A7C15)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    span = 2 * STUB_NOISE_AMPLITUDE + 1
    vals = (z % np.uint64(span)).astype(np.int64) - STUB_NOISE_AMPLITUDE
    return vals.reshape(h, w)


class HttpBackend:
    """Client for an external image-generation server."""

    def __init__(self, url: str, timeout_s: float = GENERATE_TIMEOUT_S):
        self.url = url.rstrip("/")
        self.timeout_s = timeout_s
        self.backend_id = f"http:{self.url}"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        t0 = time.perf_counter()
        body = {
            "positive": request.prompts.positive,
            "negative": request.prompts.negative,
            "control_image": base64.b64encode(rgb_to_png(request.control.pixels)).decode(),
            "control_mode": request.control.mode,
            "width": request.out_width,
            "height": request.out_height,
            "seed": request.seed,
        }
        try:
            resp = requests.post(f"{self.url}/v1/generate", json=body,
                                 timeout=self.timeout_s)
            resp.raise_for_status()
            data = resp.json()
            png = base64.b64decode(data["image"])
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            raise BackendError(f"generation backend request failed: {exc}") from exc
        image = png_to_rgb(png)
        if image.shape != (request.out_height, request.out_width, 3):
            raise ContractViolationError(
                f"backend returned {image.shape[1]}x{image.shape[0]}, "
                f"contract requires {request.out_width}x{request.out_height}")
        return GenerationResult(
            image=image,
            backend_id=self.backend_id,
            seed=request.seed,
            stage_timings={"generate_ms": (time.perf_counter() - t0) * 1000.0},
            control_mode=request.control.mode,
        )


def make_backend(spec: str):
    """Backend factory for CLI/config strings: 'stub' or 'http:<url>'."""
    if spec == "stub":
        return StubBackend()
    if spec.startswith("http:") or spec.startswith("https:"):
        url = spec[5:] if spec.startswith("http:") and not spec.startswith("http://") else spec
        return HttpBackend(url)
    raise ParameterError(f"unknown backend {spec!r}; use 'stub' or 'http:<url>'")


def extract_control(mono: MonoImage, control_mode: str,
                    canny_low: int = 50, canny_high: int = 150,
                    segment_levels: int = DEFAULT_SEGMENT_LEVELS) -> ControlImage:
    """Step 1 at source resolution: the preprocessor named by the preset."""
    if control_mode == "canny":
        return edge_to_control(canny(mono, canny_low, canny_high))
    if control_mode == "lineart":
        return line_art(mono)
    if control_mode == "segment":
        return segment_quantize(mono, segment_levels)
    raise ParameterError(f"unknown control mode {control_mode!r}")


def scale_sources(sources: list[AcousticSource], src_w: int, src_h: int,
                  dst_w: int, dst_h: int) -> list[AcousticSource]:
    """Map acoustic source coordinates from the mono frame onto the output."""
    return [
        AcousticSource(
            x=min(dst_w - 1, round(s.x * (dst_w - 1) / max(1, src_w - 1))),
            y=min(dst_h - 1, round(s.y * (dst_h - 1) / max(1, src_h - 1))),
            intensity=s.intensity,
        )
        for s in sources
    ]


def two_step_pipeline(mono: MonoImage, summary: SensorSummary, style: str,
                      user_instruction: str, backend,
                      seed: int,
                      acoustic: list[AcousticSource] | None = None,
                      llm: LlmClientConfig | None = None) -> GenerationResult:
    """Run both stages: control extraction, then prompt + generation.

    Acoustic sources (given in mono-frame coordinates) are drawn onto the
    upscaled control image. The motion level travels only as a prompt phrase
    for HTTP backends; the stub additionally blurs its own output.
    """
    preset = STYLE_PRESETS.get(style)
    if preset is None:
        raise ParameterError(f"unknown style {style!r}")

    t0 = time.perf_counter()
    control = extract_control(mono, preset.control_mode)
    control = upscale_control(control, OUT_WIDTH, OUT_HEIGHT)
    scaled_sources: list[AcousticSource] = []
    if acoustic:
        scaled_sources = scale_sources(acoustic, mono.width, mono.height,
                                       OUT_WIDTH, OUT_HEIGHT)
        control = draw_acoustic_overlay(control, scaled_sources)
    preprocess_ms = (time.perf_counter() - t0) * 1000.0

    t1 = time.perf_counter()
    if llm is not None:
        prompts = llm_prompt(summary, style, user_instruction, llm)
    else:
        prompts = build_prompt(summary, style, user_instruction)
    prompt_ms = (time.perf_counter() - t1) * 1000.0

    request = GenerationRequest(
        prompts=prompts,
        control=control,
        seed=seed,
        backend_id=getattr(backend, "backend_id", "unknown"),
        source_mono=mono,
        summary=summary,
        acoustic=tuple(scaled_sources),
    )
    result = backend.generate(request)
    timings = {
        "preprocess_ms": preprocess_ms,
        "prompt_ms": prompt_ms,
        "generate_ms": result.stage_timings.get("generate_ms", 0.0),
    }
    return GenerationResult(
        image=result.image,
        backend_id=result.backend_id,
        seed=result.seed,
        stage_timings=timings,
        control_mode=preset.control_mode,
        prompts=prompts,
    )
