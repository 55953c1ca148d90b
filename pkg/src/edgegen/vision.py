"""Image processing for control-image extraction.

Edge detection (blur, gradients, non-maximum suppression, hysteresis), a
line-art stand-in, intensity segmentation, acoustic overlays, bilinear
upscaling and horizontal motion blur. Every operation is a deterministic
pure function; all filter arithmetic is integer fixed point so results are
reproducible bit-for-bit across platforms and implementations.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from enum import Enum

import numpy as np

from .errors import ParameterError
from .images import AcousticSource, ControlImage, EdgeMap, MonoImage

# Fixed-point constants shared with the test-tree reference implementation.
KERNEL_SCALE = 65536                 # Gaussian taps quantized to 1/65536
TAN22_Q16 = 27146                    # round(tan(22.5 deg) * 65536)
TAN67_Q16 = 158218                   # round(tan(67.5 deg) * 65536)
DEFAULT_CANNY_LOW = 50
DEFAULT_CANNY_HIGH = 150

SEGMENT_MIN_COMPONENT = 50
SEGMENT_PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 190), (0, 128, 128), (230, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
)

OVERLAY_COLOR = (230, 126, 34)       # orange; configurable per call
OVERLAY_ALPHA_PCT = 60

LINE_ART_TONES = (32, 96, 160, 224)

MOTION_SLIGHT_MPS2 = 0.5             # noise floor, below which a resting IMU reads none
MOTION_OBVIOUS_MPS2 = 2.0


class MotionLevel(str, Enum):
    NONE = "none"
    SLIGHT = "slight"
    OBVIOUS = "obvious"


MOTION_BLUR_WIDTH = {
    MotionLevel.NONE: 1,
    MotionLevel.SLIGHT: 5,
    MotionLevel.OBVIOUS: 15,
}


def gaussian_taps(sigma: float) -> tuple[list[int], int]:
    """Quantized 1-D Gaussian kernel: taps in 1/65536 units and their sum.

    Radius is ceil(3*sigma). The same tap table drives the production path
    and the naive reference, so any disagreement is an algorithm bug, not a
    rounding artifact.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    raw = [math.exp(-(i * i) / (2 * sigma * sigma)) for i in range(-radius, radius + 1)]
    total = sum(raw)
    taps = [round(v / total * KERNEL_SCALE) for v in raw]
    return taps, sum(taps)


def gaussian_blur(img: MonoImage, sigma: float) -> MonoImage:
    """Separable Gaussian with replicate borders; rounds half up per pass."""
    taps, den = gaussian_taps(sigma)
    radius = len(taps) // 2
    px = img.pixels.astype(np.int64)
    h, w = px.shape

    acc = np.zeros((h, w), dtype=np.int64)
    for k, tap in enumerate(taps):
        idx = np.clip(np.arange(w) + (k - radius), 0, w - 1)
        acc += tap * px[:, idx]
    px = (acc + den // 2) // den

    acc = np.zeros((h, w), dtype=np.int64)
    for k, tap in enumerate(taps):
        idx = np.clip(np.arange(h) + (k - radius), 0, h - 1)
        acc += tap * px[idx, :]
    px = (acc + den // 2) // den

    out = px.astype(np.uint8)
    assert out.shape == img.pixels.shape
    return MonoImage(out)


def _sobel(px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel gradients, computed on the interior; border rows/cols are 0."""
    p = px.astype(np.int64)
    gx = np.zeros_like(p)
    gy = np.zeros_like(p)
    gx[1:-1, 1:-1] = (
        (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy[1:-1, 1:-1] = (
        (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def _magnitude_255(m2: np.ndarray) -> np.ndarray:
    """Gradient magnitude scaled onto 0..255: floor(sqrt(gx^2+gy^2)) * 31/64,
    rounded half up, saturating at 255. The 31/64 factor undoes the
    attenuation of the sigma=1.4 pre-blur, so an ideal step of height s
    scores about s. Inputs are exact integers below 2^22, where float64
    sqrt matches integer sqrt after floor()."""
    mag = np.floor(np.sqrt(m2.astype(np.float64))).astype(np.int64)
    return np.minimum(255, (mag * 31 + 32) >> 6)


def canny(img: MonoImage, low: float = DEFAULT_CANNY_LOW,
          high: float = DEFAULT_CANNY_HIGH) -> EdgeMap:
    """Classic edge chain: blur(sigma=1.4), Sobel, 4-direction non-maximum
    suppression, double-threshold hysteresis with 8-connected growth."""
    if not (0 <= low < high <= 255):
        raise ParameterError(f"thresholds must satisfy 0 <= low < high <= 255, "
                             f"got low={low} high={high}")
    if img.width < 3 or img.height < 3:
        raise ParameterError("canny needs at least a 3x3 image")

    blurred = gaussian_blur(img, 1.4)
    gx, gy = _sobel(blurred.pixels)
    m2 = gx * gx + gy * gy
    h, w = m2.shape

    ax = np.abs(gx)
    ay = np.abs(gy)
    horiz = ay * KERNEL_SCALE <= ax * TAN22_Q16
    diag = (~horiz) & (ay * KERNEL_SCALE < ax * TAN67_Q16)
    diag_main = diag & (gx * gy > 0)     # gradient along "\"
    diag_anti = diag & (gx * gy <= 0)    # gradient along "/"
    vert = ~(horiz | diag)

    c = m2[1:-1, 1:-1]
    keep = np.zeros((h, w), dtype=bool)
    east, west = m2[1:-1, 2:], m2[1:-1, :-2]
    north, south = m2[:-2, 1:-1], m2[2:, 1:-1]
    nw, se = m2[:-2, :-2], m2[2:, 2:]
    ne, sw = m2[:-2, 2:], m2[2:, :-2]
    sector = horiz[1:-1, 1:-1]
    keep[1:-1, 1:-1] |= sector & (c >= east) & (c >= west)
    sector = diag_main[1:-1, 1:-1]
    keep[1:-1, 1:-1] |= sector & (c >= nw) & (c >= se)
    sector = diag_anti[1:-1, 1:-1]
    keep[1:-1, 1:-1] |= sector & (c >= ne) & (c >= sw)
    sector = vert[1:-1, 1:-1]
    keep[1:-1, 1:-1] |= sector & (c >= north) & (c >= south)

    mag = _magnitude_255(m2)
    strong = keep & (mag >= high)
    weak = keep & (mag >= low)

    out = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not out[ny, nx]:
                    out[ny, nx] = True
                    queue.append((ny, nx))

    assert out.shape == img.pixels.shape
    return EdgeMap(out)


def edge_to_control(edge: EdgeMap) -> ControlImage:
    """Edge map as a conditioning image: white edges on black."""
    rgb = np.zeros((edge.height, edge.width, 3), dtype=np.uint8)
    rgb[edge.mask] = 255
    return ControlImage(rgb, mode="canny")


def _dilate8(mask: np.ndarray) -> np.ndarray:
    """One pass of 3x3 binary dilation."""
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    out = np.zeros_like(mask)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out |= padded[dy:dy + h, dx:dx + w]
    return out


def line_art(img: MonoImage) -> ControlImage:
    """Dark ink strokes (dilated edges) over a 4-level tone quantization."""
    edges = canny(img, DEFAULT_CANNY_LOW, DEFAULT_CANNY_HIGH)
    strokes = _dilate8(edges.mask)
    level = img.pixels.astype(np.int64) // 64
    tone = (32 + 64 * level).astype(np.uint8)
    tone[strokes] = LINE_ART_TONES[0]
    rgb = np.repeat(tone[:, :, None], 3, axis=2)
    assert rgb.shape[:2] == img.pixels.shape
    return ControlImage(rgb, mode="lineart")


def _label_components(level: np.ndarray) -> tuple[np.ndarray, list[list[int]]]:
    """8-connected same-level components. Returns (labels, pixel lists per
    label); labels are assigned in scan order of each component's first pixel."""
    h, w = level.shape
    flat = level.ravel()
    labels = np.full(h * w, -1, dtype=np.int64)
    pixel_lists: list[list[int]] = []
    for start in range(h * w):
        if labels[start] != -1:
            continue
        lab = len(pixel_lists)
        val = flat[start]
        members = [start]
        labels[start] = lab
        queue = deque((start,))
        while queue:
            p = queue.popleft()
            py, px_ = divmod(p, w)
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = py + dy, px_ + dx
                    if 0 <= ny < h and 0 <= nx < w:
                        q = ny * w + nx
                        if labels[q] == -1 and flat[q] == val:
                            labels[q] = lab
                            members.append(q)
                            queue.append(q)
        pixel_lists.append(members)
    return labels.reshape(h, w), pixel_lists


def segment_quantize(img: MonoImage, k: int) -> ControlImage:
    """k-level intensity quantization colored by connected component.

    Components of at least 50 px take palette colors by size rank (larger
    first); smaller ones merge into the adjacent component sharing the most
    boundary, smallest first, until only major components remain.
    """
    if not 2 <= k <= 16:
        raise ParameterError(f"k={k} outside 2..16")
    h, w = img.height, img.width
    level = (img.pixels.astype(np.int64) * k) // 256
    labels2d, pixel_lists = _label_components(level)
    labels = labels2d.ravel()

    size = {i: len(p) for i, p in enumerate(pixel_lists)}
    first = {i: p[0] for i, p in enumerate(pixel_lists)}
    pixels = {i: list(p) for i, p in enumerate(pixel_lists)}
    alive = set(size)

    def neighbor_counts(lab: int) -> dict[int, int]:
        counts: dict[int, int] = {}
        for p in pixels[lab]:
            py, px_ = divmod(p, w)
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = py + dy, px_ + dx
                    if 0 <= ny < h and 0 <= nx < w:
                        ol = labels[ny * w + nx]
                        if ol != lab:
                            counts[ol] = counts.get(ol, 0) + 1
        return counts

    # Smallest minor first (ties by first pixel); lazy heap entries go stale
    # when a component grows or disappears through a merge.
    heap = [(size[lab], first[lab], lab) for lab in alive
            if size[lab] < SEGMENT_MIN_COMPONENT]
    heapq.heapify(heap)
    while heap and len(alive) > 1:
        sz, fp, lab = heapq.heappop(heap)
        if lab not in alive or size[lab] != sz or first[lab] != fp:
            continue
        if sz >= SEGMENT_MIN_COMPONENT:
            continue
        counts = neighbor_counts(lab)
        target = max(counts, key=lambda t: (counts[t], size[t], -first[t]))
        for p in pixels[lab]:
            labels[p] = target
        pixels[target].extend(pixels[lab])
        size[target] += size[lab]
        first[target] = min(first[target], first[lab])
        del pixels[lab], size[lab], first[lab]
        alive.discard(lab)
        if size[target] < SEGMENT_MIN_COMPONENT:
            heapq.heappush(heap, (size[target], first[target], target))

    ranked = sorted(alive, key=lambda m: (-size[m], first[m]))
    color_of = {lab: SEGMENT_PALETTE[rank % len(SEGMENT_PALETTE)]
                for rank, lab in enumerate(ranked)}
    rgb = np.zeros((h * w, 3), dtype=np.uint8)
    for lab in alive:
        rgb[pixels[lab]] = color_of[lab]
    out = ControlImage(rgb.reshape(h, w, 3), mode="segment", components=len(alive))
    assert out.width == w and out.height == h
    return out


def overlay_radius(intensity: float) -> int:
    """Circle radius in pixels at the 968x728 output scale."""
    return 8 + math.floor(72 * intensity)


def draw_acoustic_overlay(base: ControlImage, sources: list[AcousticSource],
                          color: tuple[int, int, int] = OVERLAY_COLOR) -> ControlImage:
    """Filled translucent circle per source, later sources on top, disks
    clipped at the image border. 60% source color over 40% base."""
    if not sources:
        return base
    h, w = base.height, base.width
    for s in sources:
        if not (0 <= s.x < w and 0 <= s.y < h):
            raise ParameterError(f"acoustic source ({s.x},{s.y}) outside {w}x{h}")
    out = base.pixels.astype(np.int64).copy()
    col = np.array(color, dtype=np.int64)
    for s in sources:
        r = overlay_radius(s.intensity)
        y0, y1 = max(0, s.y - r), min(h - 1, s.y + r)
        x0, x1 = max(0, s.x - r), min(w - 1, s.x + r)
        yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        disk = (yy - s.y) ** 2 + (xx - s.x) ** 2 <= r * r
        region = out[y0:y1 + 1, x0:x1 + 1]
        blended = (6 * col[None, None, :] + 4 * region + 5) // 10
        region[disk] = blended[disk]
    result = ControlImage(out.astype(np.uint8), mode="overlay")
    assert result.width == w and result.height == h
    return result


def _bilinear(px: np.ndarray, w: int, h: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a 2-D array; rounds half up."""
    sh, sw = px.shape
    if (w, h) == (sw, sh):
        return px.copy()
    xs = (np.arange(w) * (sw - 1)) / (w - 1) if w > 1 else np.zeros(w)
    ys = (np.arange(h) * (sh - 1)) / (h - 1) if h > 1 else np.zeros(h)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = xs - x0
    fy = ys - y0
    p = px.astype(np.float64)
    top = p[np.ix_(y0, x0)] * (1 - fx)[None, :] + p[np.ix_(y0, x1)] * fx[None, :]
    bot = p[np.ix_(y1, x0)] * (1 - fx)[None, :] + p[np.ix_(y1, x1)] * fx[None, :]
    v = top * (1 - fy)[:, None] + bot * fy[:, None]
    return np.floor(v + 0.5).astype(np.uint8)


def upscale(img: MonoImage, w: int, h: int) -> MonoImage:
    """Bilinear upscale with exact corner preservation."""
    if w < img.width or h < img.height:
        raise ParameterError(
            f"target {w}x{h} smaller than source {img.width}x{img.height}")
    out = MonoImage(_bilinear(img.pixels, w, h))
    assert out.width == w and out.height == h
    return out


def upscale_control(img: ControlImage, w: int, h: int) -> ControlImage:
    if w < img.width or h < img.height:
        raise ParameterError(
            f"target {w}x{h} smaller than source {img.width}x{img.height}")
    channels = [_bilinear(img.pixels[:, :, c], w, h) for c in range(3)]
    return ControlImage(np.stack(channels, axis=2), mode=img.mode,
                        components=img.components)


def motion_blur(img: ControlImage, level: MotionLevel | str) -> ControlImage:
    """Horizontal box blur of width 1/5/15 px for none/slight/obvious."""
    level = MotionLevel(level)
    width = MOTION_BLUR_WIDTH[level]
    if width == 1:
        return ControlImage(img.pixels.copy(), mode=img.mode, components=img.components)
    r = width // 2
    px = img.pixels.astype(np.int64)
    w = img.width
    acc = np.zeros_like(px)
    for off in range(-r, r + 1):
        idx = np.clip(np.arange(w) + off, 0, w - 1)
        acc += px[:, idx, :]
    out = ((acc + r) // width).astype(np.uint8)
    assert out.shape == img.pixels.shape
    return ControlImage(out, mode=img.mode, components=img.components)


def classify_motion(accel_mag: float) -> MotionLevel:
    """Threshold acceleration magnitude into motion-blur levels; the
    slight/obvious boundary sits at 2 m/s^2, closed on the upper side."""
    if accel_mag < 0:
        raise ParameterError(f"acceleration magnitude must be >= 0, got {accel_mag}")
    if accel_mag < MOTION_SLIGHT_MPS2:
        return MotionLevel.NONE
    if accel_mag < MOTION_OBVIOUS_MPS2:
        return MotionLevel.SLIGHT
    return MotionLevel.OBVIOUS
