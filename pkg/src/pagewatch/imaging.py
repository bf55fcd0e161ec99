"""Screenshot normalization to the fixed 960x540 model input and training-time
image augmentation.

Normalization projects a raw capture of arbitrary resolution onto a
1920x1080 zero (black) canvas — isotropically shrinking oversized captures,
centering undersized ones — then halves the canvas with an area-average
filter. All resampling is exact integer arithmetic (see ``_accel``); the only
float step is the documented scaled-dimension rounding rule.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import _accel
from .errors import InvalidInputError

CANVAS_W, CANVAS_H = 1920, 1080
OUT_W, OUT_H = 960, 540
DOWNSAMPLE_FACTOR = 0.5

TRANSFORM_POOL = (
    "inversion",
    "grayscale",
    "margin-crop",
    "hue-shift",
    "brightness",
    "contrast",
    "saturation",
    "solarization",
)

# integer luminance: (299 R + 587 G + 114 B + 500) // 1000, exact round-half-up
_LUMA_WEIGHTS = np.array([299, 587, 114], dtype=np.int64)


@dataclass
class RawScreenshot:
    """A raw page capture: row-major RGB8 pixels plus provenance."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    source_domain: str = ""
    captured_at: float = field(default_factory=time.time)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("screenshot dimensions must be >= 1")
        if self.pixels.shape != (self.height, self.width, 3):
            raise InvalidInputError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.dtype != np.uint8:
            raise InvalidInputError("pixels must be uint8 RGB")

    @classmethod
    def from_array(cls, arr: np.ndarray, source_domain: str = "") -> "RawScreenshot":
        h, w = arr.shape[:2]
        return cls(width=w, height=h, pixels=arr, source_domain=source_domain)


@dataclass
class NormalizedImage:
    """A 960x540 canvas: content centered, padding exactly (0,0,0)."""

    pixels: np.ndarray  # (540, 960, 3) uint8
    scale_factor: float  # isotropic ratio applied to the raw image (1.0 = none)
    content_rect: tuple[int, int, int, int]  # (x, y, w, h) in output coords

    width: int = OUT_W
    height: int = OUT_H

    def __post_init__(self):
        if self.pixels.shape != (OUT_H, OUT_W, 3):
            raise InvalidInputError(f"normalized image must be {OUT_H}x{OUT_W}x3")
        x, y, w, h = self.content_rect
        if not (0 <= x and 0 <= y and x + w <= OUT_W and y + h <= OUT_H):
            raise InvalidInputError("content_rect outside canvas")


@dataclass
class AugmentationSpec:
    """Two distinct transforms, chosen and parameterized from one seed."""

    seed: int
    transform_pool: tuple[str, ...] = TRANSFORM_POOL
    count: int = 2

    def __post_init__(self):
        if self.count != 2:
            raise InvalidInputError("augmentation applies exactly 2 transforms")
        unknown = set(self.transform_pool) - set(TRANSFORM_POOL)
        if unknown:
            raise InvalidInputError(f"unknown transforms: {sorted(unknown)}")


def scaled_dims(width: int, height: int) -> tuple[int, int, float]:
    """Rounding rule for the pre-canvas isotropic scale.

    Returns (scaled_w, scaled_h, scale). Oversized inputs shrink by
    min(1920/w, 1080/h); everything else passes through. Scaled dims are
    floor(dim*scale + 0.5) in float64 — this expression is the contract.
    """
    if width > CANVAS_W or height > CANVAS_H:
        scale = min(CANVAS_W / width, CANVAS_H / height)
        sw = int(math.floor(width * scale + 0.5))
        sh = int(math.floor(height * scale + 0.5))
        return max(sw, 1), max(sh, 1), scale
    return width, height, 1.0


def normalize_screenshot(raw: RawScreenshot) -> NormalizedImage:
    """Project a raw screenshot onto the fixed 960x540 input canvas."""
    sw, sh, scale = scaled_dims(raw.width, raw.height)
    if scale != 1.0:
        scaled = _accel.resize_area_u8(raw.pixels, sh, sw)
    else:
        scaled = raw.pixels

    ox = (CANVAS_W - sw) // 2
    oy = (CANVAS_H - sh) // 2
    canvas = np.zeros((CANVAS_H, CANVAS_W, 3), dtype=np.uint8)
    canvas[oy:oy + sh, ox:ox + sw] = scaled

    out = _accel.resize_area_u8(canvas, OUT_H, OUT_W)

    # smallest integer rect covering the (possibly half-pixel) content region
    x0 = ox // 2
    y0 = oy // 2
    x1 = -((ox + sw) // -2)  # ceil div
    y1 = -((oy + sh) // -2)
    return NormalizedImage(
        pixels=out,
        scale_factor=scale,
        content_rect=(x0, y0, x1 - x0, y1 - y0),
    )


def downsample(img: np.ndarray, factor: float) -> np.ndarray:
    """Area-average (box) downsampling of an RGB8 buffer by ``factor``.

    Output dims are floor(dim*factor + 0.5); factor must be in (0, 1].
    """
    if not 0.0 < factor <= 1.0:
        raise InvalidInputError("downsample factor must be in (0, 1]")
    h, w = img.shape[:2]
    oh = max(int(math.floor(h * factor + 0.5)), 1)
    ow = max(int(math.floor(w * factor + 0.5)), 1)
    if (oh, ow) == (h, w):
        return img.copy()
    return _accel.resize_area_u8(img, oh, ow)


def luminance_u8(rgb: np.ndarray) -> np.ndarray:
    """Integer-exact 0.299/0.587/0.114 luminance with round-half-up."""
    s = rgb.astype(np.int64) @ _LUMA_WEIGHTS
    return ((s + 500) // 1000).astype(np.uint8)


# ---------------------------------------------------------------------------
# augmentation transforms (legibility-preserving parameter ranges)
# ---------------------------------------------------------------------------

def _t_inversion(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return 255 - px


def _t_grayscale(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lum = luminance_u8(px)
    return np.repeat(lum[:, :, None], 3, axis=2)


def _t_margin_crop(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # remove up to 10% per edge, then re-letterbox (center on a zero canvas,
    # no rescale — keeps glyph size intact)
    h, w = px.shape[:2]
    top = int(rng.integers(0, h // 10 + 1))
    bottom = int(rng.integers(0, h // 10 + 1))
    left = int(rng.integers(0, w // 10 + 1))
    right = int(rng.integers(0, w // 10 + 1))
    cropped = px[top:h - bottom, left:w - right]
    out = np.zeros_like(px)
    ch, cw = cropped.shape[:2]
    oy, ox = (h - ch) // 2, (w - cw) // 2
    out[oy:oy + ch, ox:ox + cw] = cropped
    return out


def _t_hue_shift(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # extreme hue rotation: cyclic channel mix via rotation around the gray axis
    theta = float(rng.uniform(np.pi / 3, 5 * np.pi / 3))
    c, s = np.cos(theta), np.sin(theta)
    one_third = 1.0 / 3.0
    sq = np.sqrt(1.0 / 3.0)
    m = np.full((3, 3), one_third * (1.0 - c))
    m += np.eye(3) * c
    m += sq * s * np.array([[0, -1, 1], [1, 0, -1], [-1, 1, 0]], dtype=np.float64)
    out = px.astype(np.float64) @ m.T
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _t_brightness(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    f = float(rng.uniform(0.7, 1.3))
    return np.clip(np.rint(px.astype(np.float64) * f), 0, 255).astype(np.uint8)


def _t_contrast(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    f = float(rng.uniform(0.7, 1.3))
    out = (px.astype(np.float64) - 128.0) * f + 128.0
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _t_saturation(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    f = float(rng.uniform(0.5, 1.5))
    lum = luminance_u8(px).astype(np.float64)[:, :, None]
    out = lum + (px.astype(np.float64) - lum) * f
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _t_solarization(px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    threshold = int(rng.integers(128, 225))
    return np.where(px >= threshold, 255 - px, px).astype(np.uint8)


_TRANSFORMS = {
    "inversion": _t_inversion,
    "grayscale": _t_grayscale,
    "margin-crop": _t_margin_crop,
    "hue-shift": _t_hue_shift,
    "brightness": _t_brightness,
    "contrast": _t_contrast,
    "saturation": _t_saturation,
    "solarization": _t_solarization,
}


def augment_image(img: NormalizedImage, spec: AugmentationSpec) -> NormalizedImage:
    """Apply two seed-chosen distinct transforms; output stays 960x540.

    Pure function of (img, spec): the same seed always selects the same
    transform pair and parameters. Transforms touch the whole canvas, so the
    result's content_rect is the full canvas.
    """
    rng = np.random.default_rng(spec.seed)
    pool = list(spec.transform_pool)
    idx = rng.choice(len(pool), size=spec.count, replace=False)
    px = img.pixels
    for i in idx:
        px = _TRANSFORMS[pool[int(i)]](px, rng)
    return NormalizedImage(
        pixels=px,
        scale_factor=img.scale_factor,
        content_rect=(0, 0, OUT_W, OUT_H),
    )


# ---------------------------------------------------------------------------
# PNG I/O (corpus files use PNG; internal buffers stay raw RGB8)
# ---------------------------------------------------------------------------

def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_png(path, pixels: np.ndarray) -> None:
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")
