"""Shared test helpers."""

import base64
import io

import numpy as np
from PIL import Image

from pagewatch.model.network import PredictResult


class FakeSnapshot:
    """Scripted classifier keyed by OCR text."""

    def __init__(self, default=0.1, by_text=None):
        self.default = default
        self.by_text = by_text or {}
        self.calls = 0

    def predict(self, image, text):
        self.calls += 1
        p = self.by_text.get(text, self.default)
        return PredictResult(probability=p,
                             label="malicious" if p > 0.5 else "benign")


def png_b64(px: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(px, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def uniform_px(value=50, w=1920, h=1080) -> np.ndarray:
    return np.full((h, w, 3), value, dtype=np.uint8)


def half_px(w=1920, h=1080) -> np.ndarray:
    px = np.zeros((h, w, 3), dtype=np.uint8)
    px[: h // 2] = 255
    return px
