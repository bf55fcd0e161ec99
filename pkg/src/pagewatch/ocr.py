"""Strip-sliced OCR over the normalized screenshot.

The image is cut into four horizontal strips which may be recognized
concurrently (mirroring a four-worker OCR pool); outputs are joined
top-to-bottom with a single newline regardless of completion order. Engines
are pluggable: tests use scripted mocks, and an external-process adapter can
drive a real OCR executable.
"""

from __future__ import annotations

import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import InvalidInputError, OcrEngineError
from .imaging import NormalizedImage, write_png

JOIN_DELIMITER = "\n"
MAX_WORKERS = 4


class OcrEngineAdapter(Protocol):
    engine_name: str
    concurrent_safe: bool

    def recognize(self, strip: np.ndarray) -> str: ...


@dataclass
class OcrText:
    text: str
    per_slice: list[str]
    extraction_ms: float


def slice_image(img: NormalizedImage, rows: int = 4) -> list[np.ndarray]:
    """Partition the image into ``rows`` horizontal strips (no overlap/gap).

    Heights differ by at most one; the remainder goes to the topmost strips.
    """
    if rows < 1:
        raise InvalidInputError("rows must be >= 1")
    h = img.pixels.shape[0]
    if rows > h:
        raise InvalidInputError("more strips than pixel rows")
    base, rem = divmod(h, rows)
    strips = []
    y = 0
    for i in range(rows):
        step = base + (1 if i < rem else 0)
        strips.append(img.pixels[y:y + step])
        y += step
    return strips


def extract_text(img: NormalizedImage, engine: OcrEngineAdapter, rows: int = 4) -> OcrText:
    """Recognize each strip (concurrently when the engine allows) and join."""
    t0 = time.perf_counter()
    strips = slice_image(img, rows)

    def run(i: int) -> str:
        try:
            return engine.recognize(strips[i])
        except OcrEngineError:
            raise
        except Exception as exc:
            raise OcrEngineError(f"engine {engine.engine_name!r} failed: {exc}", i) from exc

    if getattr(engine, "concurrent_safe", False) and len(strips) > 1:
        with ThreadPoolExecutor(max_workers=min(MAX_WORKERS, len(strips))) as pool:
            per_slice = list(pool.map(run, range(len(strips))))
    else:
        per_slice = [run(i) for i in range(len(strips))]

    return OcrText(
        text=JOIN_DELIMITER.join(per_slice),
        per_slice=per_slice,
        extraction_ms=(time.perf_counter() - t0) * 1000.0,
    )


class CallableOcrEngine:
    """Scripted mock: delegates to a function strip -> text.

    Mocks that need the strip's position should key off strip content (the
    adapter interface deliberately passes pixels only).
    """

    def __init__(self, fn: Callable[[np.ndarray], str], name: str = "mock",
                 concurrent_safe: bool = True):
        self._fn = fn
        self.engine_name = name
        self.concurrent_safe = concurrent_safe

    def recognize(self, strip: np.ndarray) -> str:
        return self._fn(strip)


class StaticOcrEngine:
    """Returns a fixed text for every strip (e.g. "" for a no-op engine)."""

    concurrent_safe = True

    def __init__(self, text: str = "", name: str = "static"):
        self.text = text
        self.engine_name = name

    def recognize(self, strip: np.ndarray) -> str:
        return self.text


class ExternalProcessOcrEngine:
    """Spawns a configured OCR executable once per strip.

    The command receives a temp PNG path as its final argument and must print
    plain text on stdout within the per-strip timeout.
    """

    concurrent_safe = True

    def __init__(self, command: list[str], timeout_s: float = 10.0, name: str = "external"):
        self.command = list(command)
        self.timeout_s = timeout_s
        self.engine_name = name

    def recognize(self, strip: np.ndarray) -> str:
        with tempfile.NamedTemporaryFile(suffix=".png", delete=False) as f:
            tmp = Path(f.name)
        try:
            write_png(tmp, np.ascontiguousarray(strip))
            proc = subprocess.run(
                self.command + [str(tmp)],
                capture_output=True,
                timeout=self.timeout_s,
                text=True,
            )
            if proc.returncode != 0:
                raise RuntimeError(f"exit {proc.returncode}: {proc.stderr.strip()[:200]}")
            return proc.stdout.rstrip("\n")
        finally:
            tmp.unlink(missing_ok=True)
