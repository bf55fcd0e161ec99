import sys
import time

import numpy as np
import pytest

from pagewatch.errors import InvalidInputError, OcrEngineError
from pagewatch.imaging import NormalizedImage
from pagewatch.ocr import (
    CallableOcrEngine, ExternalProcessOcrEngine, StaticOcrEngine,
    extract_text, slice_image,
)


def canvas(h=540, w=960, tag_rows=None):
    """NormalizedImage whose pixel [row, 0, 0] can tag strip identity."""
    px = np.zeros((h, w, 3), dtype=np.uint8)
    if tag_rows:
        for row, value in tag_rows.items():
            px[row, :, 0] = value
    if (h, w) != (540, 960):
        img = NormalizedImage.__new__(NormalizedImage)
        img.pixels = px
        img.width, img.height = w, h
        img.scale_factor = 1.0
        img.content_rect = (0, 0, w, h)
        return img
    return NormalizedImage(pixels=px, scale_factor=1.0, content_rect=(0, 0, w, h))


class TestSliceImage:
    def test_540_into_four_135(self):
        strips = slice_image(canvas(), rows=4)
        assert [s.shape[0] for s in strips] == [135, 135, 135, 135]
        assert all(s.shape[1] == 960 for s in strips)

    def test_remainder_goes_to_topmost(self):
        strips = slice_image(canvas(h=542), rows=4)
        assert [s.shape[0] for s in strips] == [136, 136, 135, 135]

    def test_single_row_is_identity(self):
        img = canvas()
        strips = slice_image(img, rows=1)
        assert len(strips) == 1
        assert np.array_equal(strips[0], img.pixels)

    def test_strips_stack_back_exactly(self):
        rng = np.random.default_rng(0)
        img = canvas()
        img.pixels[:] = rng.integers(0, 256, size=img.pixels.shape, dtype=np.uint8)
        for rows in (1, 2, 3, 4, 7):
            strips = slice_image(img, rows)
            assert np.array_equal(np.vstack(strips), img.pixels)

    def test_too_many_rows_rejected(self):
        with pytest.raises(InvalidInputError):
            slice_image(canvas(h=3), rows=4)

    def test_zero_rows_rejected(self):
        with pytest.raises(InvalidInputError):
            slice_image(canvas(), rows=0)


def strip_index_of(strip):
    # strips of the tagged canvas carry their index in pixel [0, 0, 0]
    return int(strip[0, 0, 0])


class TestExtractText:
    def _tagged(self):
        return canvas(tag_rows={0: 0, 135: 1, 270: 2, 405: 3})

    def test_index_mock_joins_top_to_bottom(self):
        engine = CallableOcrEngine(lambda s: str(strip_index_of(s)))
        out = extract_text(self._tagged(), engine)
        assert out.text == "0\n1\n2\n3"
        assert out.per_slice == ["0", "1", "2", "3"]

    def test_blank_engine_three_separators(self):
        out = extract_text(canvas(), StaticOcrEngine(""))
        assert out.text == "\n\n\n"

    def test_completion_order_does_not_matter(self):
        delays = {0: 0.05, 1: 0.0, 2: 0.03, 3: 0.01}

        def slow(strip):
            i = strip_index_of(strip)
            time.sleep(delays[i])
            return f"strip{i}"

        out = extract_text(self._tagged(), CallableOcrEngine(slow))
        assert out.text == "strip0\nstrip1\nstrip2\nstrip3"

    def test_serial_engine_also_ordered(self):
        engine = CallableOcrEngine(lambda s: str(strip_index_of(s)), concurrent_safe=False)
        assert extract_text(self._tagged(), engine).text == "0\n1\n2\n3"

    def test_engine_failure_carries_strip_index(self):
        def explode(strip):
            if strip_index_of(strip) == 2:
                raise RuntimeError("boom")
            return "ok"

        with pytest.raises(OcrEngineError) as exc:
            extract_text(self._tagged(), CallableOcrEngine(explode))
        assert exc.value.strip_index == 2

    def test_extraction_time_recorded(self):
        out = extract_text(canvas(), StaticOcrEngine("x"))
        assert out.extraction_ms >= 0.0


class TestExternalEngine:
    def test_subprocess_adapter_reads_stdout(self):
        engine = ExternalProcessOcrEngine(
            [sys.executable, "-c", "import sys; print('from-ext')"], timeout_s=20)
        out = extract_text(canvas(), engine)
        assert out.text == "from-ext\nfrom-ext\nfrom-ext\nfrom-ext"

    def test_subprocess_failure_maps_to_engine_error(self):
        engine = ExternalProcessOcrEngine(
            [sys.executable, "-c", "import sys; sys.exit(3)"], timeout_s=20)
        with pytest.raises(OcrEngineError):
            extract_text(canvas(), engine)
