"""Hot numeric kernels: numba-compiled with a pure-numpy fallback.

The numba twins are selected by default; setting the environment variable
``PAGEWATCH_NO_NUMBA=1`` (or a failed numba import) falls back to the numpy
implementations. Both paths are exact for the integer kernels and
deterministic per path for the float ones. ``benchmarks/bench_kernels.py``
times the two side by side.

Area-average resampling is done in scaled-integer space: output cell i of a
src -> dst resize covers the interval [i*src, (i+1)*src) on the grid obtained
by refining each source cell into dst sub-cells, so every overlap weight is an
integer and each output pixel is an exact rational mean with denominator
src_h * src_w.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("PAGEWATCH_NO_NUMBA", "") != "1"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def overlap_weights(src: int, dst: int) -> np.ndarray:
    """Integer overlap matrix W of shape (dst, src); row i sums to src.

    W[i, r] = |[i*src, (i+1)*src) ∩ [r*dst, (r+1)*dst)| on the refined grid.
    """
    i = np.arange(dst, dtype=np.int64)[:, None]
    r = np.arange(src, dtype=np.int64)[None, :]
    lo = np.maximum(i * src, r * dst)
    hi = np.minimum((i + 1) * src, (r + 1) * dst)
    return np.maximum(hi - lo, 0)


# ---------------------------------------------------------------------------
# numpy paths
# ---------------------------------------------------------------------------

def _banded_axis_sum(p: np.ndarray, out_n: int) -> np.ndarray:
    """Overlap-weighted window sums along axis 0 of an integer-valued f64 array.

    Weights are the same interval overlaps as ``overlap_weights`` but applied
    band-by-band (an output window spans at most ceil(src/out_n)+1 source
    rows), so the work is a handful of vectorized gathers instead of a dense
    matmul. All values stay exact: products and sums are integers < 2^53.
    """
    src = p.shape[0]
    i = np.arange(out_n, dtype=np.int64)
    r0 = (i * src) // out_n
    band = -((-src) // out_n) + 1
    out = np.zeros((out_n, p.shape[1]), dtype=np.float64)
    for k in range(band):
        r = r0 + k
        valid = r < src
        lo = np.maximum(i * src, r * out_n)
        hi = np.minimum((i + 1) * src, (r + 1) * out_n)
        w = np.maximum(hi - lo, 0).astype(np.float64)
        if not valid.all():
            w = w[valid]
            out[valid] += w[:, None] * p[r[valid]]
        else:
            out += w[:, None] * p[r]
    return out


def _resize_area_u8_np(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src_h, src_w = img.shape[:2]
    flat = img.reshape(src_h, -1).astype(np.float64)  # (H, W*C), exact ints
    rows = _banded_axis_sum(flat, out_h)  # (out_h, W*C)
    rows = rows.reshape(out_h, src_w, -1).transpose(1, 0, 2).reshape(src_w, -1)
    cols = _banded_axis_sum(rows, out_w)  # (out_w, out_h*C)
    num = cols.reshape(out_w, out_h, -1).transpose(1, 0, 2).astype(np.int64)
    den = src_h * src_w
    out = (2 * num + den) // (2 * den)  # round half up; num >= 0
    return out.reshape((out_h, out_w) + img.shape[2:]).astype(np.uint8)


def _resize_area_f64_np(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src_h, src_w = img.shape[:2]
    wr = overlap_weights(src_h, out_h).astype(img.dtype) / src_h
    wc = overlap_weights(src_w, out_w).astype(img.dtype) / src_w
    flat = img.reshape(src_h, -1)
    out = wr @ flat
    out = out.reshape(out_h, src_w, -1).transpose(0, 2, 1) @ wc.T
    out = out.transpose(0, 2, 1)
    return np.ascontiguousarray(out.reshape((out_h, out_w) + img.shape[2:]))


def _resize_area_f64_t_np(grad: np.ndarray, src_h: int, src_w: int) -> np.ndarray:
    out_h, out_w = grad.shape[:2]
    wr = overlap_weights(src_h, out_h).astype(grad.dtype) / src_h
    wc = overlap_weights(src_w, out_w).astype(grad.dtype) / src_w
    flat = grad.reshape(out_h, -1)
    out = wr.T @ flat
    out = out.reshape(src_h, out_w, -1).transpose(0, 2, 1) @ wc
    out = out.transpose(0, 2, 1)
    return np.ascontiguousarray(out.reshape((src_h, src_w) + grad.shape[2:]))


def _im2col_np(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    b, c, h, w = xp.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (b, c, k, k, oh, ow), (s0, s1, s2, s3, s2 * stride, s3 * stride)
    )
    return np.ascontiguousarray(view).reshape(b, c * k * k, oh * ow)


def _col2im_np(cols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    b, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    cols = cols.reshape(b, c, k, k, oh, ow)
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += cols[:, :, ki, kj]
    return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])


# ---------------------------------------------------------------------------
# numba paths
# ---------------------------------------------------------------------------

if USE_NUMBA:

    @njit(cache=True)
    def _resize_area_u8_nb(img, out_h, out_w):
        src_h, src_w, ch = img.shape
        den = src_h * src_w
        out = np.empty((out_h, out_w, ch), dtype=np.uint8)
        for i in range(out_h):
            r0 = (i * src_h) // out_h
            r1 = ((i + 1) * src_h + out_h - 1) // out_h
            for j in range(out_w):
                c0 = (j * src_w) // out_w
                c1 = ((j + 1) * src_w + out_w - 1) // out_w
                for ci in range(ch):
                    acc = np.int64(0)
                    for r in range(r0, r1):
                        wr = min((i + 1) * src_h, (r + 1) * out_h) - max(i * src_h, r * out_h)
                        for c in range(c0, c1):
                            wc = min((j + 1) * src_w, (c + 1) * out_w) - max(j * src_w, c * out_w)
                            acc += wr * wc * img[r, c, ci]
                    out[i, j, ci] = np.uint8((2 * acc + den) // (2 * den))
        return out

    @njit(cache=True)
    def _resize_area_f64_nb(img, out_h, out_w):
        src_h, src_w, ch = img.shape
        den = 1.0 / (src_h * src_w)
        out = np.empty((out_h, out_w, ch), dtype=img.dtype)
        for i in range(out_h):
            r0 = (i * src_h) // out_h
            r1 = ((i + 1) * src_h + out_h - 1) // out_h
            for j in range(out_w):
                c0 = (j * src_w) // out_w
                c1 = ((j + 1) * src_w + out_w - 1) // out_w
                for ci in range(ch):
                    acc = 0.0
                    for r in range(r0, r1):
                        wr = min((i + 1) * src_h, (r + 1) * out_h) - max(i * src_h, r * out_h)
                        for c in range(c0, c1):
                            wc = min((j + 1) * src_w, (c + 1) * out_w) - max(j * src_w, c * out_w)
                            acc += wr * wc * img[r, c, ci]
                    out[i, j, ci] = acc * den
        return out

    @njit(cache=True)
    def _pgd_fused_step_nb(x, x0, signs_small, step, eps, fy, fx, small_out):
        """One PGD update fused with the aligned block-mean downscale.

        x, x0: (B, H, W, C) float32; signs_small: (B, H//fy, W//fx, C).
        Applies x += step*sign, projects to the eps ball and [0, 1], and
        accumulates the block means of the updated x into small_out.
        """
        bsz, hh, ww, ch = x.shape
        inv = np.float32(1.0 / (fy * fx))
        small_out[:] = 0.0
        for b in range(bsz):
            for i in range(hh):
                si = i // fy
                for j in range(ww):
                    sj = j // fx
                    for c in range(ch):
                        v = x[b, i, j, c] + step * signs_small[b, si, sj, c]
                        d = v - x0[b, i, j, c]
                        if d > eps:
                            d = eps
                        elif d < -eps:
                            d = -eps
                        v = x0[b, i, j, c] + d
                        if v < 0.0:
                            v = 0.0
                        elif v > 1.0:
                            v = 1.0
                        x[b, i, j, c] = v
                        small_out[b, si, sj, c] += v * inv

    @njit(cache=True)
    def _im2col_nb(x, k, stride, pad):
        b, c, h, w = x.shape
        hp, wp = h + 2 * pad, w + 2 * pad
        oh = (hp - k) // stride + 1
        ow = (wp - k) // stride + 1
        cols = np.zeros((b, c * k * k, oh * ow), dtype=x.dtype)
        for bi in range(b):
            for ci in range(c):
                for ki in range(k):
                    for kj in range(k):
                        row = (ci * k + ki) * k + kj
                        for oi in range(oh):
                            src_i = oi * stride + ki - pad
                            if src_i < 0 or src_i >= h:
                                continue
                            for oj in range(ow):
                                src_j = oj * stride + kj - pad
                                if 0 <= src_j < w:
                                    cols[bi, row, oi * ow + oj] = x[bi, ci, src_i, src_j]
        return cols

    @njit(cache=True)
    def _col2im_nb(cols, b, c, h, w, k, stride, pad):
        hp, wp = h + 2 * pad, w + 2 * pad
        oh = (hp - k) // stride + 1
        ow = (wp - k) // stride + 1
        x = np.zeros((b, c, h, w), dtype=cols.dtype)
        for bi in range(b):
            for ci in range(c):
                for ki in range(k):
                    for kj in range(k):
                        row = (ci * k + ki) * k + kj
                        for oi in range(oh):
                            src_i = oi * stride + ki - pad
                            if src_i < 0 or src_i >= h:
                                continue
                            for oj in range(ow):
                                src_j = oj * stride + kj - pad
                                if 0 <= src_j < w:
                                    x[bi, ci, src_i, src_j] += cols[bi, row, oi * ow + oj]
        return x


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

def resize_area_u8(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact integer area-average resize of an (H, W[, C]) uint8 image.

    Output pixel = round-half-up of the true area mean; bit-identical on the
    numba and numpy paths.
    """
    if img.dtype != np.uint8:
        raise ValueError("resize_area_u8 expects uint8 input")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    if USE_NUMBA:
        squeeze = img.ndim == 2
        x = img[:, :, None] if squeeze else img
        out = _resize_area_u8_nb(np.ascontiguousarray(x), out_h, out_w)
        return out[:, :, 0] if squeeze else out
    return _resize_area_u8_np(img, out_h, out_w)


def resize_area_f64(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Float area-average resize (exact rational mean, no rounding).

    This is a linear map; ``resize_area_f64_t`` applies its transpose (the
    gradient of this op w.r.t. its input). Integer-aligned ratios reduce to a
    block mean, taken on the fast reshape path.
    """
    src_h, src_w = img.shape[:2]
    if src_h % out_h == 0 and src_w % out_w == 0:
        fy, fx = src_h // out_h, src_w // out_w
        if img.ndim == 3:
            return img.reshape(out_h, fy, out_w, fx, -1).mean(axis=(1, 3))
        return img.reshape(out_h, fy, out_w, fx).mean(axis=(1, 3))
    if USE_NUMBA and img.dtype == np.float64:
        squeeze = img.ndim == 2
        x = img[:, :, None] if squeeze else img
        out = _resize_area_f64_nb(np.ascontiguousarray(x), out_h, out_w)
        return out[:, :, 0] if squeeze else out
    return _resize_area_f64_np(img, out_h, out_w)


def resize_area_f64_t(grad: np.ndarray, src_h: int, src_w: int) -> np.ndarray:
    """Transpose of ``resize_area_f64``: push an output-space gradient back."""
    out_h, out_w = grad.shape[:2]
    if src_h % out_h == 0 and src_w % out_w == 0:
        fy, fx = src_h // out_h, src_w // out_w
        g = np.repeat(np.repeat(grad, fy, axis=0), fx, axis=1)
        g *= 1.0 / (fy * fx)
        return g
    return _resize_area_f64_t_np(grad, src_h, src_w)


def pgd_fused_step(x: np.ndarray, x0: np.ndarray, signs_small: np.ndarray,
                   step: float, eps: float, fy: int, fx: int,
                   small_out: np.ndarray) -> None:
    """Fused sign-step + ball/range projection + block-mean downscale.

    Mutates ``x`` in place and writes the downscaled result to ``small_out``.
    Numpy fallback mirrors the numba kernel op for op.
    """
    if USE_NUMBA:
        _pgd_fused_step_nb(x, x0, signs_small, np.float32(step), np.float32(eps),
                           fy, fx, small_out)
        return
    full = np.repeat(np.repeat(signs_small, fy, axis=1), fx, axis=2)
    full *= np.float32(step)
    x += full
    delta = x - x0
    np.clip(delta, np.float32(-eps), np.float32(eps), out=delta)
    np.add(x0, delta, out=x)
    np.clip(x, 0.0, 1.0, out=x)
    b, hh, ww, ch = x.shape
    small_out[:] = x.reshape(b, hh // fy, fy, ww // fx, fx, ch).mean(
        axis=(2, 4), dtype=np.float32)


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Lower (B, C, H, W) into (B, C*k*k, OH*OW) patches for conv-as-matmul."""
    if USE_NUMBA and x.dtype in (np.float32, np.float64):
        return _im2col_nb(np.ascontiguousarray(x), k, stride, pad)
    return _im2col_np(x, k, stride, pad)


def col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    """Inverse scatter of im2col (sums overlapping contributions)."""
    if USE_NUMBA and cols.dtype in (np.float32, np.float64):
        b, c, h, w = x_shape
        return _col2im_nb(np.ascontiguousarray(cols), b, c, h, w, k, stride, pad)
    return _col2im_np(cols, x_shape, k, stride, pad)
