"""Independent brute-force oracles used by the test suite.

These deliberately avoid the package's kernel code paths: resampling is
re-derived through integral images on the refined grid (inclusion-exclusion)
and, for tiny images, through exact Fraction arithmetic; metrics get direct
pairwise/DP/coincidence computations.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------------------
# area-average resize oracles
# ---------------------------------------------------------------------------

def _axis_window_sums(p: np.ndarray, out_n: int) -> np.ndarray:
    """Exact per-window sums along axis 0 of a 2-d int64 plane.

    Refine each of the src rows into out_n subrows; window i covers refined
    rows [i*src, (i+1)*src). With A(y) = out_n * (prefix of full rows below
    y) + (y % out_n) * row[y // out_n], window sums are A(y_{i+1}) - A(y_i).
    """
    src = p.shape[0]
    ys = np.arange(out_n + 1, dtype=np.int64) * src
    q, r = np.divmod(ys, out_n)
    prefix = np.zeros((src + 1, p.shape[1]), dtype=np.int64)
    np.cumsum(p, axis=0, out=prefix[1:])
    rows = np.vstack([p, np.zeros((1, p.shape[1]), dtype=np.int64)])
    hi = out_n * prefix[q[1:]] + r[1:, None] * rows[q[1:]]
    hi -= out_n * prefix[q[:-1]]
    hi -= r[:-1, None] * rows[q[:-1]]
    return hi


def resize_area_u8_oracle(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact integer area mean via separable refined-grid prefix sums.

    Independent of the package kernels: those build overlap-weight matrices
    (or loop per pixel in numba); this derives each axis from cumulative sums
    plus a remainder term, entirely in int64, one channel at a time.
    """
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    src_h, src_w, ch = img.shape
    den = src_h * src_w
    out = np.empty((out_h, out_w, ch), dtype=np.uint8)
    for c in range(ch):
        rows = _axis_window_sums(img[:, :, c].astype(np.int64), out_h)
        cols = _axis_window_sums(rows.T, out_w).T
        out[:, :, c] = (2 * cols + den) // (2 * den)
    return out[:, :, 0] if squeeze else out


def halve_box_oracle(img: np.ndarray) -> np.ndarray:
    """Direct 2x2 box mean with round-half-up (even dims only)."""
    p = img.astype(np.int64)
    s = p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]
    return ((2 * s + 4) // 8).astype(np.uint8)


def resize_area_fraction_oracle(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Per-pixel Fraction arithmetic; only usable for small images."""
    src_h, src_w = img.shape[:2]
    ch = 1 if img.ndim == 2 else img.shape[2]
    planes = img.reshape(src_h, src_w, ch)
    out = np.empty((out_h, out_w, ch), dtype=np.uint8)
    for i in range(out_h):
        y0, y1 = Fraction(i * src_h, out_h), Fraction((i + 1) * src_h, out_h)
        for j in range(out_w):
            x0, x1 = Fraction(j * src_w, out_w), Fraction((j + 1) * src_w, out_w)
            for c in range(ch):
                acc = Fraction(0)
                for r in range(math.floor(y0), math.ceil(y1)):
                    hy = min(Fraction(r + 1), y1) - max(Fraction(r), y0)
                    if hy <= 0:
                        continue
                    for s in range(math.floor(x0), math.ceil(x1)):
                        wx = min(Fraction(s + 1), x1) - max(Fraction(s), x0)
                        if wx > 0:
                            acc += hy * wx * int(planes[r, s, c])
                mean = acc / ((y1 - y0) * (x1 - x0))
                out[i, j, c] = int(math.floor(mean + Fraction(1, 2)))
    return out if img.ndim == 3 else out[:, :, 0]


def normalize_oracle(raw: np.ndarray) -> np.ndarray:
    """Brute-force re-derivation of the whole normalization pipeline."""
    h, w = raw.shape[:2]
    if w > 1920 or h > 1080:
        scale = min(1920 / w, 1080 / h)
        sw = max(int(math.floor(w * scale + 0.5)), 1)
        sh = max(int(math.floor(h * scale + 0.5)), 1)
        scaled = resize_area_u8_oracle(raw, sh, sw)
    else:
        sw, sh, scaled = w, h, raw
    canvas = np.zeros((1080, 1920, 3), dtype=np.uint8)
    oy, ox = (1080 - sh) // 2, (1920 - sw) // 2
    canvas[oy:oy + sh, ox:ox + sw] = scaled
    return halve_box_oracle(canvas)


# ---------------------------------------------------------------------------
# metric oracles
# ---------------------------------------------------------------------------

def auroc_pairwise_oracle(scores, labels) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def dr_at_fp_sweep_oracle(scores, labels, fp_target: float) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    neg = scores[labels == 0]
    pos = scores[labels == 1]
    best = 0.0
    for t in [-np.inf] + sorted(set(neg.tolist())):
        fpr = float((neg > t).mean())
        if fpr <= fp_target:
            best = max(best, float((pos > t).mean()))
    return best


def levenshtein_table_oracle(a: str, b: str) -> int:
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[n][m]


def rouge_l_oracle(a: str, b: str) -> float:
    ta, tb = a.lower().split(), b.lower().split()
    if not ta or not tb:
        return 0.0
    n, m = len(ta), len(tb)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = d[i - 1][j - 1] + 1 if ta[i - 1] == tb[j - 1] \
                else max(d[i - 1][j], d[i][j - 1])
    lcs = d[n][m]
    if lcs == 0:
        return 0.0
    p, r = lcs / m, lcs / n
    return 2 * p * r / (p + r)


def krippendorff_oracle(matrix) -> float:
    """Direct coincidence-matrix computation with explicit loops."""
    units = [[v for v in row if v is not None] for row in matrix]
    units = [u for u in units if len(u) >= 2]
    cats = sorted({v for u in units for v in u}, key=repr)
    index = {c: i for i, c in enumerate(cats)}
    k = len(cats)
    o = [[0.0] * k for _ in range(k)]
    for u in units:
        m = len(u)
        for i in range(m):
            for j in range(m):
                if i != j:
                    o[index[u[i]]][index[u[j]]] += 1.0 / (m - 1)
    n = sum(sum(row) for row in o)
    d_o = sum(o[c][d] for c in range(k) for d in range(k) if c != d) / n
    n_c = [sum(o[c]) for c in range(k)]
    d_e = sum(n_c[c] * n_c[d] for c in range(k) for d in range(k) if c != d) \
        / (n * (n - 1))
    return 1.0 - d_o / d_e
