"""Building blocks of the dual-branch network with hand-written backprop.

Each forward returns (out, cache); the matching backward consumes the cache
and the upstream gradient. Shapes follow the (B, C, H, W) convention for
images and (B, L, D) for token states.
"""

from __future__ import annotations

import numpy as np

from .. import _accel

LN_EPS = 1e-5
MASK_BIAS = -1e9  # additive attention bias; exp underflows to exactly 0


# --- linear -----------------------------------------------------------------

def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(g, cache):
    x, w = cache
    return g @ w.T, x.T @ g, g.sum(axis=0)


# --- conv (stride-s, zero padded, square kernel) ------------------------------

def conv_forward(x, w, b, stride, pad):
    f, c, k, _ = w.shape
    bsz, _, h, wd = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    cols = _accel.im2col(x, k, stride, pad)  # (B, C*k*k, P)
    wm = w.reshape(f, -1)
    out = np.matmul(wm, cols) + b[:, None]  # (B, F, P)
    return out.reshape(bsz, f, oh, ow), (x.shape, cols, wm, w.shape, stride, pad)


def conv_backward(g, cache):
    x_shape, cols, wm, w_shape, stride, pad = cache
    f = w_shape[0]
    k = w_shape[2]
    bsz = x_shape[0]
    gf = g.reshape(bsz, f, -1)  # (B, F, P)
    db = gf.sum(axis=(0, 2))
    dw = np.tensordot(gf, cols, axes=([0, 2], [0, 2])).reshape(w_shape)
    dcols = np.matmul(wm.T, gf)  # (B, C*k*k, P)
    dx = _accel.col2im(dcols, x_shape, k, stride, pad)
    return dx, dw, db


# --- activations / pooling ----------------------------------------------------

def relu_forward(x):
    out = np.maximum(x, 0)
    return out, (x > 0)


def relu_backward(g, cache):
    return g * cache


def global_avg_pool_forward(x):
    # (B, C, H, W) -> (B, C)
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(g, x_shape):
    b, c, h, w = x_shape
    return np.broadcast_to(g[:, :, None, None], x_shape) / (h * w)


def dropout_forward(x, p, mode, rng):
    """Inverted dropout; identity in eval mode or when p == 0."""
    if mode != "train" or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(g, mask):
    return g if mask is None else g * mask


# --- layer norm ---------------------------------------------------------------

def layer_norm_forward(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xn = xc * inv
    return gamma * xn + beta, (xn, inv, gamma)


def layer_norm_backward(g, cache):
    xn, inv, gamma = cache
    dxn = g * gamma
    dx = inv * (dxn - dxn.mean(axis=-1, keepdims=True)
                - xn * (dxn * xn).mean(axis=-1, keepdims=True))
    reduce_axes = tuple(range(g.ndim - 1))
    return dx, (g * xn).sum(axis=reduce_axes), g.sum(axis=reduce_axes)


# --- softmax ------------------------------------------------------------------

def softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(g, sm):
    return sm * (g - (g * sm).sum(axis=-1, keepdims=True))


# --- multi-head self-attention --------------------------------------------------

def _split_heads(x, heads):
    b, l, d = x.shape
    return x.reshape(b, l, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def mhsa_forward(x, mask, p, heads):
    """x: (B, L, D); mask: (B,L) with 1 at real tokens.

    Masked keys receive an additive bias so their attention weight is exactly
    zero, making the output independent of padding content and length.
    """
    b, l, d = x.shape
    q, cq = linear_forward(x.reshape(-1, d), p["wq"], p["bq"])
    k, ck = linear_forward(x.reshape(-1, d), p["wk"], p["bk"])
    v, cv = linear_forward(x.reshape(-1, d), p["wv"], p["bv"])
    q = _split_heads(q.reshape(b, l, d), heads)
    k = _split_heads(k.reshape(b, l, d), heads)
    v = _split_heads(v.reshape(b, l, d), heads)
    scale = 1.0 / np.sqrt(d // heads)
    scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale  # (B, h, L, L)
    scores = scores + ((1.0 - mask[:, None, None, :]) * MASK_BIAS).astype(x.dtype)
    attn = softmax(scores, axis=-1)
    ctx = np.matmul(attn, v)  # (B, h, L, dh)
    merged = _merge_heads(ctx)
    out, co = linear_forward(merged.reshape(-1, d), p["wo"], p["bo"])
    cache = (cq, ck, cv, co, q, k, v, attn, scale, b, l, d, heads)
    return out.reshape(b, l, d), cache


def mhsa_backward(g, cache):
    cq, ck, cv, co, q, k, v, attn, scale, b, l, d, heads = cache
    grads = {}
    dmerged, grads["wo"], grads["bo"] = linear_backward(g.reshape(-1, d), co)
    dctx = _split_heads(dmerged.reshape(b, l, d), heads)
    dattn = np.matmul(dctx, v.transpose(0, 1, 3, 2))
    dv = np.matmul(attn.transpose(0, 1, 3, 2), dctx)
    dscores = softmax_backward(dattn, attn)
    dq = np.matmul(dscores, k) * scale
    dk = np.matmul(dscores.transpose(0, 1, 3, 2), q) * scale
    dxq, grads["wq"], grads["bq"] = linear_backward(_merge_heads(dq).reshape(-1, d), cq)
    dxk, grads["wk"], grads["bk"] = linear_backward(_merge_heads(dk).reshape(-1, d), ck)
    dxv, grads["wv"], grads["bv"] = linear_backward(_merge_heads(dv).reshape(-1, d), cv)
    dx = (dxq + dxk + dxv).reshape(b, l, d)
    return dx, grads
