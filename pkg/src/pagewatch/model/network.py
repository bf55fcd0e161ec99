"""The reduced dual-branch page classifier.

Visual branch: the 960x540 normalized screenshot is area-downscaled to
240x135, run through four stride-2 conv blocks, globally average-pooled and
projected to a 576-d feature. Text branch: word ids through a 2-layer,
4-head self-attention encoder (width 312); the CLS state is projected to a
128-d embedding. The 704-d concatenation feeds a 256-unit ReLU head ending
in binary logits.

All math is numpy with hand-written backprop; ``gradcheck`` verifies it
against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .. import _accel
from ..errors import InvalidInputError
from ..imaging import NormalizedImage, OUT_H, OUT_W
from . import layers as L
from .vocab import Vocabulary, TokenSequence, tokenize


@dataclass
class ModelConfig:
    visual_dim: int = 576
    text_pooled_dim: int = 312
    text_proj_dim: int = 128
    fused_dim: int = 704
    head_hidden: int = 256
    classes: int = 2
    dropout_visual: float = 0.3
    dropout_text: float = 0.3
    dropout_fusion: float = 0.6
    conv_channels: tuple = (8, 16, 32, 64)
    conv_kernel: int = 3
    conv_stride: int = 2
    visual_input_hw: tuple = (135, 240)
    vocab_size: int = 8192
    embed_dim: int = 312
    encoder_layers: int = 2
    attn_heads: int = 4
    ffn_dim: int = 624
    max_len: int = 512
    dtype: str = "float64"

    def __post_init__(self):
        if self.fused_dim != self.visual_dim + self.text_proj_dim:
            raise InvalidInputError(
                f"fused_dim {self.fused_dim} != visual {self.visual_dim} "
                f"+ text projection {self.text_proj_dim}"
            )
        if self.text_pooled_dim != self.embed_dim:
            raise InvalidInputError("pooled dim is the encoder width")
        if self.embed_dim % self.attn_heads != 0:
            raise InvalidInputError("embed_dim must divide evenly across heads")
        if self.dtype not in ("float32", "float64"):
            raise InvalidInputError("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class PredictResult:
    probability: float  # malicious-class probability
    label: str  # "malicious" | "benign"
    logits: np.ndarray = field(repr=False, default=None)


class DualBranchModel:
    """Holds all learnable tensors; forward/backward over batches."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self._init_params(np.random.default_rng(seed))

    # -- parameter construction (declaration order defines checkpoint order) --

    def _add(self, name: str, arr: np.ndarray):
        self.params[name] = np.ascontiguousarray(arr, dtype=self.config.np_dtype)

    def _init_params(self, rng: np.random.Generator):
        cfg = self.config
        c_in = 3
        for i, c_out in enumerate(cfg.conv_channels, start=1):
            fan_in = c_in * cfg.conv_kernel ** 2
            self._add(f"vis.conv{i}.w",
                      rng.standard_normal((c_out, c_in, cfg.conv_kernel, cfg.conv_kernel))
                      * np.sqrt(2.0 / fan_in))
            self._add(f"vis.conv{i}.b", np.zeros(c_out))
            c_in = c_out
        self._add("vis.fc.w", rng.standard_normal((c_in, cfg.visual_dim))
                  * np.sqrt(2.0 / c_in))
        self._add("vis.fc.b", np.zeros(cfg.visual_dim))

        d = cfg.embed_dim
        self._add("txt.tok_emb", rng.standard_normal((cfg.vocab_size, d)) * 0.02)
        self._add("txt.pos_emb", rng.standard_normal((cfg.max_len, d)) * 0.02)
        for i in range(cfg.encoder_layers):
            p = f"txt.l{i}."
            for nm in ("wq", "wk", "wv", "wo"):
                self._add(p + nm, rng.standard_normal((d, d)) * 0.02)
            for nm in ("bq", "bk", "bv", "bo"):
                self._add(p + nm, np.zeros(d))
            self._add(p + "ln1.g", np.ones(d))
            self._add(p + "ln1.b", np.zeros(d))
            self._add(p + "ffn.w1", rng.standard_normal((d, cfg.ffn_dim))
                      * np.sqrt(2.0 / d))
            self._add(p + "ffn.b1", np.zeros(cfg.ffn_dim))
            self._add(p + "ffn.w2", rng.standard_normal((cfg.ffn_dim, d))
                      * np.sqrt(2.0 / cfg.ffn_dim))
            self._add(p + "ffn.b2", np.zeros(d))
            self._add(p + "ln2.g", np.ones(d))
            self._add(p + "ln2.b", np.zeros(d))
        self._add("txt.proj.w", rng.standard_normal((d, cfg.text_proj_dim))
                  * np.sqrt(1.0 / d))
        self._add("txt.proj.b", np.zeros(cfg.text_proj_dim))

        self._add("head.fc1.w", rng.standard_normal((cfg.fused_dim, cfg.head_hidden))
                  * np.sqrt(2.0 / cfg.fused_dim))
        self._add("head.fc1.b", np.zeros(cfg.head_hidden))
        self._add("head.fc2.w", rng.standard_normal((cfg.head_hidden, cfg.classes))
                  * np.sqrt(1.0 / cfg.head_hidden))
        self._add("head.fc2.b", np.zeros(cfg.classes))

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- preprocessing ---------------------------------------------------------

    def preprocess_visual(self, img) -> np.ndarray:
        """NormalizedImage / RGB8 array / float [0,1] array -> (3, vh, vw)."""
        px = img.pixels if isinstance(img, NormalizedImage) else img
        if px.shape[:2] != (OUT_H, OUT_W):
            raise InvalidInputError(f"visual input must be {OUT_H}x{OUT_W}")
        x = px.astype(np.float64)
        if px.dtype == np.uint8:
            x /= 255.0
        vh, vw = self.config.visual_input_hw
        small = _accel.resize_area_f64(x, vh, vw)  # (vh, vw, 3)
        return np.ascontiguousarray(small.transpose(2, 0, 1), dtype=self.config.np_dtype)

    def visual_gradient_to_input(self, d_small: np.ndarray) -> np.ndarray:
        """Push a (3, vh, vw) gradient back to (540, 960, 3) pixel space."""
        g = np.ascontiguousarray(d_small.transpose(1, 2, 0), dtype=np.float64)
        return _accel.resize_area_f64_t(g, OUT_H, OUT_W)

    # -- branch forwards --------------------------------------------------------

    def _visual_batch(self, x, mode, rng):
        cfg = self.config
        caches = []
        h = x
        for i in range(1, len(cfg.conv_channels) + 1):
            h, c_conv = L.conv_forward(h, self.params[f"vis.conv{i}.w"],
                                       self.params[f"vis.conv{i}.b"],
                                       cfg.conv_stride, cfg.conv_kernel // 2)
            h, c_relu = L.relu_forward(h)
            caches.append((c_conv, c_relu))
        g, shape = L.global_avg_pool_forward(h)
        v, c_fc = L.linear_forward(g, self.params["vis.fc.w"], self.params["vis.fc.b"])
        v, c_drop = L.dropout_forward(v, cfg.dropout_visual, mode, rng)
        return v, (caches, shape, c_fc, c_drop)

    def _visual_batch_backward(self, dv, cache):
        caches, shape, c_fc, c_drop = cache
        grads = {}
        dv = L.dropout_backward(dv, c_drop)
        dg, grads["vis.fc.w"], grads["vis.fc.b"] = L.linear_backward(dv, c_fc)
        dh = L.global_avg_pool_backward(dg, shape)
        for i in range(len(caches), 0, -1):
            c_conv, c_relu = caches[i - 1]
            dh = L.relu_backward(dh, c_relu)
            dh, grads[f"vis.conv{i}.w"], grads[f"vis.conv{i}.b"] = L.conv_backward(dh, c_conv)
        return dh, grads

    def _text_batch(self, ids, mask, mode, rng):
        cfg = self.config
        lmax = ids.shape[1]
        h = self.params["txt.tok_emb"][ids] + self.params["txt.pos_emb"][:lmax]
        h = h.astype(cfg.np_dtype)
        maskf = mask.astype(cfg.np_dtype)
        layer_caches = []
        for i in range(cfg.encoder_layers):
            p = f"txt.l{i}."
            lp = {nm: self.params[p + nm]
                  for nm in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}
            a, c_attn = L.mhsa_forward(h, maskf, lp, cfg.attn_heads)
            hn, c_ln1 = L.layer_norm_forward(h + a, self.params[p + "ln1.g"],
                                             self.params[p + "ln1.b"])
            b, l, d = hn.shape
            f1, c_f1 = L.linear_forward(hn.reshape(-1, d), self.params[p + "ffn.w1"],
                                        self.params[p + "ffn.b1"])
            r1, c_r = L.relu_forward(f1)
            f2, c_f2 = L.linear_forward(r1, self.params[p + "ffn.w2"],
                                        self.params[p + "ffn.b2"])
            ho, c_ln2 = L.layer_norm_forward(hn + f2.reshape(b, l, d),
                                             self.params[p + "ln2.g"],
                                             self.params[p + "ln2.b"])
            layer_caches.append((c_attn, c_ln1, c_f1, c_r, c_f2, c_ln2, (b, l, d)))
            h = ho
        pooled = h[:, 0, :]  # CLS position
        pooled, c_drop = L.dropout_forward(pooled, cfg.dropout_text, mode, rng)
        t, c_proj = L.linear_forward(pooled, self.params["txt.proj.w"],
                                     self.params["txt.proj.b"])
        return t, (ids, layer_caches, c_drop, c_proj, h.shape)

    def _text_batch_backward(self, dt, cache):
        cfg = self.config
        ids, layer_caches, c_drop, c_proj, h_shape = cache
        grads = {}
        dpooled, grads["txt.proj.w"], grads["txt.proj.b"] = L.linear_backward(dt, c_proj)
        dpooled = L.dropout_backward(dpooled, c_drop)
        dh = np.zeros(h_shape, dtype=cfg.np_dtype)
        dh[:, 0, :] = dpooled
        for i in range(cfg.encoder_layers - 1, -1, -1):
            p = f"txt.l{i}."
            c_attn, c_ln1, c_f1, c_r, c_f2, c_ln2, (b, l, d) = layer_caches[i]
            dsum2, grads[p + "ln2.g"], grads[p + "ln2.b"] = L.layer_norm_backward(dh, c_ln2)
            dr1, grads[p + "ffn.w2"], grads[p + "ffn.b2"] = L.linear_backward(
                dsum2.reshape(-1, d), c_f2)
            df1 = L.relu_backward(dr1, c_r)
            dhn_ffn, grads[p + "ffn.w1"], grads[p + "ffn.b1"] = L.linear_backward(df1, c_f1)
            dhn = dsum2 + dhn_ffn.reshape(b, l, d)
            dsum1, grads[p + "ln1.g"], grads[p + "ln1.b"] = L.layer_norm_backward(dhn, c_ln1)
            da, attn_grads = L.mhsa_backward(dsum1, c_attn)
            for nm, gv in attn_grads.items():
                grads[p + nm] = gv
            dh = dsum1 + da
        d_tok = np.zeros_like(self.params["txt.tok_emb"])
        np.add.at(d_tok, ids.ravel(), dh.reshape(-1, dh.shape[-1]))
        grads["txt.tok_emb"] = d_tok
        d_pos = np.zeros_like(self.params["txt.pos_emb"])
        d_pos[:dh.shape[1]] = dh.sum(axis=0)
        grads["txt.pos_emb"] = d_pos
        return grads

    def _head_batch(self, v, t, mode, rng):
        z = np.concatenate([v, t], axis=1)
        zd, c_drop = L.dropout_forward(z, self.config.dropout_fusion, mode, rng)
        h1, c_fc1 = L.linear_forward(zd, self.params["head.fc1.w"], self.params["head.fc1.b"])
        r1, c_r = L.relu_forward(h1)
        logits, c_fc2 = L.linear_forward(r1, self.params["head.fc2.w"], self.params["head.fc2.b"])
        return logits, (c_drop, c_fc1, c_r, c_fc2)

    def _head_batch_backward(self, dlogits, cache):
        c_drop, c_fc1, c_r, c_fc2 = cache
        grads = {}
        dr1, grads["head.fc2.w"], grads["head.fc2.b"] = L.linear_backward(dlogits, c_fc2)
        dh1 = L.relu_backward(dr1, c_r)
        dz, grads["head.fc1.w"], grads["head.fc1.b"] = L.linear_backward(dh1, c_fc1)
        dz = L.dropout_backward(dz, c_drop)
        dv = dz[:, : self.config.visual_dim]
        dt = dz[:, self.config.visual_dim:]
        return dv, dt, grads

    # -- full batch API -----------------------------------------------------------

    def forward_batch(self, vis, ids, mask, mode="eval", rng=None):
        """vis: (B, 3, vh, vw); ids/mask: (B, L). Returns (logits, cache)."""
        if mode == "train" and rng is None:
            raise InvalidInputError("train-mode forward needs an rng for dropout")
        v, c_vis = self._visual_batch(vis.astype(self.config.np_dtype, copy=False), mode, rng)
        t, c_txt = self._text_batch(ids, mask, mode, rng)
        logits, c_head = self._head_batch(v, t, mode, rng)
        return logits, (c_vis, c_txt, c_head)

    def backward_batch(self, dlogits, cache):
        """Returns (grads dict, gradient w.r.t. the visual input batch)."""
        c_vis, c_txt, c_head = cache
        dv, dt, grads = self._head_batch_backward(dlogits, c_head)
        grads.update(self._text_batch_backward(dt, c_txt))
        dx, vgrads = self._visual_batch_backward(dv, c_vis)
        grads.update(vgrads)
        return grads, dx

    # -- spec-level single-sample operations ----------------------------------------

    def visual_forward(self, img, mode="eval", rng=None) -> np.ndarray:
        x = self.preprocess_visual(img)[None]
        v, _ = self._visual_batch(x.astype(self.config.np_dtype), mode, rng)
        return v[0]

    def text_forward(self, tokens: TokenSequence, mode="eval", rng=None) -> np.ndarray:
        t, _ = self._text_batch(tokens.ids[None], tokens.attention_mask[None], mode, rng)
        return t[0]

    def fuse_and_classify(self, v: np.ndarray, t: np.ndarray, mode="eval", rng=None):
        """Returns (logits, probabilities) for one (576-d, 128-d) pair."""
        if v.shape != (self.config.visual_dim,):
            raise InvalidInputError(f"visual feature must be {self.config.visual_dim}-d")
        if t.shape != (self.config.text_proj_dim,):
            raise InvalidInputError(f"text embedding must be {self.config.text_proj_dim}-d")
        logits, _ = self._head_batch(v[None], t[None], mode, rng)
        return logits[0], L.softmax(logits[0])

    def predict(self, img, text: str, vocab: Vocabulary,
                max_len: int | None = None) -> PredictResult:
        """Full eval-mode forward on one (image, text) pair."""
        tokens = tokenize(text, vocab, max_len or self.config.max_len)
        x = self.preprocess_visual(img)[None]
        logits, _ = self.forward_batch(x, tokens.ids[None], tokens.attention_mask[None])
        probs = L.softmax(logits[0])
        return PredictResult(
            probability=float(probs[1]),
            label="malicious" if int(np.argmax(logits[0])) == 1 else "benign",
            logits=logits[0],
        )

    # -- (de)serialization helpers ---------------------------------------------------

    def config_json(self) -> str:
        d = asdict(self.config)
        d["conv_channels"] = list(d["conv_channels"])
        d["visual_input_hw"] = list(d["visual_input_hw"])
        return json.dumps(d)

    @staticmethod
    def config_from_json(s: str) -> ModelConfig:
        d = json.loads(s)
        d["conv_channels"] = tuple(d["conv_channels"])
        d["visual_input_hw"] = tuple(d["visual_input_hw"])
        return ModelConfig(**d)
