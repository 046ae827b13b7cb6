"""Fast numpy inference path for the autoregressive decoder.

Incremental decoding with per-layer key/value caches; mirrors the
tensor-graph forward exactly (same weights, same math) and is checked
against it in the tests. Rows of a batch are computed independently, so
decoding a batch matches decoding each latent alone.
"""

from __future__ import annotations

import numpy as np

from .kernels import ln_forward
from .tensor import _GELU_A, _GELU_C


def _ln(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return ln_forward(x, gain, bias)[0]


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * (x * x) * x)))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class DecoderState:
    """KV-cached decoder over [latents; BOS; generated tokens]."""

    def __init__(self, model, z_batch: np.ndarray):
        cfg = model.cfg
        self.model = model
        self.heads = cfg.heads
        self.d_head = cfg.h // cfg.heads
        self.layers = model._decoder_weights()
        self.pos = model.dec_pos.data
        self.tok = model.dec_tok.weight.data
        self.lm_w = model.dec_tok.weight.data.T
        self.lm_b = model.lm_bias.data
        self.ln_f = (model.dec_ln.gain.data, model.dec_ln.bias.data)
        b, k, h = z_batch.shape
        self.k_cache = [np.zeros((b, self.heads, 0, self.d_head)) for _ in self.layers]
        self.v_cache = [np.zeros((b, self.heads, 0, self.d_head)) for _ in self.layers]
        self.pos_idx = 0
        zl = z_batch @ model.latent_in.w.data + model.latent_in.b.data
        self._prefill(zl + self.pos[:k])

    def _split(self, x: np.ndarray) -> np.ndarray:
        b, s, _ = x.shape
        return x.reshape(b, s, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def _prefill(self, x: np.ndarray):
        """Run the latent prefix through all layers with causal
        attention, filling the caches."""
        b, s, h = x.shape
        tri = np.triu(np.full((s, s), -1e30), k=1)[None, None]
        for li, lw in enumerate(self.layers):
            h1 = _ln(x, *lw["ln1"])
            q = self._split(h1 @ lw["wq"][0] + lw["wq"][1])
            ks = self._split(h1 @ lw["wk"][0] + lw["wk"][1])
            vs = self._split(h1 @ lw["wv"][0] + lw["wv"][1])
            self.k_cache[li] = ks
            self.v_cache[li] = vs
            att = _softmax(q @ ks.transpose(0, 1, 3, 2) / np.sqrt(self.d_head) + tri)
            ctx = (att @ vs).transpose(0, 2, 1, 3).reshape(b, s, h)
            x = x + ctx @ lw["wo"][0] + lw["wo"][1]
            h2 = _ln(x, *lw["ln2"])
            x = x + _gelu(h2 @ lw["fc1"][0] + lw["fc1"][1]) @ lw["fc2"][0] + lw["fc2"][1]
        self.pos_idx = s

    def step(self, tokens: np.ndarray) -> np.ndarray:
        """Feed one token per row; returns next-token logits (B, V)."""
        x = self.tok[tokens] + self.pos[self.pos_idx]
        x = x[:, None, :]
        b = x.shape[0]
        for li, lw in enumerate(self.layers):
            h1 = _ln(x, *lw["ln1"])
            q = self._split(h1 @ lw["wq"][0] + lw["wq"][1])
            ks = self._split(h1 @ lw["wk"][0] + lw["wk"][1])
            vs = self._split(h1 @ lw["wv"][0] + lw["wv"][1])
            self.k_cache[li] = np.concatenate([self.k_cache[li], ks], axis=2)
            self.v_cache[li] = np.concatenate([self.v_cache[li], vs], axis=2)
            att = _softmax(q @ self.k_cache[li].transpose(0, 1, 3, 2) / np.sqrt(self.d_head))
            ctx = (att @ self.v_cache[li]).transpose(0, 2, 1, 3).reshape(b, 1, -1)
            x = x + ctx @ lw["wo"][0] + lw["wo"][1]
            h2 = _ln(x, *lw["ln2"])
            x = x + _gelu(h2 @ lw["fc1"][0] + lw["fc1"][1]) @ lw["fc2"][0] + lw["fc2"][1]
        self.pos_idx += 1
        out = _ln(x[:, 0, :], *self.ln_f)
        return out @ self.lm_w + self.lm_b
