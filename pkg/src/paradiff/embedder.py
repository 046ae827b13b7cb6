"""Variational paragraph embedder.

A bidirectional encoder reads [k learned query slots; BOS; tokens; EOS]
and the first k final-layer states parameterize a Gaussian posterior
over k latent codes of width h. An autoregressive decoder consumes the
k codes (projected into the word-embedding space) followed by BOS and
reconstructs the clean text. Training corrupts only the encoder input
with token substitution noise; the reconstruction target stays clean.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .corpus import BOS, EOS, PAD, Paragraph, substitute_ids
from .nn import (
    Embedding, LayerNorm, Linear, Module, TransformerBlock,
    causal_mask, key_padding_mask,
)
from .tensor import Tensor, concat, cross_entropy, no_grad


@dataclass(frozen=True)
class EmbedderConfig:
    vocab_size: int
    k: int = 16
    h: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    beta: float = 5e-6
    sub_p: float = 0.3
    max_len: int = 64  # tokens per paragraph including EOS

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.h % self.heads != 0:
            raise ValueError("h must be divisible by heads")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.sub_p <= 1.0:
            raise ValueError("sub_p must be in [0, 1]")


@dataclass
class Posterior:
    mu: np.ndarray       # (k, h)
    log_var: np.ndarray  # (k, h); variance stored via its logarithm

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)


@dataclass
class ParagraphEmbedding:
    codes: np.ndarray  # (k, h)


def kl_gaussian(post: Posterior) -> float:
    """KL(N(mu, var) || N(0, I)) = 0.5 sum(mu^2 + var - log var - 1)."""
    var = post.var
    return float(0.5 * np.sum(post.mu**2 + var - post.log_var - 1.0))


def _pad_batch(seqs: list) -> tuple[np.ndarray, np.ndarray]:
    length = max(len(s) for s in seqs)
    ids = np.full((len(seqs), length), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    return ids, ids != PAD


def _token_ids(x) -> list:
    return x.token_ids if isinstance(x, Paragraph) else list(x)


class ParagraphEmbedder(Module):
    def __init__(self, cfg: EmbedderConfig, rng: np.random.Generator):
        self.cfg = cfg
        h, k, v = cfg.h, cfg.k, cfg.vocab_size
        self.latent_queries = Tensor(rng.normal(0, 0.1, (k, h)), requires_grad=True)
        self.enc_tok = Embedding(rng, v, h)
        self.enc_pos = Tensor(rng.normal(0, 0.1, (k + 1 + cfg.max_len, h)), requires_grad=True)
        self.enc_blocks = [TransformerBlock(rng, h, cfg.heads) for _ in range(cfg.enc_layers)]
        self.enc_ln = LayerNorm(h)
        self.mu_head = Linear(rng, h, h)
        # start with a small posterior variance (~e^-5) so the sampled z
        # carries signal from step one; with the tiny KL weight a unit
        # variance at init drowns mu and the decoder learns to ignore z
        self.logvar_head = Linear(rng, h, h, zero_init=True)
        self.logvar_head.b.data[:] = -5.0

        self.latent_in = Linear(rng, h, h)
        self.dec_tok = Embedding(rng, v, h)
        self.dec_pos = Tensor(rng.normal(0, 0.1, (k + cfg.max_len, h)), requires_grad=True)
        self.dec_blocks = [TransformerBlock(rng, h, cfg.heads) for _ in range(cfg.dec_layers)]
        self.dec_ln = LayerNorm(h)
        # output head tied to the decoder token embedding
        self.lm_bias = Tensor(np.zeros(v), requires_grad=True)

    def _lm_logits(self, x: Tensor) -> Tensor:
        return x @ self.dec_tok.weight.transpose(1, 0) + self.lm_bias

    # -- encoder -----------------------------------------------------------

    def _encode_forward(self, token_batch: list) -> tuple[Tensor, Tensor]:
        cfg = self.cfg
        b = len(token_batch)
        for s in token_batch:
            if len(s) > cfg.max_len:
                raise ValueError(f"input of {len(s)} tokens exceeds max_len {cfg.max_len}")
        ids, valid = _pad_batch([[BOS] + list(s) for s in token_batch])
        x_tok = self.enc_tok(ids)
        queries = self.latent_queries.reshape(1, cfg.k, cfg.h) + Tensor(np.zeros((b, 1, 1)))
        x = concat([queries, x_tok], axis=1)
        s_total = x.shape[1]
        x = x + self.enc_pos[:s_total].reshape(1, s_total, cfg.h)
        keep = np.concatenate([np.ones((b, cfg.k), dtype=bool), valid], axis=1)
        mask = key_padding_mask(keep)
        for block in self.enc_blocks:
            x = block(x, mask=mask)
        x = self.enc_ln(x)
        first_k = x[:, : cfg.k, :]
        return self.mu_head(first_k), self.logvar_head(first_k)

    def encode(self, x) -> Posterior:
        with no_grad():
            mu, logvar = self._encode_forward([_token_ids(x)])
        return Posterior(mu.data[0].copy(), logvar.data[0].copy())

    def encode_mu_batch(self, xs: list, batch: int = 64) -> np.ndarray:
        """Posterior means for many paragraphs, (N, k, h)."""
        out = np.empty((len(xs), self.cfg.k, self.cfg.h))
        with no_grad():
            for i in range(0, len(xs), batch):
                chunk = [_token_ids(x) for x in xs[i : i + batch]]
                mu, _ = self._encode_forward(chunk)
                out[i : i + len(chunk)] = mu.data
        return out

    def embed(self, x) -> ParagraphEmbedding:
        return ParagraphEmbedding(self.encode(x).mu)

    def interpolate(self, a, b) -> ParagraphEmbedding:
        """Elementwise midpoint of the two posterior means."""
        return ParagraphEmbedding(0.5 * self.encode(a).mu + 0.5 * self.encode(b).mu)

    # -- decoder (teacher forcing) ------------------------------------------

    def _decode_logits(self, z: Tensor, token_batch: list) -> tuple[Tensor, np.ndarray, np.ndarray]:
        """Logits over the token positions; targets are the clean tokens."""
        cfg = self.cfg
        b = len(token_batch)
        targets, t_valid = _pad_batch(token_batch)
        dec_in = np.full_like(targets, PAD)
        dec_in[:, 0] = BOS
        dec_in[:, 1:] = targets[:, :-1]
        dec_in[~t_valid] = PAD
        emb = self.dec_tok(dec_in)
        zl = self.latent_in(z)
        x = concat([zl, emb], axis=1)
        s_total = x.shape[1]
        x = x + self.dec_pos[:s_total].reshape(1, s_total, cfg.h)
        keep = np.concatenate([np.ones((b, cfg.k), dtype=bool), t_valid], axis=1)
        mask = causal_mask(s_total) + key_padding_mask(keep)
        for block in self.dec_blocks:
            x = block(x, mask=mask)
        x = self.dec_ln(x)
        logits = self._lm_logits(x[:, cfg.k :, :])
        return logits, targets, t_valid

    # -- losses --------------------------------------------------------------

    def vae_loss(self, xs: list, rng: np.random.Generator,
                 sub_p: float | None = None) -> tuple[Tensor, Tensor]:
        """(reconstruction CE, KL) on a batch; the trained objective is
        recon + beta * kl.

        The encoder sees substitution-corrupted tokens (rate sub_p,
        defaulting to the configured one); the decoder reconstructs the
        clean text from a reparameterized sample z = mu + sqrt(var) * eps.
        """
        cfg = self.cfg
        p = cfg.sub_p if sub_p is None else sub_p
        tok_rng = random.Random(int(rng.integers(2**63)))
        clean = [_token_ids(x) for x in xs]
        corrupted = [substitute_ids(s, p, tok_rng, cfg.vocab_size) for s in clean]
        mu, logvar = self._encode_forward(corrupted)
        eps = rng.standard_normal(mu.shape)
        z = mu + (logvar * 0.5).exp() * Tensor(eps)
        logits, targets, t_valid = self._decode_logits(z, clean)
        recon = cross_entropy(logits, targets, mask=t_valid)
        var = logvar.exp()
        kl = (mu * mu + var - logvar - 1.0).sum() * (0.5 / len(xs))
        return recon, kl

    # -- generation ----------------------------------------------------------

    def _decoder_weights(self):
        layers = []
        for blk in self.dec_blocks:
            layers.append({
                "ln1": (blk.ln1.gain.data, blk.ln1.bias.data),
                "ln2": (blk.ln2.gain.data, blk.ln2.bias.data),
                "wq": (blk.attn.wq.w.data, blk.attn.wq.b.data),
                "wk": (blk.attn.wk.w.data, blk.attn.wk.b.data),
                "wv": (blk.attn.wv.w.data, blk.attn.wv.b.data),
                "wo": (blk.attn.wo.w.data, blk.attn.wo.b.data),
                "fc1": (blk.mlp.fc1.w.data, blk.mlp.fc1.b.data),
                "fc2": (blk.mlp.fc2.w.data, blk.mlp.fc2.b.data),
            })
        return layers

    def _decode_step_logits(self, z_batch: np.ndarray, step_fn) -> list:
        """Shared greedy/stochastic decode loop over a (B, k, h) latent
        batch. step_fn(logits_row, i) -> next token id."""
        from . import infer

        cfg = self.cfg
        state = infer.DecoderState(self, z_batch)
        b = z_batch.shape[0]
        seqs: list[list[int]] = [[] for _ in range(b)]
        done = np.zeros(b, dtype=bool)
        tokens = np.full(b, BOS, dtype=np.int64)
        for _ in range(cfg.max_len - 1):
            logits = state.step(tokens)
            tokens = np.empty(b, dtype=np.int64)
            for i in range(b):
                tokens[i] = EOS if done[i] else step_fn(logits[i], i)
                if not done[i]:
                    seqs[i].append(int(tokens[i]))
                    if tokens[i] == EOS:
                        done[i] = True
            if done.all():
                break
        for i in range(b):
            if not seqs[i] or seqs[i][-1] != EOS:
                seqs[i].append(EOS)  # forced at max length
        return seqs

    def decode_greedy(self, z) -> list:
        """Deterministic decode of one (k, h) latent into token ids
        ending with EOS."""
        return self.decode_greedy_batch(np.asarray(z.codes if isinstance(z, ParagraphEmbedding) else z)[None])[0]

    def decode_greedy_batch(self, z_batch: np.ndarray) -> list:
        def pick(logits_row, _i):
            return int(np.argmax(logits_row))

        return self._decode_step_logits(np.asarray(z_batch, dtype=np.float64), pick)

    def decode_topp(self, z, rng: np.random.Generator,
                    top_p: float = 0.92, top_k: int = 50) -> list:
        """Nucleus-with-top-k sampling; deterministic given the rng."""
        if not 0.0 < top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        z = np.asarray(z.codes if isinstance(z, ParagraphEmbedding) else z)

        def pick(logits_row, _i):
            shifted = logits_row - logits_row.max()
            probs = np.exp(shifted)
            probs /= probs.sum()
            order = np.argsort(-probs, kind="stable")
            cum = np.cumsum(probs[order])
            cut = int(np.searchsorted(cum, top_p)) + 1
            keep = order[: min(cut, top_k)]
            kp = probs[keep]
            kp /= kp.sum()
            return int(rng.choice(keep, p=kp))

        return self._decode_step_logits(z[None], pick)[0]

    # -- persistence ---------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None):
        meta = {
            "kind": "embedder",
            "config": {
                "vocab_size": self.cfg.vocab_size, "k": self.cfg.k, "h": self.cfg.h,
                "enc_layers": self.cfg.enc_layers, "dec_layers": self.cfg.dec_layers,
                "heads": self.cfg.heads, "beta": self.cfg.beta, "sub_p": self.cfg.sub_p,
                "max_len": self.cfg.max_len,
            },
        }
        meta.update(extra_meta or {})
        ckpt.save_checkpoint(path, self.state_dict(), meta)

    @staticmethod
    def load(path) -> tuple["ParagraphEmbedder", dict]:
        params, meta = ckpt.load_checkpoint(path)
        if meta.get("kind") != "embedder":
            raise ValueError(f"not an embedder checkpoint: kind={meta.get('kind')!r}")
        cfg = EmbedderConfig(**meta["config"])
        model = ParagraphEmbedder(cfg, np.random.default_rng(0))
        model.load_state_dict(params)
        return model, meta
