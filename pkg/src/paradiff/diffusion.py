"""Conditional latent diffusion backbone over the k paragraph codes.

A DiT-style transformer: self-attention across the k latent positions,
cross-attention to [time embedding; condition features], and adaptive
layer norm whose per-block regressors produce scale/shift pairs plus
residual gates. Gate regressors start at zero so every block is the
identity at initialization. The model predicts the clean (normalized)
latent signal, trained with the SNR-weighted squared error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .corpus import BOS, PAD
from .errors import NumericError
from .nn import (
    Embedding, LayerNorm, Linear, Module, MultiHeadAttention, FeedForward,
    TransformerBlock, key_padding_mask,
)
from .schedule import NoiseSchedule, alpha_sigma, snr
from .tensor import Tensor, concat, gelu, layer_norm, no_grad

OMEGA_MAX = 100.0


@dataclass(frozen=True)
class DenoiserConfig:
    k: int = 16
    h: int = 64
    layers: int = 4
    heads: int = 4
    cond_kind: str = "label"  # "label" | "text"
    cond_len: int = 1         # c: rows of condition features
    num_labels: int = 2
    vocab_size: int = 0       # needed for text conditioning
    tau_layers: int = 2
    max_cond_len: int = 48
    cfg_dropout: float = 0.10

    def __post_init__(self):
        if self.cond_kind not in ("label", "text"):
            raise ValueError(f"unknown cond_kind {self.cond_kind!r}")
        if self.cond_kind == "text" and self.vocab_size <= 0:
            raise ValueError("text conditioning needs vocab_size")
        if not 0.0 <= self.cfg_dropout <= 1.0:
            raise ValueError("cfg_dropout must be in [0, 1]")


@dataclass(frozen=True)
class Condition:
    kind: str  # "label" | "text" | "null"
    label: int | None = None
    tokens: tuple | None = None

    @staticmethod
    def for_label(label: int) -> "Condition":
        return Condition("label", label=label)

    @staticmethod
    def for_text(token_ids) -> "Condition":
        return Condition("text", tokens=tuple(token_ids))


NULL_CONDITION = Condition("null")


def cfg_dropout(cond: Condition, rng: np.random.Generator, ratio: float = 0.10) -> Condition:
    """Replace cond by the unconditional marker with probability ratio."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("cfg dropout ratio must be in [0, 1]")
    return NULL_CONDITION if rng.random() < ratio else cond


class TimeEmbed(Module):
    """Sinusoidal features of t in [0,1] (geometric frequencies 1..1e4)
    through a 2-layer MLP."""

    def __init__(self, rng, h: int):
        self.h = h
        half = h // 2
        self.freqs = np.exp(np.linspace(0.0, np.log(1e4), half))
        self.fc1 = Linear(rng, h, h)
        self.fc2 = Linear(rng, h, h)

    def __call__(self, t: np.ndarray) -> Tensor:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        ang = t[:, None] * self.freqs[None, :]
        feats = Tensor(np.concatenate([np.sin(ang), np.cos(ang)], axis=1))
        return self.fc2(gelu(self.fc1(feats)))


class ConditionEncoder(Module):
    """Maps a Condition to (c, h) features: a learned embedding per
    class label, the first c final states of a small bidirectional
    encoder for text, or a learned null row replicated c times."""

    def __init__(self, cfg: DenoiserConfig, rng: np.random.Generator):
        self.cfg = cfg
        h = cfg.h
        self.null_emb = Tensor(rng.normal(0, 0.02, (h,)), requires_grad=True)
        if cfg.cond_kind == "label":
            self.label_emb = Embedding(rng, cfg.num_labels, h)
        else:
            self.tau_tok = Embedding(rng, cfg.vocab_size, h)
            self.tau_pos = Tensor(rng.normal(0, 0.02, (cfg.max_cond_len + 2, h)), requires_grad=True)
            self.tau_blocks = [TransformerBlock(rng, h, cfg.heads) for _ in range(cfg.tau_layers)]
            self.tau_ln = LayerNorm(h)

    def encode_batch(self, conds: list) -> Tensor:
        cfg = self.cfg
        c, h = cfg.cond_len, cfg.h
        b = len(conds)
        if cfg.cond_kind == "label":
            rows = []
            for cond in conds:
                if cond.kind == "null":
                    rows.append(self.null_emb.reshape(1, 1, h))
                elif cond.kind == "label":
                    rows.append(self.label_emb(np.array([[cond.label]])))
                else:
                    raise ValueError(f"condition kind {cond.kind!r} does not match task 'label'")
            return concat(rows, axis=0)
        # text task: run tau over the non-null conditions, splice nulls in
        ids = np.full((b, 0), PAD, dtype=np.int64)
        text_rows = [i for i, cond in enumerate(conds) if cond.kind == "text"]
        if any(cond.kind not in ("text", "null") for cond in conds):
            raise ValueError("condition kind does not match task 'text'")
        feats = [None] * b
        if text_rows:
            seqs = []
            for i in text_rows:
                toks = list(conds[i].tokens)
                if len(toks) > cfg.max_cond_len:
                    raise ValueError(
                        f"condition of {len(toks)} tokens exceeds max {cfg.max_cond_len}")
                seqs.append([BOS] + toks)
            length = max(max(len(s) for s in seqs), c)
            ids = np.full((len(seqs), length), PAD, dtype=np.int64)
            for r, s in enumerate(seqs):
                ids[r, : len(s)] = s
            x = self.tau_tok(ids) + self.tau_pos[:length].reshape(1, length, cfg.h)
            mask = key_padding_mask(ids != PAD)
            for block in self.tau_blocks:
                x = block(x, mask=mask)
            x = self.tau_ln(x)[:, :c, :]
            for r, i in enumerate(text_rows):
                feats[i] = x[r : r + 1]
        null_feat = None
        for i, cond in enumerate(conds):
            if cond.kind == "null":
                if null_feat is None:
                    null_feat = (self.null_emb.reshape(1, 1, h)
                                 + Tensor(np.zeros((1, c, 1))))
                feats[i] = null_feat
        return concat(feats, axis=0)


class DiTBlock(Module):
    """Self-attention + cross-attention + MLP, each behind an adaLN
    modulation and a zero-initialized residual gate."""

    def __init__(self, rng, h: int, heads: int):
        self.attn = MultiHeadAttention(rng, h, heads)
        self.cross = MultiHeadAttention(rng, h, heads)
        self.mlp = FeedForward(rng, h)
        self.ada = Linear(rng, h, 9 * h, zero_init=True)
        self._unit = Tensor(np.ones(h))
        self._zero = Tensor(np.zeros(h))

    def _modulate(self, x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
        return layer_norm(x, self._unit, self._zero) * (1.0 + scale) + shift

    def __call__(self, x: Tensor, cond_vec: Tensor, context: Tensor) -> Tensor:
        b, h = cond_vec.shape[0], cond_vec.shape[1]
        ada = gelu(cond_vec)
        mods = self.ada(ada).reshape(b, 9, 1, h)
        x = x + mods[:, 2] * self.attn(self._modulate(x, mods[:, 0], mods[:, 1]))
        x = x + mods[:, 5] * self.cross(self._modulate(x, mods[:, 3], mods[:, 4]), kv=context)
        x = x + mods[:, 8] * self.mlp(self._modulate(x, mods[:, 6], mods[:, 7]))
        return x


class LatentDenoiser(Module):
    """F(z_t, t, y) -> predicted clean latent, in normalized space."""

    def __init__(self, cfg: DenoiserConfig, rng: np.random.Generator):
        self.cfg = cfg
        h = cfg.h
        self.time_embed = TimeEmbed(rng, h)
        self.y_proj = Linear(rng, cfg.cond_len * h, h)
        self.in_proj = Linear(rng, h, h)
        self.pos = Tensor(rng.normal(0, 0.02, (cfg.k, h)), requires_grad=True)
        self.blocks = [DiTBlock(rng, h, cfg.heads) for _ in range(cfg.layers)]
        self.final_ada = Linear(rng, h, 2 * h, zero_init=True)
        self.out_proj = Linear(rng, h, h, zero_init=True)
        self._unit = Tensor(np.ones(h))
        self._zero = Tensor(np.zeros(h))

    def forward(self, z_t: Tensor, t: np.ndarray, y: Tensor) -> Tensor:
        cfg = self.cfg
        b = z_t.shape[0]
        if z_t.shape[1] != cfg.k or z_t.shape[2] != cfg.h:
            raise ValueError(f"latent shape {z_t.shape[1:]} != ({cfg.k}, {cfg.h})")
        if y.shape[1] != cfg.cond_len:
            raise ValueError(f"condition feature rows {y.shape[1]} != c={cfg.cond_len}")
        t_emb = self.time_embed(t)                       # (B, h)
        y_flat = y.reshape(b, cfg.cond_len * cfg.h)
        cond_vec = t_emb + self.y_proj(y_flat)           # adaLN channel
        context = concat([t_emb.reshape(b, 1, cfg.h), y], axis=1)  # cross-attn channel
        x = self.in_proj(z_t) + self.pos.reshape(1, cfg.k, cfg.h)
        for block in self.blocks:
            x = block(x, cond_vec, context)
        mods = self.final_ada(gelu(cond_vec)).reshape(b, 2, 1, cfg.h)
        x = layer_norm(x, self._unit, self._zero) * (1.0 + mods[:, 0]) + mods[:, 1]
        return self.out_proj(x)

    def denoise(self, z_t: np.ndarray, t, y: Tensor | np.ndarray) -> np.ndarray:
        """Inference wrapper: numpy in, numpy out, no graph."""
        z_t = np.asarray(z_t, dtype=np.float64)
        single = z_t.ndim == 2
        if single:
            z_t = z_t[None]
        if not np.all(np.isfinite(z_t)):
            raise NumericError("denoise: non-finite input state")
        t_arr = np.full(z_t.shape[0], t, dtype=np.float64) if np.ndim(t) == 0 else np.asarray(t)
        y_t = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=np.float64))
        if y_t.ndim == 2:
            y_t = y_t.reshape(1, *y_t.shape)
        with no_grad():
            out = self.forward(Tensor(z_t), t_arr, y_t.detach())
        return out.data[0] if single else out.data

    def save(self, path, cond_encoder: "ConditionEncoder",
             normalizer: "LatentNormalizer", sched: NoiseSchedule,
             extra_meta: dict | None = None):
        params = {f"denoiser.{k}": v for k, v in self.state_dict().items()}
        params.update({f"cond.{k}": v for k, v in cond_encoder.state_dict().items()})
        params["norm.mean"] = normalizer.mean
        params["norm.scale"] = normalizer.scale
        meta = {
            "kind": "denoiser",
            "config": {
                "k": self.cfg.k, "h": self.cfg.h, "layers": self.cfg.layers,
                "heads": self.cfg.heads, "cond_kind": self.cfg.cond_kind,
                "cond_len": self.cfg.cond_len, "num_labels": self.cfg.num_labels,
                "vocab_size": self.cfg.vocab_size, "tau_layers": self.cfg.tau_layers,
                "max_cond_len": self.cfg.max_cond_len, "cfg_dropout": self.cfg.cfg_dropout,
            },
            "schedule": sched.to_dict(),
        }
        meta.update(extra_meta or {})
        ckpt.save_checkpoint(path, params, meta)

    @staticmethod
    def load(path) -> tuple["LatentDenoiser", "ConditionEncoder", "LatentNormalizer", NoiseSchedule, dict]:
        params, meta = ckpt.load_checkpoint(path)
        if meta.get("kind") != "denoiser":
            raise ValueError(f"not a denoiser checkpoint: kind={meta.get('kind')!r}")
        cfg = DenoiserConfig(**meta["config"])
        rng = np.random.default_rng(0)
        model = LatentDenoiser(cfg, rng)
        cond_enc = ConditionEncoder(cfg, rng)
        model.load_state_dict({k[len("denoiser."):]: v for k, v in params.items()
                               if k.startswith("denoiser.")})
        cond_enc.load_state_dict({k[len("cond."):]: v for k, v in params.items()
                                  if k.startswith("cond.")})
        normalizer = LatentNormalizer(params["norm.mean"], params["norm.scale"])
        sched = NoiseSchedule.from_dict(meta["schedule"])
        return model, cond_enc, normalizer, sched, meta


class LatentNormalizer:
    """Per-dimension affine map making training latents zero mean, unit
    scale, so the O(1) range assumed by dynamic thresholding holds."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        if np.any(self.scale <= 0):
            raise ValueError("normalization scale must be strictly positive")

    @staticmethod
    def fit(latents: np.ndarray) -> "LatentNormalizer":
        latents = np.asarray(latents, dtype=np.float64)
        mean = latents.mean(axis=0)
        scale = np.maximum(latents.std(axis=0), 1e-6)
        return LatentNormalizer(mean, scale)

    def normalize(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z) - self.mean) / self.scale

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * self.scale + self.mean


def diffusion_loss(model: LatentDenoiser, cond_encoder: ConditionEncoder,
                   sched: NoiseSchedule, z_batch: np.ndarray, conds: list,
                   rng: np.random.Generator, *, omega_max: float = OMEGA_MAX,
                   dropout_ratio: float | None = None) -> Tensor:
    """SNR-weighted signal-prediction loss on normalized latents.

    Per sample: t ~ U[t_min, 1], z_t = alpha z + sigma eps, loss term
    min(omega_t, omega_max) * ||F(z_t, t, y) - z||^2 / (k h), averaged
    over the batch. CFG dropout nulls each condition first.
    """
    cfg = model.cfg
    b = z_batch.shape[0]
    if b == 0:
        raise ValueError("diffusion_loss: empty batch")
    ratio = cfg.cfg_dropout if dropout_ratio is None else dropout_ratio
    conds = [cfg_dropout(c, rng, ratio) for c in conds]
    t = rng.uniform(sched.t_min, 1.0, size=b)
    eps = rng.standard_normal(z_batch.shape)
    alpha, sigma = alpha_sigma(sched, t)
    z_t = alpha[:, None, None] * z_batch + sigma[:, None, None] * eps
    omega = np.minimum(snr(sched, t), omega_max)
    y = cond_encoder.encode_batch(conds)
    pred = model.forward(Tensor(z_t), t, y)
    err = pred - Tensor(z_batch)
    per_sample = (err * err).sum(axis=(1, 2))
    loss = (Tensor(omega) * per_sample).sum() * (1.0 / (b * cfg.k * cfg.h))
    if not np.isfinite(loss.data):
        bad = int(np.flatnonzero(~np.isfinite(per_sample.data))[0]) \
            if not np.all(np.isfinite(per_sample.data)) else 0
        raise NumericError(
            f"diffusion_loss: non-finite loss (batch index {bad}, "
            f"t={t[bad]:.6f}, omega={omega[bad]:.3f})")
    return loss
