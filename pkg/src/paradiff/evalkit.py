"""Evaluation: metric reports, the small scoring LM, latent-space
quality numbers for the embedder, and the denoising-capability curve.

The scoring LM is a 2-layer causal transformer trained on the synthetic
corpus; it stands in wherever an external language model would score
fluency. The denoising curve corrupts held-out latents at a 20-point
time grid, denoises each corruption in one shot (conditional branch, no
guidance), decodes, and integrates BLEU over alpha^2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .corpus import BOS, PAD, GrammarSpec, Vocab, label_oracle, substitute_ids
from .metrics import bleu
from .nn import Embedding, LayerNorm, Linear, Module, TransformerBlock, causal_mask, key_padding_mask
from .schedule import NoiseSchedule, alpha_sigma
from .tensor import Tensor, cross_entropy, no_grad

S_OVERALL_WEIGHTS = (0.5, 0.8, -0.3)  # bleu_clean, bleu_robust, ppl_int


@dataclass
class MetricReport:
    """Named scalar metrics plus provenance (sample count, config echo)."""

    values: dict
    sample_count: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")
        for key, val in self.values.items():
            if not math.isfinite(val):
                raise ValueError(f"metric {key!r} is not finite: {val}")

    def to_dict(self) -> dict:
        return {"values": dict(self.values), "sample_count": self.sample_count,
                "config": dict(self.config)}

    def write_json(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")

    def write_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value", "sample_count", "config_hash", "seed"])
            chash = self.config.get("config_hash", "")
            seed = self.config.get("seed", "")
            for key in sorted(self.values):
                writer.writerow([key, repr(self.values[key]), self.sample_count, chash, seed])


class SmallLM(Module):
    """Causal transformer used only for perplexity scoring."""

    def __init__(self, vocab_size: int, rng: np.random.Generator,
                 h: int = 64, layers: int = 2, heads: int = 4, max_len: int = 128):
        self.vocab_size = vocab_size
        self.h = h
        self.max_len = max_len
        self.tok = Embedding(rng, vocab_size, h)
        self.pos = Tensor(rng.normal(0, 0.02, (max_len + 1, h)), requires_grad=True)
        self.blocks = [TransformerBlock(rng, h, heads) for _ in range(layers)]
        self.ln = LayerNorm(h)
        self.head = Linear(rng, h, vocab_size)

    def _logits(self, seqs: list) -> tuple[Tensor, np.ndarray, np.ndarray]:
        length = max(len(s) for s in seqs)
        if length > self.max_len:
            raise ValueError(f"sequence of {length} tokens exceeds LM max_len {self.max_len}")
        targets = np.full((len(seqs), length), PAD, dtype=np.int64)
        for i, s in enumerate(seqs):
            targets[i, : len(s)] = s
        valid = targets != PAD
        dec_in = np.full_like(targets, PAD)
        dec_in[:, 0] = BOS
        dec_in[:, 1:] = targets[:, :-1]
        dec_in[~valid] = PAD
        x = self.tok(dec_in) + self.pos[:length].reshape(1, length, self.h)
        mask = causal_mask(length) + key_padding_mask(valid)
        for block in self.blocks:
            x = block(x, mask=mask)
        return self.head(self.ln(x)), targets, valid

    def loss(self, seqs: list) -> Tensor:
        logits, targets, valid = self._logits(seqs)
        return cross_entropy(logits, targets, mask=valid)

    def token_log_probs_batch(self, seqs: list, batch: int = 64) -> list:
        """Per-token log p(x_i | x_<i) for each sequence."""
        out = []
        with no_grad():
            for i in range(0, len(seqs), batch):
                chunk = seqs[i : i + batch]
                logits, targets, valid = self._logits(chunk)
                raw = logits.data
                shifted = raw - raw.max(axis=-1, keepdims=True)
                logz = np.log(np.exp(shifted).sum(axis=-1))
                for r, s in enumerate(chunk):
                    n = len(s)
                    lp = shifted[r, np.arange(n), targets[r, :n]] - logz[r, :n]
                    out.append(lp)
        return out

    def save(self, path, extra_meta: dict | None = None):
        meta = {"kind": "small_lm",
                "config": {"vocab_size": self.vocab_size, "h": self.h,
                           "layers": len(self.blocks), "heads": self.blocks[0].attn.heads,
                           "max_len": self.max_len}}
        meta.update(extra_meta or {})
        ckpt.save_checkpoint(path, self.state_dict(), meta)

    @staticmethod
    def load(path) -> tuple["SmallLM", dict]:
        params, meta = ckpt.load_checkpoint(path)
        if meta.get("kind") != "small_lm":
            raise ValueError(f"not a small_lm checkpoint: kind={meta.get('kind')!r}")
        cfg = meta["config"]
        lm = SmallLM(cfg["vocab_size"], np.random.default_rng(0), h=cfg["h"],
                     layers=cfg["layers"], heads=cfg["heads"], max_len=cfg["max_len"])
        lm.load_state_dict(params)
        return lm, meta


def ppl(lm, sequences: list, prefix_lens: list | None = None) -> float:
    """exp(mean NLL per scored token). When a prefix length is given the
    prefix conditions the model but only the continuation is scored."""
    if not sequences:
        raise ValueError("ppl: no sequences")
    seqs = [list(s) for s in sequences]
    lps = lm.token_log_probs_batch(seqs)
    total, count = 0.0, 0
    for i, lp in enumerate(lps):
        start = 0
        if prefix_lens is not None and prefix_lens[i]:
            start = prefix_lens[i]
        sliced = lp[start:]
        total += float(sliced.sum())
        count += sliced.size
    if count == 0:
        raise ValueError("ppl: nothing to score")
    return float(np.exp(-total / count))


def accuracy(intended_labels: list, token_lists: list, vocab: Vocab,
             spec: GrammarSpec = GrammarSpec()) -> float:
    """Fraction of generations whose lexicon-rule label matches intent."""
    if len(intended_labels) != len(token_lists):
        raise ValueError("accuracy: length mismatch")
    hits = sum(1 for lab, toks in zip(intended_labels, token_lists)
               if label_oracle(list(toks), vocab, spec) == lab)
    return hits / len(intended_labels)


def eval_embedder(model, paragraphs: list, lm, *, eval_p: float = 0.3,
                  seed: int = 0, config: dict | None = None) -> MetricReport:
    """Latent-space quality: reconstruction BLEU from clean input,
    reconstruction BLEU from 30%-substituted input, perplexity of
    decoded midpoint interpolations, and their weighted summary
    s_overall = 0.5 clean + 0.8 robust - 0.3 ppl_int."""
    if not paragraphs:
        raise ValueError("eval_embedder: empty slice")
    import random as _random

    refs = [p.content_ids for p in paragraphs]
    clean_mu = model.encode_mu_batch(paragraphs)
    clean_dec = model.decode_greedy_batch(clean_mu)
    bleu_clean = _mean_bleu(clean_dec, refs)

    tok_rng = _random.Random(seed)
    corrupted = [substitute_ids(p.token_ids, eval_p, tok_rng, model.cfg.vocab_size)
                 for p in paragraphs]
    robust_mu = model.encode_mu_batch(corrupted)
    robust_dec = model.decode_greedy_batch(robust_mu)
    bleu_robust = _mean_bleu(robust_dec, refs)

    perm = np.random.default_rng(seed).permutation(len(paragraphs))
    mids = []
    for i in range(0, len(perm) - 1, 2):
        mids.append(0.5 * clean_mu[perm[i]] + 0.5 * clean_mu[perm[i + 1]])
    interp_dec = model.decode_greedy_batch(np.stack(mids))
    ppl_int = ppl(lm, interp_dec)

    wc, wr, wp = S_OVERALL_WEIGHTS
    values = {
        "bleu_clean": bleu_clean,
        "bleu_robust": bleu_robust,
        "ppl_int": ppl_int,
        "s_overall": wc * bleu_clean + wr * bleu_robust + wp * ppl_int,
    }
    return MetricReport(values, sample_count=len(paragraphs), config=config or {})


def _mean_bleu(decoded: list, refs: list) -> float:
    scores = []
    for dec, ref in zip(decoded, refs):
        hyp = [t for t in dec if t >= 4]
        if not hyp:
            scores.append(0.0)  # empty decode scores zero, not an error
            continue
        scores.append(bleu(hyp, [ref]))
    return sum(scores) / len(scores)


def aubleu(embedder, normalizer, denoise_fn, sched: NoiseSchedule,
           paragraphs: list, conds: list, *, seed: int = 0,
           n_points: int = 20) -> tuple[list, float]:
    """One-shot denoising BLEU over the time grid t = 0.05 i, i=1..20.

    denoise_fn(z_t, t, cond_list) -> predicted normalized latents; the
    conditional branch only, no guidance. Returns the curve as
    (alpha^2, bleu) pairs sorted by ascending alpha^2 and its trapezoid
    area over the alpha^2 range.
    """
    if not paragraphs:
        raise ValueError("aubleu: empty slice")
    refs = [p.content_ids for p in paragraphs]
    z = np.stack([normalizer.normalize(m) for m in embedder.encode_mu_batch(paragraphs)])
    rng = np.random.default_rng(seed)
    curve = []
    for i in range(1, n_points + 1):
        t = max(i * (1.0 / n_points), sched.t_min)
        alpha, sigma = alpha_sigma(sched, t)
        eps = rng.standard_normal(z.shape)
        z_t = alpha * z + sigma * eps
        pred = denoise_fn(z_t, t, conds)
        decoded = embedder.decode_greedy_batch(
            np.stack([normalizer.denormalize(p) for p in pred]))
        curve.append((float(alpha**2), _mean_bleu(decoded, refs)))
    curve.sort(key=lambda pair: pair[0])
    xs = np.array([a for a, _ in curve])
    ys = np.array([s for _, s in curve])
    area = float(np.trapezoid(ys, xs))
    return curve, area


def write_aubleu_csv(path, curve: list, area: float, config_hash: str = "", seed: int = 0):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha_sq", "bleu", "area", "config_hash", "seed"])
        for a, s in curve:
            writer.writerow([repr(a), repr(s), repr(area), config_hash, seed])
