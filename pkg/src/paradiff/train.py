"""Training loops: paragraph embedder, latent denoiser, scoring LM.

All loops are driven by one numpy Generator whose state is serialized
into the train-state file next to each periodic checkpoint, so a
resumed run replays the exact same batch and noise sequence as an
uninterrupted one. Batches are drawn as windows over a length-sorted
order to keep padding small.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .diffusion import (
    Condition, ConditionEncoder, DenoiserConfig, LatentDenoiser,
    LatentNormalizer, diffusion_loss,
)
from .embedder import ParagraphEmbedder
from .errors import DataError, NumericError
from .evalkit import SmallLM
from .optim import Adam, clip_grad_norm
from .schedule import NoiseSchedule
from .tensor import backward

LABEL_TO_INDEX = {"neg": 0, "pos": 1}
INDEX_TO_LABEL = ("neg", "pos")
NORMALIZER_FIT_LATENTS = 4096


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 4000
    batch_size: int = 32
    lr: float = 1e-3
    warmup: int = 100
    hold_frac: float = 0.7    # fraction of steps at full lr before decay
    lr_min_frac: float = 0.1  # cosine decay floor as a fraction of lr
    noise_ramp_frac: float = 0.0  # fraction of steps over which sub_p ramps in
    seed: int = 0
    grad_clip: float = 1.0
    ckpt_every: int = 1000
    log_every: int = 50


def lr_at(tcfg: TrainConfig, step: int) -> float:
    """Linear warmup, a long hold at full lr, then a cosine tail down to
    lr * lr_min_frac."""
    if step <= tcfg.warmup:
        return tcfg.lr * step / max(1, tcfg.warmup)
    hold_end = int(tcfg.steps * tcfg.hold_frac)
    if step <= hold_end:
        return tcfg.lr
    span = max(1, tcfg.steps - hold_end)
    progress = min(1.0, (step - hold_end) / span)
    floor = tcfg.lr_min_frac
    return tcfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * progress)))


def sub_p_at(tcfg: TrainConfig, step: int, target_p: float) -> float:
    """Substitution noise ramped linearly from 0 to its target over the
    first noise_ramp_frac of training (0 disables the ramp)."""
    if tcfg.noise_ramp_frac <= 0:
        return target_p
    ramp_end = max(1, int(tcfg.steps * tcfg.noise_ramp_frac))
    return target_p * min(1.0, step / ramp_end)


def _length_order(items: list, lengths: list) -> list:
    return sorted(range(len(items)), key=lambda i: (lengths[i], i))


def _window_batch(order: list, rng: np.random.Generator, batch_size: int) -> list:
    if len(order) <= batch_size:
        return list(order)
    start = int(rng.integers(0, len(order) - batch_size + 1))
    return order[start : start + batch_size]


def _save_train_state(path, opt: Adam, rng: np.random.Generator, step: int):
    arrays = {}
    for name in opt.state.m:
        arrays[f"m.{name}"] = opt.state.m[name]
        arrays[f"v.{name}"] = opt.state.v[name]
    meta = {
        "kind": "train_state",
        "step": step,
        "opt_step": opt.state.step,
        "rng_state": rng.bit_generator.state,
    }
    ckpt.save_checkpoint(path, arrays, meta)


def _load_train_state(path, opt: Adam, rng: np.random.Generator) -> int:
    arrays, meta = ckpt.load_checkpoint(path)
    if meta.get("kind") != "train_state":
        raise DataError(f"{path} is not a train-state file")
    for key, arr in arrays.items():
        kind, name = key.split(".", 1)
        (opt.state.m if kind == "m" else opt.state.v)[name] = arr
    opt.state.step = meta["opt_step"]
    rng.bit_generator.state = meta["rng_state"]
    return meta["step"]


def write_loss_csv(path, rows: list, header: list, config_hash: str = "", seed: int = 0):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["config_hash", "seed"])
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row]
                            + [config_hash, seed])


def train_embedder(model: ParagraphEmbedder, paragraphs: list, tcfg: TrainConfig,
                   *, ckpt_path=None, state_path=None, resume: bool = False,
                   save_meta: dict | None = None, progress=None) -> list:
    """Denoising-VAE training. Returns (step, recon, kl) history rows.

    A non-finite loss aborts with the last periodic checkpoint left on
    disk. Resuming restores parameters, optimizer moments and the rng.
    """
    if not paragraphs:
        raise DataError("train_embedder: empty corpus")
    opt = Adam(list(model.named_parameters()), lr=tcfg.lr)
    rng = np.random.default_rng(tcfg.seed)
    start = 0
    if resume:
        if not (ckpt_path and Path(ckpt_path).exists() and state_path
                and Path(state_path).exists()):
            raise DataError("resume requested but checkpoint/state files missing")
        params, _ = ckpt.load_checkpoint(ckpt_path)
        model.load_state_dict(params)
        start = _load_train_state(state_path, opt, rng)
    order = _length_order(paragraphs, [len(p.token_ids) for p in paragraphs])
    history = []
    beta = model.cfg.beta
    for step in range(start, tcfg.steps):
        idx = _window_batch(order, rng, tcfg.batch_size)
        batch = [paragraphs[i] for i in idx]
        opt.zero_grad()
        recon, kl = model.vae_loss(batch, rng,
                                   sub_p=sub_p_at(tcfg, step + 1, model.cfg.sub_p))
        loss = recon + kl * beta
        if not np.isfinite(loss.data):
            raise NumericError(
                f"train_embedder: non-finite loss at step {step + 1} "
                f"(recon={recon.item()!r}, kl={kl.item()!r}); last checkpoint retained")
        backward(loss)
        clip_grad_norm(opt.named_params, tcfg.grad_clip)
        opt.lr = lr_at(tcfg, step + 1)
        opt.step()
        done = step + 1
        if done % tcfg.log_every == 0 or done == tcfg.steps:
            history.append((done, recon.item(), kl.item()))
            if progress:
                progress(done, tcfg.steps, recon.item())
        if ckpt_path and (done % tcfg.ckpt_every == 0 or done == tcfg.steps):
            model.save(ckpt_path, extra_meta=save_meta)
            if state_path:
                _save_train_state(state_path, opt, rng, done)
    return history


def train_small_lm(vocab_size: int, paragraphs: list, *, epochs: int = 3,
                   batch_size: int = 32, lr: float = 3e-4, seed: int = 0,
                   max_len: int = 128) -> SmallLM:
    if not paragraphs:
        raise DataError("train_small_lm: empty corpus")
    rng = np.random.default_rng(seed)
    lm = SmallLM(vocab_size, rng, max_len=max_len)
    opt = Adam(list(lm.named_parameters()), lr=lr)
    seqs = [p.token_ids for p in paragraphs]
    order = _length_order(seqs, [len(s) for s in seqs])
    for _ in range(epochs):
        perm = rng.permutation(len(order) // batch_size + 1)
        for w in perm:
            lo = int(w) * batch_size
            window = order[lo : lo + batch_size]
            if not window:
                continue
            opt.zero_grad()
            loss = lm.loss([seqs[i] for i in window])
            backward(loss)
            clip_grad_norm(opt.named_params)
            opt.step()
    return lm


def prepare_latents(embedder: ParagraphEmbedder, paragraphs: list, task: str
                    ) -> tuple[np.ndarray, list]:
    """Latent targets and conditions for the diffusion stage.

    sentiment: z encodes the full paragraph, condition is its label.
    completion: z encodes the continuation after the prefix split,
    condition is the prefix text.
    """
    if task == "sentiment":
        zs = embedder.encode_mu_batch(paragraphs)
        conds = [Condition.for_label(LABEL_TO_INDEX[p.label]) for p in paragraphs]
        return zs, conds
    if task == "completion":
        usable = [p for p in paragraphs if p.prefix_len]
        if not usable:
            raise DataError("no paragraphs carry a prefix split")
        targets = [p.token_ids[p.prefix_len :] for p in usable]
        zs = embedder.encode_mu_batch(targets)
        conds = [Condition.for_text(p.token_ids[: p.prefix_len]) for p in usable]
        return zs, conds
    raise DataError(f"unknown task {task!r}")


def train_diffusion(embedder: ParagraphEmbedder, paragraphs: list, task: str,
                    dcfg: DenoiserConfig, sched: NoiseSchedule, tcfg: TrainConfig,
                    *, ckpt_path=None, state_path=None, resume: bool = False,
                    save_meta: dict | None = None, progress=None
                    ) -> tuple[LatentDenoiser, ConditionEncoder, LatentNormalizer, list]:
    """Stage-two training on frozen-embedder mean latents."""
    zs, conds = prepare_latents(embedder, paragraphs, task)
    normalizer = LatentNormalizer.fit(zs[:NORMALIZER_FIT_LATENTS])
    z_norm = normalizer.normalize(zs)
    init_rng = np.random.default_rng(tcfg.seed + 1)
    model = LatentDenoiser(dcfg, init_rng)
    cond_enc = ConditionEncoder(dcfg, init_rng)
    named = list(model.named_parameters()) + [
        (f"cond.{n}", p) for n, p in cond_enc.named_parameters()]
    opt = Adam(named, lr=tcfg.lr)
    rng = np.random.default_rng(tcfg.seed)
    start = 0
    if resume:
        if not (ckpt_path and Path(ckpt_path).exists() and state_path
                and Path(state_path).exists()):
            raise DataError("resume requested but checkpoint/state files missing")
        model, cond_enc, normalizer, sched, _ = LatentDenoiser.load(ckpt_path)
        named = list(model.named_parameters()) + [
            (f"cond.{n}", p) for n, p in cond_enc.named_parameters()]
        opt = Adam(named, lr=tcfg.lr)
        start = _load_train_state(state_path, opt, rng)
    history = []
    for step in range(start, tcfg.steps):
        idx = rng.integers(0, z_norm.shape[0], tcfg.batch_size)
        opt.zero_grad()
        loss = diffusion_loss(model, cond_enc, sched, z_norm[idx],
                              [conds[i] for i in idx], rng)
        backward(loss)
        clip_grad_norm(opt.named_params, tcfg.grad_clip)
        opt.lr = lr_at(tcfg, step + 1)
        opt.step()
        done = step + 1
        if done % tcfg.log_every == 0 or done == tcfg.steps:
            history.append((done, loss.item()))
            if progress:
                progress(done, tcfg.steps, loss.item())
        if ckpt_path and (done % tcfg.ckpt_every == 0 or done == tcfg.steps):
            model.save(ckpt_path, cond_enc, normalizer, sched, extra_meta=save_meta)
            if state_path:
                _save_train_state(state_path, opt, rng, done)
    return model, cond_enc, normalizer, history
