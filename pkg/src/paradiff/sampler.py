"""Generation from Gaussian noise to decoded text.

Each step denoises under the condition and the null condition, blends
the two signal predictions with classifier-free guidance, clamps the
result by percentile (no rescaling), then takes a DDIM (default) or
DDPM step on the state. The final guided, thresholded prediction is
de-normalized and decoded greedily.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import NULL_CONDITION, Condition, ConditionEncoder, LatentDenoiser, LatentNormalizer
from .embedder import ParagraphEmbedder, ParagraphEmbedding
from .errors import NumericError
from .schedule import NoiseSchedule, alpha_sigma
from .tensor import no_grad

DEFAULT_PERCENTILE = 0.995
# guidance defaults per conditioning task
CFG_WEIGHT_LABEL = 1.5
CFG_WEIGHT_COMPLETION = 2.0
CFG_WEIGHT_SUMMARIZATION = 5.0


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 30
    method: str = "ddim"  # "ddim" | "ddpm"
    cfg_weight: float = CFG_WEIGHT_LABEL
    percentile: float = DEFAULT_PERCENTILE
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.method not in ("ddim", "ddpm"):
            raise ValueError(f"unknown sampler method {self.method!r}")
        if self.cfg_weight < 0:
            raise ValueError("cfg_weight must be >= 0")
        if not 0.5 < self.percentile <= 1.0:
            raise ValueError("threshold percentile must be in (0.5, 1]")


@dataclass
class Trajectory:
    """Diagnostics: (t, state z_t, prediction at t), times strictly
    decreasing from 1 to t_min."""
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    preds: list = field(default_factory=list)

    def append(self, t: float, z_t: np.ndarray, pred: np.ndarray):
        self.times.append(float(t))
        self.states.append(np.array(z_t))
        self.preds.append(np.array(pred))


@dataclass
class SampleResult:
    embedding: ParagraphEmbedding
    token_ids: list
    trajectory: Trajectory | None = None


def cfg_combine(pred_cond: np.ndarray, pred_uncond: np.ndarray, w: float) -> np.ndarray:
    """pred_uncond + w (pred_cond - pred_uncond); w=1 and w=0 return the
    respective branch exactly."""
    pred_cond = np.asarray(pred_cond)
    pred_uncond = np.asarray(pred_uncond)
    if pred_cond.shape != pred_uncond.shape:
        raise ValueError(
            f"cfg_combine shape mismatch: {pred_cond.shape} vs {pred_uncond.shape}")
    if w == 1.0:
        return pred_cond.copy()
    if w == 0.0:
        return pred_uncond.copy()
    return pred_uncond + w * (pred_cond - pred_uncond)


def dynamic_threshold(pred: np.ndarray, percentile: float = DEFAULT_PERCENTILE) -> np.ndarray:
    """Clamp to [-s, s] with s = max(1, percentile quantile of |pred|)
    (linear-interpolation quantile). No division by s."""
    pred = np.asarray(pred, dtype=np.float64)
    s = max(1.0, float(np.quantile(np.abs(pred), percentile)))
    return np.clip(pred, -s, s)


def _check_times(sched: NoiseSchedule, s: float, t: float):
    if not (sched.t_min <= s < t <= 1.0):
        raise ValueError(f"step needs t_min <= s < t <= 1, got s={s}, t={t}")


def ddim_step(z_t: np.ndarray, t: float, s: float, pred: np.ndarray,
              sched: NoiseSchedule) -> np.ndarray:
    """Deterministic update: eps_hat = (z_t - alpha_t pred)/sigma_t,
    z_s = alpha_s pred + sigma_s eps_hat."""
    if s == t:
        return np.array(z_t)
    _check_times(sched, s, t)
    a_t, sig_t = alpha_sigma(sched, t)
    if sig_t == 0.0:
        raise ZeroDivisionError("ddim_step: sigma_t is zero")
    a_s, sig_s = alpha_sigma(sched, s)
    eps_hat = (z_t - a_t * pred) / sig_t
    return a_s * pred + sig_s * eps_hat


def ddpm_step(z_t: np.ndarray, t: float, s: float, pred: np.ndarray,
              rng: np.random.Generator, sched: NoiseSchedule,
              noise: np.ndarray | None = None, eta: float = 1.0) -> np.ndarray:
    """Ancestral update: at eta=1 this is exactly the diffusion
    posterior, mean alpha_s pred + sqrt(sigma_s^2 - var) eps_hat with
    fresh noise of variance var = sigma_{t|s}^2 sigma_s^2 / sigma_t^2.
    Scaling the injected variance down with eta interpolates toward the
    deterministic ddim_step, reached exactly at eta=0."""
    _check_times(sched, s, t)
    a_t, sig_t = alpha_sigma(sched, t)
    if sig_t == 0.0:
        raise ZeroDivisionError("ddpm_step: sigma_t is zero")
    a_s, sig_s = alpha_sigma(sched, s)
    a_ts = a_t / a_s
    var_ts = sig_t**2 - a_ts**2 * sig_s**2
    var = eta**2 * var_ts * sig_s**2 / sig_t**2
    eps_hat = (z_t - a_t * pred) / sig_t
    direction = np.sqrt(max(sig_s**2 - var, 0.0))
    if noise is None:
        noise = rng.standard_normal(np.shape(z_t))
    return a_s * pred + direction * eps_hat + np.sqrt(var) * noise


class GenerationPipeline:
    """Bundles the frozen embedder with a trained denoiser stack."""

    def __init__(self, embedder: ParagraphEmbedder, denoiser: LatentDenoiser,
                 cond_encoder: ConditionEncoder, normalizer: LatentNormalizer,
                 sched: NoiseSchedule):
        self.embedder = embedder
        self.denoiser = denoiser
        self.cond_encoder = cond_encoder
        self.normalizer = normalizer
        self.sched = sched

    def sample(self, conds, config: SamplerConfig, n: int | None = None,
               record_trajectory: bool = False) -> list:
        """Generate one sample per condition (or n copies of a single
        condition). Deterministic given config.seed for ddim; sample i
        draws from its own (seed, i) stream."""
        if isinstance(conds, Condition):
            if n is None:
                raise ValueError("pass n when sampling a single condition")
            conds = [conds] * n
        conds = list(conds)
        b = len(conds)
        if b < 1:
            raise ValueError("need at least one condition")
        for cond in conds:
            kind_ok = (cond.kind == "null") or (cond.kind == self.denoiser.cfg.cond_kind)
            if not kind_ok:
                raise ValueError(
                    f"condition kind {cond.kind!r} does not match checkpoint "
                    f"task {self.denoiser.cfg.cond_kind!r}")
        cfg = self.denoiser.cfg
        sched = self.sched
        rngs = [np.random.default_rng([config.seed, i]) for i in range(b)]
        z = np.stack([r.standard_normal((cfg.k, cfg.h)) for r in rngs])
        with no_grad():
            y_cond = self.cond_encoder.encode_batch(conds).detach()
            y_null = self.cond_encoder.encode_batch([NULL_CONDITION] * b).detach()
        times = np.linspace(1.0, sched.t_min, config.steps + 1)
        trajs = [Trajectory() for _ in range(b)] if record_trajectory else None
        pred = None
        for i in range(config.steps):
            t, s = float(times[i]), float(times[i + 1])
            t_arr = np.full(b, t)
            pred_c = self.denoiser.denoise(z, t_arr, y_cond)
            if config.cfg_weight == 1.0:
                pred = pred_c.copy()
            else:
                pred_u = self.denoiser.denoise(z, t_arr, y_null)
                pred = cfg_combine(pred_c, pred_u, config.cfg_weight)
            pred = np.stack([dynamic_threshold(p, config.percentile) for p in pred])
            if not np.all(np.isfinite(pred)):
                raise NumericError(f"sample: non-finite prediction at step {i} (t={t:.4f})")
            if trajs is not None:
                for j in range(b):
                    trajs[j].append(t, z[j], pred[j])
            if config.method == "ddim":
                z = ddim_step(z, t, s, pred, sched)
            else:
                noise = np.stack([r.standard_normal((cfg.k, cfg.h)) for r in rngs])
                z = ddpm_step(z, t, s, pred, rngs[0], sched, noise=noise)
        if trajs is not None:
            for j in range(b):
                trajs[j].append(float(times[-1]), z[j], pred[j])
        final = np.stack([self.normalizer.denormalize(p) for p in pred])
        token_lists = self.embedder.decode_greedy_batch(final)
        results = []
        for j in range(b):
            results.append(SampleResult(
                embedding=ParagraphEmbedding(final[j]),
                token_ids=token_lists[j],
                trajectory=trajs[j] if trajs is not None else None,
            ))
        return results
