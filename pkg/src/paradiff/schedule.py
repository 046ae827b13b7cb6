"""Continuous-time noise schedules.

Variance preserving by construction: alpha_t^2 + sigma_t^2 = 1 for all
t. The cosine family is alpha_t = cos(pi t / 2); the beta-linear family
is the continuous interpolation of the discrete linear-beta schedule
(beta in [1e-4, 2e-2] over 1000 virtual steps). An SNR shift s != 1
divides the signal-to-noise ratio by s^2 and rebuilds (alpha, sigma)
from it, pushing emphasis toward high-noise times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

T_MIN_DEFAULT = 1e-3
_BETA_LO = 1e-4 * 1000.0
_BETA_HI = 2e-2 * 1000.0


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str = "cosine"  # "cosine" | "beta-linear"
    noise_shift: float = 1.0
    t_min: float = T_MIN_DEFAULT

    def __post_init__(self):
        if self.kind not in ("cosine", "beta-linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.noise_shift <= 0:
            raise ValueError("noise_shift must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "noise_shift": self.noise_shift, "t_min": self.t_min}

    @staticmethod
    def from_dict(d: dict) -> "NoiseSchedule":
        return NoiseSchedule(kind=d["kind"], noise_shift=d["noise_shift"], t_min=d["t_min"])


@dataclass(frozen=True)
class SchedulePoint:
    t: float
    alpha: float
    sigma: float
    snr: float


def _base_alpha_sq(sched: NoiseSchedule, t):
    if sched.kind == "cosine":
        # exact endpoint: cos(pi/2) is only ~6e-17 in floats
        a2 = np.cos(np.pi * t / 2.0) ** 2
        return np.where(t >= 1.0, 0.0, a2)
    # exp of the integrated beta rate; endpoints alpha(0)=1, alpha(1)~=0
    integral = _BETA_LO * t + 0.5 * (_BETA_HI - _BETA_LO) * t * t
    return np.exp(-integral)


def alpha_sigma(sched: NoiseSchedule, t):
    """(alpha_t, sigma_t) for t in [0, 1], scalar or array."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("t must lie in [0, 1]")
    a2 = _base_alpha_sq(sched, t)
    if sched.noise_shift != 1.0:
        s2 = 1.0 - a2
        with np.errstate(divide="ignore"):
            omega = np.where(s2 > 0.0, a2 / np.maximum(s2, 1e-300), np.inf)
        omega = omega / sched.noise_shift**2
        a2 = np.where(np.isinf(omega), 1.0, omega / (1.0 + omega))
    alpha = np.sqrt(a2)
    sigma = np.sqrt(1.0 - a2)
    if t.ndim == 0:
        return float(alpha), float(sigma)
    return alpha, sigma


def snr(sched: NoiseSchedule, t):
    """omega_t = alpha_t^2 / sigma_t^2; strictly decreasing in t.

    Computed from the base curve and divided by noise_shift^2 directly,
    so the shift identity holds exactly rather than up to an
    alpha <-> omega round trip.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < sched.t_min):
        raise ValueError(f"snr needs t >= t_min ({sched.t_min})")
    a2 = _base_alpha_sq(sched, t)
    out = a2 / (1.0 - a2) / sched.noise_shift**2
    return float(out) if t.ndim == 0 else out


def point(sched: NoiseSchedule, t: float) -> SchedulePoint:
    alpha, sigma = alpha_sigma(sched, t)
    return SchedulePoint(t=float(t), alpha=alpha, sigma=sigma, snr=alpha**2 / sigma**2)


def transition(sched: NoiseSchedule, s: float, t: float) -> tuple[float, float]:
    """Coefficients (alpha_{t|s}, sigma_{t|s}) of the s -> t transition
    kernel: alpha_{t|s} = alpha_t / alpha_s and
    sigma_{t|s}^2 = sigma_t^2 - alpha_{t|s}^2 sigma_s^2."""
    if not (sched.t_min <= s < t <= 1.0):
        raise ValueError(f"transition needs t_min <= s < t <= 1, got s={s}, t={t}")
    a_s, sig_s = alpha_sigma(sched, s)
    a_t, sig_t = alpha_sigma(sched, t)
    a_ts = a_t / a_s
    var = sig_t**2 - a_ts**2 * sig_s**2
    return a_ts, float(np.sqrt(max(var, 0.0)))


def add_noise(z: np.ndarray, t: float, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Marginal corruption z_t = alpha_t z + sigma_t eps."""
    z = np.asarray(z, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} != signal shape {z.shape}")
    if not (sched.t_min <= t <= 1.0):
        raise ValueError(f"add_noise needs t in [t_min, 1], got {t}")
    alpha, sigma = alpha_sigma(sched, t)
    return alpha * z + sigma * eps
