"""Run configuration: JSON file plus dotted-path CLI overrides.

A config is a nested dict validated against DEFAULTS (unknown keys are
config errors). Every artifact a command writes embeds the short hash
of its resolved config together with the global seed, so identical
inputs reproduce identical outputs.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

from .corpus import GrammarSpec
from .diffusion import DenoiserConfig
from .embedder import EmbedderConfig
from .errors import ConfigError
from .sampler import (
    CFG_WEIGHT_COMPLETION, CFG_WEIGHT_LABEL, SamplerConfig,
)
from .schedule import NoiseSchedule
from .train import TrainConfig

ENV_CONFIG = "PARADIFF_CONFIG"

DEFAULTS = {
    "task": "sentiment",  # "sentiment" | "completion"
    "seed": 0,
    "workdir": "runs/default",
    "corpus": {
        "n": 4096,
        "seed": 7,
        "min_sentences": 3,
        "max_sentences": 8,
        "sentiment_rate": 0.6,
    },
    "embedder": {
        "k": 16,
        "h": 64,
        "enc_layers": 2,
        "dec_layers": 2,
        "heads": 4,
        "beta": 5e-6,
        "sub_p": 0.3,
        "max_len": 64,
        "steps": 3600,
        "batch_size": 32,
        "lr": 1e-3,
        "warmup": 100,
        "noise_ramp_frac": 0.4,
        "ckpt_every": 1000,
        "sweep_base_steps": 2200,
        "sweep_steps": 800,
    },
    "schedule": {
        "kind": "cosine",
        "noise_shift": 1.0,
        "t_min": 1e-3,
    },
    "diffusion": {
        "layers": 4,
        "heads": 4,
        "cond_len_text": 16,
        "max_cond_len": 48,
        "cfg_dropout": 0.10,
        "steps": 4000,
        "batch_size": 32,
        "lr": 1e-3,
        "warmup": 100,
        "ckpt_every": 1000,
    },
    "lm": {
        "epochs": 3,
        "batch_size": 32,
        "lr": 3e-4,
    },
    "sampler": {
        "steps": 30,
        "method": "ddim",
        "cfg_weight": None,  # null: per-task default (1.5 labels, 2 completion)
        "percentile": 0.995,
    },
    "eval": {
        "slice_n": 256,      # held-out examples per evaluation
        "aubleu_n": 64,      # examples per denoising-curve point
        "self_bleu_max": 256,
    },
}


def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a table")
            out[key] = _merge(defaults[key], val, where)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides: list | None = None) -> dict:
    """Resolve defaults <- file (path arg or $PARADIFF_CONFIG) <- overrides."""
    given = {}
    path = path or os.environ.get(ENV_CONFIG)
    if path:
        try:
            given = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    cfg = _merge(DEFAULTS, given)
    for item in overrides or []:
        cfg = apply_override(cfg, item)
    validate(cfg)
    return cfg


def apply_override(cfg: dict, item: str) -> dict:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key.path=value")
    key, _, raw = item.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are fine
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config table {part!r} in override {item!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value
    return cfg


def validate(cfg: dict):
    if cfg["task"] not in ("sentiment", "completion"):
        raise ConfigError(f"task must be sentiment or completion, got {cfg['task']!r}")
    try:
        make_schedule(cfg)
        grammar_spec(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc))


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# -- typed builders ---------------------------------------------------------

def grammar_spec(cfg: dict) -> GrammarSpec:
    c = cfg["corpus"]
    return GrammarSpec(
        min_sentences=c["min_sentences"], max_sentences=c["max_sentences"],
        sentiment_rate=c["sentiment_rate"], max_tokens=cfg["embedder"]["max_len"],
    )


def embedder_config(cfg: dict, vocab_size: int) -> EmbedderConfig:
    e = cfg["embedder"]
    return EmbedderConfig(
        vocab_size=vocab_size, k=e["k"], h=e["h"], enc_layers=e["enc_layers"],
        dec_layers=e["dec_layers"], heads=e["heads"], beta=e["beta"],
        sub_p=e["sub_p"], max_len=e["max_len"],
    )


def make_schedule(cfg: dict) -> NoiseSchedule:
    s = cfg["schedule"]
    return NoiseSchedule(kind=s["kind"], noise_shift=s["noise_shift"], t_min=s["t_min"])


def denoiser_config(cfg: dict, vocab_size: int) -> DenoiserConfig:
    d = cfg["diffusion"]
    e = cfg["embedder"]
    task = cfg["task"]
    return DenoiserConfig(
        k=e["k"], h=e["h"], layers=d["layers"], heads=d["heads"],
        cond_kind="label" if task == "sentiment" else "text",
        cond_len=1 if task == "sentiment" else d["cond_len_text"],
        num_labels=2, vocab_size=vocab_size,
        max_cond_len=d["max_cond_len"], cfg_dropout=d["cfg_dropout"],
    )


def sampler_config(cfg: dict, seed: int | None = None) -> SamplerConfig:
    s = cfg["sampler"]
    weight = s["cfg_weight"]
    if weight is None:
        weight = CFG_WEIGHT_LABEL if cfg["task"] == "sentiment" else CFG_WEIGHT_COMPLETION
    return SamplerConfig(
        steps=s["steps"], method=s["method"], cfg_weight=weight,
        percentile=s["percentile"], seed=cfg["seed"] if seed is None else seed,
    )


def train_config(cfg: dict, section: str) -> TrainConfig:
    t = cfg[section]
    return TrainConfig(
        steps=t["steps"], batch_size=t["batch_size"], lr=t["lr"],
        warmup=t["warmup"], noise_ramp_frac=t.get("noise_ramp_frac", 0.0),
        seed=cfg["seed"], ckpt_every=t["ckpt_every"],
    )


# -- standard artifact paths -------------------------------------------------

def paths(cfg: dict) -> dict:
    work = Path(cfg["workdir"])
    return {
        "corpus_dir": work / "corpus",
        "vocab": work / "corpus" / "vocab.json",
        "train": work / "corpus" / "train.jsonl",
        "valid": work / "corpus" / "valid.jsonl",
        "test": work / "corpus" / "test.jsonl",
        "embedder_ckpt": work / "ckpt" / "embedder.bin",
        "embedder_state": work / "ckpt" / "embedder.state",
        "denoiser_ckpt": work / "ckpt" / f"denoiser_{cfg['task']}.bin",
        "denoiser_state": work / "ckpt" / f"denoiser_{cfg['task']}.state",
        "lm_ckpt": work / "ckpt" / "small_lm.bin",
        "report_dir": work / "reports",
    }
