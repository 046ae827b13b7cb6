"""Command-line operator surface.

Subcommands: gen-corpus, train-embedder, train-diffusion, sample,
evaluate, aubleu, interpolate, ablate. Commands compose through files
only; every artifact embeds the resolved config hash and seed. Exit
codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .corpus import (
    Paragraph, Vocab, detokenize, generate_corpus, read_corpus, tokenize,
    write_corpus,
)
from .diffusion import Condition, LatentDenoiser
from .embedder import ParagraphEmbedder
from .errors import ConfigError, DataError, NumericError
from .evalkit import (
    MetricReport, SmallLM, accuracy, aubleu, eval_embedder, ppl, write_aubleu_csv,
)
from .metrics import bleu, corpus_rep_n, dist_n, ent_n, rouge_l, self_bleu
from .sampler import GenerationPipeline, SamplerConfig
from .train import (
    INDEX_TO_LABEL, train_diffusion, train_embedder, train_small_lm, write_loss_csv,
)


def _progress(tag):
    def cb(step, total, loss):
        print(f"[{tag}] step {step}/{total} loss {loss:.4f}", file=sys.stderr)
    return cb


def _load_vocab(paths) -> Vocab:
    if not paths["vocab"].exists():
        raise DataError(f"vocab file missing: {paths['vocab']} (run gen-corpus first)")
    return Vocab.load(paths["vocab"])


def _load_split(paths, split: str, vocab: Vocab) -> list:
    path = paths[split]
    if not path.exists():
        raise DataError(f"corpus split missing: {path} (run gen-corpus first)")
    return read_corpus(path, vocab)


def _load_embedder(paths) -> ParagraphEmbedder:
    if not paths["embedder_ckpt"].exists():
        raise DataError(f"embedder checkpoint missing: {paths['embedder_ckpt']}")
    model, _ = ParagraphEmbedder.load(paths["embedder_ckpt"])
    return model


def _load_lm(paths) -> SmallLM:
    if not paths["lm_ckpt"].exists():
        raise DataError(f"scoring LM checkpoint missing: {paths['lm_ckpt']}")
    lm, _ = SmallLM.load(paths["lm_ckpt"])
    return lm


def _load_pipeline(cfg, paths, ckpt_path=None) -> GenerationPipeline:
    path = Path(ckpt_path) if ckpt_path else paths["denoiser_ckpt"]
    if not path.exists():
        raise DataError(f"denoiser checkpoint missing: {path}")
    denoiser, cond_enc, normalizer, sched, _ = LatentDenoiser.load(path)
    return GenerationPipeline(_load_embedder(paths), denoiser, cond_enc, normalizer, sched)


# -- commands -----------------------------------------------------------------

def cmd_gen_corpus(cfg, args):
    paths = cfgmod.paths(cfg)
    spec = cfgmod.grammar_spec(cfg)
    n = cfg["corpus"]["n"]
    paragraphs, vocab = generate_corpus(spec, n, cfg["corpus"]["seed"])
    n_valid = n_test = max(1, round(0.02 * n))
    if n_valid + n_test >= n:
        raise ConfigError(f"corpus of {n} is too small to split 0.96/0.02/0.02")
    train = paragraphs[: n - n_valid - n_test]
    valid = paragraphs[n - n_valid - n_test : n - n_test]
    test = paragraphs[n - n_test :]
    vocab.save(paths["vocab"])
    write_corpus(paths["train"], train, vocab)
    write_corpus(paths["valid"], valid, vocab)
    write_corpus(paths["test"], test, vocab)
    print(f"wrote {len(train)}/{len(valid)}/{len(test)} paragraphs under {paths['corpus_dir']}")


def _ensure_lm(cfg, paths, vocab, train_split) -> SmallLM:
    if paths["lm_ckpt"].exists():
        lm, _ = SmallLM.load(paths["lm_ckpt"])
        return lm
    print("training scoring LM ...", file=sys.stderr)
    lm = train_small_lm(
        len(vocab), train_split, epochs=cfg["lm"]["epochs"],
        batch_size=cfg["lm"]["batch_size"], lr=cfg["lm"]["lr"], seed=cfg["seed"],
        max_len=2 * cfg["embedder"]["max_len"],
    )
    lm.save(paths["lm_ckpt"], {"config_hash": cfgmod.config_hash(cfg), "seed": cfg["seed"]})
    return lm


def cmd_train_embedder(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    train_split = _load_split(paths, "train", vocab)
    valid_split = _load_split(paths, "valid", vocab)
    chash = cfgmod.config_hash(cfg)
    lm = _ensure_lm(cfg, paths, vocab, train_split)
    report_dir = paths["report_dir"]
    slice_n = cfg["eval"]["slice_n"]

    if args.p_sweep:
        rows = run_p_sweep(cfg, vocab, train_split, valid_split[:slice_n], lm,
                           progress=True)
        out = report_dir / "p_sweep.csv"
        write_loss_csv(out, rows, ["p", "bleu_clean", "bleu_robust", "ppl_int", "s_overall"],
                       chash, cfg["seed"])
        print(f"wrote {out}")
        return

    model = ParagraphEmbedder(cfgmod.embedder_config(cfg, len(vocab)),
                              np.random.default_rng(cfg["seed"]))
    meta = {"vocab_hash": _vocab_hash(vocab), "config_hash": chash, "seed": cfg["seed"]}
    history = train_embedder(
        model, train_split, cfgmod.train_config(cfg, "embedder"),
        ckpt_path=paths["embedder_ckpt"], state_path=paths["embedder_state"],
        resume=args.resume, save_meta=meta, progress=_progress("embedder"))
    write_loss_csv(report_dir / "embedder_loss.csv", history,
                   ["step", "recon", "kl"], chash, cfg["seed"])
    report = eval_embedder(model, valid_split[:slice_n], lm, seed=cfg["seed"],
                           config={"config_hash": chash, "seed": cfg["seed"]})
    report.write_json(report_dir / "embedder_eval.json")
    report.write_csv(report_dir / "embedder_eval.csv")
    print(json.dumps(report.values, sort_keys=True))
    print(f"checkpoint: {paths['embedder_ckpt']}")


def _vocab_hash(vocab: Vocab) -> str:
    import hashlib
    return hashlib.sha256(json.dumps(vocab.tokens).encode()).hexdigest()[:12]


def run_p_sweep(cfg, vocab, train_split, eval_split, lm, progress=False):
    """Substitution-noise sweep over p = 0.0 .. 0.7.

    All variants share one noiseless warm-start base, then fine-tune at
    their own p; this keeps the cross-p comparison controlled and avoids
    re-paying the slow formation of the copy circuit eight times."""
    e = cfg["embedder"]
    base_cfg = cfgmod.embedder_config(cfg, len(vocab))
    base_cfg = type(base_cfg)(**{**base_cfg.__dict__, "sub_p": 0.0})
    base = ParagraphEmbedder(base_cfg, np.random.default_rng(cfg["seed"]))
    tcfg = cfgmod.train_config(cfg, "embedder")
    base_tcfg = type(tcfg)(**{**tcfg.__dict__, "steps": e["sweep_base_steps"],
                              "noise_ramp_frac": 0.0})
    train_embedder(base, train_split, base_tcfg,
                   progress=_progress("sweep-base") if progress else None)
    base_state = base.state_dict()
    rows = []
    for p in [round(0.1 * i, 1) for i in range(8)]:
        ecfg = type(base_cfg)(**{**base_cfg.__dict__, "sub_p": p})
        model = ParagraphEmbedder(ecfg, np.random.default_rng(cfg["seed"]))
        model.load_state_dict(base_state)
        fine_tcfg = type(tcfg)(**{**tcfg.__dict__, "steps": e["sweep_steps"],
                                  "warmup": 50, "noise_ramp_frac": 0.0})
        train_embedder(model, train_split, fine_tcfg,
                       progress=_progress(f"p={p}") if progress else None)
        rep = eval_embedder(model, eval_split, lm, seed=cfg["seed"])
        rows.append((p, rep.values["bleu_clean"], rep.values["bleu_robust"],
                     rep.values["ppl_int"], rep.values["s_overall"]))
        if progress:
            print(f"p={p}: " + " ".join(f"{k}={v:.3f}" for k, v in zip(
                ("clean", "robust", "ppl_int", "s"), rows[-1][1:])))
    return rows


def cmd_train_diffusion(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    train_split = _load_split(paths, "train", vocab)
    embedder = _load_embedder(paths)
    before = {k: v.data.copy() for k, v in embedder.named_parameters()}
    chash = cfgmod.config_hash(cfg)
    meta = {"config_hash": chash, "seed": cfg["seed"], "task": cfg["task"]}
    _, _, _, history = train_diffusion(
        embedder, train_split, cfg["task"],
        cfgmod.denoiser_config(cfg, len(vocab)), cfgmod.make_schedule(cfg),
        cfgmod.train_config(cfg, "diffusion"),
        ckpt_path=paths["denoiser_ckpt"], state_path=paths["denoiser_state"],
        resume=args.resume, save_meta=meta, progress=_progress("diffusion"))
    for key, val in embedder.named_parameters():
        if not np.array_equal(before[key], val.data):
            raise NumericError(f"embedder parameter {key} changed during stage two")
    write_loss_csv(cfgmod.paths(cfg)["report_dir"] / f"diffusion_loss_{cfg['task']}.csv",
                   history, ["step", "loss"], chash, cfg["seed"])
    print(f"checkpoint: {paths['denoiser_ckpt']}")


def _build_conditions(cfg, task, n, split_paragraphs):
    """Conditions plus per-sample record fields (intended label / reference)."""
    conds, extras = [], []
    if task == "sentiment":
        for i in range(n):
            label = INDEX_TO_LABEL[i % 2]
            conds.append(Condition.for_label(i % 2))
            extras.append({"label": label})
    else:
        usable = [p for p in split_paragraphs if p.prefix_len]
        if not usable:
            raise DataError("no paragraphs with a prefix split in this corpus")
        for i in range(n):
            p = usable[i % len(usable)]
            prefix = p.token_ids[: p.prefix_len]
            target = p.token_ids[p.prefix_len :]
            conds.append(Condition.for_text(prefix))
            extras.append({"prefix_index": i % len(usable)})
    return conds, extras


def cmd_sample(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    task = cfg["task"]
    pipeline = _load_pipeline(cfg, paths)
    split = _load_split(paths, args.split, vocab) if task == "completion" else []
    scfg = cfgmod.sampler_config(cfg, seed=args.seed if args.seed is not None else None)
    if args.label:
        if task != "sentiment":
            raise ConfigError("--label only applies to the sentiment task")
        idx = {"neg": 0, "pos": 1}[args.label]
        conds = [Condition.for_label(idx)] * args.n
        extras = [{"label": args.label}] * args.n
    else:
        conds, extras = _build_conditions(cfg, task, args.n, split)
    record = args.trajectory is not None
    results = pipeline.sample(conds, scfg, record_trajectory=record)
    chash = cfgmod.config_hash(cfg)
    out_path = Path(args.out) if args.out else paths["report_dir"] / f"samples_{task}.jsonl"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    traj_ref = str(args.trajectory) if record else None
    usable = [q for q in split if q.prefix_len]
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, res in enumerate(results):
            rec = {
                "text": detokenize(res.token_ids, vocab),
                "cond": _cond_json(conds[i], vocab),
                "seed": scfg.seed, "steps": scfg.steps, "w": scfg.cfg_weight,
                "config_hash": chash,
            }
            rec.update(extras[i])
            if task == "completion":
                p = usable[rec["prefix_index"]]
                rec["ref"] = detokenize(p.token_ids[p.prefix_len :], vocab)
                rec["prefix"] = detokenize(p.token_ids[: p.prefix_len], vocab)
            if traj_ref:
                rec["trajectory"] = traj_ref
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if record:
        _write_trajectories(args.trajectory, results, pipeline, vocab)
    print(f"wrote {len(results)} samples to {out_path}")


def _cond_json(cond: Condition, vocab: Vocab):
    if cond.kind == "label":
        return {"kind": "label", "label": INDEX_TO_LABEL[cond.label]}
    if cond.kind == "text":
        return {"kind": "text", "text": detokenize(list(cond.tokens), vocab)}
    return {"kind": "null"}


def _write_trajectories(path, results, pipeline, vocab):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i, res in enumerate(results):
            traj = res.trajectory
            for t, pred in zip(traj.times, traj.preds):
                toks = pipeline.embedder.decode_greedy(
                    pipeline.normalizer.denormalize(pred))
                fh.write(json.dumps({"sample": i, "t": t,
                                     "text": detokenize(toks, vocab)},
                                    sort_keys=True) + "\n")
    print(f"wrote trajectories to {path}")


def _read_generations(path) -> list:
    recs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                recs.append(json.loads(line))
    if not recs:
        raise DataError(f"no generations in {path}")
    return recs


def cmd_evaluate(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    lm = _load_lm(paths)
    recs = _read_generations(args.generations)
    token_lists = [tokenize(r["text"], vocab) for r in recs]
    content = [[t for t in ids if t >= 4] for ids in token_lists]
    values = {}
    values["dist_1"] = dist_n(content, 1)
    values["ent_1"] = ent_n(content, 1)
    values["rep_4"] = corpus_rep_n(content, 4)
    cap = cfg["eval"]["self_bleu_max"]
    if len(content) >= 2:
        values["self_bleu"] = self_bleu(content[:cap])
    seqs, prefix_lens = [], []
    for rec, ids in zip(recs, token_lists):
        if "prefix" in rec:
            pre = [t for t in tokenize(rec["prefix"], vocab) if t >= 4]
            seqs.append(pre + ids)
            prefix_lens.append(len(pre))
        else:
            seqs.append(ids)
            prefix_lens.append(0)
    values["ppl"] = ppl(lm, seqs, prefix_lens)
    refs = [r.get("ref") for r in recs]
    if all(r is not None for r in refs):
        ref_tokens = [[t for t in tokenize(r, vocab) if t >= 4] for r in refs]
        pairs = [(h, rt) for h, rt in zip(content, ref_tokens) if h]
        values["bleu"] = sum(bleu(h, [rt]) for h, rt in pairs) / len(pairs)
        values["rouge_l"] = sum(rouge_l(h, rt) for h, rt in pairs) / len(pairs)
    labels = [r.get("label") for r in recs]
    if all(l is not None for l in labels):
        values["acc"] = accuracy(labels, content, vocab)
    report = MetricReport(values, sample_count=len(recs),
                          config={"config_hash": cfgmod.config_hash(cfg),
                                  "seed": cfg["seed"],
                                  "generations": str(args.generations)})
    out = Path(args.out) if args.out else paths["report_dir"] / "evaluate.json"
    report.write_json(out)
    report.write_csv(out.with_suffix(".csv"))
    print(json.dumps(report.values, sort_keys=True))
    print(f"wrote {out}")


def cmd_aubleu(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    task = cfg["task"]
    pipeline = _load_pipeline(cfg, paths)
    split = _load_split(paths, args.split, vocab)
    n = min(cfg["eval"]["aubleu_n"], len(split))
    if task == "sentiment":
        slice_paras = split[:n]
        conds = [Condition.for_label({"neg": 0, "pos": 1}[p.label]) for p in slice_paras]
    else:
        usable = [p for p in split if p.prefix_len][:n]
        if not usable:
            raise DataError("no prefix-split paragraphs available")
        slice_paras = [Paragraph(p.token_ids[p.prefix_len :]) for p in usable]
        conds = [Condition.for_text(p.token_ids[: p.prefix_len]) for p in usable]

    def denoise_fn(z_t, t, cond_list):
        from .tensor import no_grad
        with no_grad():
            y = pipeline.cond_encoder.encode_batch(cond_list).detach()
        return pipeline.denoiser.denoise(z_t, t, y)

    curve, area = aubleu(pipeline.embedder, pipeline.normalizer, denoise_fn,
                         pipeline.sched, slice_paras, conds, seed=cfg["seed"])
    chash = cfgmod.config_hash(cfg)
    report_dir = paths["report_dir"]
    write_aubleu_csv(report_dir / f"aubleu_{task}.csv", curve, area, chash, cfg["seed"])
    report = MetricReport({"aubleu": area}, sample_count=len(slice_paras),
                          config={"config_hash": chash, "seed": cfg["seed"]})
    report.write_json(report_dir / f"aubleu_{task}.json")
    print(json.dumps({"aubleu": area}, sort_keys=True))
    print(f"wrote {report_dir / f'aubleu_{task}.csv'}")


def cmd_interpolate(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    embedder = _load_embedder(paths)
    lm = _load_lm(paths)
    split = _load_split(paths, args.split, vocab)
    rng = np.random.default_rng(cfg["seed"])
    perm = rng.permutation(len(split))
    n_pairs = min(args.n_pairs, len(split) // 2)
    if n_pairs < 1:
        raise DataError("need at least two paragraphs to interpolate")
    out = Path(args.out) if args.out else paths["report_dir"] / "interpolations.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    decoded_all = []
    with open(out, "w", encoding="utf-8") as fh:
        for j in range(n_pairs):
            a, b = split[perm[2 * j]], split[perm[2 * j + 1]]
            mid = embedder.interpolate(a, b)
            toks = embedder.decode_greedy(mid)
            decoded_all.append(toks)
            fh.write(json.dumps({
                "text_a": detokenize(a.token_ids, vocab),
                "text_b": detokenize(b.token_ids, vocab),
                "interpolated": detokenize(toks, vocab),
                "seed": cfg["seed"], "config_hash": cfgmod.config_hash(cfg),
            }, sort_keys=True) + "\n")
    ppl_int = ppl(lm, decoded_all)
    print(json.dumps({"ppl_int": ppl_int, "pairs": n_pairs}, sort_keys=True))
    print(f"wrote {out}")


def cmd_ablate(cfg, args):
    paths = cfgmod.paths(cfg)
    vocab = _load_vocab(paths)
    task = cfg["task"]
    split = _load_split(paths, "valid", vocab) if task == "completion" else []
    chash = cfgmod.config_hash(cfg)
    step_grid = [int(s) for s in args.step_grid.split(",")]
    rows = []

    def run_case(section, pipeline, method, steps, sched_kind):
        scfg = SamplerConfig(steps=steps, method=method,
                             cfg_weight=cfgmod.sampler_config(cfg).cfg_weight,
                             percentile=cfg["sampler"]["percentile"], seed=cfg["seed"])
        conds, extras = _build_conditions(cfg, task, args.n, split)
        results = pipeline.sample(conds, scfg)
        content = [[t for t in r.token_ids if t >= 4] for r in results]
        row = {"section": section, "method": method, "steps": steps,
               "schedule": sched_kind,
               "dist_1": dist_n(content, 1), "ent_1": ent_n(content, 1),
               "rep_4": corpus_rep_n(content, 4)}
        if task == "sentiment":
            row["relevance"] = accuracy([e["label"] for e in extras], content, vocab)
        else:
            usable = [p for p in split if p.prefix_len]
            refs = [usable[e["prefix_index"]] for e in extras]
            scores = [bleu(h, [r.token_ids[r.prefix_len :][:-1]])
                      for h, r in zip(content, refs) if h]
            row["relevance"] = sum(scores) / len(scores)
        rows.append(row)
        print(f"{section}: method={method} steps={steps} sched={sched_kind} "
              + " ".join(f"{k}={row[k]:.4f}" for k in ("relevance", "dist_1", "ent_1", "rep_4")))

    pipeline = _load_pipeline(cfg, paths)
    base_kind = pipeline.sched.kind
    for method in ("ddim", "ddpm"):
        run_case("method", pipeline, method, cfg["sampler"]["steps"], base_kind)
    for steps in step_grid:
        run_case("steps", pipeline, "ddim", steps, base_kind)
    for item in args.alt_checkpoint or []:
        kind, _, path = item.partition("=")
        alt = _load_pipeline(cfg, paths, ckpt_path=path)
        run_case("scheduler", alt, "ddim", cfg["sampler"]["steps"], kind)

    out = Path(args.out) if args.out else paths["report_dir"] / f"ablation_{task}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = ["section", "method", "steps", "schedule", "relevance",
            "dist_1", "ent_1", "rep_4"]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols + ["config_hash", "seed"])
        for row in rows:
            writer.writerow([row[c] if not isinstance(row[c], float) else repr(row[c])
                             for c in cols] + [chash, cfg["seed"]])
    print(f"wrote {out}")


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paradiff",
        description="Two-stage latent text diffusion at desk scale.")
    parser.add_argument("--config", help="JSON config path (or $PARADIFF_CONFIG)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override a config value (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-corpus", help="generate the synthetic corpus splits")

    p = sub.add_parser("train-embedder", help="train the paragraph embedder")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--p-sweep", action="store_true",
                   help="sweep substitution noise p over 0.0..0.7")

    p = sub.add_parser("train-diffusion", help="train the latent diffusion stage")
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("sample", help="generate text from noise")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--label", choices=["pos", "neg"])
    p.add_argument("--split", default="valid")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--trajectory", help="also dump per-step decoded texts to this file")

    p = sub.add_parser("evaluate", help="score a generations file")
    p.add_argument("--generations", required=True)
    p.add_argument("--out")

    p = sub.add_parser("aubleu", help="one-shot denoising BLEU curve and area")
    p.add_argument("--split", default="valid")

    p = sub.add_parser("interpolate", help="decode latent midpoints of random pairs")
    p.add_argument("--n-pairs", type=int, default=16)
    p.add_argument("--split", default="valid")
    p.add_argument("--out")

    p = sub.add_parser("ablate", help="sampler ablation sweep (method, steps, scheduler)")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--step-grid", default="5,10,20,30,50")
    p.add_argument("--alt-checkpoint", action="append", metavar="KIND=PATH",
                   help="extra denoiser checkpoint trained under another schedule")
    p.add_argument("--out")

    return parser


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train-embedder": cmd_train_embedder,
    "train-diffusion": cmd_train_diffusion,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "aubleu": cmd_aubleu,
    "interpolate": cmd_interpolate,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, args.set)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
