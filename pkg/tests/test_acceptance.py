"""Acceptance suite.

Every criterion below prints one PASS/FAIL line (run with `pytest -s
tests/test_acceptance.py` to watch them live). The end-to-end criteria
share one trained stack built once per session: corpus, scoring LM,
paragraph embedder, and the two conditional diffusion models. On a
single CPU the whole module takes roughly half an hour.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from paradiff.corpus import GrammarSpec, Paragraph, generate_corpus, detokenize
from paradiff.diffusion import (
    Condition, ConditionEncoder, DenoiserConfig, LatentDenoiser,
    LatentNormalizer, diffusion_loss,
)
from paradiff.embedder import EmbedderConfig, ParagraphEmbedder
from paradiff.evalkit import SmallLM, accuracy, aubleu, eval_embedder
from paradiff.metrics import (
    bleu, corpus_rep_n, dist_n, ent_n, rep_n, rouge_l, spearman,
)
from paradiff.sampler import GenerationPipeline, SamplerConfig, cfg_combine, dynamic_threshold
from paradiff.schedule import NoiseSchedule, alpha_sigma, snr, transition
from paradiff.tensor import Tensor, backward, gelu, grad_check, layer_norm, softmax
from paradiff.train import (
    TrainConfig, train_diffusion, train_embedder, train_small_lm,
)

SEED = 0
CORPUS_N = 4096
EMBEDDER_STEPS = 6000
EMBEDDER_BATCH = 16
DIFFUSION_STEPS = 4000
DIFFUSION_BATCH = 32
SWEEP_STEPS = 2500
SWEEP_GRID = [round(0.1 * i, 1) for i in range(8)]  # 0.0 .. 0.7


def report(criterion: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] {criterion}: {status} {detail}".rstrip())
    return ok


# ---------------------------------------------------------------------------
# shared trained stack
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def stack(tmp_path_factory):
    t_total = time.perf_counter()
    spec = GrammarSpec()
    paragraphs, vocab = generate_corpus(spec, CORPUS_N, SEED + 7)
    n_side = max(1, round(0.02 * CORPUS_N))
    train = paragraphs[: CORPUS_N - 2 * n_side]
    valid = paragraphs[CORPUS_N - 2 * n_side : CORPUS_N - n_side]
    test = paragraphs[CORPUS_N - n_side :]

    lm = train_small_lm(len(vocab), train, epochs=3, seed=SEED)

    ecfg = EmbedderConfig(vocab_size=len(vocab))
    embedder = ParagraphEmbedder(ecfg, np.random.default_rng(SEED))
    t0 = time.perf_counter()
    train_embedder(embedder, train,
                   TrainConfig(steps=EMBEDDER_STEPS, batch_size=EMBEDDER_BATCH,
                               seed=SEED))
    embedder_seconds = time.perf_counter() - t0

    sched = NoiseSchedule()
    dcfg_label = DenoiserConfig(k=ecfg.k, h=ecfg.h, cond_kind="label", cond_len=1,
                                num_labels=2, vocab_size=len(vocab))
    denoiser_s, cond_s, norm_s, _ = train_diffusion(
        embedder, train, "sentiment", dcfg_label, sched,
        TrainConfig(steps=DIFFUSION_STEPS, batch_size=DIFFUSION_BATCH, seed=SEED))
    sentiment = GenerationPipeline(embedder, denoiser_s, cond_s, norm_s, sched)

    dcfg_text = DenoiserConfig(k=ecfg.k, h=ecfg.h, cond_kind="text", cond_len=16,
                               vocab_size=len(vocab), max_cond_len=48)
    denoiser_c, cond_c, norm_c, _ = train_diffusion(
        embedder, train, "completion", dcfg_text, sched,
        TrainConfig(steps=DIFFUSION_STEPS, batch_size=DIFFUSION_BATCH, seed=SEED))
    completion = GenerationPipeline(embedder, denoiser_c, cond_c, norm_c, sched)

    print(f"[acceptance] stack built in {time.perf_counter() - t_total:.0f}s "
          f"(embedder {embedder_seconds:.0f}s)")
    return {
        "spec": spec, "vocab": vocab,
        "train": train, "valid": valid, "test": test,
        "lm": lm, "embedder": embedder, "sched": sched,
        "sentiment": sentiment, "completion": completion,
        "embedder_seconds": embedder_seconds,
    }


# ---------------------------------------------------------------------------
# criterion 1: schedule identities
# ---------------------------------------------------------------------------

def test_criterion_1_schedule_identities():
    t0 = time.perf_counter()
    grid = np.linspace(1e-3, 1.0, 200)
    ok = True
    for sched in (NoiseSchedule(), NoiseSchedule(noise_shift=4.0),
                  NoiseSchedule(kind="beta-linear")):
        alpha, sigma = alpha_sigma(sched, grid)
        ok &= float(np.max(np.abs(alpha**2 + sigma**2 - 1.0))) < 1e-12
    base, shifted = NoiseSchedule(), NoiseSchedule(noise_shift=4.0)
    omega_b = snr(base, grid)
    omega_s = snr(shifted, grid)
    ok &= bool(np.array_equal(omega_s, omega_b / 16.0))
    for s in np.linspace(1e-3, 0.9, 15):
        for t in np.linspace(s + 0.05, 1.0, 8):
            a_s, sig_s = alpha_sigma(base, s)
            a_t, sig_t = alpha_sigma(base, t)
            a_ts, sig_ts = transition(base, s, t)
            ok &= abs(a_ts * a_s - a_t) < 1e-12
            ok &= abs(a_ts**2 * sig_s**2 + sig_ts**2 - sig_t**2) < 1e-12
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    assert report("1 schedule-identities", ok, f"({elapsed * 1e3:.0f} ms)")


# ---------------------------------------------------------------------------
# criterion 2: gradient correctness
# ---------------------------------------------------------------------------

def test_criterion_2_gradient_correctness(small_corpus):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    g = Tensor(rng.normal(size=4), requires_grad=True)
    b = Tensor(rng.normal(size=4), requires_grad=True)
    fixed = rng.normal(size=(3, 4))
    primitives = {
        "matmul": (lambda: ((a @ w) * (a @ w)).sum(), [a, w]),
        "softmax": (lambda: (softmax(a @ w) * Tensor(fixed)).sum(), [a, w]),
        "layer_norm": (lambda: (layer_norm(a, g, b) * layer_norm(a, g, b)).sum(),
                       [a, g, b]),
        "gelu": (lambda: (gelu(a @ w)).sum(), [a, w]),
        "exp_log": (lambda: ((a * a + 0.5).log().exp()).sum(), [a]),
    }
    worst_prim = 0.0
    for f, params in primitives.values():
        worst_prim = max(worst_prim, grad_check(f, params, eps=1e-5))

    _, paragraphs, vocab = small_corpus
    ecfg = EmbedderConfig(vocab_size=len(vocab), k=2, h=8, heads=2,
                          enc_layers=1, dec_layers=1)
    emb = ParagraphEmbedder(ecfg, np.random.default_rng(0))
    init = np.random.default_rng(42)
    for _, p in emb.named_parameters():
        p.data = init.normal(0, 0.3, p.data.shape)

    def vae_f():
        recon, kl = emb.vae_loss(paragraphs[:2], np.random.default_rng(99))
        return recon + kl * 5e-6

    vae_err = grad_check(vae_f, [p for _, p in emb.named_parameters()],
                         eps=1e-4, max_coords=150, rng=np.random.default_rng(1))

    dcfg = DenoiserConfig(k=2, h=8, layers=1, heads=2, cond_kind="label",
                          cond_len=1, num_labels=2)
    drng = np.random.default_rng(5)
    den = LatentDenoiser(dcfg, drng)
    enc = ConditionEncoder(dcfg, drng)
    for _, p in list(den.named_parameters()) + list(enc.named_parameters()):
        p.data = init.normal(0, 0.3, p.data.shape)
    z = np.random.default_rng(6).normal(size=(2, 2, 8))
    conds = [Condition.for_label(0), Condition.for_label(1)]

    def diff_f():
        return diffusion_loss(den, enc, NoiseSchedule(), z, conds,
                              np.random.default_rng(11), dropout_ratio=0.0)

    diff_err = grad_check(diff_f, [p for _, p in list(den.named_parameters())
                                   + list(enc.named_parameters())],
                          eps=1e-4, max_coords=150, rng=np.random.default_rng(2))
    elapsed = time.perf_counter() - t0
    ok = worst_prim <= 1e-4 and vae_err <= 1e-3 and diff_err <= 1e-3 and elapsed < 30
    assert report("2 gradient-correctness", ok,
                  f"(primitives {worst_prim:.2e}, vae {vae_err:.2e}, "
                  f"diffusion {diff_err:.2e}, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# criterion 3: CFG algebra, thresholding, DDIM determinism
# ---------------------------------------------------------------------------

def test_criterion_3_cfg_algebra(small_corpus):
    rng = np.random.default_rng(3)
    c = rng.normal(size=(16, 64))
    u = rng.normal(size=(16, 64))
    ok = np.array_equal(cfg_combine(c, u, 1.0), c)
    ok &= np.array_equal(cfg_combine(c, u, 0.0), u)
    for w in (0.5, 1.5, 2.0, 5.0):
        lhs = cfg_combine(c, u, w)
        rhs = cfg_combine(c, u, 0.0) + w * (cfg_combine(c, u, 1.0) - cfg_combine(c, u, 0.0))
        ok &= np.array_equal(lhs, rhs)
    for _ in range(10):
        z = rng.normal(size=1024) * rng.uniform(0.5, 4)
        out = dynamic_threshold(z)
        ok &= bool(np.all(np.abs(out) <= np.abs(z) + 1e-15))
        small = np.abs(z) <= 1.0
        ok &= bool(np.array_equal(out[small], z[small]))

    # DDIM end to end is a pure function of the seed (untrained weights
    # suffice for the determinism contract)
    _, _, vocab = small_corpus
    ecfg = EmbedderConfig(vocab_size=len(vocab), k=4, h=32, heads=4,
                          enc_layers=1, dec_layers=1)
    emb = ParagraphEmbedder(ecfg, np.random.default_rng(0))
    dcfg = DenoiserConfig(k=4, h=32, layers=1, heads=4, cond_kind="label",
                          cond_len=1, num_labels=2)
    drng = np.random.default_rng(1)
    pipe = GenerationPipeline(emb, LatentDenoiser(dcfg, drng),
                              ConditionEncoder(dcfg, drng),
                              LatentNormalizer(np.zeros((4, 32)), np.ones((4, 32))),
                              NoiseSchedule())
    scfg = SamplerConfig(steps=8, cfg_weight=1.5, seed=123)
    r1 = pipe.sample(Condition.for_label(1), scfg, n=3)
    r2 = pipe.sample(Condition.for_label(1), scfg, n=3)
    for a, b in zip(r1, r2):
        ok &= a.token_ids == b.token_ids
        ok &= np.array_equal(a.embedding.codes, b.embedding.codes)
    assert report("3 cfg-thresholding-determinism", ok)


# ---------------------------------------------------------------------------
# criterion 4: metric oracles
# ---------------------------------------------------------------------------

def test_criterion_4_metric_oracles():
    checks = []
    # BLEU brevity case, hand value e^{-1/4}
    checks.append(round(bleu("a b c d".split(), ["a b c d e".split()]), 4) == 77.8801)
    # ROUGE-L LCS F-measure with beta^2 = 1.44: P=1, R=2/3 gives 77.2152
    # (independent recomputation; the F formula admits no reading that
    # yields the 81.06 sometimes quoted for this case)
    checks.append(round(rouge_l(["a", "c"], ["a", "b", "c"]), 4) == 77.2152)
    checks.append(rep_n(["x"] * 7, 4) == pytest.approx(0.75))
    checks.append(ent_n([["a", "b", "a", "b"]], 1) == pytest.approx(math.log(2), abs=1e-12))
    checks.append(dist_n([["a", "a", "b"]], 1) == pytest.approx(2 / 3, abs=1e-12))
    assert report("4 metric-oracles", all(checks), f"({sum(checks)}/5 cases)")


# ---------------------------------------------------------------------------
# criterion 5: end-to-end embedder quality (+ p-sweep ordering)
# ---------------------------------------------------------------------------

def test_criterion_5_embedder_quality(stack):
    rep = eval_embedder(stack["embedder"], stack["valid"], stack["lm"], seed=SEED)
    clean = rep.values["bleu_clean"]
    robust = rep.values["bleu_robust"]
    seconds = stack["embedder_seconds"]
    ok = clean >= 90.0 and robust >= 60.0
    ok &= EMBEDDER_STEPS <= 20_000 and seconds < 900
    assert report("5 embedder-quality", ok,
                  f"(clean {clean:.2f} robust {robust:.2f} "
                  f"steps {EMBEDDER_STEPS} time {seconds:.0f}s)")


@pytest.fixture(scope="session")
def p_sweep(stack):
    rows = []
    for p in SWEEP_GRID:
        ecfg = EmbedderConfig(vocab_size=len(stack["vocab"]), sub_p=p)
        model = ParagraphEmbedder(ecfg, np.random.default_rng(SEED))
        train_embedder(model, stack["train"],
                       TrainConfig(steps=SWEEP_STEPS, batch_size=EMBEDDER_BATCH,
                                   seed=SEED))
        rep = eval_embedder(model, stack["valid"], stack["lm"], seed=SEED)
        rows.append((p, rep.values["bleu_clean"], rep.values["bleu_robust"],
                     rep.values["ppl_int"], rep.values["s_overall"]))
        print(f"[acceptance] p-sweep p={p}: clean {rows[-1][1]:.2f} "
              f"robust {rows[-1][2]:.2f} ppl_int {rows[-1][3]:.2f}")
    return rows


def test_criterion_5b_p_sweep_ordering(p_sweep):
    cleans = [r[1] for r in p_sweep]
    robusts = [r[2] for r in p_sweep]
    # robust reconstruction never beats clean by more than noise
    ok = all(r <= c + 5.0 for c, r in zip(cleans, robusts))
    # conversion quality degrades as training corruption grows: downward
    # trend across the grid with a small per-step noise allowance
    ok &= all(cleans[i + 1] <= cleans[i] + 1.5 for i in range(len(cleans) - 1))
    ok &= cleans[-1] < cleans[0]
    # the local-smoothness payoff of training with noise: a model trained
    # at the evaluation corruption level beats the noiseless one
    ok &= robusts[3] > robusts[0]
    assert report("5b p-sweep-ordering", ok,
                  "(clean " + "/".join(f"{c:.0f}" for c in cleans)
                  + " robust " + "/".join(f"{r:.0f}" for r in robusts) + ")")


# ---------------------------------------------------------------------------
# criterion 6: sentiment control
# ---------------------------------------------------------------------------

def test_criterion_6_sentiment_control(stack):
    t0 = time.perf_counter()
    n = 512
    conds = [Condition.for_label(i % 2) for i in range(n)]
    labels = ["neg" if i % 2 == 0 else "pos" for i in range(n)]
    scfg = SamplerConfig(steps=30, method="ddim", cfg_weight=1.5, seed=SEED)
    results = stack["sentiment"].sample(conds, scfg)
    content = [[t for t in r.token_ids if t >= 4] for r in results]
    acc = accuracy(labels, content, stack["vocab"], stack["spec"])
    gen_rep4 = corpus_rep_n(content, 4)
    corpus_rep4 = corpus_rep_n([p.content_ids for p in stack["test"]], 4)
    elapsed = time.perf_counter() - t0
    ok = acc >= 0.90 and gen_rep4 <= 2.0 * corpus_rep4 and elapsed < 600
    assert report("6 sentiment-control", ok,
                  f"(acc {acc:.3f} rep4 {gen_rep4:.4f} vs corpus {corpus_rep4:.4f}, "
                  f"{elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# criterion 7: degeneration contrast under a repetitive prefix
# ---------------------------------------------------------------------------

def test_criterion_7_degeneration_contrast(stack):
    vocab = stack["vocab"]
    tid = vocab.token_to_id
    sentence = ["the", "room", "was", "really", "clean", "."]
    prefix = sentence * 3  # deliberately repetitive prompt
    n = 128
    scfg = SamplerConfig(steps=30, method="ddim", cfg_weight=2.0, seed=SEED)
    cond = Condition.for_text([tid[w] for w in prefix])
    results = stack["completion"].sample(cond, scfg, n=n)
    prefix_ids = [tid[w] for w in prefix]
    diffusion_rep = np.mean([
        rep_n(prefix_ids + [t for t in r.token_ids if t >= 4], 4) for r in results])

    # the same decoder, greedy, with no latent conditioning (zero codes)
    emb = stack["embedder"]
    from paradiff.infer import DecoderState
    state = DecoderState(emb, np.zeros((1, emb.cfg.k, emb.cfg.h)))
    toks = [0] + prefix_ids  # BOS then the forced prefix
    for t in toks[:-1]:
        state.step(np.array([t]))
    cur = toks[-1]
    ar_continuation = []
    for _ in range(emb.cfg.max_len - 1):
        logits = state.step(np.array([cur]))
        cur = int(np.argmax(logits[0]))
        if cur == 1:  # EOS
            break
        ar_continuation.append(cur)
    ar_rep = rep_n(prefix_ids + [t for t in ar_continuation if t >= 4], 4)

    gap = (ar_rep - diffusion_rep) * 100
    ok = gap >= 5.0
    assert report("7 degeneration-contrast", ok,
                  f"(AR rep4 {ar_rep:.3f} vs diffusion {diffusion_rep:.3f}, "
                  f"gap {gap:.1f}pp)")


# ---------------------------------------------------------------------------
# criterion 8: denoising curve
# ---------------------------------------------------------------------------

def test_criterion_8_aubleu(stack):
    pipe = stack["sentiment"]
    slice_paras = stack["valid"][:64]
    conds = [Condition.for_label(0 if p.label == "neg" else 1) for p in slice_paras]

    from paradiff.tensor import no_grad

    def denoise_fn(z_t, t, cond_list):
        with no_grad():
            y = pipe.cond_encoder.encode_batch(cond_list).detach()
        return pipe.denoiser.denoise(z_t, t, y)

    curve, _ = aubleu(pipe.embedder, pipe.normalizer, denoise_fn, pipe.sched,
                      slice_paras, conds, seed=SEED)
    xs = [a for a, _ in curve]
    ys = [b for _, b in curve]
    rho = spearman(xs, ys)

    # oracle-denoiser algebra on the same grid
    true_z = np.stack([pipe.normalizer.normalize(m)
                       for m in pipe.embedder.encode_mu_batch(slice_paras)])
    o_curve, o_area = aubleu(pipe.embedder, pipe.normalizer,
                             lambda z_t, t, c: true_z.copy(), pipe.sched,
                             slice_paras, conds, seed=SEED)
    clean = o_curve[0][1]
    span = o_curve[-1][0] - o_curve[0][0]
    algebra_ok = all(abs(b - clean) < 1e-9 for _, b in o_curve)
    algebra_ok &= abs(o_area - clean * span) < 1e-9 * max(1.0, clean * span)
    ok = rho > 0.8 and algebra_ok
    assert report("8 aubleu", ok, f"(spearman {rho:.3f}, oracle area ok={algebra_ok})")


# ---------------------------------------------------------------------------
# criterion 9: ablation orderings
# ---------------------------------------------------------------------------

def test_criterion_9_ablation(stack):
    n = 128
    conds = [Condition.for_label(i % 2) for i in range(n)]
    labels = ["neg" if i % 2 == 0 else "pos" for i in range(n)]

    def run(method, steps):
        scfg = SamplerConfig(steps=steps, method=method, cfg_weight=1.5, seed=SEED)
        results = stack["sentiment"].sample(conds, scfg)
        content = [[t for t in r.token_ids if t >= 4] for r in results]
        return {
            "acc": accuracy(labels, content, stack["vocab"], stack["spec"]),
            "dist_1": dist_n(content, 1),
            "ent_1": ent_n(content, 1),
        }

    ddim = run("ddim", 30)
    ddpm = run("ddpm", 30)
    step_rows = {t: run("ddim", t) for t in (5, 10, 20, 30, 50)}
    for t, row in step_rows.items():
        print(f"[acceptance] ablation T={t}: acc {row['acc']:.3f} "
              f"dist {row['dist_1']:.4f} ent {row['ent_1']:.3f}")
    ok = ddim["acc"] >= ddpm["acc"]
    ok &= step_rows[50]["dist_1"] >= step_rows[5]["dist_1"]
    ok &= step_rows[50]["ent_1"] >= step_rows[5]["ent_1"]
    assert report("9 ablation-orderings", ok,
                  f"(ddim acc {ddim['acc']:.3f} vs ddpm {ddpm['acc']:.3f}; "
                  f"dist@5 {step_rows[5]['dist_1']:.4f} -> dist@50 {step_rows[50]['dist_1']:.4f})")
