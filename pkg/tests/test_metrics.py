import math
from collections import Counter

import numpy as np
import pytest

from paradiff.metrics import (
    bleu, corpus_bleu, corpus_rep_n, dist_n, ent_n, ngrams, rep_n, rouge_l,
    self_bleu, spearman,
)


# -- independent oracles -------------------------------------------------------

def oracle_bleu(hyp, refs):
    """Straightforward re-derivation of the documented BLEU variant,
    structured differently from the implementation."""
    logs = []
    floor = 1.0 / (2 * len(hyp))
    for n in range(1, 5):
        hyp_grams = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
        clipped = 0
        for g in set(hyp_grams):
            cap = max((sum(1 for j in range(len(r) - n + 1) if tuple(r[j:j + n]) == g))
                      for r in refs)
            clipped += min(hyp_grams.count(g), cap)
        p = clipped / len(hyp_grams) if hyp_grams and clipped else floor
        logs.append(math.log(p))
    diffs = sorted((abs(len(r) - len(hyp)), len(r)) for r in refs)
    ref_len = diffs[0][1]
    bp = min(1.0, math.exp(1 - ref_len / len(hyp)))
    return 100 * bp * math.exp(sum(logs) / 4)


def oracle_lcs(a, b):
    best = 0
    # brute force over subsequences of the shorter side
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for mask in range(1 << len(short)):
        sub = [short[i] for i in range(len(short)) if mask >> i & 1]
        it = iter(long_)
        if all(tok in it for tok in sub):
            best = max(best, len(sub))
    return best


# -- bleu ----------------------------------------------------------------------

def test_bleu_identity_is_100():
    assert bleu(list("abcd"), [list("abcd")]) == pytest.approx(100.0)


def test_bleu_brevity_penalty_hand_case():
    # all precisions 1, hyp 4 vs ref 5 tokens: 100 e^{1 - 5/4} = 77.8801
    score = bleu("a b c d".split(), ["a b c d e".split()])
    assert score == pytest.approx(100 * math.exp(-0.25), abs=1e-9)
    assert round(score, 4) == 77.8801


def test_bleu_disjoint_is_floor_dominated():
    hyp = [f"h{i}" for i in range(60)]
    ref = [f"r{i}" for i in range(60)]
    assert bleu(hyp, [ref]) < 1.0


def test_bleu_matches_oracle_on_random_cases(rng):
    words = list("abcdefg")
    for _ in range(30):
        hyp = [words[i] for i in rng.integers(0, len(words), rng.integers(4, 12))]
        refs = [[words[i] for i in rng.integers(0, len(words), rng.integers(4, 12))]
                for _ in range(int(rng.integers(1, 3)))]
        assert bleu(hyp, refs) == pytest.approx(oracle_bleu(hyp, refs), abs=1e-9)


def test_bleu_empty_hypothesis_rejected():
    with pytest.raises(ValueError):
        bleu([], [list("ab")])


def test_bleu_in_range_fuzz(rng):
    for _ in range(50):
        hyp = list(rng.integers(0, 5, rng.integers(1, 20)))
        ref = list(rng.integers(0, 5, rng.integers(1, 20)))
        assert 0.0 <= bleu(hyp, [ref]) <= 100.0


def test_corpus_bleu_is_mean_of_sentence_scores():
    hyps = [list("abcd"), list("wxyz")]
    refs = [[list("abcd")], [list("wxyz")]]
    assert corpus_bleu(hyps, refs) == pytest.approx(100.0)
    mixed = corpus_bleu([list("abcd"), list("abcd")],
                        [[list("abcd")], [list("abcde")]])
    assert mixed == pytest.approx((100.0 + 100 * math.exp(-0.25)) / 2)


# -- rouge-l ---------------------------------------------------------------------

def test_rouge_identity():
    assert rouge_l(list("abcd"), list("abcd")) == pytest.approx(100.0)


def test_rouge_disjoint_zero():
    assert rouge_l(list("abc"), list("xyz")) == 0.0


def test_rouge_hand_case():
    # hyp "a c" vs ref "a b c": LCS 2, P = 1, R = 2/3; with beta^2 = 1.44
    # the LCS F-measure (1+b^2) P R / (R + b^2 P) = 77.2152
    score = rouge_l(["a", "c"], ["a", "b", "c"])
    expected = 100 * (1 + 1.44) * 1.0 * (2 / 3) / ((2 / 3) + 1.44 * 1.0)
    assert score == pytest.approx(expected, abs=1e-9)
    assert round(score, 4) == 77.2152


def test_rouge_lcs_matches_bruteforce(rng):
    from paradiff.metrics import _lcs_len
    for _ in range(20):
        a = list(rng.integers(0, 4, rng.integers(1, 9)))
        b = list(rng.integers(0, 4, rng.integers(1, 9)))
        assert _lcs_len(a, b) == oracle_lcs(a, b)


def test_rouge_empty_rejected():
    with pytest.raises(ValueError):
        rouge_l([], list("ab"))


# -- diversity / repetition -------------------------------------------------------

def test_dist_all_unique():
    assert dist_n([list("abcd"), list("efgh")], 1) == 1.0


def test_dist_hand_case():
    # [a, a, b]: 2 unique of 3 unigrams
    assert dist_n([["a", "a", "b"]], 1) == pytest.approx(2 / 3)


def test_dist_duplicating_corpus_halves_unique_ratio():
    corpus = [list("abcd"), list("efgh")]
    assert dist_n(corpus, 1) == 1.0
    assert dist_n(corpus + corpus, 1) == pytest.approx(0.5)


def test_dist_too_short_rejected():
    with pytest.raises(ValueError):
        dist_n([["a"]], 2)


def test_ent_point_mass_zero():
    assert ent_n([["a", "a", "a", "a"]], 1) == pytest.approx(0.0)


def test_ent_two_equifrequent():
    assert ent_n([["a", "b", "a", "b"]], 1) == pytest.approx(math.log(2), abs=1e-12)


def test_ent_uniform_is_log_v(rng):
    v = 13
    corpus = [[f"w{i}" for i in range(v)]]
    assert ent_n(corpus, 1) == pytest.approx(math.log(v), abs=1e-12)
    # any other distribution over the same support has lower entropy
    skew = [[f"w{i}" for i in range(v)] + ["w0", "w0"]]
    assert ent_n(skew, 1) < math.log(v)


def test_rep_all_distinct_zero():
    assert rep_n(list("abcdefg"), 4) == 0.0


def test_rep_hand_case():
    # 7 copies of one token: 4 total 4-grams, 1 unique
    assert rep_n(["x"] * 7, 4) == pytest.approx(0.75)


def test_rep_repeating_block_tends_to_one():
    block = list("abcd")
    vals = [rep_n(block * m, 4) for m in (2, 8, 64)]
    assert vals[0] < vals[1] < vals[2] < 1.0
    assert vals[2] > 0.98


def test_rep_too_short_rejected():
    with pytest.raises(ValueError):
        rep_n(list("abc"), 4)
    with pytest.raises(ValueError):
        corpus_rep_n([list("ab")], 4)


def test_corpus_rep_is_mean():
    a = ["x"] * 7          # rep 0.75
    b = list("abcdefgh")   # rep 0
    assert corpus_rep_n([a, b], 4) == pytest.approx(0.375)


# -- self-bleu --------------------------------------------------------------------

def test_self_bleu_identical_sequences():
    corpus = [list("abcdef")] * 4
    assert self_bleu(corpus) == pytest.approx(100.0)


def test_self_bleu_disjoint_vocabulary():
    corpus = [[f"{j}_{i}" for i in range(60)] for j in range(3)]
    assert self_bleu(corpus) < 1.0


def test_self_bleu_permutation_invariant(rng):
    corpus = [list(rng.integers(0, 6, 12)) for _ in range(6)]
    base = self_bleu(corpus)
    shuffled = [corpus[i] for i in rng.permutation(6)]
    assert self_bleu(shuffled) == pytest.approx(base, abs=1e-9)


def test_self_bleu_matches_direct_leave_one_out(rng):
    corpus = [list(rng.integers(0, 5, int(rng.integers(5, 12)))) for _ in range(7)]
    direct = np.mean([bleu(seq, corpus[:i] + corpus[i + 1:])
                      for i, seq in enumerate(corpus)])
    assert self_bleu(corpus) == pytest.approx(direct, abs=1e-9)


def test_self_bleu_needs_two():
    with pytest.raises(ValueError):
        self_bleu([list("abc")])


# -- spearman ---------------------------------------------------------------------

def test_spearman_monotone_is_one():
    xs = [0.1, 0.5, 0.7, 2.0, 3.1]
    ys = [x**3 + 1 for x in xs]
    assert spearman(xs, ys) == pytest.approx(1.0)
    assert spearman(xs, [-y for y in ys]) == pytest.approx(-1.0)


def test_spearman_handles_ties():
    assert abs(spearman([1, 2, 2, 3], [1, 2, 2, 3]) - 1.0) < 1e-12


def test_ngrams_counter():
    assert ngrams(list("aab"), 1) == Counter({("a",): 2, ("b",): 1})
    assert ngrams(list("aab"), 2) == Counter({("a", "a"): 1, ("a", "b"): 1})
