"""Text-generation metrics over token sequences.

Scores work on lists of hashable tokens (ids or strings). BLEU is the
self-contained variant documented below so runs are comparable across
machines: clipped n-gram precisions for n=1..4, geometric mean, brevity
penalty min(1, exp(1 - ref_len/hyp_len)) with the closest reference
length (ties toward the shorter), and any zero or undefined precision
floored at 1/(2 * hyp_len). ROUGE-L is the LCS F-measure with beta^2 =
1.44. ENT-n uses natural log.
"""

from __future__ import annotations

import math
from collections import Counter

ROUGE_BETA_SQ = 1.44


def ngrams(seq, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def bleu(hyp, refs, max_n: int = 4) -> float:
    """Sentence BLEU of hyp against one or more references, in [0, 100]."""
    hyp = list(hyp)
    if not hyp:
        raise ValueError("bleu: empty hypothesis")
    refs = [list(r) for r in refs]
    if not refs or any(not r for r in refs):
        raise ValueError("bleu: empty reference")
    floor = 1.0 / (2.0 * len(hyp))
    log_sum = 0.0
    for n in range(1, max_n + 1):
        counts = ngrams(hyp, n)
        total = sum(counts.values())
        clipped = 0
        if total:
            best = Counter()
            for r in refs:
                rc = ngrams(r, n)
                for g, c in rc.items():
                    if c > best[g]:
                        best[g] = c
            clipped = sum(min(c, best[g]) for g, c in counts.items())
        p = clipped / total if total and clipped else floor
        log_sum += math.log(p)
    hyp_len = len(hyp)
    ref_len = min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    return 100.0 * bp * math.exp(log_sum / max_n)


def corpus_bleu(hyps, refs_per_hyp) -> float:
    """Mean sentence BLEU over aligned (hyp, refs) pairs."""
    scores = [bleu(h, r) for h, r in zip(hyps, refs_per_hyp)]
    if not scores:
        raise ValueError("corpus_bleu: no pairs")
    return sum(scores) / len(scores)


def self_bleu(corpus) -> float:
    """Mean over sequences of BLEU against all the others as references.

    Uses a top-two count table per n-gram so the leave-one-out clipping
    is exact without re-merging references for every hypothesis.
    """
    corpus = [list(s) for s in corpus]
    if len(corpus) < 2:
        raise ValueError("self_bleu needs at least 2 sequences")
    tables = []
    for n in range(1, 5):
        top: dict = {}
        for seq in corpus:
            for g, c in ngrams(seq, n).items():
                t1, m1, t2 = top.get(g, (0, 0, 0))
                if c > t1:
                    t1, m1, t2 = c, 1, t1
                elif c == t1:
                    m1 += 1
                elif c > t2:
                    t2 = c
                top[g] = (t1, m1, t2)
        tables.append(top)

    total = 0.0
    for seq in corpus:
        floor = 1.0 / (2.0 * len(seq))
        log_sum = 0.0
        for n in range(1, 5):
            counts = ngrams(seq, n)
            tot = sum(counts.values())
            clipped = 0
            for g, c in counts.items():
                t1, m1, t2 = tables[n - 1][g]
                others_max = t2 if (c == t1 and m1 == 1) else t1
                clipped += min(c, others_max)
            p = clipped / tot if tot and clipped else floor
            log_sum += math.log(p)
        hyp_len = len(seq)
        ref_len = min(
            (abs(len(r) - hyp_len), len(r)) for r in corpus if r is not seq
        )[1]
        bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
        total += 100.0 * bp * math.exp(log_sum / 4.0)
    return total / len(corpus)


def _lcs_len(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hyp, ref) -> float:
    """LCS F-measure in [0, 100]: (1+b^2) P R / (R + b^2 P), b^2=1.44."""
    hyp, ref = list(hyp), list(ref)
    if not hyp or not ref:
        raise ValueError("rouge_l: empty input")
    lcs = _lcs_len(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return 100.0 * (1.0 + ROUGE_BETA_SQ) * p * r / (r + ROUGE_BETA_SQ * p)


def dist_n(corpus, n: int) -> float:
    """Unique n-grams over total n-grams, pooled across the corpus."""
    pooled = Counter()
    for seq in corpus:
        pooled.update(ngrams(seq, n))
    total = sum(pooled.values())
    if total == 0:
        raise ValueError(f"dist_n: no sequence has length >= {n}")
    return len(pooled) / total


def ent_n(corpus, n: int) -> float:
    """Natural-log entropy of the pooled empirical n-gram distribution."""
    pooled = Counter()
    for seq in corpus:
        pooled.update(ngrams(seq, n))
    total = sum(pooled.values())
    if total == 0:
        raise ValueError(f"ent_n: no sequence has length >= {n}")
    return -sum((c / total) * math.log(c / total) for c in pooled.values())


def rep_n(seq, n: int) -> float:
    """1 - unique/total n-grams of a single sequence."""
    seq = list(seq)
    if len(seq) < n:
        raise ValueError(f"rep_n: sequence of {len(seq)} tokens has no {n}-grams")
    counts = ngrams(seq, n)
    return 1.0 - len(counts) / sum(counts.values())


def corpus_rep_n(corpus, n: int) -> float:
    """Mean per-sequence rep_n; sequences shorter than n are skipped."""
    vals = [rep_n(s, n) for s in corpus if len(list(s)) >= n]
    if not vals:
        raise ValueError(f"corpus_rep_n: no sequence has length >= {n}")
    return sum(vals) / len(vals)


def _ranks(xs) -> list:
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation with average ranks for ties."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("spearman needs two equal-length series of >= 2 points")
    rx, ry = _ranks(list(xs)), _ranks(list(ys))
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    dx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    dy = math.sqrt(sum((b - my) ** 2 for b in ry))
    if dx == 0 or dy == 0:
        return 0.0
    return num / (dx * dy)
