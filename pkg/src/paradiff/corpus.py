"""Synthetic review-style paragraph corpus.

A closed ~120-word vocabulary and a template grammar (subject / linking
verb / adjective slots, 3-8 sentences per paragraph) produce labelled
paragraphs whose sentiment is decidable by an exact lexicon-count rule,
so generation control can be scored without a trained classifier.
Includes the whitespace tokenizer and the token-substitution corruption
used for denoising training.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

BOS, EOS, PAD, NULL = 0, 1, 2, 3
SPECIAL_TOKENS = ("<bos>", "<eos>", "<pad>", "<null>")

_SUBJECTS = (
    "hotel", "room", "staff", "pool", "breakfast", "lobby", "view", "bed",
    "bathroom", "location", "service", "restaurant", "wifi", "parking",
    "balcony", "garden", "elevator", "hallway", "shower", "kitchen",
    "terrace", "cafe", "bar", "gym", "sauna", "beach", "market", "museum",
    "street", "corridor", "spa", "deck", "counter", "menu", "window", "carpet",
)
_LINK_VERBS = ("was", "seemed", "looked", "felt")
_POSITIVE = (
    "great", "clean", "lovely", "friendly", "spacious", "quiet",
    "comfortable", "excellent", "charming", "bright", "modern", "helpful",
    "cozy", "superb", "pleasant", "wonderful",
)
_NEGATIVE = (
    "dirty", "noisy", "rude", "cramped", "broken", "smelly", "awful",
    "dark", "cold", "shabby", "terrible", "dull", "damp", "gloomy",
    "unpleasant", "dreadful",
)
_NEUTRAL_ADJ = ("small", "big", "old", "new", "busy", "plain", "simple", "average",
                "normal", "typical")
_INTENS = ("very", "quite", "rather", "really")
_ACTIONS = ("visited", "booked", "passed", "noticed", "toured", "used", "checked", "saw")
_TIMES = ("today", "tonight", "yesterday", "upstairs", "downstairs", "nearby",
          "early", "later")
_FUNCTION = ("the", "a", "we", "i", "it", "there", "and", "near", "at", "in", "again", ".")

# Slot markers expand from the matching lexicon; anything else is literal.
_SENT_TEMPLATES = (
    ("the", "<subj>", "<link>", "<adj>"),
    ("the", "<subj>", "<link>", "<intens>", "<adj>"),
    ("the", "<subj>", "<link>", "<adj>", "and", "<adj>"),
    ("it", "<link>", "<intens>", "<adj>", "there"),
)
_NEUTRAL_TEMPLATES = (
    ("we", "<action>", "the", "<subj>", "<time>"),
    ("i", "<action>", "the", "<subj>", "<time>"),
    ("the", "<subj>", "<link>", "<nadj>"),
    ("there", "was", "a", "<subj>", "<time>"),
    ("we", "<action>", "the", "<subj>", "again"),
    ("the", "<subj>", "was", "near", "the", "<subj>"),
)


@dataclass(frozen=True)
class GrammarSpec:
    sentiment_templates: tuple = _SENT_TEMPLATES
    neutral_templates: tuple = _NEUTRAL_TEMPLATES
    positive: tuple = _POSITIVE
    negative: tuple = _NEGATIVE
    neutral: tuple = _NEUTRAL_ADJ
    min_sentences: int = 3
    max_sentences: int = 8
    sentiment_rate: float = 0.6
    max_tokens: int = 64

    def validate(self):
        if set(self.positive) & set(self.negative):
            raise ValueError("positive and negative lexicons must be disjoint")
        overlap = (set(self.positive) | set(self.negative)) & set(self.neutral)
        if overlap:
            raise ValueError(f"neutral lexicon overlaps sentiment lexicons: {sorted(overlap)}")
        if self.min_sentences < 1 or self.max_sentences < self.min_sentences:
            raise ValueError("bad sentences-per-paragraph range")


@dataclass
class Vocab:
    tokens: list

    def __post_init__(self):
        if len(self.tokens) != len(set(self.tokens)):
            raise ValueError("vocab tokens must be unique")
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"vocab must start with specials {SPECIAL_TOKENS}")
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    @property
    def content_ids(self) -> list:
        return list(range(4, len(self.tokens)))

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.tokens), encoding="utf-8")

    @staticmethod
    def load(path) -> "Vocab":
        return Vocab(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Paragraph:
    token_ids: list
    label: str | None = None  # "pos" | "neg"
    prefix_len: int | None = None

    def __post_init__(self):
        if not self.token_ids or self.token_ids[-1] != EOS:
            raise ValueError("paragraph must end with EOS")
        if PAD in self.token_ids:
            raise ValueError("paragraph must not contain PAD")
        if self.prefix_len is not None and not (0 < self.prefix_len < len(self.token_ids)):
            raise ValueError("prefix_len must split the paragraph strictly inside")

    @property
    def content_ids(self) -> list:
        return [t for t in self.token_ids if t >= 4]


def build_vocab(spec: GrammarSpec = GrammarSpec()) -> Vocab:
    """Deterministic vocabulary: specials first, then every word the
    grammar can emit, in group order."""
    words = []
    seen = set()
    groups = (
        _SUBJECTS, _LINK_VERBS, spec.positive, spec.negative, spec.neutral,
        _INTENS, _ACTIONS, _TIMES, _FUNCTION,
    )
    for group in groups:
        for w in group:
            if w not in seen:
                seen.add(w)
                words.append(w)
    for template in spec.sentiment_templates + spec.neutral_templates:
        for tok in template:
            if not tok.startswith("<") and tok not in seen:
                seen.add(tok)
                words.append(tok)
    return Vocab(list(SPECIAL_TOKENS) + words)


def tokenize(text: str, vocab: Vocab) -> list:
    """Whitespace-split over the closed vocab; appends EOS. Unknown
    words are an error (reported with their position)."""
    ids = []
    if text:
        for pos, word in enumerate(text.split(" ")):
            wid = vocab.token_to_id.get(word)
            if wid is None or wid < 4:
                raise ValueError(f"unknown token {word!r} at position {pos}")
            ids.append(wid)
    ids.append(EOS)
    return ids


def detokenize(token_ids, vocab: Vocab) -> str:
    return " ".join(vocab.tokens[t] for t in token_ids if t >= 4)


def substitute_ids(token_ids, p: float, rng: random.Random, vocab_size: int) -> list:
    """Independently replace each non-special token with probability p
    by a uniform draw over the non-special ids (original token not
    excluded). Specials are never touched; length is preserved."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"substitution probability must be in [0, 1], got {p}")
    pool_size = vocab_size - 4
    out = list(token_ids)
    for i, tok in enumerate(out):
        if tok >= 4 and rng.random() < p:
            out[i] = 4 + rng.randrange(pool_size)
    return out


def substitute(token_ids, p: float, rng: random.Random, vocab: Vocab) -> list:
    return substitute_ids(token_ids, p, rng, len(vocab))


def label_oracle(p: Paragraph | list, vocab: Vocab,
                 spec: GrammarSpec = GrammarSpec()) -> str:
    """positive iff strictly more positive-lexicon than negative-lexicon
    tokens; ties are negative."""
    ids = p.token_ids if isinstance(p, Paragraph) else list(p)
    pos_ids = {vocab.token_to_id[w] for w in spec.positive}
    neg_ids = {vocab.token_to_id[w] for w in spec.negative}
    n_pos = sum(1 for t in ids if t in pos_ids)
    n_neg = sum(1 for t in ids if t in neg_ids)
    return "pos" if n_pos > n_neg else "neg"


def _fill_template(template, label, spec: GrammarSpec, rng: random.Random) -> list:
    adj_pool = spec.positive if label == "pos" else spec.negative
    words = []
    for slot in template:
        if slot == "<subj>":
            words.append(_SUBJECTS[rng.randrange(len(_SUBJECTS))])
        elif slot == "<link>":
            words.append(_LINK_VERBS[rng.randrange(len(_LINK_VERBS))])
        elif slot == "<adj>":
            words.append(adj_pool[rng.randrange(len(adj_pool))])
        elif slot == "<nadj>":
            words.append(spec.neutral[rng.randrange(len(spec.neutral))])
        elif slot == "<intens>":
            words.append(_INTENS[rng.randrange(len(_INTENS))])
        elif slot == "<action>":
            words.append(_ACTIONS[rng.randrange(len(_ACTIONS))])
        elif slot == "<time>":
            words.append(_TIMES[rng.randrange(len(_TIMES))])
        else:
            words.append(slot)
    return words


def generate_corpus(spec: GrammarSpec, n: int, seed: int) -> tuple[list, Vocab]:
    """Deterministic corpus of n labelled paragraphs (labels alternate,
    so the balance is exact up to one paragraph)."""
    if n <= 0:
        raise ValueError("corpus size must be positive")
    spec.validate()
    vocab = build_vocab(spec)
    longest = max(len(t) for t in spec.sentiment_templates + spec.neutral_templates) + 1
    if spec.min_sentences * longest + 1 > spec.max_tokens:
        raise ValueError("grammar unrealizable within the paragraph token budget")
    rng = random.Random(seed)
    paragraphs = []
    for i in range(n):
        label = "pos" if i % 2 == 0 else "neg"
        n_sent = rng.randint(spec.min_sentences, spec.max_sentences)
        sentiment_slots = [rng.random() < spec.sentiment_rate for _ in range(n_sent)]
        if not any(sentiment_slots):
            sentiment_slots[rng.randrange(n_sent)] = True
        words = []
        prefix_len = None
        made = 0
        for is_sentiment in sentiment_slots:
            pool = spec.sentiment_templates if is_sentiment else spec.neutral_templates
            sent = _fill_template(pool[rng.randrange(len(pool))], label, spec, rng) + ["."]
            if made >= spec.min_sentences and len(words) + len(sent) + 1 > spec.max_tokens:
                break
            words.extend(sent)
            made += 1
            if made == 2:
                prefix_len = len(words)
        if prefix_len is not None and prefix_len >= len(words):
            prefix_len = None  # no continuation left to predict
        ids = [vocab.token_to_id[w] for w in words] + [EOS]
        paragraphs.append(Paragraph(ids, label=label, prefix_len=prefix_len))
    return paragraphs, vocab


def write_corpus(path, paragraphs, vocab: Vocab):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for p in paragraphs:
            rec = {
                "text": detokenize(p.token_ids, vocab),
                "label": p.label,
                "prefix_len": p.prefix_len,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_corpus(path, vocab: Vocab) -> list:
    paragraphs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            paragraphs.append(Paragraph(
                tokenize(rec["text"], vocab),
                label=rec.get("label"),
                prefix_len=rec.get("prefix_len"),
            ))
    return paragraphs
