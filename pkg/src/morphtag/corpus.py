"""Corpus ingestion, vocabularies, coverage checks, and split construction.

The on-disk format is UTF-8 TSV: one ``surface<TAB>monolithic-label`` row
per token, sentences separated by blank lines, ``#``-prefixed comment lines
ignored.  Loading validates every label against the tag scheme and reports
the offending line on failure.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

from morphtag.errors import MorphtagError
from morphtag.tagset import CATEGORY_ORDER, CLASS_CATEGORIES, CompositeTag, LabelError, TagScheme


class CorpusError(MorphtagError):
    pass


@dataclass(frozen=True)
class Token:
    surface: str
    gold: CompositeTag


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __len__(self):
        return len(self.tokens)

    def surfaces(self):
        return [t.surface for t in self.tokens]


class Corpus:
    def __init__(self, sentences):
        self.sentences = tuple(sentences)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def n_tokens(self):
        return sum(len(s) for s in self.sentences)

    def tokens(self):
        for s in self.sentences:
            yield from s.tokens

    def label_set(self):
        return {t.gold.monolithic() for t in self.tokens()}


def loads_tsv(text, scheme: TagScheme, name="<string>"):
    sentences = []
    current = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line.startswith("#"):
            continue
        if not line.strip():
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError(f"{name}:{lineno}: expected 'surface<TAB>label', got {line!r}")
        surface, label = parts
        if not surface:
            raise CorpusError(f"{name}:{lineno}: empty surface form")
        try:
            tag = scheme.parse_composite(label)
        except LabelError as e:
            raise CorpusError(f"{name}:{lineno}: bad label {label!r}: {e}") from e
        current.append(Token(surface, tag))
    if current:
        sentences.append(Sentence(tuple(current)))
    return Corpus(sentences)


def load_tsv(path, scheme: TagScheme):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"cannot read corpus {path}: {e}") from e
    return loads_tsv(text, scheme, name=str(path))


def dumps_tsv(corpus: Corpus):
    blocks = []
    for sent in corpus:
        blocks.append("\n".join(f"{t.surface}\t{t.gold.monolithic()}" for t in sent.tokens))
    return "\n\n".join(blocks) + "\n"


def write_tsv(corpus: Corpus, path):
    Path(path).write_text(dumps_tsv(corpus), encoding="utf-8")


# ---------------------------------------------------------------------------
# vocabularies


UNK = "<unk>"


@dataclass
class Vocab:
    """Word and character index maps with UNK at index 0, plus the attested
    monolithic label inventory of the corpus the vocab was built from."""

    word_to_id: dict
    char_to_id: dict
    word_freq: dict
    labels: tuple[str, ...]

    @property
    def n_words(self):
        return len(self.word_to_id) + 1

    @property
    def n_chars(self):
        return len(self.char_to_id) + 1

    def word_id(self, surface):
        return self.word_to_id.get(surface, 0)

    def char_ids(self, surface):
        return [self.char_to_id.get(ch, 0) for ch in surface]

    def to_dict(self):
        words = sorted(self.word_to_id, key=self.word_to_id.get)
        chars = sorted(self.char_to_id, key=self.char_to_id.get)
        return {
            "words": words,
            "chars": chars,
            "word_freq": dict(sorted(self.word_freq.items())),
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            word_to_id={w: i + 1 for i, w in enumerate(d["words"])},
            char_to_id={c: i + 1 for i, c in enumerate(d["chars"])},
            word_freq=dict(d.get("word_freq", {})),
            labels=tuple(d["labels"]),
        )


def build_vocab(corpus: Corpus, min_word_freq=2):
    """Index words seen at least `min_word_freq` times (rarer ones hit UNK)
    and every character seen at all."""
    freq = Counter(t.surface for t in corpus.tokens())
    words = sorted(w for w, n in freq.items() if n >= min_word_freq)
    chars = sorted({ch for t in corpus.tokens() for ch in t.surface})
    return Vocab(
        word_to_id={w: i + 1 for i, w in enumerate(words)},
        char_to_id={c: i + 1 for i, c in enumerate(chars)},
        word_freq=dict(freq),
        labels=tuple(sorted(corpus.label_set())),
    )


# ---------------------------------------------------------------------------
# feature coverage


@dataclass
class CoverageReport:
    threshold: int
    counts: dict
    deficient: list  # (value, count) below threshold

    @property
    def ok(self):
        return not self.deficient

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "ok": self.ok,
            "deficient": [{"value": v, "count": c} for v, c in self.deficient],
            "counts": dict(sorted(self.counts.items())),
        }


def value_counts(corpus: Corpus, scheme: TagScheme):
    counts = {v: 0 for cat in CATEGORY_ORDER for v in scheme.categories[cat]}
    for tok in corpus.tokens():
        for v in tok.gold.values:
            counts[v] += 1
    return counts


def check_feature_coverage(corpus: Corpus, scheme: TagScheme, threshold):
    """Count occurrences of all 71 feature values; fail listing the deficient ones."""
    if threshold < 1:
        raise CorpusError(f"coverage threshold must be >= 1, got {threshold}")
    counts = value_counts(corpus, scheme)
    vocab_order = [v for cat in CATEGORY_ORDER for v in scheme.categories[cat]]
    deficient = [(v, counts[v]) for v in vocab_order if counts[v] < threshold]
    return CoverageReport(threshold, counts, deficient)


def greedy_sample(pool: Corpus, scheme: TagScheme, threshold):
    """Best-effort greedy sentence sampler.

    Repeatedly picks the most deficient value (lowest count, category order
    as tie-break) and adds the pool sentence contributing the most
    occurrences of it.  Values absent from the pool are skipped.  Returns
    the sample (in pool order) plus its coverage report.
    """
    counts = {v: 0 for cat in CATEGORY_ORDER for v in scheme.categories[cat]}
    vocab_order = [v for cat in CATEGORY_ORDER for v in scheme.categories[cat]]
    per_sentence = []
    for sent in pool:
        c = Counter()
        for tok in sent.tokens:
            c.update(tok.gold.values)
        per_sentence.append(c)
    remaining = set(range(len(pool)))
    chosen = set()
    unsatisfiable = set()
    while True:
        deficient = [v for v in vocab_order if counts[v] < threshold and v not in unsatisfiable]
        if not deficient:
            break
        target = min(deficient, key=lambda v: (counts[v], vocab_order.index(v)))
        best, best_n = None, 0
        for i in sorted(remaining):
            n = per_sentence[i][target]
            if n > best_n:
                best, best_n = i, n
        if best is None:
            unsatisfiable.add(target)
            continue
        chosen.add(best)
        remaining.discard(best)
        for v, n in per_sentence[best].items():
            counts[v] += n
    sample = Corpus([pool[i] for i in sorted(chosen)])
    return sample, check_feature_coverage(sample, scheme, threshold)


# ---------------------------------------------------------------------------
# splits and syncretism


def split_unseen(train: Corpus, pool: Corpus):
    """Pool sentences containing at least one token whose monolithic label
    never occurs in the training corpus."""
    seen = train.label_set()
    keep = [
        s for s in pool
        if any(t.gold.monolithic() not in seen for t in s.tokens)
    ]
    return Corpus(keep)


def build_syncretism_index(reference: Corpus):
    """Map each surface form to the set of monolithic labels attested for it.

    A form exhibits syncretism relative to the reference corpus when it is
    attested under more than one label.
    """
    index = defaultdict(set)
    for tok in reference.tokens():
        index[tok.surface].add(tok.gold.monolithic())
    return {form: frozenset(labels) for form, labels in index.items()}
