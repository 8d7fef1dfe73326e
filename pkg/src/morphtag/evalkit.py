"""Evaluation protocol: exact-match accuracy, category-level F1, error analysis.

Scoring rules:

* Token accuracy is exact match of the whole composite tag; invalid
  predictions always count as mismatches.
* Category F1 gives partial credit.  For each grammatical category, a token
  whose gold tag assigns that category contributes a TP when the predicted
  value matches and an FN otherwise; every predicted value that is not the
  gold value of its category contributes an FP.  Invalid predictions
  participate through their raw values; NA never enters (it encodes
  structural absence, not a prediction).
* Macro F1 averages per-category F1 over categories with gold support
  (the default "category" mode) or per-value F1 over values with gold
  support ("value" mode).  Micro F1 pools TP/FP/FN.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from morphtag.errors import MorphtagError
from morphtag.tagset import CATEGORY_ORDER, INVALID, CompositeTag, LabelError, Prediction, TagScheme


class EvalError(MorphtagError):
    pass


@dataclass(frozen=True)
class EvalToken:
    surface: str
    gold: CompositeTag
    pred: Prediction

    @property
    def exact(self):
        return self.pred.tag == self.gold

    def pred_label(self):
        if self.pred.valid:
            return self.pred.label()
        return INVALID


class PredictionFile:
    """Aligned gold and predicted tags, sentence by sentence.

    File format: ``surface<TAB>gold<TAB>pred`` rows, blank-line sentence
    separation; invalid predictions serialize as ``INVALID:v1+v2+...``.
    """

    def __init__(self, scheme: TagScheme, sentences):
        self.scheme = scheme
        self.sentences = [tuple(s) for s in sentences]
        if not self.sentences:
            raise EvalError("prediction file has no sentences")

    def __len__(self):
        return len(self.sentences)

    @property
    def n_tokens(self):
        return sum(len(s) for s in self.sentences)

    def tokens(self):
        for s in self.sentences:
            yield from s

    @classmethod
    def from_predictions(cls, scheme, corpus, predictions):
        sentences = []
        for sent, preds in zip(corpus, predictions, strict=True):
            if len(sent.tokens) != len(preds):
                raise EvalError("prediction count differs from token count")
            sentences.append(tuple(
                EvalToken(t.surface, t.gold, p) for t, p in zip(sent.tokens, preds)
            ))
        return cls(scheme, sentences)

    @classmethod
    def from_model(cls, model, corpus):
        return cls.from_predictions(model.scheme, corpus, [model.predict(s) for s in corpus])

    def _parse_pred(self, text, where):
        if text == INVALID:
            return Prediction(None, ())
        if text.startswith(INVALID + ":"):
            values = tuple(text[len(INVALID) + 1:].split("+"))
            for v in values:
                if v not in self.scheme.value_to_category:
                    raise EvalError(f"{where}: unknown value {v!r} in invalid prediction")
            return Prediction(None, values)
        try:
            return Prediction.of_tag(self.scheme.parse_composite(text))
        except LabelError as e:
            raise EvalError(f"{where}: bad predicted label {text!r}: {e}") from e

    @classmethod
    def read(cls, path, scheme):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise EvalError(f"cannot read predictions {path}: {e}") from e
        self = cls.__new__(cls)
        self.scheme = scheme
        sentences = []
        current = []
        for lineno, raw in enumerate(text.split("\n"), start=1):
            line = raw.rstrip("\r")
            if line.startswith("#"):
                continue
            if not line.strip():
                if current:
                    sentences.append(tuple(current))
                    current = []
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise EvalError(f"{path}:{lineno}: expected 'surface<TAB>gold<TAB>pred'")
            surface, gold_text, pred_text = parts
            try:
                gold = scheme.parse_composite(gold_text)
            except LabelError as e:
                raise EvalError(f"{path}:{lineno}: bad gold label {gold_text!r}: {e}") from e
            pred = self._parse_pred(pred_text, f"{path}:{lineno}")
            current.append(EvalToken(surface, gold, pred))
        if current:
            sentences.append(tuple(current))
        if not sentences:
            raise EvalError(f"{path}: no sentences")
        self.sentences = sentences
        return self

    def write(self, path):
        blocks = []
        for sent in self.sentences:
            blocks.append("\n".join(
                f"{t.surface}\t{t.gold.monolithic()}\t{t.pred.label()}" for t in sent
            ))
        Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# counting


def _token_record(tok: EvalToken, scheme: TagScheme):
    """Serialize one token to plain tuples so counting needs no scheme access."""
    gold = tuple(tok.gold.assignment.items())
    if tok.pred.valid:
        pred = tuple(tok.pred.tag.assignment.items())
    else:
        pred = tuple((scheme.value_to_category[v], v) for v in tok.pred.values)
    return gold, pred, tok.exact


def _count_chunk(records):
    """Aggregate (correct, total, per-category counts, per-value counts)."""
    correct = 0
    total = 0
    cat_counts = {c: [0, 0, 0] for c in CATEGORY_ORDER}  # tp, fp, fn
    val_counts = {}
    for gold, pred, exact in records:
        total += 1
        correct += bool(exact)
        gold_map = dict(gold)
        for cat in CATEGORY_ORDER:
            g = gold_map.get(cat)
            P = [v for c, v in pred if c == cat]
            c = cat_counts[cat]
            if g is not None:
                vc = val_counts.setdefault((cat, g), [0, 0, 0])
                if g in P:
                    c[0] += 1
                    c[1] += len(P) - 1
                    vc[0] += 1
                else:
                    c[2] += 1
                    c[1] += len(P)
                    vc[2] += 1
            else:
                c[1] += len(P)
            for v in P:
                if v != g:
                    val_counts.setdefault((cat, v), [0, 0, 0])[1] += 1
            if g is not None and g in P and P.count(g) > 1:
                val_counts[(cat, g)][1] += P.count(g) - 1
    return correct, total, cat_counts, val_counts


def _merge_counts(chunks):
    correct, total = 0, 0
    cat_counts = {c: [0, 0, 0] for c in CATEGORY_ORDER}
    val_counts = {}
    for c, t, cats, vals in chunks:
        correct += c
        total += t
        for cat, arr in cats.items():
            for i in range(3):
                cat_counts[cat][i] += arr[i]
        for key, arr in vals.items():
            acc = val_counts.setdefault(key, [0, 0, 0])
            for i in range(3):
                acc[i] += arr[i]
    return correct, total, cat_counts, val_counts


@dataclass
class F1Stat:
    tp: int
    fp: int
    fn: int

    @property
    def support(self):
        return self.tp + self.fn

    @property
    def precision(self):
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self):
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self):
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "support": self.support}


@dataclass
class MetricsReport:
    token_accuracy: float
    macro_f1: float
    micro_f1: float
    per_category: dict
    n_tokens: int
    n_sentences: int
    macro_mode: str = "category"

    def to_dict(self, categories=None):
        cats = categories or list(self.per_category)
        unknown = set(cats) - set(CATEGORY_ORDER)
        if unknown:
            raise EvalError(f"unknown categories requested: {sorted(unknown)}")
        return {
            "token_accuracy": self.token_accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "macro_mode": self.macro_mode,
            "n_tokens": self.n_tokens,
            "n_sentences": self.n_sentences,
            "per_category": {c: self.per_category[c].to_dict()
                             for c in cats if c in self.per_category},
        }


def _records(sentences, scheme):
    return [[_token_record(t, scheme) for t in sent] for sent in sentences]


def _build_report(chunks, n_sentences, macro_mode):
    correct, total, cat_counts, val_counts = _merge_counts(chunks)
    per_category = {c: F1Stat(*cat_counts[c]) for c in CATEGORY_ORDER}
    supported = [s for s in per_category.values() if s.support > 0]
    if macro_mode == "category":
        macro = float(np.mean([s.f1 for s in supported])) if supported else 0.0
    elif macro_mode == "value":
        vals = [F1Stat(*v) for v in val_counts.values()]
        vals = [s for s in vals if s.support > 0]
        macro = float(np.mean([s.f1 for s in vals])) if vals else 0.0
    else:
        raise EvalError(f"unknown macro mode {macro_mode!r}")
    pooled = F1Stat(
        sum(s.tp for s in per_category.values()),
        sum(s.fp for s in per_category.values()),
        sum(s.fn for s in per_category.values()),
    )
    return MetricsReport(
        token_accuracy=correct / total if total else 0.0,
        macro_f1=macro,
        micro_f1=pooled.f1,
        per_category=per_category,
        n_tokens=total,
        n_sentences=n_sentences,
        macro_mode=macro_mode,
    )


def category_f1(pf: PredictionFile, macro_mode="category", jobs=1):
    """The full metrics report; `jobs` only changes how sentences are chunked
    across workers, never the result."""
    records = _records(pf.sentences, pf.scheme)
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_count_chunk, records))
    else:
        chunks = [_count_chunk(r) for r in records]
    return _build_report(chunks, len(pf.sentences), macro_mode)


def token_accuracy(pf: PredictionFile):
    """Fraction of tokens whose predicted tag matches gold exactly."""
    total = pf.n_tokens
    return sum(t.exact for t in pf.tokens()) / total


def sentence_macro_f1(pf: PredictionFile, macro_mode="category"):
    """Per-sentence macro F1 (the unit for pairwise significance tests)."""
    out = []
    for sent in pf.sentences:
        chunk = _count_chunk([_token_record(t, pf.scheme) for t in sent])
        out.append(_build_report([chunk], 1, macro_mode).macro_f1)
    return out


# ---------------------------------------------------------------------------
# error analysis


def misprediction_pairs(pf: PredictionFile, k=25):
    """Top-k (gold label, predicted label) pairs among exact-match failures;
    invalid predictions bucket under the reserved INVALID label."""
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    counts = Counter()
    for t in pf.tokens():
        if not t.exact:
            counts[(t.gold.monolithic(), t.pred_label())] += 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[:k]


def syncretism_f1(pf: PredictionFile, index, pairs, macro_mode="category"):
    """Macro F1 restricted to syncretic tokens covered by the given
    misprediction pairs.

    A token enters the subset when its surface form is syncretic per the
    index and either its (gold, pred) pair is one of `pairs`, or it was
    predicted exactly and its gold label is a gold label of those pairs.
    Returns None when the subset is empty.
    """
    pair_set = {tuple(p) for p in pairs}
    gold_pool = {g for g, _ in pair_set}
    kept = []
    for sent in pf.sentences:
        sub = [
            t for t in sent
            if len(index.get(t.surface, ())) > 1
            and ((t.gold.monolithic(), t.pred_label()) in pair_set
                 or (t.exact and t.gold.monolithic() in gold_pool))
        ]
        if sub:
            kept.append(tuple(sub))
    if not kept:
        return None
    return category_f1(PredictionFile(pf.scheme, kept), macro_mode=macro_mode)


@dataclass
class UnseenReport:
    metrics: MetricsReport
    exact_match: float
    n_tokens: int

    def to_dict(self):
        return {"exact_match": self.exact_match, "n_tokens": self.n_tokens,
                "metrics": self.metrics.to_dict()}


def unseen_report(pf: PredictionFile, train_labels):
    """Scores over exactly the tokens whose gold label is outside the
    training label set; None when there are no such tokens."""
    train_labels = set(train_labels)
    kept = []
    for sent in pf.sentences:
        sub = [t for t in sent if t.gold.monolithic() not in train_labels]
        if sub:
            kept.append(tuple(sub))
    if not kept:
        return None
    sub_pf = PredictionFile(pf.scheme, kept)
    metrics = category_f1(sub_pf)
    exact = token_accuracy(sub_pf)
    return UnseenReport(metrics, exact, sub_pf.n_tokens)


# ---------------------------------------------------------------------------
# significance


@dataclass
class TTestResult:
    t: float
    p: float
    dof: int
    degenerate: bool = False

    def to_dict(self):
        return {"t": self.t, "p": self.p, "dof": self.dof, "degenerate": self.degenerate}


def paired_ttest(a, b):
    """Paired two-tailed t-test on per-sentence scores.

    Zero-variance differences are degenerate: p is 1 when the vectors are
    identical and 0 otherwise (the t statistic is reported as 0 or signed
    infinity).  Otherwise p comes from the Student-t CDF (regularized
    incomplete beta, accurate to about 1e-8 or better).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise EvalError(f"score vectors must be both 1-D and equal length, got {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise EvalError("need at least two paired scores")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    dof = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, dof, degenerate=True)
        return TTestResult(float(np.sign(mean)) * float("inf"), 0.0, dof, degenerate=True)
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * float(special.stdtr(dof, -abs(t)))
    return TTestResult(float(t), p, dof)


def compare_systems(named_files):
    """Pairwise t-test matrix over named prediction files (same test set)."""
    names = list(named_files)
    if len(names) < 2:
        raise EvalError("need at least two systems to compare")
    scores = {}
    shape = None
    golds = None
    for name in names:
        pf = named_files[name]
        this_shape = [len(s) for s in pf.sentences]
        this_golds = [t.gold.monolithic() for t in pf.tokens()]
        if shape is None:
            shape, golds = this_shape, this_golds
        elif this_shape != shape or this_golds != golds:
            raise EvalError(f"prediction file {name!r} is not aligned with the others")
        scores[name] = sentence_macro_f1(pf)
    matrix = {}
    for i, a in enumerate(names):
        for bname in names[i + 1:]:
            matrix[(a, bname)] = paired_ttest(scores[a], scores[bname])
    return matrix
