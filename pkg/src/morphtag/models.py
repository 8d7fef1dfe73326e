"""Model assembly, training, prediction, and serialization.

Five tagger kinds share one interface:

* MonSeq: chain CRF over the monolithic labels attested in training.
* FCRF: factorial CRF over per-category chains with cotemporal couplings.
* Seq: per-token feature-sequence decoder.
* MTL-Shared: one shared encoder layer, an independent chain-CRF head per
  category (over its values + NA).
* MTL-Hierarchy: category heads attached at configured encoder depths with
  shortcut connections; a task's loss only ever reaches its own head and
  the encoder layers at or below its level, so deeper parameters receive
  exactly zero gradient from shallower tasks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from morphtag import autodiff as ad
from morphtag import evalkit, fcrf, serialize
from morphtag.corpus import Sentence, Vocab
from morphtag.crf import ChainCrfHead
from morphtag.encoder import Encoder, EncoderDims
from morphtag.errors import MorphtagError
from morphtag.optim import Adam
from morphtag.seqgen import SeqDecoder
from morphtag.tagset import CATEGORY_ORDER, CLASS_CATEGORIES, NA, Prediction, TagScheme, assemble

MODEL_KINDS = ("MonSeq", "FCRF", "Seq", "MTL-Shared", "MTL-Hierarchy")

CATEGORY_LETTERS = {
    "T": "Tense", "C": "Case", "N": "Number", "G": "Gender",
    "P": "Person", "L": "LastChar", "O": "Other",
}


class ConfigError(MorphtagError):
    pass


class TrainingError(MorphtagError):
    pass


def parse_hierarchy(spec):
    """Parse a shallow-to-deep hierarchy string such as ``N-G-C-T-L``.

    ``-`` separates levels, ``+`` groups categories at one level.  Categories
    not named attach at the deepest level.  Returns a list of category-name
    lists, one per level.
    """
    levels = []
    seen = set()
    for chunk in spec.split("-"):
        group = []
        for letter in chunk.split("+"):
            letter = letter.strip()
            if letter not in CATEGORY_LETTERS:
                raise ConfigError(f"unknown category letter {letter!r} in hierarchy {spec!r}")
            cat = CATEGORY_LETTERS[letter]
            if cat in seen:
                raise ConfigError(f"category {cat} appears twice in hierarchy {spec!r}")
            seen.add(cat)
            group.append(cat)
        if not group:
            raise ConfigError(f"empty level in hierarchy {spec!r}")
        levels.append(group)
    for cat in CATEGORY_ORDER:
        if cat not in seen:
            levels[-1].append(cat)
    return levels


def parse_pairs(spec):
    """Cotemporal pair configuration: 'all' or a list like 'T:C,N:G'."""
    n = len(CATEGORY_ORDER)
    if spec == "all":
        return tuple((i, j) for i in range(n) for j in range(i + 1, n))
    if spec in ("", "none"):
        return ()
    pairs = []
    for chunk in spec.split(","):
        parts = chunk.strip().split(":")
        if len(parts) != 2 or any(p not in CATEGORY_LETTERS for p in parts):
            raise ConfigError(f"bad cotemporal pair {chunk!r}")
        i = CATEGORY_ORDER.index(CATEGORY_LETTERS[parts[0]])
        j = CATEGORY_ORDER.index(CATEGORY_LETTERS[parts[1]])
        if i == j:
            raise ConfigError(f"cotemporal pair {chunk!r} links a category to itself")
        pairs.append((min(i, j), max(i, j)))
    out = tuple(sorted(set(pairs)))
    return out


@dataclass
class ModelConfig:
    kind: str = "MonSeq"
    d_w: int = 32
    d_c: int = 16
    d_cl: int = 16
    d_h: int = 32
    d_v: int = 32
    hierarchy: str = "N-G-C-T-L"
    cotemporal: str = "all"
    seq_max_len: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    bp_max_iters: int = 50
    bp_damping: float = 0.5
    bp_tol: float = 1e-5
    epochs: int = 100
    shuffle: bool = True
    early_stop_patience: int = 10
    stop_train_accuracy: float | None = None
    min_word_freq: int = 2
    seed: int = 42

    def __post_init__(self):
        canon = {k.lower(): k for k in MODEL_KINDS}
        if self.kind.lower() not in canon:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        self.kind = canon[self.kind.lower()]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        return cls(**data)

    def dims(self):
        return EncoderDims(self.d_w, self.d_c, self.d_cl, self.d_h)


def _na_index(scheme, category):
    return len(scheme.categories[category])


def _category_labels(scheme, category):
    return tuple(scheme.categories[category]) + (NA,)


class TaggerModel:
    """Shared surface: parameters, per-sentence loss, prediction, save/load."""

    def __init__(self, config: ModelConfig, scheme: TagScheme, vocab: Vocab):
        self.config = config
        self.scheme = scheme
        self.vocab = vocab
        self.log = []
        rng = ad.Rng(config.seed)
        self._build(rng)

    # subclasses fill these in
    def _build(self, rng):
        raise NotImplementedError

    def sentence_loss(self, sentence: Sentence):
        raise NotImplementedError

    def predict(self, sentence):
        raise NotImplementedError

    def _surfaces(self, sentence):
        return sentence.surfaces() if isinstance(sentence, Sentence) else list(sentence)

    def param_dict(self):
        params = dict(self.encoder.param_dict())
        params.update(self._head_params())
        return params

    def _head_params(self):
        return {}

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        manifest = {
            "format": "morphtag-model",
            "kind": self.config.kind,
            "config": self.config.to_dict(),
            "scheme": self.scheme.to_dict(),
            "vocab": self.vocab.to_dict(),
        }
        entries = {name: node.value for name, node in self.param_dict().items()}
        serialize.save(path, manifest, entries)

    @classmethod
    def load(cls, path):
        manifest, entries = serialize.load(path)
        if manifest.get("format") != "morphtag-model":
            raise ConfigError(f"{path} is not a model file")
        config = ModelConfig.from_dict(manifest["config"])
        scheme = TagScheme.from_dict(manifest["scheme"])
        vocab = Vocab.from_dict(manifest["vocab"])
        model = build(config, vocab, scheme)
        params = model.param_dict()
        if set(params) != set(entries):
            missing = set(params) ^ set(entries)
            raise ConfigError(f"model file parameter mismatch: {sorted(missing)}")
        for name, node in params.items():
            if node.value.shape != entries[name].shape:
                raise ConfigError(f"parameter {name} shape mismatch")
            node.value[...] = entries[name]
        return model


class MonSeqModel(TaggerModel):
    """Chain CRF over training-attested monolithic labels."""

    def _build(self, rng):
        if not self.vocab.labels:
            raise ConfigError("MonSeq needs a non-empty attested label inventory")
        self.encoder = Encoder(self.vocab, self.config.dims(), n_layers=1, shortcut=False, rng=rng)
        self.head = ChainCrfHead(self.vocab.labels, self.config.dims().state_width, rng, "mono")
        self.label_index = {lab: i for i, lab in enumerate(self.vocab.labels)}

    def _head_params(self):
        return self.head.params()

    def sentence_loss(self, sentence):
        states = self.encoder.encode(sentence.surfaces())[-1]
        try:
            gold = [self.label_index[t.gold.monolithic()] for t in sentence.tokens]
        except KeyError as e:
            raise TrainingError(f"gold label {e} outside the training label set") from e
        return self.head.loss(states, gold)

    def predict(self, sentence):
        surfaces = self._surfaces(sentence)
        states = [h.value for h in self.encoder.encode(surfaces)[-1]]
        ids, _ = self.head.decode(states)
        return [Prediction.of_tag(self.scheme.parse_composite(self.vocab.labels[i])) for i in ids]


class FcrfModel(TaggerModel):
    """Factorial CRF head over all seven categories."""

    def _build(self, rng):
        cfg = self.config
        self.encoder = Encoder(self.vocab, cfg.dims(), n_layers=1, shortcut=False, rng=rng)
        self.pairs = parse_pairs(cfg.cotemporal)
        width = cfg.dims().state_width
        self.proj = {}
        self.trans = {}
        for cat in CATEGORY_ORDER:
            L = len(_category_labels(self.scheme, cat))
            self.proj[cat] = ad.parameter(ad.glorot(rng, (L, width)), f"fcrf.{cat}.proj")
            self.trans[cat] = ad.parameter(ad.glorot(rng, (L, L)), f"fcrf.{cat}.trans")
        self.pair_tables = []
        for i, j in self.pairs:
            ci, cj = CATEGORY_ORDER[i], CATEGORY_ORDER[j]
            Li = len(_category_labels(self.scheme, ci))
            Lj = len(_category_labels(self.scheme, cj))
            self.pair_tables.append(
                ad.parameter(ad.glorot(rng, (Li, Lj)), f"fcrf.pair.{ci}.{cj}")
            )

    def _head_params(self):
        params = {}
        for cat in CATEGORY_ORDER:
            params[self.proj[cat].name] = self.proj[cat]
            params[self.trans[cat].name] = self.trans[cat]
        for node in self.pair_tables:
            params[node.name] = node
        return params

    def _gold_ids(self, sentence):
        gold = []
        for tok in sentence.tokens:
            for cat in CATEGORY_ORDER:
                v = tok.gold.value_for(cat)
                gold.append(self.scheme.value_index[cat][v] if v is not None
                            else _na_index(self.scheme, cat))
        return gold

    def _unary_nodes(self, states):
        return [[ad.matmul(self.proj[cat], h) for cat in CATEGORY_ORDER] for h in states]

    def sentence_loss(self, sentence):
        cfg = self.config
        states = self.encoder.encode(sentence.surfaces())[-1]
        return fcrf.nll_node(
            self._unary_nodes(states),
            [self.trans[cat] for cat in CATEGORY_ORDER],
            self.pair_tables,
            self.pairs,
            self._gold_ids(sentence),
            max_iters=cfg.bp_max_iters, damping=cfg.bp_damping, tol=cfg.bp_tol,
        )

    def predict(self, sentence):
        cfg = self.config
        surfaces = self._surfaces(sentence)
        states = [h.value for h in self.encoder.encode(surfaces)[-1]]
        unaries = [[self.proj[cat].value @ h for cat in CATEGORY_ORDER] for h in states]
        graph = fcrf.build_factor_graph(
            unaries,
            [self.trans[cat].value for cat in CATEGORY_ORDER],
            [p.value for p in self.pair_tables],
            self.pairs,
        )
        result = fcrf.loopy_bp(graph, max_iters=cfg.bp_max_iters,
                               damping=cfg.bp_damping, tol=cfg.bp_tol)
        ids = fcrf.map_decode(result)
        preds = []
        C = len(CATEGORY_ORDER)
        for t in range(len(surfaces)):
            values = []
            for c, cat in enumerate(CATEGORY_ORDER):
                k = ids[t * C + c]
                if k != _na_index(self.scheme, cat):
                    values.append(self.scheme.categories[cat][k])
            preds.append(assemble(self.scheme, values))
        return preds


class SeqModel(TaggerModel):
    """Encoder + per-token sequence-generation head."""

    def _build(self, rng):
        cfg = self.config
        self.encoder = Encoder(self.vocab, cfg.dims(), n_layers=1, shortcut=False, rng=rng)
        self.decoder = SeqDecoder(self.scheme, cfg.dims().state_width,
                                  d_v=cfg.d_v, max_len=cfg.seq_max_len, rng=rng)

    def _head_params(self):
        return self.decoder.params()

    def sentence_loss(self, sentence):
        states = self.encoder.encode(sentence.surfaces())[-1]
        loss = None
        for h, tok in zip(states, sentence.tokens):
            step = self.decoder.teacher_forced_nll(h, self.decoder.gold_sequence(tok.gold))
            loss = step if loss is None else ad.add(loss, step)
        return loss

    def predict(self, sentence):
        surfaces = self._surfaces(sentence)
        states = self.encoder.encode(surfaces)[-1]
        return [self.decoder.assemble(self.decoder.decode_greedy(h.value)) for h in states]


class MtlModel(TaggerModel):
    """Multi-task CRF stack; `levels` maps each category to an encoder depth."""

    def _build(self, rng):
        cfg = self.config
        if cfg.kind == "MTL-Shared":
            levels = [list(CATEGORY_ORDER)]
            shortcut = False
        else:
            levels = parse_hierarchy(cfg.hierarchy)
            shortcut = True
        self.levels = levels
        self.level_of = {}
        for depth, group in enumerate(levels, start=1):
            for cat in group:
                self.level_of[cat] = depth
        self.encoder = Encoder(self.vocab, cfg.dims(), n_layers=len(levels),
                               shortcut=shortcut, rng=rng)
        width = cfg.dims().state_width
        self.heads = {
            cat: ChainCrfHead(_category_labels(self.scheme, cat), width, rng, f"head.{cat}")
            for cat in CATEGORY_ORDER
        }

    def _head_params(self):
        params = {}
        for cat in CATEGORY_ORDER:
            params.update(self.heads[cat].params())
        return params

    def _gold_ids(self, tok, cat):
        v = tok.gold.value_for(cat)
        return self.scheme.value_index[cat][v] if v is not None else _na_index(self.scheme, cat)

    def task_loss(self, sentence, cat, layers=None):
        """Loss of one category's head; touches only encoder layers at or
        below the head's level (gradient truncation falls out of the graph)."""
        if layers is None:
            layers = self.encoder.encode(sentence.surfaces(), depth=self.level_of[cat])
        states = layers[self.level_of[cat] - 1]
        gold = [self._gold_ids(tok, cat) for tok in sentence.tokens]
        return self.heads[cat].loss(states, gold)

    def sentence_loss(self, sentence):
        layers = self.encoder.encode(sentence.surfaces())
        loss = None
        for cat in CATEGORY_ORDER:
            part = self.task_loss(sentence, cat, layers)
            loss = part if loss is None else ad.add(loss, part)
        return loss

    def predict(self, sentence):
        surfaces = self._surfaces(sentence)
        layers = self.encoder.encode(surfaces)
        per_cat = {}
        for cat in CATEGORY_ORDER:
            states = [h.value for h in layers[self.level_of[cat] - 1]]
            ids, _ = self.heads[cat].decode(states)
            per_cat[cat] = ids
        preds = []
        for t in range(len(surfaces)):
            values = []
            for cat in CATEGORY_ORDER:
                k = per_cat[cat][t]
                if k != _na_index(self.scheme, cat):
                    values.append(self.scheme.categories[cat][k])
            preds.append(assemble(self.scheme, values))
        return preds


_MODEL_CLASSES = {
    "MonSeq": MonSeqModel,
    "FCRF": FcrfModel,
    "Seq": SeqModel,
    "MTL-Shared": MtlModel,
    "MTL-Hierarchy": MtlModel,
}


def build(config: ModelConfig, vocab: Vocab, scheme: TagScheme) -> TaggerModel:
    """Construct an untrained model of the configured kind."""
    return _MODEL_CLASSES[config.kind](config, scheme, vocab)


# ---------------------------------------------------------------------------
# training


def corpus_accuracy(model, corpus):
    """Exact-match token accuracy of the model on a corpus."""
    total = 0
    correct = 0
    for sent in corpus:
        preds = model.predict(sent)
        for tok, pred in zip(sent.tokens, preds):
            total += 1
            if pred.tag == tok.gold:
                correct += 1
    return correct / total if total else 0.0


def _dev_metrics(model, dev):
    pf = evalkit.PredictionFile.from_model(model, dev)
    report = evalkit.category_f1(pf)
    return report.token_accuracy, report.macro_f1


def train(model: TaggerModel, train_corpus, dev_corpus=None, epochs=None):
    """Per-sentence gradient training, deterministic under the config seed.

    With a dev corpus, keeps the parameters of the best dev macro-F1 epoch
    and stops early after `early_stop_patience` epochs without improvement.
    Returns the per-epoch log (also stored on the model).
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    params = model.param_dict()
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               eps=cfg.adam_eps, clip_norm=cfg.clip_norm)
    order_rng = ad.Rng((cfg.seed * 1_000_003 + 7919) % (2 ** 63))
    sentences = list(train_corpus)
    if not sentences:
        raise TrainingError("empty training corpus")
    best_f1 = -1.0
    best_snapshot = None
    stale = 0
    log = []
    for epoch in range(1, epochs + 1):
        order = order_rng.permutation(len(sentences)) if cfg.shuffle else range(len(sentences))
        total = 0.0
        for idx in order:
            loss = model.sentence_loss(sentences[idx])
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value!r} at epoch {epoch}, sentence {idx}"
                )
            table = ad.backward(loss, params.values())
            opt.step(table)
            total += value
        record = {"epoch": epoch, "loss": total / len(sentences)}
        if cfg.stop_train_accuracy is not None:
            record["train_accuracy"] = corpus_accuracy(model, train_corpus)
        if dev_corpus is not None:
            acc, f1 = _dev_metrics(model, dev_corpus)
            record["dev_accuracy"] = acc
            record["dev_macro_f1"] = f1
            if f1 > best_f1:
                best_f1 = f1
                best_snapshot = {name: node.value.copy() for name, node in params.items()}
                stale = 0
            else:
                stale += 1
        log.append(record)
        model.log.append(record)
        if cfg.stop_train_accuracy is not None and record["train_accuracy"] >= cfg.stop_train_accuracy:
            break
        if dev_corpus is not None and cfg.early_stop_patience and stale >= cfg.early_stop_patience:
            break
    if best_snapshot is not None:
        for name, node in params.items():
            node.value[...] = best_snapshot[name]
    return log
