"""Command-line interface.

Subcommands: prepare, train, tag, eval, analyze, compare, sweep.  Every
command is deterministic given its inputs, flags, and --seed.  Exit codes:
0 success, 1 validation failure, 2 usage error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from morphtag import corpus as corpus_mod
from morphtag import evalkit, models
from morphtag.errors import MorphtagError
from morphtag.models import MODEL_KINDS, ModelConfig, TaggerModel
from morphtag.tagset import TagScheme


def _dump_json(data, path=None):
    text = json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_scheme(args):
    if getattr(args, "scheme", None):
        return TagScheme.load(args.scheme)
    return TagScheme.default()


def _model_config(args):
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise MorphtagError(f"cannot read config {args.config}: {e}") from e
    overrides = {
        "kind": getattr(args, "kind", None),
        "epochs": getattr(args, "epochs", None),
        "seed": getattr(args, "seed", None),
        "hierarchy": getattr(args, "hierarchy", None),
        "cotemporal": getattr(args, "pairs", None),
        "stop_train_accuracy": getattr(args, "stop_train_acc", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ModelConfig.from_dict(data)


def _canonical_kind(text):
    lowered = text.lower()
    for kind in MODEL_KINDS:
        if kind.lower() == lowered:
            return kind
    return text


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args):
    scheme = _load_scheme(args)
    corpus = corpus_mod.load_tsv(args.corpus, scheme)
    if args.sample:
        corpus, report = corpus_mod.greedy_sample(corpus, scheme, args.threshold)
        if args.out:
            corpus_mod.write_tsv(corpus, args.out)
    else:
        report = corpus_mod.check_feature_coverage(corpus, scheme, args.threshold)
        if args.out:
            corpus_mod.write_tsv(corpus, args.out)
    payload = {"coverage": report.to_dict(), "sentences": len(corpus), "tokens": corpus.n_tokens}
    if args.pool:
        pool = corpus_mod.load_tsv(args.pool, scheme)
        unseen = corpus_mod.split_unseen(corpus, pool)
        if args.out_unseen:
            corpus_mod.write_tsv(unseen, args.out_unseen)
        if len(unseen) == 0:
            print("warning: unseen split is empty (pool adds no novel labels)", file=sys.stderr)
        payload["unseen"] = {"sentences": len(unseen), "tokens": unseen.n_tokens}
    _dump_json(payload, args.report)
    return 0 if report.ok else 1


def cmd_train(args):
    scheme = _load_scheme(args)
    config = _model_config(args)
    train_corpus = corpus_mod.load_tsv(args.train, scheme)
    dev_corpus = corpus_mod.load_tsv(args.dev, scheme) if args.dev else None
    vocab = corpus_mod.build_vocab(train_corpus, min_word_freq=config.min_word_freq)
    model = models.build(config, vocab, scheme)
    log = models.train(model, train_corpus, dev_corpus)
    model.save(args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            for record in log:
                f.write(json.dumps(record, sort_keys=True) + "\n")
    final = log[-1] if log else {}
    print(f"trained {config.kind} for {len(log)} epochs; final loss {final.get('loss', float('nan')):.4f}")
    return 0


def cmd_tag(args):
    model = TaggerModel.load(args.model)
    corpus = corpus_mod.load_tsv(args.input, model.scheme)
    pf = evalkit.PredictionFile.from_model(model, corpus)
    pf.write(args.out)
    print(f"tagged {corpus.n_tokens} tokens in {len(corpus)} sentences -> {args.out}")
    return 0


def _read_predictions(args, scheme):
    return evalkit.PredictionFile.read(args.pred, scheme)


def cmd_eval(args):
    scheme = _load_scheme(args)
    pf = _read_predictions(args, scheme)
    report = evalkit.category_f1(pf, macro_mode=args.macro, jobs=args.jobs)
    categories = args.categories.split(",") if args.categories else None
    _dump_json(report.to_dict(categories=categories), args.out)
    return 0


def cmd_analyze(args):
    scheme = _load_scheme(args)
    pf = _read_predictions(args, scheme)
    report = evalkit.category_f1(pf, macro_mode=args.macro, jobs=args.jobs)
    pairs = evalkit.misprediction_pairs(pf, args.top_k)
    payload = {
        "metrics": report.to_dict(),
        "misprediction_pairs": [{"gold": g, "pred": p, "count": n} for (g, p), n in pairs],
    }
    if args.reference:
        reference = corpus_mod.load_tsv(args.reference, scheme)
        index = corpus_mod.build_syncretism_index(reference)
        restricted = evalkit.syncretism_f1(pf, index, [pair for pair, _ in pairs])
        payload["syncretism"] = restricted.to_dict() if restricted else None
    if args.train:
        train_corpus = corpus_mod.load_tsv(args.train, scheme)
        rep = evalkit.unseen_report(pf, train_corpus.label_set())
        payload["unseen"] = rep.to_dict() if rep else None
    _dump_json(payload, args.out)
    return 0


def cmd_compare(args):
    scheme = _load_scheme(args)
    names = args.names.split(",") if args.names else [Path(p).stem for p in args.preds]
    if len(names) != len(args.preds):
        raise MorphtagError(f"{len(args.preds)} prediction files but {len(names)} names")
    if len(set(names)) != len(names):
        raise MorphtagError(f"system names must be unique, got {names}")
    files = {n: evalkit.PredictionFile.read(p, scheme) for n, p in zip(names, args.preds)}
    matrix = evalkit.compare_systems(files)
    payload = {
        "systems": names,
        "pairs": [
            {"a": a, "b": b, **r.to_dict()}
            for (a, b), r in sorted(matrix.items())
        ],
    }
    _dump_json(payload, args.out)
    return 0


def cmd_sweep(args):
    scheme = _load_scheme(args)
    config = _model_config(args)
    train_corpus = corpus_mod.load_tsv(args.train, scheme)
    dev_corpus = corpus_mod.load_tsv(args.dev, scheme) if args.dev else None
    test_corpus = corpus_mod.load_tsv(args.test, scheme)
    vocab = corpus_mod.build_vocab(train_corpus, min_word_freq=config.min_word_freq)
    orders = [o.strip() for o in args.orders.split(",") if o.strip()]
    if not orders:
        raise MorphtagError("no hierarchy orders given")
    for order in orders:
        models.parse_hierarchy(order)  # validate before any training
    table = {}
    for order in orders:
        cfg = ModelConfig.from_dict({**config.to_dict(), "kind": "MTL-Hierarchy", "hierarchy": order})
        model = models.build(cfg, vocab, scheme)
        models.train(model, train_corpus, dev_corpus)
        pf = evalkit.PredictionFile.from_model(model, test_corpus)
        report = evalkit.category_f1(pf)
        table[order] = report.to_dict()
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            model.save(out / f"mtl-hierarchy-{order}.model")
    _dump_json({"seed": config.seed, "orders": table}, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="morphtag",
        description="Composite morphological tagging toolkit: five sequence "
                    "labelers with shared evaluation and error analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme=True, seed=True):
        if scheme:
            p.add_argument("--scheme", help="scheme definition file (default: packaged scheme)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="random seed (default 42)")

    p = sub.add_parser("prepare", help="validate coverage, sample, and build the unseen split")
    common(p, seed=False)
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=int, default=100, help="minimum occurrences per feature value")
    p.add_argument("--sample", action="store_true", help="greedily sample sentences to reach the threshold")
    p.add_argument("--out", help="write the (sampled) corpus here")
    p.add_argument("--pool", help="candidate pool for the unseen-label split")
    p.add_argument("--out-unseen", help="write the unseen split here")
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a tagger")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="JSONL training log")
    p.add_argument("--kind", type=_canonical_kind, choices=MODEL_KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hierarchy", help="MTL-Hierarchy order, e.g. N-G-C-T-L")
    p.add_argument("--pairs", help="FCRF cotemporal pairs: 'all', 'none', or 'T:C,N:G'")
    p.add_argument("--stop-train-acc", type=float, help="stop once training accuracy reaches this")
    p.add_argument("--config", help="JSON file with model configuration fields")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="gold TSV corpus to tag")
    p.add_argument("--out", required=True, help="prediction file to write")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score a prediction file")
    common(p, seed=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--macro", choices=("category", "value"), default="category")
    p.add_argument("--categories", help="comma-separated categories to display")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="metrics plus mispredictions, syncretism, unseen breakdowns")
    common(p, seed=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--reference", help="corpus whose attestations define syncretism")
    p.add_argument("--train", help="training corpus for the unseen-label report")
    p.add_argument("--top-k", type=int, default=25)
    p.add_argument("--macro", choices=("category", "value"), default="category")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="pairwise significance tests between systems")
    common(p, seed=False)
    p.add_argument("--preds", nargs="+", required=True, help="two or more prediction files")
    p.add_argument("--names", help="comma-separated system names (default: file stems)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="train and evaluate MTL-Hierarchy over several orders")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--test", required=True)
    p.add_argument("--orders", required=True, help="comma-separated hierarchy orders")
    p.add_argument("--epochs", type=int)
    p.add_argument("--stop-train-acc", type=float)
    p.add_argument("--config", help="JSON file with model configuration fields")
    p.add_argument("--out", help="write the JSON table here instead of stdout")
    p.add_argument("--out-dir", help="also save each trained model here")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MorphtagError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
