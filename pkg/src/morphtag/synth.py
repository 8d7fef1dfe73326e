"""Deterministic synthetic corpora for tests, demos, and the shipped fixtures.

The fixture lexicon assigns every surface form exactly one composite tag and
is constructed so that each of the 71 feature values is carried by at least
one lexeme; repeating every lexeme `copies` times therefore guarantees a
minimum per-value occurrence count, which the coverage checks rely on.
"""

import numpy as np

from morphtag.corpus import Corpus, Sentence, Token
from morphtag.tagset import TagScheme


def fixture_lexicon(scheme: TagScheme):
    """Surface -> tag pairs covering all five inflectional classes and all values."""
    cats = scheme.categories
    tenses, cases, numbers = cats["Tense"], cats["Case"], cats["Number"]
    genders, persons, lastchars, others = cats["Gender"], cats["Person"], cats["LastChar"], cats["Other"]
    lex = []
    for i, t in enumerate(tenses):
        tag = scheme.make_tag("FiniteVerb", {
            "Tense": t, "Number": numbers[i % 3], "Person": persons[(i // 3) % 3],
        })
        lex.append((f"gam{i:02d}ti", tag))
    for j, l in enumerate(lastchars):
        tag = scheme.make_tag("Noun", {
            "Case": cases[j % 8], "Number": numbers[j % 3],
            "Gender": genders[(j // 3) % 3], "LastChar": l,
        })
        lex.append((f"dev{j:02d}{l}", tag))
    for k in range(3):
        tag = scheme.make_tag("Participle", {
            "Tense": tenses[k], "Case": cases[k], "Number": numbers[k],
            "Gender": genders[k], "LastChar": lastchars[k],
        })
        lex.append((f"bhav{k}ant{lastchars[k]}", tag))
    for k in range(3):
        tag = scheme.make_tag("Compound", {"LastChar": lastchars[k]})
        lex.append((f"sam{k}{lastchars[k]}", tag))
    for k, o in enumerate(others):
        tag = scheme.make_tag("Others", {"Other": o})
        lex.append((f"iti{k}", tag))
    return lex


def overfit_fixture(scheme: TagScheme, copies=3, sentence_len=9, seed=7):
    """The shipped training fixture: every lexeme `copies` times, shuffled
    deterministically and chunked into fixed-length sentences."""
    lex = fixture_lexicon(scheme)
    tokens = [Token(s, tag) for s, tag in lex for _ in range(copies)]
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(tokens))
    shuffled = [tokens[i] for i in order]
    sentences = [
        Sentence(tuple(shuffled[i:i + sentence_len]))
        for i in range(0, len(shuffled), sentence_len)
    ]
    return Corpus(sentences)


def unseen_pool_fixture(scheme: TagScheme):
    """A small tagging pool in which some sentences contain tokens whose
    monolithic label does not occur in the overfit fixture."""
    lex = dict(fixture_lexicon(scheme))
    cats = scheme.categories
    novel_noun = Token("dev99ū", scheme.make_tag("Noun", {
        "Case": "voc", "Number": "du", "Gender": "f", "LastChar": cats["LastChar"][5],
    }))
    novel_verb = Token("gam99anti", scheme.make_tag("FiniteVerb", {
        "Tense": cats["Tense"][17], "Number": "sg", "Person": "1st",
    }))
    known = [Token(s, t) for s, t in sorted(lex.items())]
    sentences = [
        Sentence((known[0], novel_noun, known[10], known[20])),
        Sentence((known[1], known[11], known[21])),
        Sentence((novel_verb, known[2], known[12])),
        Sentence((known[3], known[13], known[23], known[33])),
        Sentence((known[4], novel_noun, novel_verb)),
    ]
    return Corpus(sentences)


def syncretism_reference_fixture(scheme: TagScheme):
    """The overfit fixture plus attestations that give two noun forms a
    second label each (so those forms exhibit syncretism)."""
    base = overfit_fixture(scheme)
    lex = fixture_lexicon(scheme)
    noun0_surface, noun0_tag = next((s, t) for s, t in lex if t.cls == "Noun")
    alt0 = scheme.make_tag("Noun", dict(noun0_tag.assignment, Case="voc"))
    noun1_surface, noun1_tag = [(s, t) for s, t in lex if t.cls == "Noun"][1]
    alt1 = scheme.make_tag("Noun", dict(noun1_tag.assignment, Case="nom"))
    extra = [
        Sentence((Token(noun0_surface, alt0), Token(noun1_surface, alt1))),
    ]
    return Corpus(list(base.sentences) + extra)
