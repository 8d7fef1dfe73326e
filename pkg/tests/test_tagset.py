"""Tag algebra: combinatorics, conversions, parsing, scheme validation."""

import numpy as np
import pytest

from morphtag.tagset import (
    CATEGORY_ORDER,
    CLASS_CATEGORIES,
    CLASS_ORDER,
    END,
    NA,
    START,
    LabelError,
    SchemeError,
    TagScheme,
    to_monolithic,
)


class TestLabelSpace:
    def test_per_class_sizes(self, scheme):
        assert scheme.label_space_size("Noun") == 2232
        assert scheme.label_space_size("FiniteVerb") == 162
        assert scheme.label_space_size("Participle") == 40176
        assert scheme.label_space_size("Compound") == 31
        assert scheme.label_space_size("Others") == 5

    def test_total(self, scheme):
        assert scheme.total_label_space() == 42606

    def test_value_counts(self, scheme):
        counts = {c: len(v) for c, v in scheme.categories.items()}
        assert counts == {"Tense": 18, "Case": 8, "Number": 3, "Gender": 3,
                          "Person": 3, "LastChar": 31, "Other": 5}
        assert sum(counts.values()) == 71

    def test_unknown_class(self, scheme):
        with pytest.raises(LabelError):
            scheme.label_space_size("Verb")


class TestMonolithic:
    def test_noun_encoding(self, scheme):
        tag = scheme.make_tag("Noun", {"Case": "nom", "Number": "sg", "Gender": "m", "LastChar": "a"})
        assert to_monolithic(tag) == "Noun|nom|sg|m|a"

    def test_others_encoding(self, scheme):
        tag = scheme.make_tag("Others", {"Other": "indecl"})
        assert to_monolithic(tag) == "Others|indecl"

    def test_roundtrip_random_tags(self, scheme):
        rng = np.random.Generator(np.random.PCG64(0))
        for _ in range(1000):
            tag = scheme.random_tag(rng)
            assert scheme.parse_composite(to_monolithic(tag)) == tag

    def test_equality_iff_same_label(self, scheme):
        rng = np.random.Generator(np.random.PCG64(1))
        tags = [scheme.random_tag(rng) for _ in range(200)]
        for a in tags[:20]:
            for b in tags[:20]:
                assert (a == b) == (to_monolithic(a) == to_monolithic(b))


class TestParseComposite:
    def test_value_sequence_noun(self, scheme):
        tag = scheme.parse_composite(["nom", "sg", "m", "a"])
        assert tag.cls == "Noun"
        assert tag.assignment == {"Case": "nom", "Number": "sg", "Gender": "m", "LastChar": "a"}

    def test_order_free_assembly(self, scheme):
        a = scheme.parse_composite(["sg", "a", "nom", "m"])
        b = scheme.parse_composite(["nom", "sg", "m", "a"])
        assert a == b

    def test_tense_forces_participle(self, scheme):
        tag = scheme.parse_composite(["pres", "nom", "sg", "m", "a"])
        assert tag.cls == "Participle"

    def test_incomplete(self, scheme):
        with pytest.raises(LabelError, match="incomplete: Noun missing Gender, LastChar"):
            scheme.parse_composite(["nom", "sg"])

    def test_unknown_value(self, scheme):
        with pytest.raises(LabelError, match="unknown value"):
            scheme.parse_composite(["nominative"])

    def test_duplicate_category(self, scheme):
        with pytest.raises(LabelError, match="duplicate category Case"):
            scheme.parse_composite(["nom", "voc"])

    def test_overcomplete(self, scheme):
        with pytest.raises(LabelError, match="over-complete"):
            scheme.parse_composite(["pres", "nom", "sg", "m", "a", "indecl"])

    def test_label_with_wrong_category_value(self, scheme):
        with pytest.raises(LabelError):
            scheme.parse_composite("Noun|sg|nom|m|a")  # out of canonical order

    def test_label_wrong_arity(self, scheme):
        with pytest.raises(LabelError, match="needs 4 values"):
            scheme.parse_composite("Noun|nom|sg")


class TestValueVocabulary:
    def test_length_74(self, scheme):
        assert len(scheme.value_vocabulary()) == 74

    def test_markers_first(self, scheme):
        vocab = scheme.value_vocabulary()
        assert vocab[0] == START and vocab[1] == END and vocab[2] == NA
        assert vocab.index(START) < min(vocab.index(v) for v in vocab[3:])

    def test_stable_across_calls(self, scheme):
        assert scheme.value_vocabulary() == scheme.value_vocabulary()
        assert scheme.value_vocabulary() == TagScheme.default().value_vocabulary()


class TestInvariants:
    def test_value_to_category_injective(self, scheme):
        seen = {}
        for cat in CATEGORY_ORDER:
            for v in scheme.categories[cat]:
                assert v not in seen
                seen[v] = cat
        assert len(seen) == 71

    def test_class_categories_match_checkmarks(self):
        assert set(CLASS_CATEGORIES["Noun"]) == {"Case", "Number", "Gender", "LastChar"}
        assert set(CLASS_CATEGORIES["FiniteVerb"]) == {"Tense", "Person", "Number"}
        assert set(CLASS_CATEGORIES["Participle"]) == {"Tense", "Case", "Number", "Gender", "LastChar"}
        assert set(CLASS_CATEGORIES["Compound"]) == {"LastChar"}
        assert set(CLASS_CATEGORIES["Others"]) == {"Other"}

    def test_sum_over_classes(self, scheme):
        assert sum(scheme.label_space_size(c) for c in CLASS_ORDER) == 42606


class TestSchemeValidation:
    def _base(self, scheme):
        return scheme.to_dict()

    def test_roundtrip(self, scheme):
        again = TagScheme.from_dict(scheme.to_dict())
        assert again.categories == scheme.categories

    def test_wrong_count_rejected(self, scheme):
        data = self._base(scheme)
        data["categories"][1][1] = data["categories"][1][1][:-1]  # drop a Case value
        with pytest.raises(SchemeError, match="must have 8 values"):
            TagScheme.from_dict(data)

    def test_duplicate_value_rejected(self, scheme):
        data = self._base(scheme)
        data["categories"][2][1] = ["sg", "du", "nom"]  # nom already a Case value
        with pytest.raises(SchemeError, match="globally unique"):
            TagScheme.from_dict(data)

    def test_wrong_class_constraint_rejected(self, scheme):
        data = self._base(scheme)
        data["classes"]["Compound"] = ["LastChar", "Gender"]
        with pytest.raises(SchemeError, match="class constraints"):
            TagScheme.from_dict(data)

    def test_reserved_marker_rejected(self, scheme):
        data = self._base(scheme)
        data["categories"][6][1] = ["indecl", "inf", "abs", "ger", NA]
        with pytest.raises(SchemeError, match="reserved"):
            TagScheme.from_dict(data)
