"""Composite morphological tag algebra.

A tag scheme has seven grammatical categories with fixed value counts
(Tense 18, Case 8, Number 3, Gender 3, Person 3, LastChar 31, Other 5;
71 values total) and five inflectional classes, each requiring a fixed
subset of the categories.  A token's tag can be viewed two ways:

* composite: its inflectional class plus one value per required category;
* monolithic: the same thing flattened to a single string such as
  ``Noun|nom|sg|m|a`` (values joined in canonical category order).

Concrete value names are loaded from a scheme definition file and validated
against the fixed counts; nothing else in the package hard-codes them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from morphtag.errors import MorphtagError


class SchemeError(MorphtagError):
    """Scheme definition file violates the fixed category/class structure."""


class LabelError(MorphtagError):
    """A label or value sequence does not form a valid composite tag."""


CATEGORY_ORDER = ("Tense", "Case", "Number", "Gender", "Person", "LastChar", "Other")

VALUE_COUNTS = {
    "Tense": 18,
    "Case": 8,
    "Number": 3,
    "Gender": 3,
    "Person": 3,
    "LastChar": 31,
    "Other": 5,
}

# Required categories per inflectional class, in canonical category order.
CLASS_CATEGORIES = {
    "Noun": ("Case", "Number", "Gender", "LastChar"),
    "FiniteVerb": ("Tense", "Number", "Person"),
    "Participle": ("Tense", "Case", "Number", "Gender", "LastChar"),
    "Compound": ("LastChar",),
    "Others": ("Other",),
}

CLASS_ORDER = ("Noun", "FiniteVerb", "Participle", "Compound", "Others")

START = "<start>"
END = "<end>"
NA = "<na>"


@dataclass(frozen=True)
class CompositeTag:
    """An inflectional class plus one value per required category.

    `values` are stored in the class's canonical category order, which makes
    equality, hashing, and the monolithic encoding line up.
    """

    cls: str
    values: tuple[str, ...]

    @property
    def assignment(self):
        return dict(zip(CLASS_CATEGORIES[self.cls], self.values))

    def value_for(self, category):
        cats = CLASS_CATEGORIES[self.cls]
        return self.values[cats.index(category)] if category in cats else None

    def monolithic(self):
        return "|".join((self.cls,) + self.values)

    def __str__(self):
        return self.monolithic()


def to_monolithic(tag: CompositeTag) -> str:
    """Canonical flat encoding: class name + values in category order."""
    return tag.monolithic()


INVALID = "INVALID"


@dataclass(frozen=True)
class Prediction:
    """A decoded analysis: either a valid composite tag, or the raw predicted
    values kept as-is so category-level scoring can still give partial credit."""

    tag: CompositeTag | None
    values: tuple[str, ...]

    @property
    def valid(self):
        return self.tag is not None

    def label(self):
        if self.tag is not None:
            return self.tag.monolithic()
        return f"{INVALID}:{'+'.join(self.values)}" if self.values else INVALID

    @classmethod
    def of_tag(cls, tag):
        return cls(tag, tag.values)


def assemble(scheme: "TagScheme", values) -> Prediction:
    """Assemble predicted values into a tag; invalid sets are flagged, never repaired."""
    values = tuple(values)
    try:
        return Prediction(scheme.parse_composite(values), values)
    except LabelError:
        return Prediction(None, values)


class TagScheme:
    """Immutable category/value/class definitions loaded from a scheme file."""

    def __init__(self, categories):
        # categories: mapping name -> tuple of value names, already validated
        self.categories = {name: tuple(categories[name]) for name in CATEGORY_ORDER}
        self.value_to_category = {}
        for name, values in self.categories.items():
            for v in values:
                self.value_to_category[v] = name
        self.value_index = {
            name: {v: i for i, v in enumerate(values)}
            for name, values in self.categories.items()
        }

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        if "categories" not in data:
            raise SchemeError("scheme file missing 'categories'")
        raw = data["categories"]
        names = [entry[0] for entry in raw]
        if names != list(CATEGORY_ORDER):
            raise SchemeError(f"categories must be exactly {list(CATEGORY_ORDER)} in order, got {names}")
        categories = {}
        seen = {}
        for name, values in raw:
            if len(values) != VALUE_COUNTS[name]:
                raise SchemeError(f"category {name} must have {VALUE_COUNTS[name]} values, got {len(values)}")
            for v in values:
                if not isinstance(v, str) or not v:
                    raise SchemeError(f"category {name}: values must be non-empty strings")
                if "|" in v or "+" in v or v in (START, END, NA):
                    raise SchemeError(f"category {name}: value {v!r} uses a reserved character or marker")
                if v in seen:
                    raise SchemeError(f"value {v!r} appears in both {seen[v]} and {name}; values must be globally unique")
                seen[v] = name
            categories[name] = tuple(values)
        classes = data.get("classes")
        if classes is not None:
            expected = {k: sorted(v) for k, v in CLASS_CATEGORIES.items()}
            got = {k: sorted(v) for k, v in classes.items()}
            if got != expected:
                raise SchemeError(f"class constraints must match {expected}, got {got}")
        return cls(categories)

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise SchemeError(f"cannot read scheme file {path}: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def default(cls):
        """The fixture scheme shipped with the package."""
        from importlib.resources import files

        data = json.loads(files("morphtag.data").joinpath("scheme.json").read_text(encoding="utf-8"))
        return cls.from_dict(data)

    def to_dict(self):
        return {
            "categories": [[name, list(values)] for name, values in self.categories.items()],
            "classes": {k: list(v) for k, v in CLASS_CATEGORIES.items()},
        }

    # -- label-space combinatorics ------------------------------------------

    def label_space_size(self, cls_name):
        """Number of distinct composite tags for one inflectional class."""
        if cls_name not in CLASS_CATEGORIES:
            raise LabelError(f"unknown inflectional class {cls_name!r}")
        n = 1
        for cat in CLASS_CATEGORIES[cls_name]:
            n *= len(self.categories[cat])
        return n

    def total_label_space(self):
        return sum(self.label_space_size(c) for c in CLASS_ORDER)

    def value_vocabulary(self):
        """All feature values in a fixed order, preceded by START/END/NA markers."""
        vocab = [START, END, NA]
        for name in CATEGORY_ORDER:
            vocab.extend(self.categories[name])
        return tuple(vocab)

    # -- parsing -------------------------------------------------------------

    def make_tag(self, cls_name, assignment):
        """Build a tag from a class name and a category -> value mapping."""
        if cls_name not in CLASS_CATEGORIES:
            raise LabelError(f"unknown inflectional class {cls_name!r}")
        cats = CLASS_CATEGORIES[cls_name]
        if set(assignment) != set(cats):
            raise LabelError(
                f"{cls_name} requires categories {sorted(cats)}, got {sorted(assignment)}"
            )
        values = []
        for cat in cats:
            v = assignment[cat]
            if v not in self.value_index[cat]:
                raise LabelError(f"unknown value {v!r} for category {cat}")
            values.append(v)
        return CompositeTag(cls_name, tuple(values))

    def parse_composite(self, label):
        """Parse a monolithic label string or a bare value sequence into a tag.

        A string containing '|' is treated as a monolithic label and must be
        in canonical form.  Any other sequence of values is classified by
        recovering each value's category (value names are globally unique)
        and matching the category set against the five classes.
        """
        if isinstance(label, str):
            parts = label.split("|")
            if parts[0] in CLASS_CATEGORIES:
                return self._parse_label(parts[0], parts[1:])
            values = parts if len(parts) > 1 else [label]
            return self._parse_values(values)
        return self._parse_values(list(label))

    def _parse_label(self, cls_name, values):
        cats = CLASS_CATEGORIES[cls_name]
        if len(values) != len(cats):
            raise LabelError(
                f"{cls_name} label needs {len(cats)} values ({', '.join(cats)}), got {len(values)}"
            )
        for cat, v in zip(cats, values):
            if v not in self.value_index[cat]:
                owner = self.value_to_category.get(v)
                if owner is None:
                    raise LabelError(f"unknown value {v!r}")
                raise LabelError(f"value {v!r} belongs to {owner}, expected a {cat} value")
        return CompositeTag(cls_name, tuple(values))

    def _parse_values(self, values):
        assignment = {}
        for v in values:
            cat = self.value_to_category.get(v)
            if cat is None:
                raise LabelError(f"unknown value {v!r}")
            if cat in assignment:
                raise LabelError(f"duplicate category {cat}: both {assignment[cat]!r} and {v!r}")
            assignment[cat] = v
        got = set(assignment)
        for cls_name in CLASS_ORDER:
            if got == set(CLASS_CATEGORIES[cls_name]):
                return self.make_tag(cls_name, assignment)
        # No exact class: report the nearest superset class as incomplete,
        # otherwise the value set is over-complete / inconsistent.
        candidates = [
            (len(set(CLASS_CATEGORIES[c]) - got), c)
            for c in CLASS_ORDER
            if got < set(CLASS_CATEGORIES[c])
        ]
        if candidates:
            _, best = min(candidates)
            missing = [c for c in CLASS_CATEGORIES[best] if c not in got]
            raise LabelError(f"incomplete: {best} missing {', '.join(missing)}")
        raise LabelError(
            f"over-complete: categories {sorted(got)} do not match any inflectional class"
        )

    def random_tag(self, rng):
        """Draw a uniformly random class and value assignment (for tests)."""
        cls_name = CLASS_ORDER[int(rng.integers(0, len(CLASS_ORDER)))]
        assignment = {
            cat: self.categories[cat][int(rng.integers(0, len(self.categories[cat])))]
            for cat in CLASS_CATEGORIES[cls_name]
        }
        return self.make_tag(cls_name, assignment)
