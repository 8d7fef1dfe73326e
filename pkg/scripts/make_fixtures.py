#!/usr/bin/env python3
"""Regenerate the TSV fixtures shipped under morphtag/data/fixtures."""

from pathlib import Path

from morphtag.corpus import write_tsv
from morphtag.synth import overfit_fixture, syncretism_reference_fixture, unseen_pool_fixture
from morphtag.tagset import TagScheme


def main():
    out = Path(__file__).resolve().parent.parent / "src" / "morphtag" / "data" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    scheme = TagScheme.default()
    write_tsv(overfit_fixture(scheme), out / "train_20.tsv")
    write_tsv(unseen_pool_fixture(scheme), out / "pool_unseen.tsv")
    write_tsv(syncretism_reference_fixture(scheme), out / "ref_syncretism.tsv")
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
