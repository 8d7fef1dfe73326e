"""morphtag: sequence-labeling toolkit for composite morphological tags.

Implements five tagger architectures over a shared BiLSTM encoder
(monolithic chain CRF, factorial CRF with loopy BP, per-token feature
sequence decoder, and shared / hierarchical multi-task CRF stacks) together
with the corpus handling, evaluation metrics, and error-analysis tooling
needed to compare them.
"""

__version__ = "0.1.0"
