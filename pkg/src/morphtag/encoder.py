"""Contextual token encoder.

Each token is embedded as word-embedding ‖ character-BiLSTM summary (final
forward and backward states), and the embedded sentence runs through a stack
of word-level BiLSTMs.  With shortcut connections enabled, every layer above
the first also sees the raw token embeddings, so deep layers keep access to
the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from morphtag import autodiff as ad
from morphtag.errors import MorphtagError


class EncoderError(MorphtagError):
    pass


@dataclass
class EncoderDims:
    d_w: int = 32   # word embedding
    d_c: int = 16   # character embedding
    d_cl: int = 16  # character LSTM hidden, per direction
    d_h: int = 32   # word LSTM hidden, per direction

    @property
    def token_width(self):
        return self.d_w + 2 * self.d_cl

    @property
    def state_width(self):
        return 2 * self.d_h


def _lstm_params(rng, d_in, d_h, prefix):
    return {
        f"{prefix}.w": ad.parameter(ad.glorot(rng, (4 * d_h, d_in)), f"{prefix}.w"),
        f"{prefix}.u": ad.parameter(ad.glorot(rng, (4 * d_h, d_h)), f"{prefix}.u"),
        f"{prefix}.b": ad.parameter(np.zeros(4 * d_h), f"{prefix}.b"),
    }


class Encoder:
    """Character-aware BiLSTM encoder with an optional multi-layer stack."""

    def __init__(self, vocab, dims: EncoderDims, n_layers=1, shortcut=False, rng=None):
        if n_layers < 1:
            raise EncoderError(f"need at least one layer, got {n_layers}")
        self.vocab = vocab
        self.dims = dims
        self.n_layers = n_layers
        self.shortcut = shortcut
        p = {}
        p["word_emb"] = ad.parameter(ad.glorot(rng, (vocab.n_words, dims.d_w)), "word_emb")
        p["char_emb"] = ad.parameter(ad.glorot(rng, (vocab.n_chars, dims.d_c)), "char_emb")
        p.update(_lstm_params(rng, dims.d_c, dims.d_cl, "char.fwd"))
        p.update(_lstm_params(rng, dims.d_c, dims.d_cl, "char.bwd"))
        for k in range(n_layers):
            d_in = dims.token_width if k == 0 else dims.state_width + (dims.token_width if shortcut else 0)
            p.update(_lstm_params(rng, d_in, dims.d_h, f"layer{k}.fwd"))
            p.update(_lstm_params(rng, d_in, dims.d_h, f"layer{k}.bwd"))
        self._params = p

    def param_dict(self):
        return dict(self._params)

    def _run_chain(self, inputs, prefix, d_h, reverse=False):
        p = self._params
        w, u, b = p[f"{prefix}.w"], p[f"{prefix}.u"], p[f"{prefix}.b"]
        h = ad.leaf(np.zeros(d_h))
        c = ad.leaf(np.zeros(d_h))
        seq = reversed(inputs) if reverse else inputs
        states = []
        for x in seq:
            h, c = ad.lstm_cell(x, h, c, w, u, b)
            states.append(h)
        return states[::-1] if reverse else states

    def token_vector(self, surface):
        """word embedding ‖ final char-LSTM states; OOV words fall back to the
        UNK row but keep their real character path."""
        p = self._params
        word = ad.embedding(p["word_emb"], self.vocab.word_id(surface))
        chars = [ad.embedding(p["char_emb"], i) for i in self.vocab.char_ids(surface)]
        fwd = self._run_chain(chars, "char.fwd", self.dims.d_cl)[-1]
        bwd = self._run_chain(chars, "char.bwd", self.dims.d_cl, reverse=True)[0]
        return ad.concat([word, fwd, bwd])

    def encode(self, surfaces, depth=None):
        """Hidden states per layer per token, up to `depth` layers."""
        depth = self.n_layers if depth is None else depth
        if not 1 <= depth <= self.n_layers:
            raise EncoderError(f"depth {depth} out of range [1, {self.n_layers}]")
        if not surfaces:
            raise EncoderError("cannot encode an empty sentence")
        embeds = [self.token_vector(s) for s in surfaces]
        layers = []
        below = embeds
        for k in range(depth):
            if k > 0 and self.shortcut:
                inputs = [ad.concat([h, e]) for h, e in zip(below, embeds)]
            else:
                inputs = below
            fwd = self._run_chain(inputs, f"layer{k}.fwd", self.dims.d_h)
            bwd = self._run_chain(inputs, f"layer{k}.bwd", self.dims.d_h, reverse=True)
            states = [ad.concat([f, b]) for f, b in zip(fwd, bwd)]
            layers.append(states)
            below = states
        return layers
