"""Per-token feature-sequence decoder.

For each token the context vector h_i conditions an LSTM decoder that emits
one feature value per step; decoding starts from the START marker and stops
at END (or a length cap).  Training is teacher-forced: each step sees the
gold previous value.  The output projection covers the 71 feature values
plus END; START and NA are never produced.
"""

from __future__ import annotations

import numpy as np

from morphtag import autodiff as ad
from morphtag import tagset
from morphtag.errors import MorphtagError
from morphtag.kernels import lstm_cell_forward


class SeqgenError(MorphtagError):
    pass


def _fw_step_nll(values, attrs):
    logits = values[0]
    t = attrs["target"]
    if not 0 <= t < logits.shape[0]:
        raise SeqgenError(f"target {t} out of range for {logits.shape[0]} logits")
    m = logits.max()
    lse = m + np.log(np.exp(logits - m).sum())
    soft = np.exp(logits - lse)
    return np.asarray(lse - logits[t]), soft


def _bw_step_nll(grad, values, out, ctx, attrs):
    g = ctx.copy()
    g[attrs["target"]] -= 1.0
    return [float(grad) * g]


ad.register_op("step-nll", _fw_step_nll, _bw_step_nll)


class SeqDecoder:
    """LSTM decoder over the value vocabulary, conditioned on h_i every step."""

    def __init__(self, scheme, context_dim, d_v=32, max_len=8, rng=None):
        self.scheme = scheme
        self.vocab = scheme.value_vocabulary()  # START, END, NA, then 71 values
        self.n_values = len(self.vocab) - 3
        self.max_len = max_len
        self.d_v = d_v
        self.context_dim = context_dim
        self.value_index = {v: i for i, v in enumerate(self.vocab)}
        # output slot i < n_values -> vocab[3 + i]; slot n_values -> END
        self.end_slot = self.n_values
        d_in = d_v + context_dim
        self.emb = ad.parameter(ad.glorot(rng, (len(self.vocab), d_v)), "dec.emb")
        self.w = ad.parameter(ad.glorot(rng, (4 * d_v, d_in)), "dec.w")
        self.u = ad.parameter(ad.glorot(rng, (4 * d_v, d_v)), "dec.u")
        self.b = ad.parameter(np.zeros(4 * d_v), "dec.b")
        self.proj = ad.parameter(ad.glorot(rng, (self.n_values + 1, d_v)), "dec.proj")

    def params(self):
        return {n.name: n for n in (self.emb, self.w, self.u, self.b, self.proj)}

    def _slot_of(self, value):
        if value not in self.value_index or value in (tagset.START, tagset.END, tagset.NA):
            raise SeqgenError(f"value {value!r} is not an emittable feature value")
        return self.value_index[value] - 3

    def gold_sequence(self, tag):
        """Values of the gold tag in canonical category order (END is implicit)."""
        return list(tag.values)

    def teacher_forced_nll(self, h_node, gold_values):
        """Sum of per-step cross-entropies for gold values followed by END."""
        slots = [self._slot_of(v) for v in gold_values] + [self.end_slot]
        inputs = [self.value_index[tagset.START]] + [self.value_index[v] for v in gold_values]
        h = ad.leaf(np.zeros(self.d_v))
        c = ad.leaf(np.zeros(self.d_v))
        loss = None
        for prev_id, target in zip(inputs, slots):
            x = ad.concat([ad.embedding(self.emb, prev_id), h_node])
            h, c = ad.lstm_cell(x, h, c, self.w, self.u, self.b)
            step = ad.apply("step-nll", [ad.matmul(self.proj, h)], target=target)
            loss = step if loss is None else ad.add(loss, step)
        return loss

    def decode_greedy(self, h_value, max_len=None):
        """Greedy decode on plain arrays; returns emitted values, markers excluded."""
        max_len = self.max_len if max_len is None else max_len
        if max_len < 1:
            raise SeqgenError(f"max_len must be >= 1, got {max_len}")
        h = np.zeros(self.d_v)
        c = np.zeros(self.d_v)
        prev = self.value_index[tagset.START]
        out = []
        for _ in range(max_len):
            x = np.concatenate([self.emb.value[prev], h_value])
            h, c, _ = lstm_cell_forward(x, h, c, self.w.value, self.u.value, self.b.value)
            slot = int(np.argmax(self.proj.value @ h))
            if slot == self.end_slot:
                break
            value = self.vocab[3 + slot]
            out.append(value)
            prev = self.value_index[value]
        return out

    def assemble(self, values):
        """Parse emitted values into a tag, or keep them raw with an invalid flag."""
        return tagset.assemble(self.scheme, values)
