"""Sequence decoder: greedy decoding, teacher forcing, assembly."""

import math

import numpy as np
import pytest

from morphtag import autodiff as ad
from morphtag.seqgen import SeqDecoder, SeqgenError
from morphtag.tagset import END, NA, START


CONTEXT = 10


def make_decoder(scheme, seed=3, d_v=6, max_len=8):
    return SeqDecoder(scheme, CONTEXT, d_v=d_v, max_len=max_len, rng=ad.Rng(seed))


class TestDecodeGreedy:
    def test_end_bias_gives_empty_sequence(self, scheme, nprng):
        # saturate gates so h is strictly positive, then let only the END row
        # of the projection see it: END wins the very first step
        dec = make_decoder(scheme)
        for node in (dec.w, dec.u, dec.emb):
            node.value[...] = 0.0
        h = dec.d_v
        dec.b.value[...] = 0.0
        dec.b.value[:h] = 50.0          # input gate ~ 1
        dec.b.value[2 * h:3 * h] = 50.0  # candidate ~ 1
        dec.b.value[3 * h:] = 50.0      # output gate ~ 1
        dec.proj.value[...] = 0.0
        dec.proj.value[dec.end_slot] = 5.0
        assert dec.decode_greedy(nprng.normal(size=CONTEXT)) == []

    def test_forced_value_sequence(self, scheme, nprng):
        """Drive the projection so the decoder emits nom, sg, m, a, END by
        rewarding each target in turn through the step counter encoded in c."""
        dec = make_decoder(scheme)
        wanted = ["nom", "sg", "m", "a"]
        slots = [dec._slot_of(v) for v in wanted]
        # zero the recurrent dynamics so h is a fixed function of the input,
        # then bias the projection per previous-value embedding via w.
        dec.w.value[...] = 0.0
        dec.u.value[...] = 0.0
        dec.b.value[...] = 0.0
        dec.emb.value[...] = 0.0
        d_v = dec.d_v
        # distinct one-hot-ish embeddings for START and the wanted values
        chain = [START] + wanted
        for i, v in enumerate(chain):
            dec.emb.value[dec.value_index[v], i % d_v] = 1.0
        # h = o * tanh(c); with zeroed gates h ~ 0.25 tanh(0.5 * x_part)... instead
        # couple input directly: make the input gate and output gate wide open and
        # the candidate reproduce the previous-value slot.
        hdim = d_v
        dec.b.value[:hdim] = 50.0          # input gate ~ 1
        dec.b.value[3 * hdim:] = 50.0      # output gate ~ 1
        for j in range(d_v):
            dec.w.value[2 * hdim + j, j] = 50.0  # candidate tanh -> sign of x_j
        # projection: previous symbol at position i selects the next target
        dec.proj.value[...] = -10.0
        for i, v in enumerate(chain):
            nxt = slots[i] if i < len(slots) else dec.end_slot
            dec.proj.value[nxt, i % d_v] = 20.0
        out = dec.decode_greedy(np.zeros(CONTEXT))
        assert out == wanted

    def test_length_capped_for_random_params(self, scheme):
        for seed in range(50):
            dec = make_decoder(scheme, seed=seed, max_len=5)
            h = ad.Rng(seed + 999).uniform(-2, 2, CONTEXT)
            out = dec.decode_greedy(h)
            assert len(out) <= 5
            assert all(v not in (START, END, NA) for v in out)

    def test_deterministic(self, scheme, nprng):
        dec = make_decoder(scheme, seed=8)
        h = nprng.normal(size=CONTEXT)
        assert dec.decode_greedy(h) == dec.decode_greedy(h)

    def test_max_len_validation(self, scheme, nprng):
        dec = make_decoder(scheme)
        with pytest.raises(SeqgenError):
            dec.decode_greedy(nprng.normal(size=CONTEXT), max_len=0)


class TestTeacherForcedNll:
    def test_uniform_logits_log72(self, scheme):
        dec = make_decoder(scheme)
        for name, node in dec.params().items():
            node.value[...] = 0.0
        h = ad.leaf(np.zeros(CONTEXT))
        for gold in (["nom", "sg", "m", "a"], ["indecl"], ["pres", "pl", "3rd"]):
            loss = dec.teacher_forced_nll(h, gold)
            expected = (len(gold) + 1) * math.log(72)
            assert float(loss.value) == pytest.approx(expected, abs=1e-9)

    def test_loss_vanishes_with_forced_margin(self, scheme):
        dec = make_decoder(scheme)
        gold = ["nom", "sg", "m", "a"]
        # count how small the loss can get when every step's logits are forced
        # onto the gold symbol: emulate by a huge gold-row bias via proj rows.
        # With zero LSTM params h = 0, so bias the projection's columns cannot
        # help; instead check monotonicity through training-free construction:
        # directly verify the per-step op on forced logits.
        logits = np.full(dec.n_values + 1, -30.0)
        slot = dec._slot_of("nom")
        logits[slot] = 30.0
        node = ad.apply("step-nll", [ad.leaf(logits)], target=slot)
        assert 0.0 <= float(node.value) < 1e-9

    def test_unknown_gold_symbol(self, scheme):
        dec = make_decoder(scheme)
        h = ad.leaf(np.zeros(CONTEXT))
        with pytest.raises(SeqgenError):
            dec.teacher_forced_nll(h, ["nominative"])
        with pytest.raises(SeqgenError):
            dec.teacher_forced_nll(h, [NA])

    def test_gradient_matches_finite_differences(self, scheme):
        dec = make_decoder(scheme, seed=21, d_v=4)
        h = ad.parameter(ad.Rng(4).uniform(-1, 1, CONTEXT), "h")
        gold = ["pres", "sg", "3rd"]
        params = dict(dec.params())
        params["h"] = h

        def build():
            return dec.teacher_forced_nll(h, gold)

        report = ad.grad_check(build, params, eps=1e-5, tol=1e-4, max_entries=40, seed=5)
        assert report.ok, report


class TestAssemble:
    def test_finite_verb(self, scheme):
        dec = make_decoder(scheme)
        pred = dec.assemble(["pres", "3rd", "pl"])
        assert pred.valid
        assert pred.tag.cls == "FiniteVerb"
        assert pred.tag.monolithic() == "FiniteVerb|pres|pl|3rd"

    def test_duplicate_category_invalid(self, scheme):
        pred = make_decoder(scheme).assemble(["nom", "nom"])
        assert not pred.valid
        assert pred.values == ("nom", "nom")
        assert pred.label() == "INVALID:nom+nom"

    def test_incomplete_invalid(self, scheme):
        pred = make_decoder(scheme).assemble(["nom", "sg", "m"])
        assert not pred.valid
        assert pred.values == ("nom", "sg", "m")

    def test_empty_invalid(self, scheme):
        pred = make_decoder(scheme).assemble([])
        assert not pred.valid
        assert pred.label() == "INVALID"


def test_reachable_space_covers_any_valid_label(scheme, nprng):
    """Any valid tag's value sequence fits within the default length cap, so
    the decoder's reachable output space covers the full label space."""
    dec = make_decoder(scheme)
    for _ in range(200):
        tag = scheme.random_tag(nprng)
        seq = dec.gold_sequence(tag)
        assert len(seq) + 1 <= dec.max_len  # values + END
        assert dec.assemble(seq).tag == tag
