"""Linear-chain CRF: scoring, exact inference, Viterbi decoding, NLL training.

One head serves the monolithic tagger (over attested monolithic labels) and
every multi-task head (over one category's values plus the NA marker).
Potentials are an emission matrix in log space plus a transition matrix and
explicit start/end score vectors.  The negative log-likelihood is exposed
both as plain-array functions and as a fused autodiff op whose gradient is
the classic marginals-minus-indicators form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from morphtag import autodiff as ad
from morphtag.errors import MorphtagError
from morphtag.kernels import crf_log_partition, crf_marginals, crf_viterbi


class CrfError(MorphtagError):
    pass


@dataclass
class ChainCrfPotentials:
    """Transition/start/end scores plus the label inventory they index."""

    trans: np.ndarray
    start: np.ndarray
    end: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        self.end = np.asarray(self.end, dtype=np.float64)
        L = self.start.shape[0]
        if self.trans.shape != (L, L) or self.end.shape != (L,):
            raise CrfError(
                f"inconsistent potential shapes: trans {self.trans.shape}, "
                f"start {self.start.shape}, end {self.end.shape}"
            )
        if self.labels and len(self.labels) != L:
            raise CrfError(f"label list length {len(self.labels)} != L={L}")
        for name, arr in (("trans", self.trans), ("start", self.start), ("end", self.end)):
            if not np.isfinite(arr).all():
                raise CrfError(f"non-finite entries in {name}")

    @property
    def n_labels(self):
        return self.start.shape[0]


def _check_scores(scores, pots):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] != pots.n_labels:
        raise CrfError(f"scores must be (T>=1, L={pots.n_labels}), got {scores.shape}")
    return scores


def log_partition(scores, pots: ChainCrfPotentials):
    """log sum over all L^T paths of exp(start + emissions + transitions + end)."""
    scores = _check_scores(scores, pots)
    logz, _ = crf_log_partition(scores, pots.trans, pots.start, pots.end)
    return logz


def marginals(scores, pots: ChainCrfPotentials):
    """Forward-backward node marginals (T x L) and edge marginals ((T-1) x L x L)."""
    scores = _check_scores(scores, pots)
    _, node, edge = crf_marginals(scores, pots.trans, pots.start, pots.end)
    return node, edge


def viterbi(scores, pots: ChainCrfPotentials):
    """Best path and its score; ties break toward the lower label index."""
    scores = _check_scores(scores, pots)
    path, score = crf_viterbi(scores, pots.trans, pots.start, pots.end)
    return list(int(i) for i in path), score


def path_score(scores, pots: ChainCrfPotentials, labels):
    scores = _check_scores(scores, pots)
    T, L = scores.shape
    labels = list(labels)
    if len(labels) != T or any(not 0 <= y < L for y in labels):
        raise CrfError(f"gold sequence must be {T} labels in [0, {L}), got {labels}")
    s = pots.start[labels[0]] + pots.end[labels[-1]] + sum(scores[t, y] for t, y in enumerate(labels))
    s += sum(pots.trans[labels[t - 1], labels[t]] for t in range(1, T))
    return float(s)


def nll(scores, pots: ChainCrfPotentials, gold):
    """Negative log-likelihood of the gold path: log Z - gold path score."""
    return log_partition(scores, pots) - path_score(scores, pots, gold)


def nll_with_grads(scores, pots: ChainCrfPotentials, gold):
    """NLL plus its gradients w.r.t. emissions, transitions, start, and end.

    All gradients are marginals minus gold indicators.
    """
    scores = _check_scores(scores, pots)
    T, L = scores.shape
    gold = list(gold)
    loss = nll(scores, pots, gold)
    _, node, edge = crf_marginals(scores, pots.trans, pots.start, pots.end)
    d_scores = node.copy()
    d_scores[np.arange(T), gold] -= 1.0
    d_trans = edge.sum(axis=0) if T > 1 else np.zeros_like(pots.trans)
    for t in range(1, T):
        d_trans[gold[t - 1], gold[t]] -= 1.0
    d_start = node[0].copy()
    d_start[gold[0]] -= 1.0
    d_end = node[T - 1].copy()
    d_end[gold[T - 1]] -= 1.0
    return loss, d_scores, d_trans, d_start, d_end


# ---------------------------------------------------------------------------
# fused autodiff op: parents are the per-position emission vectors followed
# by the transition matrix and the start/end vectors


def _fw_chain_nll(values, attrs):
    *emits, trans, start, end = values
    scores = np.stack(emits)
    pots = ChainCrfPotentials(trans, start, end)
    loss, d_scores, d_trans, d_start, d_end = nll_with_grads(scores, pots, attrs["gold"])
    return np.asarray(loss), (d_scores, d_trans, d_start, d_end)


def _bw_chain_nll(grad, values, out, ctx, attrs):
    d_scores, d_trans, d_start, d_end = ctx
    g = float(grad)
    return [g * d_scores[t] for t in range(d_scores.shape[0])] + [g * d_trans, g * d_start, g * d_end]


ad.register_op("chain-crf-nll", _fw_chain_nll, _bw_chain_nll)


def nll_node(emission_nodes, trans_node, start_node, end_node, gold):
    """Differentiable chain-CRF NLL as a single graph node."""
    return ad.apply(
        "chain-crf-nll",
        list(emission_nodes) + [trans_node, start_node, end_node],
        gold=tuple(int(y) for y in gold),
    )


class ChainCrfHead:
    """Trainable CRF output layer: emission projection + chain potentials."""

    def __init__(self, labels, d_in, rng, prefix="crf"):
        L = len(labels)
        if L < 1:
            raise CrfError("label set must be non-empty")
        self.labels = tuple(labels)
        self.proj = ad.parameter(ad.glorot(rng, (L, d_in)), f"{prefix}.proj")
        self.trans = ad.parameter(ad.glorot(rng, (L, L)), f"{prefix}.trans")
        self.start = ad.parameter(np.zeros(L), f"{prefix}.start")
        self.end = ad.parameter(np.zeros(L), f"{prefix}.end")

    def params(self):
        return {n.name: n for n in (self.proj, self.trans, self.start, self.end)}

    def emissions(self, states):
        return [ad.matmul(self.proj, h) for h in states]

    def loss(self, states, gold_ids):
        return nll_node(self.emissions(states), self.trans, self.start, self.end, gold_ids)

    def potentials(self):
        return ChainCrfPotentials(self.trans.value, self.start.value, self.end.value, self.labels)

    def decode(self, state_values):
        scores = np.stack([self.proj.value @ h for h in state_values])
        ids, score = viterbi(scores, self.potentials())
        return ids, score
