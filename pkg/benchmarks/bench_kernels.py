#!/usr/bin/env python3
"""Benchmark the pure-numpy kernels against the compiled extension.

Times the three hot paths (LSTM cell step, chain-CRF forward/backward,
loopy-BP sweeps) plus one end-to-end training epoch per model kind under
each backend.  Run after `pip install -e .`:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from morphtag import fcrf
from morphtag.fcrf import Factor, FactorGraph
from morphtag.kernels import available_backends


def timeit(fn, repeats=200):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_lstm(mod, din=96, hdim=32):
    rng = np.random.Generator(np.random.PCG64(0))
    x = rng.normal(size=din)
    h = rng.normal(size=hdim)
    c = rng.normal(size=hdim)
    w = rng.normal(size=(4 * hdim, din))
    u = rng.normal(size=(4 * hdim, hdim))
    b = rng.normal(size=4 * hdim)
    _, _, cache = mod.lstm_cell_forward(x, h, c, w, u, b)
    dh, dc = rng.normal(size=hdim), rng.normal(size=hdim)

    def run():
        mod.lstm_cell_forward(x, h, c, w, u, b)
        mod.lstm_cell_backward(x, h, c, w, u, b, cache, dh, dc)

    return timeit(run)


def bench_crf(mod, T=9, L=60):
    rng = np.random.Generator(np.random.PCG64(1))
    emit = rng.normal(size=(T, L))
    trans = rng.normal(size=(L, L))
    start = rng.normal(size=L)
    end = rng.normal(size=L)

    def run():
        mod.crf_marginals(emit, trans, start, end)
        mod.crf_viterbi(emit, trans, start, end)

    return timeit(run)


def bench_bp(mod, T=9):
    rng = np.random.Generator(np.random.PCG64(2))
    sizes = [19, 9, 4, 4, 4, 32, 6]  # category values + NA
    C = len(sizes)
    pairs = [(i, j) for i in range(C) for j in range(i + 1, C)]
    unaries = [[rng.normal(size=s) for s in sizes] for _ in range(T)]
    transitions = [rng.normal(scale=0.3, size=(s, s)) for s in sizes]
    pair_tables = [rng.normal(scale=0.3, size=(sizes[i], sizes[j])) for i, j in pairs]
    graph = fcrf.build_factor_graph(unaries, transitions, pair_tables, pairs)
    flat = fcrf._flatten(graph)

    def run():
        mod.bp_run(*flat, 50, 0.5, 1e-5)

    return timeit(run, repeats=20)


def bench_epoch(kind):
    from morphtag.corpus import build_vocab
    from morphtag.models import ModelConfig, build, train
    from morphtag.synth import overfit_fixture
    from morphtag.tagset import TagScheme

    scheme = TagScheme.default()
    corpus = overfit_fixture(scheme)
    vocab = build_vocab(corpus)
    model = build(ModelConfig(kind=kind, seed=0), vocab, scheme)
    t0 = time.perf_counter()
    train(model, corpus, epochs=1)
    return time.perf_counter() - t0


def main():
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    rows = []
    for name, mod in backends.items():
        rows.append((name, bench_lstm(mod), bench_crf(mod), bench_bp(mod)))
    print()
    print(f"{'backend':<10} {'lstm cell fwd+bwd':>20} {'crf marg+viterbi':>20} {'bp 50 sweeps':>16}")
    for name, lstm, crf_t, bp in rows:
        print(f"{name:<10} {lstm * 1e6:>17.1f} us {crf_t * 1e6:>17.1f} us {bp * 1e3:>13.2f} ms")
    if len(rows) == 2:
        py = rows[0] if rows[0][0] == "python" else rows[1]
        cy = rows[1] if rows[0][0] == "python" else rows[0]
        print(f"{'speedup':<10} {py[1] / cy[1]:>18.1f}x {py[2] / cy[2]:>18.1f}x {py[3] / cy[3]:>14.1f}x")
    print()
    print("one training epoch on the 20-sentence fixture (selected backend):")
    for kind in ("MonSeq", "FCRF", "Seq", "MTL-Shared", "MTL-Hierarchy"):
        dt = bench_epoch(kind)
        print(f"  {kind:<14} {dt * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
