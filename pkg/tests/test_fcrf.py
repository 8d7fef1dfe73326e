"""Factorial CRF and loopy BP vs full-joint enumeration (the independent oracle)."""

import itertools

import numpy as np
import pytest

from morphtag import autodiff as ad
from morphtag import crf, fcrf
from morphtag.crf import ChainCrfPotentials
from morphtag.fcrf import Factor, FactorGraph, FcrfError, build_factor_graph, loopy_bp


# ---------------------------------------------------------------------------
# oracle: materialize the full joint log-score tensor by broadcasting


def joint_log_scores(graph):
    total = np.zeros(graph.domains)
    n = graph.n_vars
    for f in graph.factors:
        if len(f.vars) == 1:
            dims = [1] * n
            dims[f.vars[0]] = f.table.shape[0]
            total = total + f.table.reshape(dims)
        else:
            u, v = f.vars
            t = f.table if u < v else f.table.T
            a, b = min(u, v), max(u, v)
            dims = [1] * n
            dims[a], dims[b] = t.shape
            total = total + t.reshape(dims)
    return total


def exact_marginals(graph):
    total = joint_log_scores(graph)
    m = total.max()
    p = np.exp(total - m)
    z = p.sum()
    logz = m + np.log(z)
    p /= z
    var_marg = []
    for v in range(graph.n_vars):
        axes = tuple(i for i in range(graph.n_vars) if i != v)
        var_marg.append(p.sum(axis=axes))
    factor_marg = []
    for f in graph.factors:
        if len(f.vars) == 1:
            factor_marg.append(var_marg[f.vars[0]])
        else:
            u, v = f.vars
            axes = tuple(i for i in range(graph.n_vars) if i not in (u, v))
            mm = p.sum(axis=axes)
            factor_marg.append(mm if u < v else mm.T)
    return logz, var_marg, factor_marg


def random_tree_graph(rng, max_vars=10, max_dom=4):
    """Random acyclic pairwise graph: a uniform spanning-tree-ish structure
    plus a unary factor on every variable."""
    n = int(rng.integers(2, max_vars + 1))
    domains = [int(rng.integers(2, max_dom + 1)) for _ in range(n)]
    factors = [Factor((v,), rng.normal(scale=1.5, size=domains[v])) for v in range(n)]
    for v in range(1, n):
        u = int(rng.integers(0, v))
        factors.append(Factor((u, v), rng.normal(scale=1.5, size=(domains[u], domains[v]))))
    return FactorGraph(domains, factors)


class TestFactorGraphValidation:
    def test_bad_arity(self):
        with pytest.raises(FcrfError, match="arity"):
            FactorGraph([2, 2, 2], [Factor((0, 1, 2), np.zeros((2, 2, 2)))])

    def test_self_loop(self):
        with pytest.raises(FcrfError, match="distinct"):
            FactorGraph([2], [Factor((0, 0), np.zeros((2, 2)))])

    def test_shape_mismatch(self):
        with pytest.raises(FcrfError, match="shape"):
            FactorGraph([2, 3], [Factor((0, 1), np.zeros((3, 2)))])


class TestGraphStructure:
    def _tables(self, C, sizes, pairs, rng):
        unaries_t = lambda: [rng.normal(size=sizes[c]) for c in range(C)]
        transitions = [rng.normal(size=(sizes[c], sizes[c])) for c in range(C)]
        pair_tables = [rng.normal(size=(sizes[i], sizes[j])) for i, j in pairs]
        return unaries_t, transitions, pair_tables

    def test_t1_structure(self, nprng):
        C, sizes = 7, [4, 3, 2, 3, 2, 5, 3]
        pairs = [(i, j) for i in range(C) for j in range(i + 1, C)]
        unaries_t, transitions, pair_tables = self._tables(C, sizes, pairs, nprng)
        g = build_factor_graph([unaries_t()], transitions, pair_tables, pairs)
        assert g.n_vars == 7
        arities = [len(f.vars) for f in g.factors]
        assert arities.count(1) == 7
        assert arities.count(2) == len(pairs)  # no transitions at T=1

    def test_t3_all_pairs(self, nprng):
        C, sizes = 7, [3] * 7
        pairs = [(i, j) for i in range(C) for j in range(i + 1, C)]
        assert len(pairs) == 21
        unaries_t, transitions, pair_tables = self._tables(C, sizes, pairs, nprng)
        g = build_factor_graph([unaries_t() for _ in range(3)], transitions, pair_tables, pairs)
        assert g.n_vars == 21
        arities = [len(f.vars) for f in g.factors]
        assert arities.count(1) == 21
        # 7 * (3-1) transition + 21 * 3 cotemporal
        assert arities.count(2) == 14 + 63


class TestBpOnTrees:
    def test_single_variable_unary_only(self, nprng):
        t = nprng.normal(size=5)
        g = FactorGraph([5], [Factor((0,), t)])
        res = loopy_bp(g, max_iters=10, damping=0.0, tol=1e-10)
        assert res.converged
        assert res.iterations == 1
        np.testing.assert_allclose(res.var_beliefs[0], np.exp(t) / np.exp(t).sum(), atol=1e-12)

    def test_random_trees_exact_within_diameter_plus_one(self):
        for seed in range(50):
            rng = np.random.Generator(np.random.PCG64(seed))
            g = random_tree_graph(rng)
            res = loopy_bp(g, max_iters=200, damping=0.0, tol=1e-12)
            assert res.converged
            assert res.iterations <= g.diameter() + 1
            logz, var_o, fac_o = exact_marginals(g)
            for got, want in zip(res.var_beliefs, var_o):
                np.testing.assert_allclose(got, want, atol=1e-9)
            for got, want in zip(res.factor_beliefs, fac_o):
                np.testing.assert_allclose(got, want, atol=1e-9)

    def test_t1_cotemporal_chain_is_tree(self, nprng):
        # three categories at one timestep linked in a chain: loop-free
        sizes = [3, 4, 2]
        pairs = [(0, 1), (1, 2)]
        unaries = [[nprng.normal(size=s) for s in sizes]]
        transitions = [nprng.normal(size=(s, s)) for s in sizes]
        pair_tables = [nprng.normal(size=(sizes[i], sizes[j])) for i, j in pairs]
        g = build_factor_graph(unaries, transitions, pair_tables, pairs)
        res = loopy_bp(g, max_iters=50, damping=0.0, tol=1e-12)
        assert res.converged
        _, var_o, _ = exact_marginals(g)
        for got, want in zip(res.var_beliefs, var_o):
            np.testing.assert_allclose(got, want, atol=1e-9)

    def test_zero_cotemporal_factorizes_into_chains(self, nprng):
        # with no cotemporal potentials the factorial graph is a stack of
        # independent chain CRFs; compare per-category marginals
        T, C = 4, 3
        sizes = [3, 2, 4]
        unaries = [[nprng.normal(size=s) for s in sizes] for _ in range(T)]
        transitions = [nprng.normal(size=(s, s)) for s in sizes]
        g = build_factor_graph(unaries, transitions, [], [])
        res = loopy_bp(g, max_iters=100, damping=0.0, tol=1e-12)
        assert res.converged
        for c in range(C):
            scores = np.stack([unaries[t][c] for t in range(T)])
            pots = ChainCrfPotentials(transitions[c], np.zeros(sizes[c]), np.zeros(sizes[c]))
            node, _ = crf.marginals(scores, pots)
            for t in range(T):
                np.testing.assert_allclose(res.var_beliefs[t * C + c], node[t], atol=1e-9)


class TestBpInvariants:
    def test_beliefs_normalized_every_sweep(self, nprng):
        g = random_tree_graph(np.random.Generator(np.random.PCG64(77)), max_vars=6)
        for iters in range(1, 6):
            res = loopy_bp(g, max_iters=iters, damping=0.3, tol=1e-15)
            for b in res.var_beliefs:
                assert (b >= 0).all()
                assert b.sum() == pytest.approx(1.0, abs=1e-9)

    def test_factor_beliefs_marginalize_to_vars(self):
        rng = np.random.Generator(np.random.PCG64(42))
        sizes = [3, 3, 2, 2, 3, 2, 3]
        pairs = [(i, j) for i in range(7) for j in range(i + 1, 7)]
        unaries = [[rng.normal(size=s) for s in sizes] for _ in range(2)]
        transitions = [rng.normal(scale=0.5, size=(s, s)) for s in sizes]
        pair_tables = [rng.normal(scale=0.5, size=(sizes[i], sizes[j])) for i, j in pairs]
        g = build_factor_graph(unaries, transitions, pair_tables, pairs)
        res = loopy_bp(g, max_iters=500, damping=0.5, tol=1e-10)
        assert res.converged
        for f, b in zip(g.factors, res.factor_beliefs):
            if len(f.vars) == 2:
                np.testing.assert_allclose(b.sum(axis=1), res.var_beliefs[f.vars[0]], atol=1e-6)
                np.testing.assert_allclose(b.sum(axis=0), res.var_beliefs[f.vars[1]], atol=1e-6)

    def test_damping_zero_matches_reference_bp(self, nprng):
        """Hand-rolled undamped two-variable BP agrees sweep by sweep."""
        du, dv = 3, 4
        phi_u, phi_v = nprng.normal(size=du), nprng.normal(size=dv)
        table = nprng.normal(size=(du, dv))
        g = FactorGraph([du, dv], [
            Factor((0,), phi_u), Factor((1,), phi_v), Factor((0, 1), table),
        ])
        res = loopy_bp(g, max_iters=50, damping=0.0, tol=1e-12)
        # closed form for a two-variable tree
        joint = phi_u[:, None] + table + phi_v[None, :]
        p = np.exp(joint - joint.max())
        p /= p.sum()
        np.testing.assert_allclose(res.var_beliefs[0], p.sum(axis=1), atol=1e-9)
        np.testing.assert_allclose(res.var_beliefs[1], p.sum(axis=0), atol=1e-9)

    def test_nonconvergence_reported_not_raised(self, nprng):
        g = random_tree_graph(np.random.Generator(np.random.PCG64(5)), max_vars=8)
        res = loopy_bp(g, max_iters=1, damping=0.9, tol=1e-15)
        assert not res.converged  # one heavily damped sweep cannot settle

    def test_parameter_validation(self, nprng):
        g = random_tree_graph(np.random.Generator(np.random.PCG64(6)), max_vars=4)
        with pytest.raises(FcrfError):
            loopy_bp(g, max_iters=0)
        with pytest.raises(FcrfError):
            loopy_bp(g, damping=1.0)
        with pytest.raises(FcrfError):
            loopy_bp(g, tol=0.0)


def cyclic_t2_graph(seed, coupling=0.1):
    """Seeded cyclic graph family for the approximation regression: all 21
    cotemporal pairs at T=2, strong unaries, weak couplings."""
    rng = np.random.Generator(np.random.PCG64(seed))
    C = 7
    sizes = [int(rng.integers(2, 4)) for _ in range(C)]
    pairs = [(i, j) for i in range(C) for j in range(i + 1, C)]
    unaries = [[rng.normal(scale=1.0, size=s) for s in sizes] for _ in range(2)]
    transitions = [rng.normal(scale=coupling, size=(s, s)) for s in sizes]
    pair_tables = [rng.normal(scale=coupling, size=(sizes[i], sizes[j])) for i, j in pairs]
    return build_factor_graph(unaries, transitions, pair_tables, pairs)


class TestLoopyApproximation:
    def test_cyclic_t2_close_to_enumeration(self):
        """Full cotemporal coupling at T=2: approximate but within TV 1e-3."""
        worst = 0.0
        for seed in range(20):
            g = cyclic_t2_graph(seed)
            res = loopy_bp(g, max_iters=300, damping=0.5, tol=1e-10)
            assert res.converged
            _, var_o, _ = exact_marginals(g)
            for got, want in zip(res.var_beliefs, var_o):
                tv = 0.5 * np.abs(got - want).sum()
                worst = max(worst, float(tv))
        assert worst < 1e-3, worst


class TestBetheAndNll:
    def test_bethe_exact_on_trees(self):
        for seed in range(20):
            rng = np.random.Generator(np.random.PCG64(100 + seed))
            g = random_tree_graph(rng, max_vars=7)
            res = loopy_bp(g, max_iters=100, damping=0.0, tol=1e-13)
            logz_o, _, _ = exact_marginals(g)
            assert fcrf.bethe_log_partition(g, res) == pytest.approx(logz_o, abs=1e-8)

    def test_zero_potential_single_var_loss_is_log_l(self):
        for L in (2, 6):
            g = FactorGraph([L], [Factor((0,), np.zeros(L))])
            loss, grads, _ = fcrf.nll_and_grad(g, [0], damping=0.0)
            assert loss == pytest.approx(np.log(L), abs=1e-12)
            np.testing.assert_allclose(grads[0], np.full(L, 1.0 / L) - np.eye(L)[0], atol=1e-12)

    def test_gold_out_of_range(self):
        g = FactorGraph([3], [Factor((0,), np.zeros(3))])
        with pytest.raises(FcrfError, match="out of range"):
            fcrf.nll_and_grad(g, [4])

    def test_tree_gradient_matches_finite_differences(self, nprng):
        sizes = [3, 2, 4]
        pairs = [(0, 1), (0, 2)]
        T = 1
        unary_nodes = [[ad.parameter(nprng.normal(size=s), f"u{c}") for c, s in enumerate(sizes)]]
        trans_nodes = [ad.parameter(nprng.normal(size=(s, s)), f"tr{c}") for c, s in enumerate(sizes)]
        pair_nodes = [ad.parameter(nprng.normal(size=(sizes[i], sizes[j])), f"p{i}{j}") for i, j in pairs]
        gold = [1, 0, 3]
        params = {}
        for row in unary_nodes:
            for n in row:
                params[n.name] = n
        for n in trans_nodes + pair_nodes:
            params[n.name] = n

        def build():
            return fcrf.nll_node(unary_nodes, trans_nodes, pair_nodes, pairs, gold,
                                 max_iters=100, damping=0.0, tol=1e-12)

        report = ad.grad_check(build, params, eps=1e-5, tol=1e-4)
        assert report.ok, report

    def test_chain_over_time_gradient_matches(self, nprng):
        # 3 timesteps, no cotemporal pairs: a forest of chains, surrogate exact
        sizes = [3, 2]
        T = 3
        unary_nodes = [[ad.parameter(nprng.normal(size=s), f"u{t}{c}") for c, s in enumerate(sizes)]
                       for t in range(T)]
        trans_nodes = [ad.parameter(nprng.normal(size=(s, s)), f"tr{c}") for c, s in enumerate(sizes)]
        gold = [0, 1, 2, 0, 1, 1]
        params = {}
        for row in unary_nodes:
            for n in row:
                params[n.name] = n
        for n in trans_nodes:
            params[n.name] = n

        def build():
            return fcrf.nll_node(unary_nodes, trans_nodes, [], [], gold,
                                 max_iters=100, damping=0.0, tol=1e-12)

        report = ad.grad_check(build, params, eps=1e-5, tol=1e-4)
        assert report.ok, report

    def test_loss_decreases_under_gradient_steps(self):
        """Training smoke oracle: 50 steps on a fixed two-sentence setup."""
        rng = np.random.Generator(np.random.PCG64(2024))
        sizes = [3, 2, 3]
        pairs = [(0, 1), (1, 2), (0, 2)]  # cyclic at every timestep
        transitions = [rng.normal(scale=0.2, size=(s, s)) for s in sizes]
        pair_tables = [rng.normal(scale=0.2, size=(sizes[i], sizes[j])) for i, j in pairs]
        sentences = []
        for T, seed in ((2, 1), (3, 2)):
            r = np.random.Generator(np.random.PCG64(seed))
            unaries = [[r.normal(scale=0.2, size=s) for s in sizes] for _ in range(T)]
            gold = [int(r.integers(0, sizes[c])) for _ in range(T) for c in range(len(sizes))]
            sentences.append((unaries, gold))
        lr = 0.05
        losses = []
        for _ in range(50):
            total = 0.0
            grads_t = [np.zeros_like(t) for t in transitions]
            grads_p = [np.zeros_like(t) for t in pair_tables]
            grads_u = []
            for unaries, gold in sentences:
                g = build_factor_graph(unaries, transitions, pair_tables, pairs)
                loss, grads, _ = fcrf.nll_and_grad(g, gold, max_iters=200, damping=0.5, tol=1e-10)
                total += loss
                k = len(gold)
                C = len(sizes)
                T = len(unaries)
                gu = [grads[i] for i in range(k)]
                grads_u.append(gu)
                idx = k
                for c in range(C):
                    for _t in range(T - 1):
                        grads_t[c] += grads[idx]
                        idx += 1
                for q in range(len(pairs)):
                    for _t in range(T):
                        grads_p[q] += grads[idx]
                        idx += 1
            losses.append(total)
            for c in range(len(sizes)):
                transitions[c] -= lr * grads_t[c]
            for q in range(len(pairs)):
                pair_tables[q] -= lr * grads_p[q]
            for (unaries, _), gu in zip(sentences, grads_u):
                i = 0
                for t in range(len(unaries)):
                    for c in range(len(sizes)):
                        unaries[t][c] -= lr * gu[i]
                        i += 1
        diffs = np.diff(losses)
        assert (diffs < 1e-9).all(), losses


class TestDecode:
    def test_map_decode_ties_to_lowest(self):
        g = FactorGraph([3], [Factor((0,), np.zeros(3))])
        res = loopy_bp(g, damping=0.0)
        assert fcrf.map_decode(res) == [0]

    def test_dominant_unaries_win(self, nprng):
        sizes = [3, 4]
        unaries = [[np.array([0.0, 50.0, 0.0]), np.array([0.0, 0.0, 0.0, 50.0])]]
        transitions = [nprng.normal(size=(s, s)) for s in sizes]
        g = build_factor_graph(unaries, transitions, [nprng.normal(size=(3, 4))], [(0, 1)])
        res = loopy_bp(g, max_iters=100, damping=0.0, tol=1e-10)
        assert fcrf.map_decode(res) == [1, 3]

    def test_argmax_matches_oracle_on_trees(self):
        for seed in range(10):
            rng = np.random.Generator(np.random.PCG64(300 + seed))
            g = random_tree_graph(rng, max_vars=6)
            res = loopy_bp(g, max_iters=100, damping=0.0, tol=1e-12)
            _, var_o, _ = exact_marginals(g)
            assert fcrf.map_decode(res) == [int(np.argmax(m)) for m in var_o]
