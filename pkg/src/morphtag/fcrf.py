"""Factorial CRF: per-category label chains coupled by cotemporal potentials.

The factor graph has one variable per (timestep, category) and three factor
families: unary factors from the encoder emissions, transition factors
linking a category's variables at adjacent timesteps, and cotemporal factors
linking two different categories at the same timestep.  Inference is damped
synchronous sum-product message passing (exact on acyclic graphs, otherwise
approximate), and training maximizes the Bethe surrogate likelihood whose
gradient w.r.t. each factor's log-potential table is the factor belief minus
the gold indicator.

Factors are restricted to arity 1 or 2, which covers every graph this
package builds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from morphtag import autodiff as ad
from morphtag.errors import MorphtagError
from morphtag.kernels import bp_run


class FcrfError(MorphtagError):
    pass


@dataclass
class Factor:
    vars: tuple[int, ...]
    table: np.ndarray  # log-space potential, one axis per variable


class FactorGraph:
    """Bipartite variable/factor structure with log-potential tables."""

    def __init__(self, domains, factors):
        self.domains = tuple(int(d) for d in domains)
        self.factors = list(factors)
        for k, f in enumerate(self.factors):
            if len(f.vars) not in (1, 2):
                raise FcrfError(f"factor {k}: arity must be 1 or 2, got {len(f.vars)}")
            if len(f.vars) == 2 and f.vars[0] == f.vars[1]:
                raise FcrfError(f"factor {k}: pairwise factor must link distinct variables")
            expected = tuple(self.domains[v] for v in f.vars)
            table = np.asarray(f.table, dtype=np.float64)
            if table.shape != expected:
                raise FcrfError(f"factor {k}: table shape {table.shape} != domains {expected}")
            if not np.isfinite(table).all():
                raise FcrfError(f"factor {k}: non-finite log-potential")
            f.table = table

    @property
    def n_vars(self):
        return len(self.domains)

    def degrees(self):
        deg = [0] * self.n_vars
        for f in self.factors:
            for v in f.vars:
                deg[v] += 1
        return deg

    def diameter(self):
        """Longest shortest path (in edges) of the bipartite variable/factor graph."""
        n_f = len(self.factors)
        adj = [[] for _ in range(self.n_vars + n_f)]
        for k, f in enumerate(self.factors):
            for v in f.vars:
                adj[v].append(self.n_vars + k)
                adj[self.n_vars + k].append(v)
        best = 0
        for src in range(self.n_vars + n_f):
            dist = {src: 0}
            frontier = [src]
            while frontier:
                nxt = []
                for u in frontier:
                    for w in adj[u]:
                        if w not in dist:
                            dist[w] = dist[u] + 1
                            nxt.append(w)
                frontier = nxt
            best = max(best, max(dist.values()))
        return best


@dataclass
class BpResult:
    var_beliefs: list
    factor_beliefs: list
    converged: bool
    iterations: int
    max_delta: float


def _flatten(graph: FactorGraph):
    dom = np.asarray(graph.domains, dtype=np.int64)
    var_off = np.zeros(len(dom) + 1, dtype=np.int64)
    np.cumsum(dom, out=var_off[1:])
    phi = np.zeros(int(var_off[-1]))
    pairs = []
    for f in graph.factors:
        if len(f.vars) == 1:
            v = f.vars[0]
            phi[var_off[v]:var_off[v + 1]] += f.table
        else:
            pairs.append(f)
    P = len(pairs)
    pu = np.array([f.vars[0] for f in pairs], dtype=np.int64)
    pv = np.array([f.vars[1] for f in pairs], dtype=np.int64)
    off_u = np.zeros(P + 1, dtype=np.int64)
    off_v = np.zeros(P + 1, dtype=np.int64)
    sizes = np.zeros(P, dtype=np.int64)
    for p, f in enumerate(pairs):
        off_u[p + 1] = off_u[p] + dom[pu[p]]
        off_v[p + 1] = off_v[p] + dom[pv[p]]
        sizes[p] = dom[pu[p]] * dom[pv[p]]
    tab_off = np.zeros(P + 1, dtype=np.int64)
    np.cumsum(sizes, out=tab_off[1:])
    tab = np.empty(int(tab_off[-1]))
    for p, f in enumerate(pairs):
        tab[tab_off[p]:tab_off[p + 1]] = f.table.reshape(-1)
    incident = [[] for _ in range(len(dom))]
    for p in range(P):
        incident[pu[p]].append((p, 0))
        incident[pv[p]].append((p, 1))
    v_inc_off = np.zeros(len(dom) + 1, dtype=np.int64)
    flat = []
    for v, lst in enumerate(incident):
        v_inc_off[v + 1] = v_inc_off[v] + len(lst)
        flat.extend(lst)
    v_inc_p = np.array([e[0] for e in flat], dtype=np.int64)
    v_inc_side = np.array([e[1] for e in flat], dtype=np.int64)
    return dom, var_off, phi, pu, pv, tab, tab_off, off_u, off_v, v_inc_off, v_inc_p, v_inc_side


def _norm_exp(logb):
    m = logb.max()
    b = np.exp(logb - m)
    return b / b.sum()


def loopy_bp(graph: FactorGraph, max_iters=50, damping=0.5, tol=1e-5):
    """Synchronous damped sum-product; returns normalized beliefs.

    Non-convergence within `max_iters` is reported through the flag, never
    raised.  With damping 0 this is plain BP and is exact on acyclic graphs.
    """
    if max_iters < 1:
        raise FcrfError(f"max_iters must be >= 1, got {max_iters}")
    if not 0.0 <= damping < 1.0:
        raise FcrfError(f"damping must be in [0, 1), got {damping}")
    if tol <= 0.0:
        raise FcrfError(f"tol must be positive, got {tol}")
    flat = _flatten(graph)
    dom, var_off, phi = flat[0], flat[1], flat[2]
    pu, pv, tab, tab_off, off_u, off_v = flat[3:9]
    msg_fu, msg_fv, msg_uf, msg_vf, iterations, converged, delta = bp_run(
        *flat, int(max_iters), float(damping), float(tol)
    )
    # variable beliefs: folded unaries plus all incoming pairwise messages
    var_logb = [phi[var_off[v]:var_off[v + 1]].copy() for v in range(graph.n_vars)]
    for p in range(len(pu)):
        var_logb[pu[p]] += msg_fu[off_u[p]:off_u[p + 1]]
        var_logb[pv[p]] += msg_fv[off_v[p]:off_v[p + 1]]
    var_beliefs = [_norm_exp(lb) for lb in var_logb]
    factor_beliefs = []
    p = 0
    for f in graph.factors:
        if len(f.vars) == 1:
            factor_beliefs.append(var_beliefs[f.vars[0]].copy())
        else:
            logb = f.table + msg_uf[off_u[p]:off_u[p + 1]][:, None] + msg_vf[off_v[p]:off_v[p + 1]][None, :]
            m = logb.max()
            b = np.exp(logb - m)
            factor_beliefs.append(b / b.sum())
            p += 1
    return BpResult(var_beliefs, factor_beliefs, bool(converged), int(iterations), float(delta))


def _entropy(b):
    nz = b[b > 0]
    return float(-(nz * np.log(nz)).sum())


def bethe_log_partition(graph: FactorGraph, result: BpResult):
    """Bethe free-energy approximation of log Z from BP beliefs (exact on trees)."""
    lz = 0.0
    for f, b in zip(graph.factors, result.factor_beliefs):
        lz += float((b * f.table).sum()) + _entropy(b)
    for v, (bv, d) in enumerate(zip(result.var_beliefs, graph.degrees())):
        lz -= (d - 1) * _entropy(bv)
    return lz


def gold_score(graph: FactorGraph, assignment):
    """Sum of factor log-potentials at a full assignment (one value id per variable)."""
    assignment = list(assignment)
    if len(assignment) != graph.n_vars:
        raise FcrfError(f"assignment length {len(assignment)} != {graph.n_vars} variables")
    for v, (a, d) in enumerate(zip(assignment, graph.domains)):
        if not 0 <= a < d:
            raise FcrfError(f"variable {v}: value {a} out of range [0, {d})")
    s = 0.0
    for f in graph.factors:
        idx = tuple(assignment[v] for v in f.vars)
        s += float(f.table[idx])
    return s


def nll_and_grad(graph: FactorGraph, assignment, max_iters=50, damping=0.5, tol=1e-5):
    """Surrogate NLL = Bethe log Z - gold score, and per-factor table gradients
    (factor beliefs minus gold indicators).  Also returns the BP result."""
    result = loopy_bp(graph, max_iters=max_iters, damping=damping, tol=tol)
    loss = bethe_log_partition(graph, result) - gold_score(graph, assignment)
    grads = []
    for f, b in zip(graph.factors, result.factor_beliefs):
        g = b.copy()
        idx = tuple(assignment[v] for v in f.vars)
        g[idx] -= 1.0
        grads.append(g)
    return loss, grads, result


def map_decode(result: BpResult):
    """Per-variable argmax of the BP marginals (ties to the lowest index)."""
    return [int(np.argmax(b)) for b in result.var_beliefs]


# ---------------------------------------------------------------------------
# the factorial structure over (timestep, category) variables


def build_factor_graph(unaries, transitions, pair_tables, pairs):
    """Assemble the factorial CRF graph for one sentence.

    unaries: per timestep, per category, a (L_c,) log-potential vector.
    transitions: per category, a (L_c, L_c) table shared across timesteps.
    pair_tables: per configured pair (ci, cj), a (L_ci, L_cj) table shared
    across timesteps.  Variable (t, c) has index t * C + c; factors are laid
    out as all unaries (t-major), then transitions (category-major), then
    cotemporal factors (pair-major).
    """
    T = len(unaries)
    if T < 1:
        raise FcrfError("need at least one timestep")
    C = len(transitions)
    domains = []
    for t in range(T):
        for c in range(C):
            domains.append(len(unaries[t][c]))
    factors = [
        Factor((t * C + c,), np.asarray(unaries[t][c], dtype=np.float64))
        for t in range(T) for c in range(C)
    ]
    for c, trans in enumerate(transitions):
        for t in range(T - 1):
            factors.append(Factor((t * C + c, (t + 1) * C + c), trans))
    for q, (ci, cj) in enumerate(pairs):
        if not 0 <= ci < C or not 0 <= cj < C or ci == cj:
            raise FcrfError(f"bad cotemporal pair ({ci}, {cj})")
        for t in range(T):
            factors.append(Factor((t * C + ci, t * C + cj), pair_tables[q]))
    return FactorGraph(domains, factors)


def _fw_fcrf_nll(values, attrs):
    T, C = attrs["T"], attrs["C"]
    pairs = attrs["pairs"]
    unaries = [[values[t * C + c] for c in range(C)] for t in range(T)]
    transitions = values[T * C:T * C + C]
    pair_tables = values[T * C + C:]
    graph = build_factor_graph(unaries, transitions, pair_tables, pairs)
    loss, grads, result = nll_and_grad(
        graph, attrs["gold"],
        max_iters=attrs["max_iters"], damping=attrs["damping"], tol=attrs["tol"],
    )
    return np.asarray(loss), grads


def _bw_fcrf_nll(grad, values, out, ctx, attrs):
    T, C = attrs["T"], attrs["C"]
    pairs = attrs["pairs"]
    g = float(grad)
    grads = ctx
    out_grads = [g * grads[t * C + c] for t in range(T) for c in range(C)]
    k = T * C
    for c in range(C):
        acc = np.zeros_like(values[T * C + c])
        for t in range(T - 1):
            acc += grads[k]
            k += 1
        out_grads.append(g * acc)
    for q in range(len(pairs)):
        acc = np.zeros_like(values[T * C + C + q])
        for t in range(T):
            acc += grads[k]
            k += 1
        out_grads.append(g * acc)
    return out_grads


ad.register_op("fcrf-nll", _fw_fcrf_nll, _bw_fcrf_nll)


def nll_node(unary_nodes, transition_nodes, pair_nodes, pairs, gold, max_iters=50, damping=0.5, tol=1e-5):
    """Differentiable factorial-CRF surrogate NLL as a single graph node.

    unary_nodes: nested [t][c] emission nodes; transition_nodes: one per
    category; pair_nodes: one per configured pair, aligned with `pairs`.
    """
    T = len(unary_nodes)
    C = len(transition_nodes)
    inputs = [unary_nodes[t][c] for t in range(T) for c in range(C)]
    inputs += list(transition_nodes) + list(pair_nodes)
    return ad.apply(
        "fcrf-nll", inputs,
        T=T, C=C, pairs=tuple(pairs), gold=tuple(int(v) for v in gold),
        max_iters=max_iters, damping=damping, tol=tol,
    )
