"""Pure-numpy implementations of the hot kernels.

These are the reference backend; `morphtag.kernels._ckern` (Cython) mirrors
the same signatures and is preferred at import when built.  Everything here
works in log space and float64.
"""

import numpy as np


# ---------------------------------------------------------------------------
# LSTM cell


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_forward(x, h_prev, c_prev, w, u, b):
    """One LSTM step; gate stacking order in w/u/b is [i; f; g; o]."""
    hdim = h_prev.shape[0]
    gates = w @ x + u @ h_prev + b
    i = _sigmoid(gates[:hdim])
    f = _sigmoid(gates[hdim:2 * hdim])
    g = np.tanh(gates[2 * hdim:3 * hdim])
    o = _sigmoid(gates[3 * hdim:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, tc)


def lstm_cell_backward(x, h_prev, c_prev, w, u, b, cache, dh, dc):
    i, f, g, o, tc = cache
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    d_gates = np.concatenate([
        dct * g * i * (1.0 - i),
        dct * c_prev * f * (1.0 - f),
        dct * i * (1.0 - g * g),
        do * o * (1.0 - o),
    ])
    dx = w.T @ d_gates
    dh_prev = u.T @ d_gates
    dc_prev = dct * f
    dw = np.outer(d_gates, x)
    du = np.outer(d_gates, h_prev)
    return dx, dh_prev, dc_prev, dw, du, d_gates.copy()


# ---------------------------------------------------------------------------
# linear-chain CRF dynamic programs


def _lse(x, axis=None):
    m = x.max(axis=axis, keepdims=True)
    out = m.squeeze(axis) if axis is not None else m.reshape(())
    return out + np.log(np.exp(x - m).sum(axis=axis))


def crf_log_partition(emit, trans, start, end):
    """Forward algorithm; returns (log Z, alpha matrix)."""
    T, L = emit.shape
    alpha = np.empty((T, L))
    alpha[0] = start + emit[0]
    for t in range(1, T):
        alpha[t] = emit[t] + _lse(alpha[t - 1][:, None] + trans, axis=0)
    return float(_lse(alpha[T - 1] + end)), alpha


def crf_marginals(emit, trans, start, end):
    """Forward-backward; returns (log Z, node marginals T x L, edge marginals (T-1) x L x L)."""
    T, L = emit.shape
    logz, alpha = crf_log_partition(emit, trans, start, end)
    beta = np.empty((T, L))
    beta[T - 1] = end
    for t in range(T - 2, -1, -1):
        beta[t] = _lse(trans + (emit[t + 1] + beta[t + 1])[None, :], axis=1)
    node = np.exp(alpha + beta - logz)
    edge = np.empty((max(T - 1, 0), L, L))
    for t in range(T - 1):
        edge[t] = np.exp(alpha[t][:, None] + trans + (emit[t + 1] + beta[t + 1])[None, :] - logz)
    return logz, node, edge


def crf_viterbi(emit, trans, start, end):
    """Max-scoring path; ties resolve to the lowest label index (first max)."""
    T, L = emit.shape
    delta = start + emit[0]
    back = np.empty((T, L), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + trans
        back[t] = np.argmax(scores, axis=0)
        delta = emit[t] + scores[back[t], np.arange(L)]
    delta = delta + end
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = int(np.argmax(delta))
    score = float(delta[path[T - 1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, score


# ---------------------------------------------------------------------------
# loopy belief propagation on a flattened pairwise factor graph
#
# Variables carry folded unary log-potentials `phi`.  Only pairwise factors
# exchange messages; a synchronous sweep recomputes factor-to-variable
# messages from the previous variable-to-factor messages (with damping),
# then variable-to-factor messages from the fresh factor-to-variable ones.
# Convergence is measured on the variable-to-factor messages.


def bp_run(dom, var_off, phi, pu, pv, tab, tab_off, off_u, off_v,
           v_inc_off, v_inc_p, v_inc_side, max_iters, damping, tol):
    """Run synchronous damped sum-product sweeps.

    Returns (msg_fu, msg_fv, msg_uf, msg_vf, iterations, converged, delta):
    fac->var messages on the u/v side of every pairwise factor, var->fac
    messages likewise, sweeps executed, convergence flag, and the last
    maximum absolute message change.
    """
    P = pu.shape[0]
    V = dom.shape[0]
    msg_fu = np.zeros(off_u[P])
    msg_fv = np.zeros(off_v[P])
    msg_uf = np.zeros(off_u[P])
    msg_vf = np.zeros(off_v[P])
    converged = False
    iterations = 0
    delta = 0.0
    for _ in range(max_iters):
        iterations += 1
        # factor -> variable
        for p in range(P):
            a, b = dom[pu[p]], dom[pv[p]]
            table = tab[tab_off[p]:tab_off[p + 1]].reshape(a, b)
            su, sv = slice(off_u[p], off_u[p + 1]), slice(off_v[p], off_v[p + 1])
            raw_u = _lse(table + msg_vf[sv][None, :], axis=1)
            raw_v = _lse(table + msg_uf[su][:, None], axis=0)
            new_u = damping * msg_fu[su] + (1.0 - damping) * raw_u
            new_v = damping * msg_fv[sv] + (1.0 - damping) * raw_v
            msg_fu[su] = new_u - new_u.max()
            msg_fv[sv] = new_v - new_v.max()
        # variable -> factor
        delta = 0.0
        for v in range(V):
            lo, hi = v_inc_off[v], v_inc_off[v + 1]
            if lo == hi:
                continue
            total = phi[var_off[v]:var_off[v + 1]].copy()
            for e in range(lo, hi):
                p, side = v_inc_p[e], v_inc_side[e]
                s = slice(off_u[p], off_u[p + 1]) if side == 0 else slice(off_v[p], off_v[p + 1])
                total += msg_fu[s] if side == 0 else msg_fv[s]
            for e in range(lo, hi):
                p, side = v_inc_p[e], v_inc_side[e]
                if side == 0:
                    s = slice(off_u[p], off_u[p + 1])
                    new = total - msg_fu[s]
                    old, buf = msg_uf, msg_uf
                else:
                    s = slice(off_v[p], off_v[p + 1])
                    new = total - msg_fv[s]
                    old, buf = msg_vf, msg_vf
                new = new - new.max()
                delta = max(delta, float(np.abs(new - old[s]).max()))
                buf[s] = new
        if delta < tol:
            converged = True
            break
    return msg_fu, msg_fv, msg_uf, msg_vf, iterations, converged, delta
