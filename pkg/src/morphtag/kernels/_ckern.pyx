# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see pykern for the reference)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, tanh

cnp.import_array()


cdef inline double _sig(double z) noexcept nogil:
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


# ---------------------------------------------------------------------------
# LSTM cell


def lstm_cell_forward(double[::1] x, double[::1] h_prev, double[::1] c_prev,
                      double[:, ::1] w, double[:, ::1] u, double[::1] b):
    cdef Py_ssize_t hdim = h_prev.shape[0]
    cdef Py_ssize_t din = x.shape[0]
    cdef Py_ssize_t g4 = 4 * hdim
    i_arr = np.empty(hdim); f_arr = np.empty(hdim); g_arr = np.empty(hdim)
    o_arr = np.empty(hdim); c_arr = np.empty(hdim); tc_arr = np.empty(hdim)
    h_arr = np.empty(hdim)
    gates_arr = np.empty(g4)
    cdef double[::1] gates = gates_arr
    cdef double[::1] iv = i_arr, fv = f_arr, gv = g_arr, ov = o_arr
    cdef double[::1] cv = c_arr, tcv = tc_arr, hv = h_arr
    cdef Py_ssize_t r, k
    cdef double acc
    with nogil:
        for r in range(g4):
            acc = b[r]
            for k in range(din):
                acc += w[r, k] * x[k]
            for k in range(hdim):
                acc += u[r, k] * h_prev[k]
            gates[r] = acc
        for r in range(hdim):
            iv[r] = _sig(gates[r])
            fv[r] = _sig(gates[hdim + r])
            gv[r] = tanh(gates[2 * hdim + r])
            ov[r] = _sig(gates[3 * hdim + r])
            cv[r] = fv[r] * c_prev[r] + iv[r] * gv[r]
            tcv[r] = tanh(cv[r])
            hv[r] = ov[r] * tcv[r]
    return h_arr, c_arr, (i_arr, f_arr, g_arr, o_arr, tc_arr)


def lstm_cell_backward(double[::1] x, double[::1] h_prev, double[::1] c_prev,
                       double[:, ::1] w, double[:, ::1] u, double[::1] b,
                       cache, double[::1] dh, double[::1] dc):
    cdef double[::1] iv = cache[0], fv = cache[1], gv = cache[2], ov = cache[3], tcv = cache[4]
    cdef Py_ssize_t hdim = h_prev.shape[0]
    cdef Py_ssize_t din = x.shape[0]
    cdef Py_ssize_t g4 = 4 * hdim
    dg_arr = np.empty(g4)
    dx_arr = np.zeros(din)
    dh_prev_arr = np.zeros(hdim)
    dc_prev_arr = np.empty(hdim)
    dw_arr = np.empty((g4, din))
    du_arr = np.empty((g4, hdim))
    cdef double[::1] dg = dg_arr, dxv = dx_arr, dhp = dh_prev_arr, dcp = dc_prev_arr
    cdef double[:, ::1] dw = dw_arr, du = du_arr
    cdef Py_ssize_t r, k
    cdef double dct, dov
    with nogil:
        for r in range(hdim):
            dov = dh[r] * tcv[r]
            dct = dc[r] + dh[r] * ov[r] * (1.0 - tcv[r] * tcv[r])
            dg[r] = dct * gv[r] * iv[r] * (1.0 - iv[r])
            dg[hdim + r] = dct * c_prev[r] * fv[r] * (1.0 - fv[r])
            dg[2 * hdim + r] = dct * iv[r] * (1.0 - gv[r] * gv[r])
            dg[3 * hdim + r] = dov * ov[r] * (1.0 - ov[r])
            dcp[r] = dct * fv[r]
        for r in range(g4):
            for k in range(din):
                dw[r, k] = dg[r] * x[k]
                dxv[k] += w[r, k] * dg[r]
            for k in range(hdim):
                du[r, k] = dg[r] * h_prev[k]
                dhp[k] += u[r, k] * dg[r]
    return dx_arr, dh_prev_arr, dc_prev_arr, dw_arr, du_arr, dg_arr


# ---------------------------------------------------------------------------
# linear-chain CRF dynamic programs


cdef double _lse_vec(double[::1] v) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0]
    cdef double m = v[0]
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(1, n):
        if v[i] > m:
            m = v[i]
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


def crf_log_partition(double[:, ::1] emit, double[:, ::1] trans,
                      double[::1] start, double[::1] end):
    cdef Py_ssize_t T = emit.shape[0]
    cdef Py_ssize_t L = emit.shape[1]
    alpha_arr = np.empty((T, L))
    cdef double[:, ::1] alpha = alpha_arr
    fin_arr = np.empty(L)
    cdef double[::1] fin = fin_arr
    cdef Py_ssize_t t, i, j
    cdef double m, s
    with nogil:
        for j in range(L):
            alpha[0, j] = start[j] + emit[0, j]
        for t in range(1, T):
            for j in range(L):
                m = alpha[t - 1, 0] + trans[0, j]
                for i in range(1, L):
                    if alpha[t - 1, i] + trans[i, j] > m:
                        m = alpha[t - 1, i] + trans[i, j]
                s = 0.0
                for i in range(L):
                    s += exp(alpha[t - 1, i] + trans[i, j] - m)
                alpha[t, j] = emit[t, j] + m + log(s)
        for j in range(L):
            fin[j] = alpha[T - 1, j] + end[j]
    return float(_lse_vec(fin)), alpha_arr


def crf_marginals(double[:, ::1] emit, double[:, ::1] trans,
                  double[::1] start, double[::1] end):
    cdef Py_ssize_t T = emit.shape[0]
    cdef Py_ssize_t L = emit.shape[1]
    logz, alpha_arr = crf_log_partition(np.asarray(emit), np.asarray(trans),
                                        np.asarray(start), np.asarray(end))
    cdef double lz = logz
    cdef double[:, ::1] alpha = alpha_arr
    beta_arr = np.empty((T, L))
    node_arr = np.empty((T, L))
    edge_arr = np.empty((T - 1 if T > 1 else 0, L, L))
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] node = node_arr
    cdef double[:, :, ::1] edge = edge_arr
    cdef Py_ssize_t t, i, j
    cdef double m, s
    with nogil:
        for j in range(L):
            beta[T - 1, j] = end[j]
        for t in range(T - 2, -1, -1):
            for i in range(L):
                m = trans[i, 0] + emit[t + 1, 0] + beta[t + 1, 0]
                for j in range(1, L):
                    if trans[i, j] + emit[t + 1, j] + beta[t + 1, j] > m:
                        m = trans[i, j] + emit[t + 1, j] + beta[t + 1, j]
                s = 0.0
                for j in range(L):
                    s += exp(trans[i, j] + emit[t + 1, j] + beta[t + 1, j] - m)
                beta[t, i] = m + log(s)
        for t in range(T):
            for j in range(L):
                node[t, j] = exp(alpha[t, j] + beta[t, j] - lz)
        for t in range(T - 1):
            for i in range(L):
                for j in range(L):
                    edge[t, i, j] = exp(alpha[t, i] + trans[i, j]
                                        + emit[t + 1, j] + beta[t + 1, j] - lz)
    return logz, node_arr, edge_arr


def crf_viterbi(double[:, ::1] emit, double[:, ::1] trans,
                double[::1] start, double[::1] end):
    cdef Py_ssize_t T = emit.shape[0]
    cdef Py_ssize_t L = emit.shape[1]
    delta_arr = np.empty(L)
    prev_arr = np.empty(L)
    back_arr = np.empty((T, L), dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef double[::1] delta = delta_arr, prev = prev_arr
    cdef long[:, ::1] back = back_arr
    cdef long[::1] path = path_arr
    cdef Py_ssize_t t, i, j, arg
    cdef double best, cand, score
    with nogil:
        for j in range(L):
            delta[j] = start[j] + emit[0, j]
        for t in range(1, T):
            for j in range(L):
                prev[j] = delta[j]
            for j in range(L):
                best = prev[0] + trans[0, j]
                arg = 0
                for i in range(1, L):
                    cand = prev[i] + trans[i, j]
                    if cand > best:
                        best = cand
                        arg = i
                back[t, j] = arg
                delta[j] = emit[t, j] + best
        best = delta[0] + end[0]
        arg = 0
        for j in range(1, L):
            cand = delta[j] + end[j]
            if cand > best:
                best = cand
                arg = j
        score = best
        path[T - 1] = arg
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, float(score)


# ---------------------------------------------------------------------------
# loopy belief propagation (flattened pairwise factor graph)


def bp_run(long[::1] dom, long[::1] var_off, double[::1] phi,
           long[::1] pu, long[::1] pv, double[::1] tab, long[::1] tab_off,
           long[::1] off_u, long[::1] off_v,
           long[::1] v_inc_off, long[::1] v_inc_p, long[::1] v_inc_side,
           int max_iters, double damping, double tol):
    cdef Py_ssize_t P = pu.shape[0]
    cdef Py_ssize_t V = dom.shape[0]
    msg_fu_arr = np.zeros(off_u[P] if P else 0)
    msg_fv_arr = np.zeros(off_v[P] if P else 0)
    msg_uf_arr = np.zeros(off_u[P] if P else 0)
    msg_vf_arr = np.zeros(off_v[P] if P else 0)
    cdef double[::1] msg_fu = msg_fu_arr, msg_fv = msg_fv_arr
    cdef double[::1] msg_uf = msg_uf_arr, msg_vf = msg_vf_arr
    cdef Py_ssize_t dmax = 0
    cdef Py_ssize_t v
    for v in range(V):
        if dom[v] > dmax:
            dmax = dom[v]
    work_arr = np.empty(dmax if dmax else 1)
    total_arr = np.empty(dmax if dmax else 1)
    cdef double[::1] work = work_arr, total = total_arr
    cdef bint converged = False
    cdef int iterations = 0
    cdef double delta = 0.0
    cdef Py_ssize_t p, a, b, A, B, base, ou, ov, lo, hi, e, side, off, n
    cdef double m, s, new, change
    cdef int sweep
    with nogil:
        for sweep in range(max_iters):
            iterations += 1
            # factor -> variable
            for p in range(P):
                A = dom[pu[p]]
                B = dom[pv[p]]
                base = tab_off[p]
                ou = off_u[p]
                ov = off_v[p]
                for a in range(A):
                    m = tab[base + a * B] + msg_vf[ov]
                    for b in range(1, B):
                        if tab[base + a * B + b] + msg_vf[ov + b] > m:
                            m = tab[base + a * B + b] + msg_vf[ov + b]
                    s = 0.0
                    for b in range(B):
                        s += exp(tab[base + a * B + b] + msg_vf[ov + b] - m)
                    work[a] = damping * msg_fu[ou + a] + (1.0 - damping) * (m + log(s))
                m = work[0]
                for a in range(1, A):
                    if work[a] > m:
                        m = work[a]
                for a in range(A):
                    msg_fu[ou + a] = work[a] - m
                for b in range(B):
                    m = tab[base + b] + msg_uf[ou]
                    for a in range(1, A):
                        if tab[base + a * B + b] + msg_uf[ou + a] > m:
                            m = tab[base + a * B + b] + msg_uf[ou + a]
                    s = 0.0
                    for a in range(A):
                        s += exp(tab[base + a * B + b] + msg_uf[ou + a] - m)
                    work[b] = damping * msg_fv[ov + b] + (1.0 - damping) * (m + log(s))
                m = work[0]
                for b in range(1, B):
                    if work[b] > m:
                        m = work[b]
                for b in range(B):
                    msg_fv[ov + b] = work[b] - m
            # variable -> factor
            delta = 0.0
            for v in range(V):
                lo = v_inc_off[v]
                hi = v_inc_off[v + 1]
                if lo == hi:
                    continue
                n = dom[v]
                for a in range(n):
                    total[a] = phi[var_off[v] + a]
                for e in range(lo, hi):
                    p = v_inc_p[e]
                    side = v_inc_side[e]
                    off = off_u[p] if side == 0 else off_v[p]
                    for a in range(n):
                        total[a] += msg_fu[off + a] if side == 0 else msg_fv[off + a]
                for e in range(lo, hi):
                    p = v_inc_p[e]
                    side = v_inc_side[e]
                    off = off_u[p] if side == 0 else off_v[p]
                    if side == 0:
                        m = total[0] - msg_fu[off]
                        for a in range(1, n):
                            if total[a] - msg_fu[off + a] > m:
                                m = total[a] - msg_fu[off + a]
                        for a in range(n):
                            new = total[a] - msg_fu[off + a] - m
                            change = fabs(new - msg_uf[off + a])
                            if change > delta:
                                delta = change
                            msg_uf[off + a] = new
                    else:
                        m = total[0] - msg_fv[off]
                        for a in range(1, n):
                            if total[a] - msg_fv[off + a] > m:
                                m = total[a] - msg_fv[off + a]
                        for a in range(n):
                            new = total[a] - msg_fv[off + a] - m
                            change = fabs(new - msg_vf[off + a])
                            if change > delta:
                                delta = change
                            msg_vf[off + a] = new
            if delta < tol:
                converged = True
                break
    return msg_fu_arr, msg_fv_arr, msg_uf_arr, msg_vf_arr, iterations, bool(converged), float(delta)
