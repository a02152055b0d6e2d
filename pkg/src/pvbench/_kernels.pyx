# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: kNN search, tree growing, forest quantiles, nu-SVR SMO.

Each function mirrors its namesake in ``_fallback.py`` operation for
operation; the test suite checks that both backends agree.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double TAU = 1e-12


cdef inline uint64_t splitmix_next(uint64_t* state) nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


# ---------------------------------------------------------------- kNN

cdef inline bint _heap_less(double da, int64_t ia, double db, int64_t ib) nogil:
    return da < db or (da == db and ia < ib)


cdef void _sift_down(double* hd, int64_t* hi, Py_ssize_t size, Py_ssize_t pos) nogil:
    # max-heap on (distance, index)
    cdef Py_ssize_t child
    cdef double td
    cdef int64_t ti
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and _heap_less(hd[child], hi[child], hd[child + 1], hi[child + 1]):
            child += 1
        if _heap_less(hd[pos], hi[pos], hd[child], hi[child]):
            td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
            ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
            pos = child
        else:
            break


def knn_query(train, query, k):
    cdef double[:, ::1] X = np.ascontiguousarray(train, dtype=np.float64)
    cdef double[:, ::1] Q = np.ascontiguousarray(query, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], m = Q.shape[0]
    cdef Py_ssize_t kk = min(int(k), n)
    idx_arr = np.empty((m, kk), dtype=np.int64)
    dist_arr = np.empty((m, kk), dtype=np.float64)
    cdef int64_t[:, ::1] idx = idx_arr
    cdef double[:, ::1] dist = dist_arr
    hd_arr = np.empty(max(kk, 1), dtype=np.float64)
    hi_arr = np.empty(max(kk, 1), dtype=np.int64)
    cdef double[::1] hd = hd_arr
    cdef int64_t[::1] hi = hi_arr
    cdef Py_ssize_t qi, i, j, size, a, b
    cdef double d2, diff, td
    cdef int64_t ti
    if kk == 0:
        return idx_arr, dist_arr
    with nogil:
        for qi in range(m):
            size = 0
            for i in range(n):
                d2 = 0.0
                for j in range(p):
                    diff = X[i, j] - Q[qi, j]
                    d2 = d2 + diff * diff
                if size < kk:
                    # push and sift up
                    a = size
                    hd[a] = d2
                    hi[a] = i
                    size += 1
                    while a > 0:
                        b = (a - 1) // 2
                        if _heap_less(hd[b], hi[b], hd[a], hi[a]):
                            td = hd[a]; hd[a] = hd[b]; hd[b] = td
                            ti = hi[a]; hi[a] = hi[b]; hi[b] = ti
                            a = b
                        else:
                            break
                elif _heap_less(d2, i, hd[0], hi[0]):
                    hd[0] = d2
                    hi[0] = i
                    _sift_down(&hd[0], &hi[0], size, 0)
            # heap sort ascending
            while size > 0:
                size -= 1
                dist[qi, size] = sqrt(hd[0])
                idx[qi, size] = hi[0]
                hd[0] = hd[size]
                hi[0] = hi[size]
                _sift_down(&hd[0], &hi[0], size, 0)
    return idx_arr, dist_arr


# ---------------------------------------------------------------- trees

def build_tree(X_in, y_in, counts_in, order_in, Py_ssize_t min_leaf, Py_ssize_t mtry, seed):
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef int64_t[::1] counts = np.ascontiguousarray(counts_in, dtype=np.int64)
    cdef int64_t[:, ::1] order = np.ascontiguousarray(order_in, dtype=np.int64)
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef Py_ssize_t f, i, t, r, j, m = 0
    # feature-major copy and float weights keep the split scan cache friendly
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    wd_arr = np.asarray(counts, dtype=np.float64)
    wy_arr = wd_arr * np.asarray(y)
    cdef double[::1] wd = wd_arr, wy = wy_arr
    cdef double* xf
    for i in range(n):
        if counts[order[0, i]] > 0:
            m += 1
    lists_arr = np.empty((p, max(m, 1)), dtype=np.int64)
    cdef int64_t[:, ::1] lists = lists_arr
    cdef Py_ssize_t c
    for f in range(p):
        c = 0
        for i in range(n):
            if counts[order[f, i]] > 0:
                lists[f, c] = order[f, i]
                c += 1

    cdef Py_ssize_t cap = 2 * max(m, 1) + 1
    feature_arr = np.full(cap, -1, dtype=np.int64)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int64)
    right_arr = np.full(cap, -1, dtype=np.int64)
    lstart_arr = np.zeros(cap, dtype=np.int64)
    lend_arr = np.zeros(cap, dtype=np.int64)
    lsamp_arr = np.empty(max(m, 1), dtype=np.int64)
    lw_arr = np.empty(max(m, 1), dtype=np.float64)
    cdef int64_t[::1] feature = feature_arr, left = left_arr, right = right_arr
    cdef int64_t[::1] lstart = lstart_arr, lend = lend_arr, lsamp = lsamp_arr
    cdef double[::1] threshold = threshold_arr, lw = lw_arr

    stack_arr = np.empty((cap, 3), dtype=np.int64)
    cdef int64_t[:, ::1] stack = stack_arr
    perm_arr = np.empty(p, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    goes_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] goes = goes_arr
    buf_arr = np.empty(max(m, 1), dtype=np.int64)
    cdef int64_t[::1] buf = buf_arr

    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t sp = 0, n_nodes = 1, n_leaf = 0
    cdef Py_ssize_t node, lo, hi, best_f, evaluated, nl, a, b, tmp
    cdef double W, S, wl, sl, wr, score, best_score, best_thr, thr, ymin, ymax, yv, x0, x1

    stack[0, 0] = 0; stack[0, 1] = 0; stack[0, 2] = m
    sp = 1
    with nogil:
        while sp > 0:
            sp -= 1
            node = stack[sp, 0]; lo = stack[sp, 1]; hi = stack[sp, 2]
            W = 0.0
            ymin = INFINITY
            ymax = -INFINITY
            for i in range(lo, hi):
                a = lists[0, i]
                W = W + wd[a]
                yv = y[a]
                if yv < ymin:
                    ymin = yv
                if yv > ymax:
                    ymax = yv
            best_f = -1
            best_thr = 0.0
            best_score = -INFINITY
            if W >= 2 * min_leaf and ymin != ymax:
                S = 0.0
                for i in range(lo, hi):
                    S = S + wy[lists[0, i]]
                for t in range(p):
                    perm[t] = t
                evaluated = 0
                for t in range(p):
                    if evaluated >= mtry:
                        break
                    r = t + <Py_ssize_t>(splitmix_next(&state) % <uint64_t>(p - t))
                    tmp = perm[t]; perm[t] = perm[r]; perm[r] = tmp
                    f = perm[t]
                    xf = &XT[f, 0]
                    if xf[lists[f, lo]] == xf[lists[f, hi - 1]]:
                        continue
                    evaluated += 1
                    wl = 0.0
                    sl = 0.0
                    x1 = xf[lists[f, lo]]
                    for i in range(lo, hi - 1):
                        a = lists[f, i]
                        wl = wl + wd[a]
                        sl = sl + wy[a]
                        x0 = x1
                        x1 = xf[lists[f, i + 1]]
                        wr = W - wl
                        if x0 < x1 and wl >= min_leaf and wr >= min_leaf:
                            score = sl * sl / wl + (S - sl) * (S - sl) / wr
                            if score > best_score:
                                best_score = score
                                best_f = f
                                thr = (x0 + x1) / 2.0
                                if thr >= x1:
                                    thr = x0
                                best_thr = thr
            if best_f < 0:
                lstart[node] = n_leaf
                for i in range(lo, hi):
                    a = lists[0, i]
                    lsamp[n_leaf] = a
                    lw[n_leaf] = <double>counts[a]
                    n_leaf += 1
                lend[node] = n_leaf
                continue
            nl = 0
            xf = &XT[best_f, 0]
            for i in range(lo, hi):
                a = lists[0, i]
                if xf[a] <= best_thr:
                    goes[a] = 1
                    nl += 1
                else:
                    goes[a] = 0
            for f in range(p):
                b = 0
                for i in range(lo, hi):
                    a = lists[f, i]
                    if goes[a]:
                        lists[f, lo + b] = a
                        b += 1
                    else:
                        buf[i - lo - b] = a
                for i in range(hi - lo - b):
                    lists[f, lo + b + i] = buf[i]
            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = n_nodes
            right[node] = n_nodes + 1
            stack[sp, 0] = n_nodes + 1; stack[sp, 1] = lo + nl; stack[sp, 2] = hi
            sp += 1
            stack[sp, 0] = n_nodes; stack[sp, 1] = lo; stack[sp, 2] = lo + nl
            sp += 1
            n_nodes += 2
    return (feature_arr[:n_nodes].copy(), threshold_arr[:n_nodes].copy(),
            left_arr[:n_nodes].copy(), right_arr[:n_nodes].copy(),
            lstart_arr[:n_nodes].copy(), lend_arr[:n_nodes].copy(),
            lsamp_arr[:n_leaf].copy(), lw_arr[:n_leaf].copy())


def forest_apply(feature_in, threshold_in, left_in, right_in, roots_in, Xq_in):
    cdef int64_t[::1] feature = np.ascontiguousarray(feature_in, dtype=np.int64)
    cdef double[::1] threshold = np.ascontiguousarray(threshold_in, dtype=np.float64)
    cdef int64_t[::1] left = np.ascontiguousarray(left_in, dtype=np.int64)
    cdef int64_t[::1] right = np.ascontiguousarray(right_in, dtype=np.int64)
    cdef int64_t[::1] roots = np.ascontiguousarray(roots_in, dtype=np.int64)
    cdef double[:, ::1] Xq = np.ascontiguousarray(Xq_in, dtype=np.float64)
    cdef Py_ssize_t m = Xq.shape[0], T = roots.shape[0], qi, t
    cdef int64_t node
    out_arr = np.empty((m, T), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    with nogil:
        for qi in range(m):
            for t in range(T):
                node = roots[t]
                while feature[node] >= 0:
                    if Xq[qi, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                out[qi, t] = node
    return out_arr


def forest_quantiles(feature, threshold, left, right, roots, leaf_start_in, leaf_end_in,
                     leaf_samples_in, leaf_weights_in, rank_of_in, y_sorted_in, Xq, qs_in):
    leaves_arr = forest_apply(feature, threshold, left, right, roots, Xq)
    cdef int64_t[:, ::1] leaves = leaves_arr
    cdef int64_t[::1] lstart = np.ascontiguousarray(leaf_start_in, dtype=np.int64)
    cdef int64_t[::1] lend = np.ascontiguousarray(leaf_end_in, dtype=np.int64)
    cdef int64_t[::1] lsamp = np.ascontiguousarray(leaf_samples_in, dtype=np.int64)
    cdef double[::1] lw = np.ascontiguousarray(leaf_weights_in, dtype=np.float64)
    cdef int64_t[::1] rank_of = np.ascontiguousarray(rank_of_in, dtype=np.int64)
    cdef double[::1] y_sorted = np.ascontiguousarray(y_sorted_in, dtype=np.float64)
    cdef double[::1] qs = np.ascontiguousarray(qs_in, dtype=np.float64)
    cdef Py_ssize_t m = leaves.shape[0], T = leaves.shape[1], n = y_sorted.shape[0]
    cdef Py_ssize_t nq = qs.shape[0], qi, t, s, e, i, j, r
    cdef double wsum, cum, target
    cdef int64_t node
    out_arr = np.empty((m, nq), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    acc_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    with nogil:
        for qi in range(m):
            for i in range(n):
                acc[i] = 0.0
            for t in range(T):
                node = leaves[qi, t]
                s = lstart[node]
                e = lend[node]
                wsum = 0.0
                for i in range(s, e):
                    wsum = wsum + lw[i]
                for i in range(s, e):
                    acc[rank_of[lsamp[i]]] += lw[i] / wsum
            for j in range(nq):
                target = qs[j] * T - 1e-9 * T
                cum = 0.0
                r = n - 1
                for i in range(n):
                    cum = cum + acc[i]
                    if cum >= target:
                        r = i
                        break
                out[qi, j] = y_sorted[r]
    return out_arr


# ---------------------------------------------------------------- nu-SVR

from ._fallback import warm_gradient


def nu_svr_smo(K_in, z_in, double C, double nu, double eps, long max_iter, alpha0=None):
    cdef double[:, ::1] K = np.ascontiguousarray(K_in, dtype=np.float64)
    cdef double[::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef Py_ssize_t l = z.shape[0], n2 = 2 * z.shape[0]
    alpha_arr = np.zeros(n2, dtype=np.float64)
    G_arr = np.empty(n2, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr, G = G_arr
    sign_arr = np.concatenate([np.ones(l), -np.ones(l)])
    cdef double[::1] sign = sign_arr
    cdef Py_ssize_t i, j, k, ip, in_, jmin, it = 0
    cdef double total = C * nu * l / 2.0, a
    cdef double gmaxp, gmaxn, gmaxp2, gmaxn2, gd, quad, obj, objmin
    cdef double delta, s, ai, aj, old_i, old_j, di, dj, si, sj
    cdef bint converged = False
    if alpha0 is not None:
        alpha_arr[:] = alpha0
        G_arr[:] = warm_gradient(K_in, z_in, alpha_arr)
    else:
        for i in range(l):
            a = total if total < C else C
            alpha[i] = a
            alpha[i + l] = a
            total -= a
        for k in range(l):
            G[k] = -z[k]
            G[k + l] = z[k]
        for i in range(n2):
            if alpha[i] > 0:
                si = sign[i]
                for k in range(n2):
                    G[k] += alpha[i] * (si * sign[k] * K[i % l, k % l])
    cdef Py_ssize_t h, kk, off, ii, jj, row_p, row_n
    cdef double sk
    qd_arr = np.empty(l, dtype=np.float64)
    cdef double[::1] QD = qd_arr
    for k in range(l):
        QD[k] = K[k, k]
    with nogil:
        while it < max_iter:
            ip = -1
            in_ = -1
            gmaxp = -INFINITY
            gmaxn = -INFINITY
            for k in range(n2):
                if k < l:
                    if alpha[k] < C and -G[k] >= gmaxp:
                        gmaxp = -G[k]
                        ip = k
                else:
                    if alpha[k] > 0 and G[k] >= gmaxn:
                        gmaxn = G[k]
                        in_ = k
            gmaxp2 = -INFINITY
            gmaxn2 = -INFINITY
            jmin = -1
            objmin = INFINITY
            row_p = ip % l if ip >= 0 else 0
            row_n = in_ % l if in_ >= 0 else 0
            for h in range(2):
                off = h * l
                sk = 1.0 if h == 0 else -1.0
                for kk in range(l):
                    k = off + kk
                    if h == 0:
                        if alpha[k] > 0:
                            if G[k] >= gmaxp2:
                                gmaxp2 = G[k]
                            if ip >= 0:
                                gd = gmaxp + G[k]
                                if gd > 0:
                                    quad = QD[row_p] + QD[kk] - 2 * (sign[ip] * sk * K[row_p, kk])
                                    if quad <= 0:
                                        quad = TAU
                                    obj = -(gd * gd) / quad
                                    if obj <= objmin:
                                        objmin = obj
                                        jmin = k
                    else:
                        if alpha[k] < C:
                            if -G[k] >= gmaxn2:
                                gmaxn2 = -G[k]
                            if in_ >= 0:
                                gd = gmaxn - G[k]
                                if gd > 0:
                                    quad = QD[row_n] + QD[kk] - 2 * (sign[in_] * sk * K[row_n, kk])
                                    if quad <= 0:
                                        quad = TAU
                                    obj = -(gd * gd) / quad
                                    if obj <= objmin:
                                        objmin = obj
                                        jmin = k
            if (gmaxp + gmaxp2 if gmaxp + gmaxp2 > gmaxn + gmaxn2 else gmaxn + gmaxn2) < eps:
                converged = True
                break
            if jmin < 0:
                converged = True
                break
            j = jmin
            i = ip if j < l else in_
            it += 1
            si = sign[i]
            sj = sign[j]
            ii = i % l
            jj = j % l
            old_i = alpha[i]
            old_j = alpha[j]
            quad = QD[ii] + QD[jj] - 2 * (si * sj * K[ii, jj])
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = old_i + old_j
            ai = old_i - delta
            aj = old_j + delta
            if s > C:
                if ai > C:
                    ai = C
                    aj = s - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = s
            if s > C:
                if aj > C:
                    aj = C
                    ai = s - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = s
            alpha[i] = ai
            alpha[j] = aj
            di = ai - old_i
            dj = aj - old_j
            for kk in range(l):
                G[kk] += (si * 1.0 * K[ii, kk]) * di + (sj * 1.0 * K[jj, kk]) * dj
                G[kk + l] += (si * -1.0 * K[ii, kk]) * di + (sj * -1.0 * K[jj, kk]) * dj
    return alpha_arr, G_arr, it, converged
