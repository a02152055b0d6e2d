"""Pure numpy implementations of the hot kernels.

Semantics match ``_kernels.pyx`` exactly (same traversal order, same
pseudo-random stream, same tie-breaking), so either backend fits the
same trees and SVR solutions.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
TAU = 1e-12


class SplitMix64:
    """Tiny deterministic PRNG shared by both kernel backends."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, k: int) -> int:
        return self.next() % k


# ---------------------------------------------------------------- kNN

def knn_query(train, query, k):
    """Indices and Euclidean distances of the k nearest rows, sorted by (distance, index)."""
    train = np.ascontiguousarray(train, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    n = train.shape[0]
    k = min(int(k), n)
    idx = np.empty((query.shape[0], k), dtype=np.int64)
    dist = np.empty((query.shape[0], k), dtype=np.float64)
    order_base = np.arange(n)
    for qi in range(query.shape[0]):
        diff = train - query[qi]
        d2 = np.zeros(n)
        for j in range(train.shape[1]):
            d2 += diff[:, j] * diff[:, j]
        sel = np.lexsort((order_base, d2))[:k]
        idx[qi] = sel
        dist[qi] = np.sqrt(d2[sel])
    return idx, dist


# ---------------------------------------------------------------- trees

def build_tree(X, y, counts, order, min_leaf, mtry, seed):
    """Grow one regression tree on bootstrap-weighted samples.

    ``counts`` are bootstrap multiplicities (0 = out of bag), ``order`` is
    the stable argsort of every feature column. Splits minimise the summed
    child squared error over a random feature subset; every child keeps a
    bootstrap weight of at least ``min_leaf``.

    Returns (feature, threshold, left, right, leaf_start, leaf_end,
    leaf_samples, leaf_weights); leaves have feature == -1.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    p = X.shape[1]
    rng = SplitMix64(seed)

    inbag = counts[order[0]] > 0
    sorted_lists = [order[f][counts[order[f]] > 0].copy() for f in range(p)]
    m = int(inbag.sum())
    wts = counts.astype(np.float64)

    feature, threshold, left, right, leaf_start, leaf_end = [], [], [], [], [], []
    leaf_samples, leaf_weights = [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_start.append(0)
        leaf_end.append(0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, 0, m)]
    perm = np.arange(p)
    while stack:
        node, lo, hi = stack.pop()
        members = sorted_lists[0][lo:hi]
        w_node = wts[members]
        W = float(w_node.sum())
        ys = y[members]
        best_f, best_thr, best_score = -1, 0.0, -np.inf
        if W >= 2 * min_leaf and ys.min() != ys.max():
            S = 0.0
            for i in members:
                S += wts[i] * y[i]
            for t in range(p):
                perm[t] = t
            evaluated = 0
            for t in range(p):
                if evaluated >= mtry:
                    break
                r = t + rng.below(p - t)
                perm[t], perm[r] = perm[r], perm[t]
                f = perm[t]
                lst = sorted_lists[f][lo:hi]
                xs = X[lst, f]
                if xs[0] == xs[-1]:
                    continue
                evaluated += 1
                ws = wts[lst]
                wl = np.cumsum(ws)[:-1]
                sl = np.cumsum(ws * y[lst])[:-1]
                wr = W - wl
                valid = (xs[:-1] < xs[1:]) & (wl >= min_leaf) & (wr >= min_leaf)
                if not valid.any():
                    continue
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = sl * sl / wl + (S - sl) * (S - sl) / wr
                score = np.where(valid, score, -np.inf)
                j = int(np.argmax(score))
                if score[j] > best_score:
                    best_score = float(score[j])
                    best_f = int(f)
                    thr = (xs[j] + xs[j + 1]) / 2.0
                    if thr >= xs[j + 1]:
                        thr = xs[j]
                    best_thr = float(thr)
        if best_f < 0:
            leaf_start[node] = len(leaf_samples)
            leaf_samples.extend(int(i) for i in members)
            leaf_weights.extend(float(wts[i]) for i in members)
            leaf_end[node] = len(leaf_samples)
            continue
        goes_left = np.zeros(X.shape[0], dtype=bool)
        goes_left[members] = X[members, best_f] <= best_thr
        nl = int(goes_left[members].sum())
        for f in range(p):
            seg = sorted_lists[f][lo:hi]
            gl = goes_left[seg]
            sorted_lists[f][lo:hi] = np.concatenate([seg[gl], seg[~gl]])
        feature[node] = best_f
        threshold[node] = best_thr
        ln = new_node()
        rn = new_node()
        left[node] = ln
        right[node] = rn
        stack.append((rn, lo + nl, hi))
        stack.append((ln, lo, lo + nl))

    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(leaf_start, dtype=np.int64), np.array(leaf_end, dtype=np.int64),
            np.array(leaf_samples, dtype=np.int64), np.array(leaf_weights, dtype=np.float64))


def forest_apply(feature, threshold, left, right, roots, Xq):
    """Leaf node id reached by every query in every tree, shape (m, n_trees)."""
    Xq = np.asarray(Xq, dtype=np.float64)
    out = np.empty((Xq.shape[0], len(roots)), dtype=np.int64)
    for qi in range(Xq.shape[0]):
        x = Xq[qi]
        for t, node in enumerate(roots):
            while feature[node] >= 0:
                node = left[node] if x[feature[node]] <= threshold[node] else right[node]
            out[qi, t] = node
    return out


def forest_quantiles(feature, threshold, left, right, roots, leaf_start, leaf_end,
                     leaf_samples, leaf_weights, rank_of, y_sorted, Xq, qs):
    """Weighted empirical-CDF quantiles with per-tree leaf weights (Meinshausen)."""
    leaves = forest_apply(feature, threshold, left, right, roots, Xq)
    qs = np.asarray(qs, dtype=np.float64)
    n = len(y_sorted)
    T = len(roots)
    out = np.empty((leaves.shape[0], len(qs)))
    for qi in range(leaves.shape[0]):
        acc = np.zeros(n)
        for t in range(T):
            node = leaves[qi, t]
            s, e = leaf_start[node], leaf_end[node]
            members = leaf_samples[s:e]
            w = leaf_weights[s:e]
            np.add.at(acc, rank_of[members], w / w.sum())
        cum = np.cumsum(acc)
        for j, q in enumerate(qs):
            target = q * T - 1e-9 * T
            r = int(np.searchsorted(cum, target, side="left"))
            out[qi, j] = y_sorted[min(r, n - 1)]
    return out


# ---------------------------------------------------------------- nu-SVR

def _q_row(K, sign, i, l):
    """Row i of the signed 2l x 2l SVR matrix Q = y_i y_j K."""
    base = K[i % l]
    row = np.concatenate([base, base])
    return sign[i] * sign * row


def warm_gradient(K, z, alpha):
    """Dual gradient p + Q alpha for an arbitrary feasible starting point."""
    l = len(z)
    Kb = np.asarray(K, dtype=np.float64)[:l, :l] @ (alpha[:l] - alpha[l:])
    z = np.asarray(z, dtype=np.float64)
    return np.concatenate([Kb - z, z - Kb])


def nu_svr_smo(K, z, C, nu, eps, max_iter, alpha0=None):
    """SMO for the nu-SVR dual with second-order working-set selection.

    Variables are (alpha, alpha*) stacked into 2l entries with signs
    (+1, -1). Only the leading l x l block of ``K`` is read, so a larger
    reusable buffer may be passed. ``alpha0`` warm-starts from a feasible
    point. Returns (alpha2, G, iterations, converged).
    """
    z = np.asarray(z, dtype=np.float64)
    l = len(z)
    K = np.asarray(K, dtype=np.float64)[:l, :l]
    n2 = 2 * l
    sign = np.concatenate([np.ones(l), -np.ones(l)])
    p = np.concatenate([-z, z])
    if alpha0 is not None:
        alpha = np.array(alpha0, dtype=np.float64)
        G = warm_gradient(K, z, alpha)
    else:
        alpha = np.zeros(n2)
        total = C * nu * l / 2.0
        for i in range(l):
            a = min(total, C)
            alpha[i] = alpha[i + l] = a
            total -= a
        G = p.copy()
        for i in np.nonzero(alpha)[0]:
            G += alpha[i] * _q_row(K, sign, i, l)
    QD = np.concatenate([np.diag(K), np.diag(K)])

    it = 0
    converged = False
    while it < max_iter:
        upper = alpha >= C
        lower = alpha <= 0
        pos = sign > 0
        # i candidates
        cand_p = pos & ~upper
        cand_n = ~pos & ~lower
        ip = in_ = -1
        gmaxp = gmaxn = -np.inf
        if cand_p.any():
            v = np.where(cand_p, -G, -np.inf)
            ip = int(len(v) - 1 - np.argmax(v[::-1]))
            gmaxp = v[ip]
        if cand_n.any():
            v = np.where(cand_n, G, -np.inf)
            in_ = int(len(v) - 1 - np.argmax(v[::-1]))
            gmaxn = v[in_]
        Qip = _q_row(K, sign, ip, l) if ip >= 0 else None
        Qin = _q_row(K, sign, in_, l) if in_ >= 0 else None

        jp = pos & ~lower
        jn = ~pos & ~upper
        gmaxp2 = np.max(G[jp]) if jp.any() else -np.inf
        gmaxn2 = np.max(-G[jn]) if jn.any() else -np.inf

        obj = np.full(n2, np.inf)
        if ip >= 0:
            gd = gmaxp + G
            ok = jp & (gd > 0)
            quad = QD[ip] + QD - 2 * Qip
            quad = np.where(quad > 0, quad, TAU)
            obj = np.where(ok, -(gd * gd) / quad, obj)
        if in_ >= 0:
            gd = gmaxn - G
            ok = jn & (gd > 0)
            quad = QD[in_] + QD - 2 * Qin
            quad = np.where(quad > 0, quad, TAU)
            obj = np.where(ok, -(gd * gd) / quad, obj)
        if max(gmaxp + gmaxp2, gmaxn + gmaxn2) < eps:
            converged = True
            break
        finite = np.isfinite(obj)
        if not finite.any():
            converged = True
            break
        # last minimum, mirroring a "<=" scan
        j = int(n2 - 1 - np.argmin(obj[::-1]))
        i = ip if sign[j] > 0 else in_
        it += 1

        Qi = Qip if sign[j] > 0 else Qin
        Qj = _q_row(K, sign, j, l)
        old_i, old_j = alpha[i], alpha[j]
        quad = QD[i] + QD[j] - 2 * Qi[j]
        if quad <= 0:
            quad = TAU
        delta = (G[i] - G[j]) / quad
        s = alpha[i] + alpha[j]
        ai = alpha[i] - delta
        aj = alpha[j] + delta
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
        alpha[i], alpha[j] = ai, aj
        G += Qi * (ai - old_i) + Qj * (aj - old_j)
    return alpha, G, it, converged
