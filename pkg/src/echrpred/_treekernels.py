"""Numba kernels for CART-style tree construction and prediction.

Two build strategies share identical split semantics (Gini or variance
criterion, midpoint thresholds, ties resolved toward the lower feature index
then the lower threshold):

* presorted builders keep, per feature, the node's sample indices and values
  in ascending value order and stably partition both at every split, so each
  node scan is a contiguous walk (cheap when every split considers all
  features: single trees, boosting stumps, gradient boosting);
* the forest builder sorts only the per-node feature subsample (cheap when
  each split looks at ~sqrt(d) features).

All randomness (bootstrap draws, feature subsets) comes from an inline 64-bit
LCG (Knuth MMIX constants), so tree construction is bit-deterministic for a
given seed. Trees are returned as flat arrays: feature[i] < 0 marks a leaf
whose prediction is value[i].
"""

from __future__ import annotations

import numpy as np
from numba import njit

NO_DEPTH_LIMIT = 1 << 30

_LCG_MULT = np.uint64(6364136223846793005)
_LCG_INC = np.uint64(1442695040888963407)


@njit(cache=True, inline="always")
def _lcg_next(state):
    return state * _LCG_MULT + _LCG_INC


@njit(cache=True, inline="always")
def _lcg_below(state, bound):
    # 31 high bits are enough for sample / feature counts at desk scale
    return np.int64((state >> np.uint64(33)) % np.uint64(bound))


def presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column stable argsort, laid out (d, n): sample indices and the
    matching sorted values, both contiguous for cache-friendly scans."""
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))
    vals = np.ascontiguousarray(np.take_along_axis(X, order.T.astype(np.int64), axis=0).T)
    return order, vals


@njit(cache=True)
def build_tree_presorted(order, vals, y, w, max_depth, min_leaf):
    """Weighted Gini CART over all features using presorted columns.

    `order` and `vals` are mutated (stably partitioned per split): pass
    copies when the presorted arrays must be reused. Returns (feature,
    threshold, left, right, value), all length n_nodes.
    """
    d, n = order.shape
    max_nodes = 2 * n + 8
    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    tmp_i = np.empty(n, np.int32)
    tmp_v = np.empty(n, np.float64)
    go_left = np.zeros(n, np.uint8)

    n_nodes = 1
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = n
    stack_depth[sp] = 0
    sp += 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        cnt = hi - lo

        w_tot = 0.0
        wp = 0.0
        col0 = order[0]
        for ii in range(lo, hi):
            j = col0[ii]
            w_tot += w[j]
            wp += w[j] * y[j]
        value[node] = 1.0 if 2.0 * wp >= w_tot else 0.0

        if depth >= max_depth or wp <= 0.0 or wp >= w_tot or cnt < 2 * min_leaf:
            continue

        best_f = -1
        best_g = 1e300
        best_thr = 0.0
        for f in range(d):
            col = order[f]
            vcol = vals[f]
            wl = 0.0
            pl = 0.0
            cl = 0
            for ii in range(lo, hi - 1):
                j = col[ii]
                wl += w[j]
                pl += w[j] * y[j]
                cl += 1
                v_cur = vcol[ii]
                v_next = vcol[ii + 1]
                if v_next <= v_cur:
                    continue
                cr = cnt - cl
                if cl < min_leaf or cr < min_leaf:
                    continue
                wr = w_tot - wl
                pr = wp - pl
                if wl <= 0.0 or wr <= 0.0:
                    continue
                gl = 1.0 - (pl * pl + (wl - pl) * (wl - pl)) / (wl * wl)
                gr = 1.0 - (pr * pr + (wr - pr) * (wr - pr)) / (wr * wr)
                g = (wl * gl + wr * gr) / w_tot
                if g < best_g:
                    best_g = g
                    best_f = f
                    best_thr = 0.5 * (v_cur + v_next)
        if best_f < 0:
            continue

        colb = order[best_f]
        vcolb = vals[best_f]
        nl = 0
        for ii in range(lo, hi):
            if vcolb[ii] <= best_thr:
                go_left[colb[ii]] = 1
                nl += 1
            else:
                go_left[colb[ii]] = 0

        for f in range(d):
            col = order[f]
            vcol = vals[f]
            a = 0
            b = nl
            for ii in range(lo, hi):
                j = col[ii]
                if go_left[j] == 1:
                    tmp_i[a] = j
                    tmp_v[a] = vcol[ii]
                    a += 1
                else:
                    tmp_i[b] = j
                    tmp_v[b] = vcol[ii]
                    b += 1
            for ii in range(cnt):
                col[lo + ii] = tmp_i[ii]
                vcol[lo + ii] = tmp_v[ii]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_node[sp] = rid
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_depth[sp] = depth + 1
        sp += 1

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def build_regression_tree_levelwise(order, vals, X, grad, hess, max_depth):
    """Variance-reduction regression tree on gradients with Newton leaf values.

    Level-synchronous: every level makes one pass over the globally presorted
    columns, tracking per-frontier-node partial sums, so `order`/`vals` stay
    read-only (no per-tree copies or partition passes). Split criterion
    maximizes GL^2/NL + GR^2/NR; each leaf stores sum(grad)/sum(hess).
    """
    d, n = order.shape
    max_nodes = 2 ** (max_depth + 1) + 2
    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    # slot = position of a live node within the current frontier; -1 = settled
    slot_of = np.zeros(n, np.int64)
    frontier = np.empty(max_nodes, np.int64)
    frontier[0] = 0
    n_frontier = 1
    n_nodes = 1

    max_width = 2 ** max_depth + 1
    g_tot = np.empty(max_width, np.float64)
    h_tot = np.empty(max_width, np.float64)
    cnt = np.empty(max_width, np.int64)
    best_gain = np.empty(max_width, np.float64)
    best_f = np.empty(max_width, np.int64)
    best_thr = np.empty(max_width, np.float64)
    gl = np.empty(max_width, np.float64)
    cl = np.empty(max_width, np.int64)
    prev_v = np.empty(max_width, np.float64)

    for level in range(max_depth + 1):
        for s in range(n_frontier):
            g_tot[s] = 0.0
            h_tot[s] = 0.0
            cnt[s] = 0
            best_gain[s] = 0.0
            best_f[s] = -1
        for j in range(n):
            s = slot_of[j]
            if s >= 0:
                g_tot[s] += grad[j]
                h_tot[s] += hess[j]
                cnt[s] += 1

        if level < max_depth:
            for f in range(d):
                col = order[f]
                vcol = vals[f]
                for s in range(n_frontier):
                    gl[s] = 0.0
                    cl[s] = 0
                    prev_v[s] = np.inf
                for ii in range(n):
                    j = col[ii]
                    s = slot_of[j]
                    if s < 0:
                        continue
                    v = vcol[ii]
                    if cl[s] > 0 and v > prev_v[s] and cl[s] < cnt[s]:
                        gr = g_tot[s] - gl[s]
                        cr = cnt[s] - cl[s]
                        gain = (
                            gl[s] * gl[s] / cl[s]
                            + gr * gr / cr
                            - g_tot[s] * g_tot[s] / cnt[s]
                        )
                        if gain > best_gain[s] + 1e-12:
                            best_gain[s] = gain
                            best_f[s] = f
                            best_thr[s] = 0.5 * (prev_v[s] + v)
                    gl[s] += grad[j]
                    cl[s] += 1
                    prev_v[s] = v

        # finalize or split each frontier node
        new_frontier = np.empty(max_nodes, np.int64)
        new_slot = np.full(max_width * 2, -1, np.int64)  # old slot -> new left slot
        n_new = 0
        for s in range(n_frontier):
            node = frontier[s]
            if level >= max_depth or best_f[s] < 0 or cnt[s] < 2:
                value[node] = g_tot[s] / h_tot[s] if h_tot[s] > 1e-12 else 0.0
                continue
            feat[node] = best_f[s]
            thr[node] = best_thr[s]
            left[node] = n_nodes
            right[node] = n_nodes + 1
            new_frontier[n_new] = n_nodes
            new_frontier[n_new + 1] = n_nodes + 1
            new_slot[s] = n_new
            n_new += 2
            n_nodes += 2
        for j in range(n):
            s = slot_of[j]
            if s < 0:
                continue
            ns = new_slot[s]
            if ns < 0:
                slot_of[j] = -1
            else:
                node = frontier[s]
                slot_of[j] = ns if X[j, feat[node]] <= thr[node] else ns + 1
        frontier = new_frontier
        n_frontier = n_new
        if n_frontier == 0:
            break

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def weighted_stump(order, vals, y, w):
    """Best depth-1 weighted-Gini split over presorted read-only columns.

    Returns (found, feature, threshold, left_value, right_value); when no
    valid split exists (all columns constant), found = 0 and left_value holds
    the weighted-majority label.
    """
    d, n = order.shape
    col0 = order[0]
    w_tot = 0.0
    wp = 0.0
    for ii in range(n):
        j = col0[ii]
        w_tot += w[j]
        wp += w[j] * y[j]
    majority = 1.0 if 2.0 * wp >= w_tot else 0.0

    best_f = -1
    best_g = 1e300
    best_thr = 0.0
    best_wl = 0.0
    best_pl = 0.0
    for f in range(d):
        col = order[f]
        vcol = vals[f]
        wl = 0.0
        pl = 0.0
        for ii in range(n - 1):
            j = col[ii]
            wl += w[j]
            pl += w[j] * y[j]
            v_cur = vcol[ii]
            v_next = vcol[ii + 1]
            if v_next <= v_cur:
                continue
            wr = w_tot - wl
            pr = wp - pl
            if wl <= 0.0 or wr <= 0.0:
                continue
            gini_l = 1.0 - (pl * pl + (wl - pl) * (wl - pl)) / (wl * wl)
            gini_r = 1.0 - (pr * pr + (wr - pr) * (wr - pr)) / (wr * wr)
            g = (wl * gini_l + wr * gini_r) / w_tot
            if g < best_g:
                best_g = g
                best_f = f
                best_thr = 0.5 * (v_cur + v_next)
                best_wl = wl
                best_pl = pl
    if best_f < 0:
        return 0, -1, 0.0, majority, majority
    lv = 1.0 if 2.0 * best_pl >= best_wl else 0.0
    wr = w_tot - best_wl
    pr = wp - best_pl
    rv = 1.0 if 2.0 * pr >= wr else 0.0
    return 1, best_f, best_thr, lv, rv


@njit(cache=True)
def build_forest_tree(X, y, seed, bootstrap, m_features, max_depth, min_leaf):
    """One forest tree: LCG bootstrap counts as weights, fresh feature subset
    per split, per-node sorting of only the sampled columns."""
    n, d = X.shape
    state = np.uint64(seed)
    for _ in range(3):
        state = _lcg_next(state)

    w = np.zeros(n, np.float64)
    if bootstrap == 1:
        for _ in range(n):
            state = _lcg_next(state)
            w[_lcg_below(state, n)] += 1.0
    else:
        for i in range(n):
            w[i] = 1.0

    samples = np.empty(n, np.int32)
    n_used = 0
    for i in range(n):
        if w[i] > 0.0:
            samples[n_used] = i
            n_used += 1

    max_nodes = 2 * n + 8
    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    feat_pool = np.arange(d).astype(np.int64)
    subset = np.empty(m_features, np.int64)
    vals = np.empty(n, np.float64)
    tmp = np.empty(n, np.int32)

    n_nodes = 1
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = n_used
    stack_depth[sp] = 0
    sp += 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        cnt = hi - lo

        w_tot = 0.0
        wp = 0.0
        for ii in range(lo, hi):
            j = samples[ii]
            w_tot += w[j]
            wp += w[j] * y[j]
        value[node] = 1.0 if 2.0 * wp >= w_tot else 0.0

        if depth >= max_depth or wp <= 0.0 or wp >= w_tot or cnt < 2 * min_leaf:
            continue

        for m in range(m_features):
            state = _lcg_next(state)
            r = m + _lcg_below(state, d - m)
            swap = feat_pool[m]
            feat_pool[m] = feat_pool[r]
            feat_pool[r] = swap
            subset[m] = feat_pool[m]
        # scan in ascending feature order so ties break toward lower index
        subset.sort()

        best_f = -1
        best_g = 1e300
        best_thr = 0.0
        for m in range(m_features):
            f = subset[m]
            for ii in range(cnt):
                vals[ii] = X[samples[lo + ii], f]
            perm = np.argsort(vals[:cnt])
            wl = 0.0
            pl = 0.0
            cl = 0
            for ii in range(cnt - 1):
                j = samples[lo + perm[ii]]
                wl += w[j]
                pl += w[j] * y[j]
                cl += 1
                v_cur = vals[perm[ii]]
                v_next = vals[perm[ii + 1]]
                if v_next <= v_cur:
                    continue
                cr = cnt - cl
                if cl < min_leaf or cr < min_leaf:
                    continue
                wr = w_tot - wl
                pr = wp - pl
                if wl <= 0.0 or wr <= 0.0:
                    continue
                gl = 1.0 - (pl * pl + (wl - pl) * (wl - pl)) / (wl * wl)
                gr = 1.0 - (pr * pr + (wr - pr) * (wr - pr)) / (wr * wr)
                g = (wl * gl + wr * gr) / w_tot
                if g < best_g:
                    best_g = g
                    best_f = f
                    best_thr = 0.5 * (v_cur + v_next)
        if best_f < 0:
            continue

        a = 0
        b = cnt - 1
        nl = 0
        for ii in range(lo, hi):
            j = samples[ii]
            if X[j, best_f] <= best_thr:
                tmp[a] = j
                a += 1
                nl += 1
            else:
                tmp[b] = j
                b -= 1
        for ii in range(cnt):
            samples[lo + ii] = tmp[ii]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_node[sp] = rid
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_depth[sp] = depth + 1
        sp += 1

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def tree_predict(X, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.empty(n, np.float64)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def sgd_logistic_fit(X, y, lam, eta0, epochs, seed):
    """Per-sample SGD on L2-regularized logistic loss, eta_t = eta0/(1+eta0*lam*t)."""
    n, d = X.shape
    w = np.zeros(d, np.float64)
    b = 0.0
    order = np.arange(n)
    state = np.uint64(seed)
    for _ in range(3):
        state = _lcg_next(state)
    t = 0
    for _ in range(epochs):
        for i in range(n - 1, 0, -1):
            state = _lcg_next(state)
            r = _lcg_below(state, i + 1)
            swap = order[i]
            order[i] = order[r]
            order[r] = swap
        for oi in range(n):
            i = order[oi]
            t += 1
            eta = eta0 / (1.0 + eta0 * lam * t)
            z = b
            for f in range(d):
                z += w[f] * X[i, f]
            if z > 35.0:
                p = 1.0
            elif z < -35.0:
                p = 0.0
            else:
                p = 1.0 / (1.0 + np.exp(-z))
            g = p - y[i]
            shrink = 1.0 - eta * lam
            step = eta * g
            for f in range(d):
                w[f] = shrink * w[f] - step * X[i, f]
            b -= step
    return w, b


@njit(cache=True)
def pegasos_svm_fit(X, y, lam, epochs, seed):
    """Primal subgradient descent on hinge loss, Pegasos schedule eta_t = 1/(lam*t).

    y is +/-1; the intercept is updated on margin violations but never
    regularized.
    """
    n, d = X.shape
    w = np.zeros(d, np.float64)
    b = 0.0
    order = np.arange(n)
    state = np.uint64(seed)
    for _ in range(3):
        state = _lcg_next(state)
    t = 0
    for _ in range(epochs):
        for i in range(n - 1, 0, -1):
            state = _lcg_next(state)
            r = _lcg_below(state, i + 1)
            swap = order[i]
            order[i] = order[r]
            order[r] = swap
        for oi in range(n):
            i = order[oi]
            t += 1
            eta = 1.0 / (lam * t)
            z = b
            for f in range(d):
                z += w[f] * X[i, f]
            shrink = 1.0 - eta * lam
            if y[i] * z < 1.0:
                step = eta * y[i]
                for f in range(d):
                    w[f] = shrink * w[f] + step * X[i, f]
                b += step
            else:
                for f in range(d):
                    w[f] = shrink * w[f]
    return w, b
