"""Compiled inner loops.

Everything in here works on plain arrays so that the same code path serves
the single-step Python API and the long flip trajectories run by the
outlier test.  Graph adjacency is CSR (``indptr``, ``indices``).
"""

import numpy as np
from numba import njit

# metric codes shared with gerrysim.metrics.MetricKind
MEAN_MEDIAN = 0
EFFICIENCY_GAP = 1
PARTISAN_BIAS = 2
PARTISAN_GINI = 3
SAFE_SEATS = 4


# ---------------------------------------------------------------------------
# metric cores


@njit(cache=True)
def mean_median_core(shares):
    return np.median(shares) - np.mean(shares)


@njit(cache=True)
def seats_at(shares, statewide, at):
    """Number of districts won under a uniform swing to statewide share `at`."""
    delta = at - statewide
    won = 0
    for s in shares:
        if s + delta > 0.5:
            won += 1
    return won


@njit(cache=True)
def partisan_bias_core(shares, statewide, at):
    d = shares.shape[0]
    n1 = seats_at(shares, statewide, at)
    n2 = seats_at(shares, statewide, 1.0 - at)
    # (S(at) - (1 - S(1 - at))) / 2 with S = count / d
    return (n1 + n2 - d) / (2.0 * d)


@njit(cache=True)
def partisan_gini_core(shares, statewide):
    # S(x) = #{b_i < x} / d and 1 - S(1 - x) = #{1 - b_i <= x} / d, with
    # b_i = V + 1/2 - v_i the swing at which district i flips.
    d = shares.shape[0]
    b = statewide + 0.5 - shares
    pts = np.empty(2 * d + 2)
    pts[0] = 0.0
    pts[1] = 1.0
    for i in range(d):
        pts[2 + i] = min(max(b[i], 0.0), 1.0)
        pts[2 + d + i] = min(max(1.0 - b[i], 0.0), 1.0)
    pts = np.sort(pts)
    area = 0.0
    for j in range(pts.shape[0] - 1):
        lo = pts[j]
        hi = pts[j + 1]
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        s = 0
        r = 0
        for i in range(d):
            if b[i] < mid:
                s += 1
            if 1.0 - b[i] <= mid:
                r += 1
        area += (hi - lo) * abs(s - r)
    return 0.5 * area / d


@njit(cache=True)
def efficiency_gap_core(shares, turnout, statewide):
    # turnout-weighted seat share; equals the plain seat fraction when all
    # districts have equal turnout
    total = 0.0
    won = 0.0
    for i in range(shares.shape[0]):
        total += turnout[i]
        if shares[i] > 0.5:
            won += turnout[i]
    return (won / total - 0.5) - 2.0 * (statewide - 0.5)


@njit(cache=True)
def safe_seats_core(shares, threshold):
    c = 0
    for s in shares:
        if s >= threshold:
            c += 1
    return c


@njit(cache=True)
def label_core(dvd, dvr, kind, party, threshold):
    """Metric value from district vote tallies.  party 0 = D, 1 = R."""
    d = dvd.shape[0]
    turnout = np.empty(d)
    shares = np.empty(d)
    pv_total = 0
    t_total = 0
    for i in range(d):
        pv = dvd[i] if party == 0 else dvr[i]
        t = dvd[i] + dvr[i]
        turnout[i] = t
        shares[i] = pv / t
        pv_total += pv
        t_total += t
    statewide = pv_total / t_total
    if kind == MEAN_MEDIAN:
        return mean_median_core(shares)
    if kind == EFFICIENCY_GAP:
        return efficiency_gap_core(shares, turnout, statewide)
    if kind == PARTISAN_BIAS:
        return partisan_bias_core(shares, statewide, statewide)
    if kind == PARTISAN_GINI:
        return partisan_gini_core(shares, statewide)
    return float(safe_seats_core(shares, threshold))


# ---------------------------------------------------------------------------
# flip chain


@njit(cache=True)
def articulation_points(indptr, indices, assign, is_art, disc, low, parent,
                        stack_node, stack_it):
    """Mark nodes whose removal disconnects their own district (iterative Tarjan
    on the subgraphs induced by each district)."""
    n = assign.shape[0]
    for v in range(n):
        disc[v] = -1
        is_art[v] = False
    t = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = t
        low[root] = t
        t += 1
        parent[root] = -1
        root_children = 0
        sp = 0
        stack_node[0] = root
        stack_it[0] = indptr[root]
        while sp >= 0:
            v = stack_node[sp]
            it = stack_it[sp]
            if it < indptr[v + 1]:
                stack_it[sp] = it + 1
                w = indices[it]
                if assign[w] != assign[v]:
                    continue
                if disc[w] == -1:
                    parent[w] = v
                    disc[w] = t
                    low[w] = t
                    t += 1
                    if v == root:
                        root_children += 1
                    sp += 1
                    stack_node[sp] = w
                    stack_it[sp] = indptr[w]
                elif w != parent[v]:
                    if disc[w] < low[v]:
                        low[v] = disc[w]
            else:
                sp -= 1
                if sp >= 0:
                    u = stack_node[sp]
                    if low[v] < low[u]:
                        low[u] = low[v]
                    if u != root and low[v] >= disc[u]:
                        is_art[u] = True
        if root_children > 1:
            is_art[root] = True


@njit(cache=True)
def flip_candidates(indptr, indices, assign, pop, dpop, dsize, lo, hi, is_art,
                    cand_v, cand_t):
    """Fill (node, target district) pairs whose flip keeps the plan valid."""
    n = assign.shape[0]
    count = 0
    for v in range(n):
        a = assign[v]
        if dsize[a] <= 1 or is_art[v]:
            continue
        pv = pop[v]
        if dpop[a] - pv < lo:
            continue
        for it in range(indptr[v], indptr[v + 1]):
            j = assign[indices[it]]
            if j == a:
                continue
            dup = False
            for it2 in range(indptr[v], it):
                if assign[indices[it2]] == j:
                    dup = True
                    break
            if dup or dpop[j] + pv > hi:
                continue
            cand_v[count] = v
            cand_t[count] = j
            count += 1
    return count


@njit(cache=True)
def move_node(v, src, dst, assign, pop, vd, vr, dpop, dvd, dvr, dsize):
    assign[v] = dst
    dpop[src] -= pop[v]
    dpop[dst] += pop[v]
    dvd[src] -= vd[v]
    dvd[dst] += vd[v]
    dvr[src] -= vr[v]
    dvr[dst] += vr[v]
    dsize[src] -= 1
    dsize[dst] += 1


@njit(cache=True, nogil=True)
def flip_walk(indptr, indices, pop, vd, vr, assign, dpop, dvd, dvr, dsize,
              lo, hi, uniforms, kind, party, threshold, labels, snapshots,
              thin):
    """Run ``uniforms.shape[0]`` Metropolized flip steps in place.

    Each step draws a valid (node, district) pair uniformly using
    ``uniforms[s, 0]`` and accepts it with probability min(1, N(X)/N(X'))
    using ``uniforms[s, 1]``, N being the valid-candidate count.  The chain
    is reversible with respect to the uniform distribution on valid plans.

    If ``kind >= 0`` the label of every visited state is written to
    ``labels``.  If ``thin > 0`` the assignment is copied into
    ``snapshots`` every ``thin`` steps.  Returns the number of accepted moves.
    """
    n = assign.shape[0]
    nnz = indices.shape[0]
    is_art = np.zeros(n, dtype=np.bool_)
    disc = np.empty(n, dtype=np.int64)
    low = np.empty(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    stack_node = np.empty(n, dtype=np.int64)
    stack_it = np.empty(n, dtype=np.int64)
    cv = np.empty(nnz, dtype=np.int64)
    ct = np.empty(nnz, dtype=np.int64)
    cv2 = np.empty(nnz, dtype=np.int64)
    ct2 = np.empty(nnz, dtype=np.int64)

    articulation_points(indptr, indices, assign, is_art, disc, low, parent,
                        stack_node, stack_it)
    ncur = flip_candidates(indptr, indices, assign, pop, dpop, dsize, lo, hi,
                           is_art, cv, ct)
    accepted = 0
    steps = uniforms.shape[0]
    for s in range(steps):
        if ncur > 0:
            idx = int(uniforms[s, 0] * ncur)
            if idx >= ncur:
                idx = ncur - 1
            v = cv[idx]
            dst = ct[idx]
            src = assign[v]
            move_node(v, src, dst, assign, pop, vd, vr, dpop, dvd, dvr, dsize)
            articulation_points(indptr, indices, assign, is_art, disc, low,
                                parent, stack_node, stack_it)
            nnew = flip_candidates(indptr, indices, assign, pop, dpop, dsize,
                                   lo, hi, is_art, cv2, ct2)
            if uniforms[s, 1] * nnew < ncur:
                cv, cv2 = cv2, cv
                ct, ct2 = ct2, ct
                ncur = nnew
                accepted += 1
            else:
                move_node(v, dst, src, assign, pop, vd, vr, dpop, dvd, dvr,
                          dsize)
        if kind >= 0:
            labels[s] = label_core(dvd, dvr, kind, party, threshold)
        if thin > 0 and (s + 1) % thin == 0:
            row = (s + 1) // thin - 1
            for i in range(n):
                snapshots[row, i] = assign[i]
    return accepted
