"""Hot numeric kernels, each with a numba-jitted and a pure-numpy twin.

The jitted path is used when numba imports cleanly; set
``LILIFOREST_DISABLE_NUMBA=1`` in the environment to force the numpy
fallback. Both twins perform the same arithmetic in the same order, so a
fixed (data, seed) pair yields the same trees and counts on either path.
``benchmarks/bench_kernels.py`` times the two side by side.
"""

import os

import numpy as np


def numba_requested() -> bool:
    flag = os.environ.get("LILIFOREST_DISABLE_NUMBA", "").strip().lower()
    return flag not in {"1", "true", "yes"}


# ---------------------------------------------------------------------------
# pure-numpy implementations

def _scan_split_numpy(x_sorted, y_sorted, min_child):
    """Best variance-criterion cut of a sorted feature column.

    Returns (k, sse) where k is the left-child size of the best admissible
    boundary, or (-1, inf) when no boundary leaves both sides >= min_child
    on distinct values. Ties resolve to the smallest k.
    """
    m = x_sorted.shape[0]
    lo = min_child
    hi = m - min_child
    if lo > hi:
        return -1, np.inf
    cy = np.cumsum(y_sorted)
    cy2 = np.cumsum(y_sorted * y_sorted)
    tot = cy[m - 1]
    tot2 = cy2[m - 1]
    ks = np.arange(lo, hi + 1)
    ly = cy[ks - 1]
    ly2 = cy2[ks - 1]
    nl = ks.astype(np.float64)
    nr = (m - ks).astype(np.float64)
    sse = (ly2 - ly * ly / nl) + ((tot2 - ly2) - (tot - ly) * (tot - ly) / nr)
    valid = x_sorted[ks - 1] < x_sorted[ks]
    if not np.any(valid):
        return -1, np.inf
    sse = np.where(valid, sse, np.inf)
    j = int(np.argmin(sse))
    if not np.isfinite(sse[j]):
        return -1, np.inf
    return int(ks[j]), float(sse[j])


def _assign_all_numpy(feature, threshold, left, right, leaf_ordinal, X):
    """Leaf ordinal of every row of X under the array-encoded tree."""
    n = X.shape[0]
    cur = np.zeros(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        nd = cur[active]
        at_leaf = feature[nd] < 0
        done = active[at_leaf]
        out[done] = leaf_ordinal[nd[at_leaf]]
        active = active[~at_leaf]
        if active.size == 0:
            break
        nd = cur[active]
        go_left = X[active, feature[nd]] <= threshold[nd]
        cur[active] = np.where(go_left, left[nd], right[nd])
    return out


def _accumulate_coleaf_numpy(counts, members, offsets):
    """Add 1 to counts[i, j] for every ordered pair sharing a leaf.

    ``members`` holds instance indices grouped by leaf, ``offsets`` the
    group boundaries. The diagonal accumulates once per tree.
    """
    for li in range(offsets.size - 1):
        g = members[offsets[li]:offsets[li + 1]]
        counts[np.ix_(g, g)] += 1


# ---------------------------------------------------------------------------
# numba twins

NUMBA_ENABLED = False
if numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        NUMBA_ENABLED = False

if NUMBA_ENABLED:

    @njit(cache=True)
    def _scan_split_numba(x_sorted, y_sorted, min_child):
        m = x_sorted.shape[0]
        lo = min_child
        hi = m - min_child
        best_k = -1
        best = np.inf
        if lo > hi:
            return best_k, best
        tot = 0.0
        tot2 = 0.0
        for i in range(m):
            tot += y_sorted[i]
            tot2 += y_sorted[i] * y_sorted[i]
        ly = 0.0
        ly2 = 0.0
        for i in range(hi):
            ly += y_sorted[i]
            ly2 += y_sorted[i] * y_sorted[i]
            k = i + 1
            if k < lo:
                continue
            if not (x_sorted[k - 1] < x_sorted[k]):
                continue
            nl = float(k)
            nr = float(m - k)
            sse = (ly2 - ly * ly / nl) + ((tot2 - ly2) - (tot - ly) * (tot - ly) / nr)
            if sse < best:
                best = sse
                best_k = k
        return best_k, best

    @njit(cache=True)
    def _assign_all_numba(feature, threshold, left, right, leaf_ordinal, X):
        n = X.shape[0]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = leaf_ordinal[node]
        return out

    @njit(cache=True)
    def _accumulate_coleaf_numba(counts, members, offsets):
        for li in range(offsets.size - 1):
            s = offsets[li]
            e = offsets[li + 1]
            for a in range(s, e):
                ia = members[a]
                for b in range(s, e):
                    counts[ia, members[b]] += 1

    scan_split = _scan_split_numba
    assign_all = _assign_all_numba
    accumulate_coleaf = _accumulate_coleaf_numba
    BACKEND = "numba"
else:
    scan_split = _scan_split_numpy
    assign_all = _assign_all_numpy
    accumulate_coleaf = _accumulate_coleaf_numpy
    BACKEND = "numpy"
