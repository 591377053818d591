"""Compiled hot loop for the random-tree matching experiment.

Samples critical branching-process trees with two joined roots and runs
the degree-1 greedy matching until the fate of the root edge is decided.
Kept separate so that importing the package does not pay JIT compilation.
"""

import numpy as np
from numba import njit


def _poisson1_cdf(n=26):
    pmf = np.empty(n)
    pmf[0] = np.exp(-1.0)
    for k in range(1, n):
        pmf[k] = pmf[k - 1] / k
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0  # tail beyond the table is below 1e-16
    return cdf


POISSON1_CDF = _poisson1_cdf()


@njit(cache=True, nogil=True)
def root_edge_chunk(gen, pcdf, n_trials, node_cap, early_stop, full_runs):
    """Returns (root matched count, truncated count, matching-size sum).

    `early_stop` quits each run once the root edge is matched or deleted
    (outcome-equivalent for the root-edge estimate, and much faster on
    large trees). `full_runs` forces complete runs and then the third
    return value is the total matching size across kept trees.
    """
    parent = np.empty(node_cap + 2, np.int32)
    cstart = np.empty(node_cap + 2, np.int32)
    deg = np.zeros(node_cap + 2, np.int32)
    up_alive = np.zeros(node_cap + 2, np.bool_)
    bucket = np.empty(node_cap + 2, np.int32)
    levels = np.empty(node_cap + 2, np.int64)

    matched_root = 0
    truncated = 0
    msize_sum = 0
    for _trial in range(n_trials):
        # frontier presimulation: per-generation totals decide size cheaply,
        # so trees destined to blow past the cap cost ~sqrt(size) draws
        size = 2
        frontier = 2
        nlev = 1
        levels[0] = 2
        trunc = False
        while frontier > 0:
            nxt = gen.poisson(np.float64(frontier))
            size += nxt
            if size > node_cap:
                trunc = True
                break
            levels[nlev] = nxt
            nlev += 1
            frontier = nxt
        if trunc:
            truncated += 1
            continue
        if size == 2 and not full_runs:
            matched_root += 1
            continue
        # conditional structure: a generation's children land uniformly on
        # its nodes (multinomial split of the presimulated total)
        parent[0] = -1
        parent[1] = -1
        n = 2
        lo = 0
        hi = 2
        for g in range(1, nlev):
            nc = levels[g]
            for v in range(lo, hi):
                deg[v] = 0
            for _b in range(nc):
                v = lo + np.int64(gen.random() * (hi - lo))
                deg[v] += 1
            base = n
            for v in range(lo, hi):
                cnt = deg[v]
                cstart[v] = base
                for j in range(cnt):
                    parent[base + j] = v
                base += cnt
            n = base
            lo, hi = hi, n
        for v in range(lo, hi):
            cstart[v] = n
        cstart[n] = n

        blen = 0
        for v in range(n):
            d = cstart[v + 1] - cstart[v] + 1
            deg[v] = d
            up_alive[v] = True
            if d == 1:
                bucket[blen] = v
                blen += 1
        root_in = False
        root_done = False
        msize = 0
        while blen > 0:
            idx = np.int64(gen.random() * blen)
            w = bucket[idx]
            blen -= 1
            bucket[idx] = bucket[blen]
            if deg[w] != 1:
                continue
            z = np.int32(-1)
            if up_alive[w]:
                if w <= 1:
                    z = np.int32(1 - w)
                    root_in = True
                    root_done = True
                else:
                    z = parent[w]
            else:
                for c in range(cstart[w], cstart[w + 1]):
                    if up_alive[c]:
                        z = c
                        break
            msize += 1
            if early_stop and root_done:
                break
            a = w
            for _rep in range(2):
                if up_alive[a]:
                    up_alive[a] = False
                    if a <= 1:
                        o = 1 - a
                        up_alive[o] = False
                        deg[o] -= 1
                        root_done = True
                        if deg[o] == 1:
                            bucket[blen] = o
                            blen += 1
                    else:
                        pa = parent[a]
                        deg[pa] -= 1
                        if deg[pa] == 1:
                            bucket[blen] = pa
                            blen += 1
                for c in range(cstart[a], cstart[a + 1]):
                    if up_alive[c]:
                        up_alive[c] = False
                        deg[c] -= 1
                        if deg[c] == 1:
                            bucket[blen] = c
                            blen += 1
                deg[a] = 0
                a = z
            if early_stop and root_done:
                break
        if root_in:
            matched_root += 1
        msize_sum += msize
    return matched_root, truncated, msize_sum
