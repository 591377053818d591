"""Two-rooted critical branching trees and the root-edge matching experiment.

The tree process joins two roots by a marked edge and grows independent
Poisson(1) progeny below each. Running the greedy degree-1 matcher on such
trees selects the root edge with a probability expressible through the
fixed point of t = exp(-t); the experiment here measures that fraction.
The component probe compares local neighborhoods of an edge in a sampled
sparse instance against the exact tree-process distribution.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import karp_sipser
from .graphs import FractionalMatching, Graph
from .sampling import RngStream
from .stats import wilson_interval

DEFAULT_NODE_CAP = 10 ** 6
KERNEL_CHUNK = 50_000


@dataclass(frozen=True)
class LambdaConstants:
    """Fixed point of t = exp(-t) and the two derived experiment constants."""

    lam: float
    ks_prob: float            # 2(1 - lam) - lam^2
    max_match_density: float  # 1 - lam - lam^2 / 2, per vertex


def solve_lambda(tol: float = 1e-13) -> LambdaConstants:
    """Bisection for the unique real root of t = exp(-t)."""
    lo, hi = 0.5, 0.6
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - math.exp(-mid) < 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    return LambdaConstants(lam=lam,
                           ks_prob=2.0 * (1.0 - lam) - lam * lam,
                           max_match_density=1.0 - lam - 0.5 * lam * lam)


@dataclass
class GwTree:
    """Finite two-rooted tree; vertices 0 and 1 are the marked roots.

    Vertices are in generation order; `parent[i]` is defined for i >= 2.
    Edge ids in `to_graph()`: 0 is the root edge (0,1); vertex i >= 2
    contributes edge i-1 to its parent.
    """

    parent: np.ndarray
    truncated: bool = False

    @property
    def size(self):
        return len(self.parent)

    def to_graph(self) -> Graph:
        n = self.size
        eu = np.empty(n - 1, dtype=np.int64)
        ev = np.empty(n - 1, dtype=np.int64)
        eu[0], ev[0] = 0, 1
        for i in range(2, n):
            eu[i - 1] = i
            ev[i - 1] = self.parent[i]
        return Graph._unchecked(n, eu, ev)

def sample_tree(rng, node_cap: int = DEFAULT_NODE_CAP) -> GwTree:
    """Grow the two-rooted Poisson(1) tree; flag and stop at the node cap."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    parent = [-1, -1]
    i = 0
    truncated = False
    while i < len(parent):
        k = int(gen.poisson(1.0))
        if len(parent) + k > node_cap:
            truncated = True
            break
        parent.extend([i] * k)
        i += 1
    return GwTree(np.asarray(parent, dtype=np.int64), truncated=truncated)


def _kernel():
    from . import _gw_kernel
    return _gw_kernel


def _run_chunks(rng: RngStream, trials, node_cap, threads, early_stop, full_runs):
    kern = _kernel()
    chunks = []
    done = 0
    cid = 0
    while done < trials:
        size = min(KERNEL_CHUNK, trials - done)
        chunks.append((cid, size))
        done += size
        cid += 1

    def run(chunk):
        cid, size = chunk
        gen = rng.child(cid).generator()
        return kern.root_edge_chunk(gen, kern.POISSON1_CDF, size, node_cap,
                                    early_stop, full_runs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    matched = sum(r[0] for r in results)
    truncated = sum(r[1] for r in results)
    msize = sum(r[2] for r in results)
    return matched, truncated, msize


def estimate_root_edge_prob(trials: int, rng: RngStream,
                            node_cap: int = DEFAULT_NODE_CAP,
                            threads: int = 1, engine: str = "fast") -> dict:
    """Fraction of sampled trees whose root edge the degree-1 stage matches.

    Truncated samples are counted separately and excluded from the
    estimate. The report carries the analytic target for comparison.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if engine == "fast":
        matched, truncated, _ = _run_chunks(rng, trials, node_cap, threads,
                                            early_stop=True, full_runs=False)
    elif engine == "reference":
        matched = truncated = 0
        gen = rng.child(0).generator()
        for _ in range(trials):
            tree = sample_tree(gen, node_cap)
            if tree.truncated:
                truncated += 1
                continue
            m = karp_sipser.ks_first_stage(tree.to_graph(), gen)
            matched += 0 in m
    else:
        raise ValueError(f"unknown engine {engine!r}")
    kept = trials - truncated
    estimate = matched / kept if kept else 0.0
    ci_low, ci_high = wilson_interval(matched, kept)
    consts = solve_lambda()
    return {
        "trials": trials,
        "kept": kept,
        "truncated": truncated,
        "matched": matched,
        "estimate": estimate,
        "ci_low": ci_low,
        "ci_high": ci_high,
        "lambda": consts.lam,
        "target": consts.ks_prob,
        "node_cap": node_cap,
    }


# ------------------------------------------------- tree shapes and the probe

def rooted_canon(children, v) -> tuple:
    """AHU canonical form of the subtree below v (hashable, iso-invariant)."""
    return tuple(sorted(rooted_canon(children, c) for c in children[v]))


def marked_canon_of_tree(tree: GwTree):
    """Canonical form fixing the marked root pair (swap allowed)."""
    children = [[] for _ in range(tree.size)]
    for i in range(2, tree.size):
        children[tree.parent[i]].append(i)
    a = rooted_canon(children, 0)
    b = rooted_canon(children, 1)
    return (a, b) if a <= b else (b, a)


def _rooted_prob(canon) -> float:
    """Exact Poisson(1) branching probability of an unordered rooted shape."""
    p = math.exp(-1.0)
    counts = {}
    for child in canon:
        counts[child] = counts.get(child, 0) + 1
    for child, mult in counts.items():
        p *= _rooted_prob(child) ** mult / math.factorial(mult)
    return p


def marked_tree_probability(tree: GwTree) -> float:
    """Exact probability that the two-rooted process equals this marked shape."""
    children = [[] for _ in range(tree.size)]
    for i in range(2, tree.size):
        children[tree.parent[i]].append(i)
    a = rooted_canon(children, 0)
    b = rooted_canon(children, 1)
    pa, pb = _rooted_prob(a), _rooted_prob(b)
    return pa * pb if a == b else 2.0 * pa * pb


def tree_from_parents(parents) -> GwTree:
    """Build a marked tree from a parent list (entries 0,1 are the roots)."""
    return GwTree(np.asarray(parents, dtype=np.int64))


def component_distribution_probe(fm: FractionalMatching, e: int, tree_list,
                                 trials: int, rng: RngStream) -> dict:
    """Empirical local-component frequencies around a planted edge vs exact
    tree-process probabilities, for each listed small shape.

    The component of `e` is explored lazily (edges sampled on demand), so
    instances as large as K_{1000,1000} cost only the neighborhood size.
    """
    g = fm.graph
    u0, v0 = g.endpoints(e)
    targets = {}
    max_nodes = 2
    for t in tree_list:
        canon = marked_canon_of_tree(t)
        targets[canon] = {"size": t.size, "exact": marked_tree_probability(t),
                          "count": 0}
        max_nodes = max(max_nodes, t.size)
    explore_cap = max_nodes + 1

    # one-time dense incidence arrays; expansions then draw in bulk
    inc_arrays = [np.asarray(g.incident(v), dtype=np.int64)
                  for v in range(g.vertex_count)]

    gen = rng.generator()
    other = 0
    for _ in range(trials):
        comp = _explore_component(fm, e, u0, v0, gen, explore_cap, inc_arrays)
        if comp is None:
            other += 1
            continue
        canon = comp
        if canon in targets:
            targets[canon]["count"] += 1
        else:
            other += 1

    rows = []
    max_gap = 0.0
    for canon, rec in targets.items():
        emp = rec["count"] / trials
        gap = abs(emp - rec["exact"])
        max_gap = max(max_gap, gap)
        rows.append({"size": rec["size"], "empirical": emp,
                     "exact": rec["exact"], "gap": gap, "count": rec["count"]})
    rows.sort(key=lambda r: (r["size"], -r["exact"]))
    return {"trials": trials, "edge": int(e), "per_tree": rows,
            "max_gap": max_gap, "unmatched_share": other / trials}


def _explore_component(fm, e0, u0, v0, gen, cap, inc_arrays):
    """Lazy BFS of the component of e0 given e0 present; returns the marked
    canonical pair if the component is a tree of at most `cap` vertices,
    else None (cycle or too large).

    Each expanded vertex samples all its incident edges in one vectorized
    draw. An edge to an already-expanded vertex must not be resampled: it
    is either this vertex's discovery edge (already part of the tree) or
    was drawn absent at that earlier expansion (a present draw would have
    ended the walk as a cycle). Skipping it discards the fresh draw, which
    keeps the distribution exact.
    """
    g = fm.graph
    index = {u0: 0, v0: 1}
    expanded = set()
    children = [[], []]
    queue = [u0, v0]
    qi = 0
    while qi < len(queue):
        w = queue[qi]
        qi += 1
        wi = index[w]
        expanded.add(w)
        inc = inc_arrays[w]
        present = inc[gen.random(len(inc)) < fm.x[inc]]
        for e in present:
            if e == e0:
                continue
            o = g.other_end(e, w)
            if o in expanded:
                continue  # edge already examined from the other side
            if o in index:
                return None  # second path to o: cycle in the component
            if len(index) + 1 > cap:
                return None
            index[o] = len(children)
            children.append([])
            children[wi].append(index[o])
            queue.append(o)

    def canon(v):
        return tuple(sorted(canon(c) for c in children[v]))
    a, b = canon(0), canon(1)
    return (a, b) if a <= b else (b, a)
