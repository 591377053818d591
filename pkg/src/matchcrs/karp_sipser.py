"""Greedy degree-1 matching (first stage), tree labeling, and exact maximum matching.

The first stage repeatedly picks a uniformly random degree-1 vertex, adds
its unique edge to the matching, and deletes both endpoints. On forests it
never errs: every edge is either matched or disappears, and the result is
a maximum matching. The L/W labeling certifies per-run structural claims
about which vertices must get matched.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import NotATree, TooLarge
from .graphs import Graph

EXHAUSTIVE_EDGE_CAP = 20


def is_matching(g: Graph, edge_ids) -> bool:
    used = set()
    for e in edge_ids:
        u, v = g.endpoints(e)
        if u in used or v in used:
            return False
        used.add(u)
        used.add(v)
    return True


def _present_adjacency(g: Graph, present):
    """vertex -> list of (edge id, other endpoint), present edges only."""
    adj = {}
    for e in present:
        u, v = g.endpoints(e)
        adj.setdefault(u, []).append((e, v))
        adj.setdefault(v, []).append((e, u))
    return adj


def ks_first_stage(g: Graph, gen, present=None) -> frozenset:
    """Run the degree-1 stage on the present edges; returns the matching."""
    matching, _ = _run_first_stage(g, gen, present, traced=False)
    return matching


def ks_first_stage_traced(g: Graph, gen, present=None):
    """Like ks_first_stage but also returns the event trace.

    Events, in execution order:
      ("matched", edge)
      ("removed", edge, vertex)   removed because `vertex` was just matched
    """
    return _run_first_stage(g, gen, present, traced=True)


def _run_first_stage(g: Graph, gen, present, traced):
    if present is None:
        present = range(g.edge_count)
    adj = _present_adjacency(g, present)
    deg = {v: len(inc) for v, inc in adj.items()}
    alive = {e: True for e in present}

    bucket = [v for v, d in deg.items() if d == 1]
    matching = set()
    trace = [] if traced else None
    while bucket:
        idx = int(gen.integers(len(bucket)))
        w = bucket[idx]
        bucket[idx] = bucket[-1]
        bucket.pop()
        if deg[w] != 1:
            continue
        for e, z in adj[w]:
            if alive[e]:
                break
        matching.add(e)
        if traced:
            trace.append(("matched", e))
        for a in (w, z):
            for e2, o in adj[a]:
                if alive[e2]:
                    alive[e2] = False
                    if traced and e2 not in matching:
                        trace.append(("removed", e2, a))
                    deg[o] -= 1
                    deg[a] -= 1
                    if deg[o] == 1:
                        bucket.append(o)
    return frozenset(matching), trace


def lw_label(g: Graph, root: int):
    """Label tree vertices L/W bottom-up: a vertex is L iff it has no L child.

    Returns (labels, parent) where labels maps vertex -> "L" | "W" and
    parent maps vertex -> its parent under the rooting (root -> None).
    """
    n = g.vertex_count
    if g.edge_count != n - 1:
        raise NotATree(f"{g.edge_count} edges on {n} vertices")
    parent = {root: None}
    order = [root]
    qi = 0
    while qi < len(order):
        v = order[qi]
        qi += 1
        for e in g.incident(v):
            o = g.other_end(e, v)
            if o not in parent:
                parent[o] = v
                order.append(o)
            elif o != parent[v]:
                raise NotATree("cycle detected")
    if len(order) != n:
        raise NotATree("disconnected input")

    labels = {}
    children = {v: [] for v in order}
    for v in order[1:]:
        children[parent[v]].append(v)
    for v in reversed(order):  # max depth first
        labels[v] = "W" if any(labels[c] == "L" for c in children[v]) else "L"
    return labels, parent


def check_lw_claims(g: Graph, root: int, rng, runs: int):
    """Replay the degree-1 stage `runs` times and audit the labeling claims.

    Checked per run: a W-parent/L-child edge only disappears through its W
    endpoint being matched; every W vertex ends up matched; no W-W edge is
    ever matched.
    """
    labels, parent = lw_label(g, root)
    gen = rng.generator() if hasattr(rng, "generator") else rng
    violations = []
    for run in range(runs):
        matching, trace = ks_first_stage_traced(g, gen)
        matched_vertices = set()
        for e in matching:
            u, v = g.endpoints(e)
            matched_vertices.add(u)
            matched_vertices.add(v)
            if labels[u] == "W" and labels[v] == "W":
                violations.append({"run": run, "claim": "W-W edge matched", "edge": int(e)})
        for ev in trace:
            if ev[0] != "removed":
                continue
            _, e, cause = ev
            u, v = g.endpoints(e)
            if parent.get(v) == u:
                par, child = u, v
            elif parent.get(u) == v:
                par, child = v, u
            else:
                continue
            if labels[par] == "W" and labels[child] == "L" and cause == child:
                violations.append({"run": run, "edge": int(e),
                                   "claim": "W-L edge removed via the L endpoint"})
        for v, lab in labels.items():
            if lab == "W" and v not in matched_vertices:
                violations.append({"run": run, "vertex": int(v),
                                   "claim": "W vertex left unmatched"})
    return {"runs": runs, "violations": violations}


# ------------------------------------------------------------ maximum matching

def max_matching(g: Graph, present=None) -> frozenset:
    """Exact maximum-cardinality matching on the present edges.

    Bipartite (2-colorable) inputs use augmenting-path search; other
    graphs fall back to exhaustive search below a small edge cap.
    """
    if present is None:
        present = range(g.edge_count)
    present = list(present)
    if not present:
        return frozenset()
    color = _component_two_coloring(g, present)
    if color is not None:
        return _hopcroft_karp(g, present, color)
    if len(present) > EXHAUSTIVE_EDGE_CAP:
        raise TooLarge(
            f"non-bipartite exact matching capped at {EXHAUSTIVE_EDGE_CAP} edges")
    return _max_matching_exhaustive(g, present)


def _component_two_coloring(g: Graph, present):
    adj = _present_adjacency(g, present)
    color = {}
    for start in adj:
        if start in color:
            continue
        color[start] = 0
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for _, o in adj[v]:
                if o not in color:
                    color[o] = 1 - color[v]
                    queue.append(o)
                elif color[o] == color[v]:
                    return None
    return color


def _hopcroft_karp(g: Graph, present, color):
    adj = {}
    for e in present:
        u, v = g.endpoints(e)
        if color[u] == 1:
            u, v = v, u
        adj.setdefault(u, []).append((e, v))
    inf = float("inf")
    match_left = {}
    match_right = {}

    def bfs():
        dist = {}
        queue = deque()
        for u in adj:
            if u not in match_left:
                dist[u] = 0
                queue.append(u)
        found = False
        while queue:
            u = queue.popleft()
            for _, v in adj[u]:
                w = match_right.get(v)
                if w is None:
                    found = True
                elif w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found, dist

    def dfs(u, dist):
        for e, v in adj[u]:
            w = match_right.get(v)
            if w is None or (dist.get(w) == dist[u] + 1 and dfs(w, dist)):
                match_left[u] = e
                match_right[v] = u
                return True
        dist[u] = inf
        return False

    while True:
        found, dist = bfs()
        if not found:
            break
        for u in list(adj):
            if u not in match_left:
                dfs(u, dist)
    return frozenset(match_left.values())


def _max_matching_exhaustive(g: Graph, present):
    edges = [(e, *g.endpoints(e)) for e in sorted(present)]
    best = [frozenset()]

    def rec(i, used, chosen):
        if len(chosen) + (len(edges) - i) <= len(best[0]):
            return
        if i == len(edges):
            if len(chosen) > len(best[0]):
                best[0] = frozenset(chosen)
            return
        e, u, v = edges[i]
        if u not in used and v not in used:
            chosen.append(e)
            used.add(u)
            used.add(v)
            rec(i + 1, used, chosen)
            chosen.pop()
            used.discard(u)
            used.discard(v)
        rec(i + 1, used, chosen)

    rec(0, set(), [])
    return best[0]
