"""Graphs, fractional matchings, load completion, and instance generators.

A fractional matching assigns a weight x_e in [0, 1] to every edge of a
simple graph so that the weights incident to each vertex sum to at most 1.
Load completion pads an instance with dummy partner vertices until every
vertex load is exactly 1, which the bipartite schemes require.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

DEFAULT_TOLERANCE = 1e-9


class Graph:
    """Simple undirected graph with dense integer edge ids (input order).

    Parameters
    ----------
    vertex_count : int
    edges : sequence of (u, v) pairs
        No self-loops, no parallel edges.
    bipartition : (left, right) vertex-id collections, optional
        If given, every edge must cross the partition.
    """

    def __init__(self, vertex_count, edges, bipartition=None):
        if vertex_count < 0:
            raise InputError("vertex_count must be non-negative")
        self.vertex_count = int(vertex_count)
        edges = list(edges)
        self.edge_u = np.asarray([e[0] for e in edges], dtype=np.int64)
        self.edge_v = np.asarray([e[1] for e in edges], dtype=np.int64)
        if len(edges) and (self.edge_u.min() < 0 or
                           max(self.edge_u.max(), self.edge_v.max()) >= vertex_count):
            raise InputError("edge endpoint out of range")
        if np.any(self.edge_u == self.edge_v):
            raise InputError("self-loops are not allowed")
        seen = set()
        for a, b in zip(self.edge_u, self.edge_v):
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InputError(f"parallel edge {key}")
            seen.add(key)
        if bipartition is not None:
            left, right = (frozenset(bipartition[0]), frozenset(bipartition[1]))
            if left & right:
                raise InputError("bipartition parts overlap")
            for a, b in zip(self.edge_u, self.edge_v):
                if not ((a in left and b in right) or (a in right and b in left)):
                    raise InputError(f"edge ({a},{b}) does not cross the bipartition")
            self.bipartition = (left, right)
        else:
            self.bipartition = None
        self._incident = None

    @classmethod
    def _unchecked(cls, vertex_count, edge_u, edge_v, bipartition=None):
        # for generators whose output is valid by construction (skips the
        # O(E) duplicate/crossing scans, which matter at K_{1000,1000} scale)
        g = cls.__new__(cls)
        g.vertex_count = int(vertex_count)
        g.edge_u = np.asarray(edge_u, dtype=np.int64)
        g.edge_v = np.asarray(edge_v, dtype=np.int64)
        g.bipartition = bipartition
        g._incident = None
        return g

    @property
    def edge_count(self):
        return len(self.edge_u)

    def edges(self):
        """Edge list as (u, v) int pairs, id order."""
        return list(zip(self.edge_u.tolist(), self.edge_v.tolist()))

    def endpoints(self, e):
        return int(self.edge_u[e]), int(self.edge_v[e])

    def incident(self, vertex):
        """Edge ids incident to `vertex`, ascending."""
        if self._incident is None:
            inc = [[] for _ in range(self.vertex_count)]
            for e in range(self.edge_count):
                inc[self.edge_u[e]].append(e)
                inc[self.edge_v[e]].append(e)
            self._incident = inc
        return self._incident[vertex]

    def is_bipartite(self):
        return self.bipartition is not None

    def two_coloring(self):
        """2-color each connected component; None if an odd cycle exists."""
        color = np.full(self.vertex_count, -1, dtype=np.int8)
        for start in range(self.vertex_count):
            if color[start] >= 0:
                continue
            color[start] = 0
            stack = [start]
            while stack:
                v = stack.pop()
                for e in self.incident(v):
                    o = self.other_end(e, v)
                    if color[o] < 0:
                        color[o] = 1 - color[v]
                        stack.append(o)
                    elif color[o] == color[v]:
                        return None
        return color

    def other_end(self, e, v):
        u = self.edge_u[e]
        return int(self.edge_v[e]) if u == v else int(u)


@dataclass
class FractionalMatching:
    """Edge weights x over a graph, with per-vertex load constraints."""

    graph: Graph
    x: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE
    dummy_edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.shape != (self.graph.edge_count,):
            raise InputError(
                f"x has {self.x.shape} weights, graph has {self.graph.edge_count} edges")

    def loads(self):
        """Per-vertex sum of incident edge weights."""
        out = np.zeros(self.graph.vertex_count)
        np.add.at(out, self.graph.edge_u, self.x)
        np.add.at(out, self.graph.edge_v, self.x)
        return out

    def real_edges(self):
        return [e for e in range(self.graph.edge_count) if e not in self.dummy_edges]

    def instance_hash(self):
        payload = {
            "vertices": self.graph.vertex_count,
            "bipartite": self.graph.is_bipartite(),
            "edges": [[int(u), int(v), float(w)] for u, v, w in
                      zip(self.graph.edge_u, self.graph.edge_v, self.x)],
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:12]


@dataclass
class DoublyStochasticMatrix:
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise InputError("matrix must be square")

    @property
    def n(self):
        return self.entries.shape[0]

    def violations(self, tol=1e-9):
        errs = []
        if np.any(self.entries < -tol):
            errs.append("negative entry")
        for axis, name in ((1, "row"), (0, "column")):
            sums = self.entries.sum(axis=axis)
            for i, s in enumerate(sums):
                if abs(s - 1.0) > tol:
                    errs.append(f"{name} {i} sums to {s!r}")
        return errs

    def to_fractional_matching(self):
        """Bipartite K_{n,n}-supported instance; entry (i, j) weights edge (i, n+j)."""
        n = self.n
        ii, jj = np.nonzero(self.entries > 0)
        edges = [(int(i), int(n + j)) for i, j in zip(ii, jj)]
        g = Graph(2 * n, edges, bipartition=(range(n), range(n, 2 * n)))
        return FractionalMatching(g, self.entries[ii, jj])


def validate(fm: FractionalMatching):
    """List all invariant violations; empty list means the instance is valid."""
    out = []
    for e in range(fm.graph.edge_count):
        w = fm.x[e]
        if not (0.0 <= w <= 1.0 + fm.tolerance):
            out.append({"kind": "weight out of range", "edge": e, "value": float(w)})
        if not np.isfinite(w):
            out.append({"kind": "non-finite weight", "edge": e, "value": float(w)})
    for v, load in enumerate(fm.loads()):
        if load > 1.0 + fm.tolerance:
            out.append({"kind": "vertex load exceeds 1", "vertex": v,
                        "load": float(load), "excess": float(load - 1.0)})
    return out


def complete_loads(fm: FractionalMatching):
    """Pad with one fresh dummy partner per deficient vertex.

    Afterwards every original vertex has load exactly 1; each dummy partner
    carries a single flagged edge (and load < 1, which the schemes account
    for). Original vertex and edge ids are preserved. Dummy partners are
    exempt from further completion, so the operation is idempotent.
    """
    g = fm.graph
    loads = fm.loads()
    exempt = set()
    for e in fm.dummy_edges:
        for v in g.endpoints(e):
            if all(e2 in fm.dummy_edges for e2 in g.incident(v)):
                exempt.add(v)
    deficient = [v for v in range(g.vertex_count)
                 if loads[v] < 1.0 - fm.tolerance and v not in exempt]
    if not deficient:
        return FractionalMatching(g, fm.x.copy(), fm.tolerance,
                                  fm.dummy_edges), set(fm.dummy_edges)

    edges = list(zip(g.edge_u.tolist(), g.edge_v.tolist()))
    weights = list(fm.x)
    nv = g.vertex_count
    if g.is_bipartite():
        left = set(g.bipartition[0])
        right = set(g.bipartition[1])
    new_dummies = set()
    for v in deficient:
        partner = nv
        nv += 1
        new_dummies.add(len(edges))
        edges.append((v, partner))
        weights.append(1.0 - loads[v])
        if g.is_bipartite():
            # dummy partner goes on the opposite side
            (right if v in g.bipartition[0] else left).add(partner)
    bip = (left, right) if g.is_bipartite() else None
    g2 = Graph(nv, edges, bipartition=bip)
    dummy = set(fm.dummy_edges) | new_dummies
    return FractionalMatching(g2, np.asarray(weights), fm.tolerance,
                              frozenset(dummy)), dummy


def gen_uniform_knn(n: int) -> FractionalMatching:
    """Complete bipartite K_{n,n} with every weight 1/n (all loads exactly 1)."""
    if n < 1:
        raise InputError("n must be >= 1")
    left = np.repeat(np.arange(n), n)
    right = n + np.tile(np.arange(n), n)
    g = Graph._unchecked(2 * n, left, right,
                         (frozenset(range(n)), frozenset(range(n, 2 * n))))
    return FractionalMatching(g, np.full(n * n, 1.0 / n))


def gen_birkhoff(n: int, k: int, rng) -> DoublyStochasticMatrix:
    """Convex combination of k uniformly random n x n permutation matrices."""
    if n < 1 or k < 1:
        raise InputError("n and k must be >= 1")
    weights = rng.dirichlet(np.ones(k)) if k > 1 else np.array([1.0])
    a = np.zeros((n, n))
    rows = np.arange(n)
    for w in weights:
        a[rows, rng.permutation(n)] += w
    return DoublyStochasticMatrix(a)


# ---------------------------------------------------------------- file formats

def instance_to_dict(fm: FractionalMatching):
    g = fm.graph
    d = {"bipartite": g.is_bipartite()}
    if g.is_bipartite():
        d["vertices"] = {"left": sorted(g.bipartition[0]),
                         "right": sorted(g.bipartition[1])}
    else:
        d["vertices"] = g.vertex_count
    d["edges"] = [{"u": int(u), "v": int(v), "x": float(w)}
                  for u, v, w in zip(g.edge_u, g.edge_v, fm.x)]
    return d


def instance_from_dict(d) -> FractionalMatching:
    try:
        bip = bool(d["bipartite"])
        vspec = d["vertices"]
        if bip:
            left, right = vspec["left"], vspec["right"]
            nv = (max(max(left, default=-1), max(right, default=-1)) + 1)
            bipartition = (left, right)
        else:
            nv = int(vspec)
            bipartition = None
        edges = [(int(e["u"]), int(e["v"])) for e in d["edges"]]
        x = [float(e["x"]) for e in d["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed instance: {exc}") from exc
    g = Graph(nv, edges, bipartition=bipartition)
    return FractionalMatching(g, np.asarray(x))


def load_instance(path) -> FractionalMatching:
    with open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return instance_from_dict(d)


def save_instance(fm: FractionalMatching, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(fm), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_matrix_csv(path) -> DoublyStochasticMatrix:
    """Matrix file format: n rows of n comma-separated floats."""
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: cannot parse matrix CSV: {exc}") from exc
    return DoublyStochasticMatrix(a)
