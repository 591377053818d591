"""Exact per-edge selection probabilities by enumerating all randomness.

Each scheme's discrete randomness factors into independent per-edge coins,
a bounded red-coin refinement, and per-vertex rule draws whose per-subset
pick distributions are known exactly. Enumerating coin outcomes and summing
rule probabilities therefore gives exact values: no sampling, no tolerance
beyond float arithmetic. Everything here is exponential in the edge count,
hence the small caps.

Since selected edges are always present, the exact conditional selection
probability of an edge is simply Pr[e in M] / x_e.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict

import numpy as np

from .errors import TooLarge
from .graphs import FractionalMatching
from .select_one import SubsetDistribution

SCHEME_EDGE_CAP = 12
KS_EDGE_CAP = 8


def _positive_edges(fm: FractionalMatching):
    return [e for e in range(fm.graph.edge_count) if fm.x[e] > 0.0]


def _require_cap(fm, cap, what):
    pos = _positive_edges(fm)
    if len(pos) > cap:
        raise TooLarge(f"{what} enumeration capped at {cap} edges; "
                       f"instance has {len(pos)}")
    return pos


def _subset_walk(candidates):
    """All (edge tuple, probability) subsets of independent candidates.

    candidates: list of (edge, probability-of-membership).
    """
    out = [((), 1.0)]
    for e, q in candidates:
        if q <= 0.0:
            continue
        nxt = []
        for subset, p in out:
            stay = p * (1.0 - q)
            if stay > 0.0:
                nxt.append((subset, stay))
            nxt.append((subset + (e,), p * q))
        out = nxt
    return out


def _row_or_zero(rule, mask):
    row = rule.pick.get(int(mask))
    return row if row is not None else np.zeros(rule.k)


def _ground_mask(ground, member_flags):
    mask = 0
    for i, e in enumerate(ground.edges):
        if member_flags[e]:
            mask |= 1 << i
    return mask


# ------------------------------------------------------------------ rbg

def _rbg_colorings(fm: FractionalMatching, scheme):
    """Yield (probability, color dict) over all pipeline colorings.

    Colors: 0 absent, 1 gray, 2 red, 3 blue. The base state of each edge
    (absent / gray / active) is an independent three-way coin; red then
    refines active edges that are alone at their right endpoint.
    """
    pos = _positive_edges(fm)
    x = fm.x
    states = []
    for e in pos:
        gray_p = float(x[e] - 1.0 + math.exp(-x[e]))
        active_p = float(1.0 - math.exp(-x[e]))
        opts = [(s, p) for s, p in ((0, 1.0 - x[e]), (1, gray_p), (2, active_p))
                if p > 0.0]
        states.append(opts)
    right_of = {e: scheme.right_vertex[e] for e in pos}
    red_coin = scheme.red_coin

    for combo in itertools.product(*states):
        base_prob = 1.0
        for _, p in combo:
            base_prob *= p
        active_at = defaultdict(int)
        for (s, _), e in zip(combo, pos):
            if s == 2:
                active_at[right_of[e]] += 1
        qualifying = [e for (s, _), e in zip(combo, pos)
                      if s == 2 and active_at[right_of[e]] == 1]
        base_color = {e: (3 if s == 2 else s) for (s, _), e in zip(combo, pos)}
        nq = len(qualifying)
        for red_bits in range(1 << nq):
            p = base_prob
            color = dict(base_color)
            for i, e in enumerate(qualifying):
                if (red_bits >> i) & 1:
                    p *= red_coin[e]
                    color[e] = 2
                else:
                    p *= 1.0 - red_coin[e]
            if p > 0.0:
                yield p, color


def _rbg_left_pick_probs(fm, scheme, color):
    """Per-edge probability of surviving stages 3-5, given the coloring."""
    q = np.zeros(fm.graph.edge_count)
    for g in scheme.left:
        red_rule, blue_rule, gray_rule = scheme.left_rules[g.vertex]
        red_mask = _ground_mask(g, {e: color.get(e) == 2 for e in g.edges})
        blue_mask = _ground_mask(g, {e: color.get(e) == 3 for e in g.edges})
        gray_mask = _ground_mask(g, {e: color.get(e) == 1 for e in g.edges})
        if red_mask:
            rule, mask = red_rule, red_mask
        elif blue_mask:
            rule, mask = blue_rule, blue_mask
        elif gray_mask:
            rule, mask = gray_rule, gray_mask
        else:
            continue
        row = _row_or_zero(rule, mask)
        for i, e in enumerate(g.edges):
            q[e] = row[i]
    return q


def rbg_arrival_distributions(fm: FractionalMatching, scheme) -> dict:
    """Exact per-right-vertex distributions of the arriving edge subset."""
    _require_cap(fm, SCHEME_EDGE_CAP, "pipeline")
    acc = {g.vertex: defaultdict(float) for g in scheme.right}
    for prob, color in _rbg_colorings(fm, scheme):
        q = _rbg_left_pick_probs(fm, scheme, color)
        for g in scheme.right:
            cands = [(i, q[e]) for i, e in enumerate(g.edges) if q[e] > 0]
            for subset, p in _subset_walk(cands):
                mask = 0
                for i in subset:
                    mask |= 1 << i
                acc[g.vertex][mask] += prob * p
    out = {}
    for g in scheme.right:
        atoms = sorted(acc[g.vertex].items())
        total = sum(p for _, p in atoms)
        atoms = [(m, p / total) for m, p in atoms]  # strip float dust
        out[g.vertex] = SubsetDistribution.explicit(
            [int(e) for e in g.edges], atoms)
    return out


def rbg_exact_edge_probabilities(fm: FractionalMatching, scheme) -> np.ndarray:
    """Exact Pr[e in M] under the fully built pipeline (exact final stage)."""
    _require_cap(fm, SCHEME_EDGE_CAP, "pipeline")
    out = np.zeros(fm.graph.edge_count)
    for prob, color in _rbg_colorings(fm, scheme):
        q = _rbg_left_pick_probs(fm, scheme, color)
        for g in scheme.right:
            cands = [(i, q[e]) for i, e in enumerate(g.edges) if q[e] > 0]
            for subset, p in _subset_walk(cands):
                if not subset:
                    continue
                mask = 0
                for i in subset:
                    mask |= 1 << i
                row = _row_or_zero(g.rule, mask)
                for i in subset:
                    out[g.edges[i]] += prob * p * row[i]
    return out


# ----------------------------------------------------------------- simple

def simple_exact_edge_probabilities(fm: FractionalMatching, scheme) -> np.ndarray:
    """Exact Pr[e in M] for the availability scheme.

    Given the per-edge state (absent / present-inactive / active), the
    availability sets at all vertices are determined; the two endpoint
    rules then pick independently.
    """
    pos = _require_cap(fm, SCHEME_EDGE_CAP, "pipeline")
    x = fm.x
    g_all = fm.graph
    states = []
    for e in pos:
        act = float(1.0 - math.exp(-x[e]))
        dud = float(x[e] - act)
        states.append([(s, p) for s, p in ((0, 1.0 - x[e]), (1, dud), (2, act))
                       if p > 0.0])
    grounds = scheme.grounds
    out = np.zeros(g_all.edge_count)
    m = g_all.edge_count
    for combo in itertools.product(*states):
        prob = 1.0
        for _, p in combo:
            prob *= p
        active = {e: s == 2 for (s, _), e in zip(combo, pos)}
        active_at = defaultdict(int)
        for e, a in active.items():
            if a:
                u, v = g_all.endpoints(e)
                active_at[u] += 1
                active_at[v] += 1
        pick_from = np.zeros((2, m))  # row 0: smaller endpoint's rule
        for g in grounds:
            avail = {}
            for e, far in zip(g.edges, g.far):
                avail[e] = active.get(e, False) and active_at[far] == 1
            mask = _ground_mask(g, avail)
            if mask == 0:
                continue
            row = _row_or_zero(g.rule, mask)
            for i, e in enumerate(g.edges):
                u, v = g_all.endpoints(e)
                side = 0 if g.vertex == min(u, v) else 1
                pick_from[side, e] = row[i]
        pu, pv = pick_from[0], pick_from[1]
        out += prob * (pu + pv - pu * pv)
    return out


# -------------------------------------------------------------- two-stage

def two_stage_exact_edge_probabilities(fm: FractionalMatching, scheme) -> np.ndarray:
    pos = _require_cap(fm, SCHEME_EDGE_CAP, "pipeline")
    x = fm.x
    out = np.zeros(fm.graph.edge_count)
    presence_opts = [[(s, p) for s, p in ((0, 1.0 - x[e]), (1, float(x[e])))
                      if p > 0] for e in pos]
    for combo in itertools.product(*presence_opts):
        prob = 1.0
        for _, p in combo:
            prob *= p
        present = {e: s == 1 for (s, _), e in zip(combo, pos)}
        q = np.zeros(fm.graph.edge_count)
        for g in scheme.left:
            mask = _ground_mask(g, present)
            if mask == 0:
                continue
            row = _row_or_zero(g.rule, mask)
            for i, e in enumerate(g.edges):
                q[e] = row[i]
        for g in scheme.right:
            cands = [(i, q[e]) for i, e in enumerate(g.edges) if q[e] > 0]
            for subset, p in _subset_walk(cands):
                if not subset:
                    continue
                mask = 0
                for i in subset:
                    mask |= 1 << i
                row = _row_or_zero(g.rule, mask)
                for i in subset:
                    out[g.edges[i]] += prob * p * row[i]
    return out


# ---------------------------------------------------------------- greedy KS

def ks_exact_edge_probabilities(fm: FractionalMatching) -> np.ndarray:
    """Exact Pr[e in M] for the degree-1 greedy stage.

    Enumerates presence subsets, then the algorithm's uniform choices as a
    probability-weighted branching, memoized on the live edge set.
    """
    pos = _require_cap(fm, KS_EDGE_CAP, "greedy-matching")
    g = fm.graph
    x = fm.x
    endpoints = {e: g.endpoints(e) for e in pos}
    memo = {}

    def branch(live: frozenset):
        if live in memo:
            return memo[live]
        deg = defaultdict(int)
        for e in live:
            u, v = endpoints[e]
            deg[u] += 1
            deg[v] += 1
        ones = sorted(v for v, d in deg.items() if d == 1)
        probs = defaultdict(float)
        if ones:
            share = 1.0 / len(ones)
            for w in ones:
                for e in live:
                    if w in endpoints[e]:
                        break
                u, v = endpoints[e]
                nxt = frozenset(e2 for e2 in live
                                if u not in endpoints[e2] and v not in endpoints[e2])
                probs[e] += share
                for e2, p2 in branch(nxt).items():
                    probs[e2] += share * p2
        memo[live] = dict(probs)
        return memo[live]

    out = np.zeros(g.edge_count)
    for bits in range(1 << len(pos)):
        prob = 1.0
        live = []
        for i, e in enumerate(pos):
            if (bits >> i) & 1:
                prob *= x[e]
                live.append(e)
            else:
                prob *= 1.0 - x[e]
        if prob <= 0.0:
            continue
        for e, p in branch(frozenset(live)).items():
            out[e] += prob * p
    return out
