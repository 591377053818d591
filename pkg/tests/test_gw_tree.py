import itertools
import math

import numpy as np
import pytest

from matchcrs.graphs import FractionalMatching, Graph, gen_uniform_knn
from matchcrs.gw_tree import (GwTree, component_distribution_probe,
                              estimate_root_edge_prob, marked_canon_of_tree,
                              marked_tree_probability, sample_tree, solve_lambda,
                              tree_from_parents)
from matchcrs.sampling import RngStream


def test_lambda_constants():
    c = solve_lambda()
    assert abs(c.lam - math.exp(-c.lam)) < 1e-12
    assert c.lam == pytest.approx(0.5671433, abs=1e-6)
    assert c.ks_prob == pytest.approx(0.544, abs=0.001)
    assert c.ks_prob == pytest.approx(2 * (1 - c.lam) - c.lam ** 2, abs=1e-15)
    assert c.max_match_density == pytest.approx(1 - c.lam - c.lam ** 2 / 2, abs=1e-15)


def test_sample_tree_single_edge_probability():
    # both roots childless: probability e^{-2}; truncated trees count in the
    # denominator so the small cap does not bias this event
    gen = RngStream(31).generator()
    trials = 10 ** 5
    hits = 0
    for _ in range(trials):
        t = sample_tree(gen, node_cap=64)
        hits += (not t.truncated) and t.size == 2
    assert hits / trials == pytest.approx(math.exp(-2), abs=0.003)


def _exact_size_median():
    # tree size = sum of two independent total-progeny counts, each with
    # pmf n^(n-1) e^(-n) / n!; partial sums up to k are exact for small k
    n = 60
    pmf = np.array([k ** (k - 1) * math.exp(-k) / math.factorial(k)
                    for k in range(1, n + 1)])
    cdf = 0.0
    for s in range(2, 2 * n):
        mass = sum(pmf[i - 1] * pmf[s - i - 1]
                   for i in range(max(1, s - n), min(n, s - 1) + 1))
        cdf += mass
        if cdf >= 0.5:
            return s
    raise AssertionError("median beyond table")


def test_sample_tree_size_statistics():
    gen = RngStream(32).generator()
    sizes = []
    for _ in range(4000):
        t = sample_tree(gen, node_cap=10 ** 4)
        if not t.truncated:
            sizes.append(t.size)
    sizes = np.asarray(sizes)
    median = float(np.median(sizes))
    assert abs(median - _exact_size_median()) <= 1
    assert sizes.mean() > 2 * median  # heavy tail: mean far above the median


def test_truncation_frequency_at_default_cap():
    # measured ~1.5e-3 at the 10^6-node cap (heavy tail of the critical process)
    rep = estimate_root_edge_prob(10 ** 5, RngStream(33))
    freq = rep["truncated"] / rep["trials"]
    assert 5e-4 < freq < 3e-3


def test_estimate_trivial_trials():
    rep = estimate_root_edge_prob(1, RngStream(34))
    assert rep["estimate"] in (0.0, 1.0)


def test_estimate_deterministic_and_thread_independent():
    a = estimate_root_edge_prob(120000, RngStream(35), threads=1)
    b = estimate_root_edge_prob(120000, RngStream(35), threads=2)
    assert a == b


def test_engines_agree():
    fast = estimate_root_edge_prob(150000, RngStream(36), engine="fast")
    ref = estimate_root_edge_prob(4000, RngStream(37), node_cap=10 ** 4,
                                  engine="reference")
    # reference CI is wide at 4000 trials; fast estimate must fall inside it
    assert ref["ci_low"] <= fast["estimate"] <= ref["ci_high"]
    target = fast["target"]
    assert abs(fast["estimate"] - target) < 6 * math.sqrt(
        target * (1 - target) / fast["kept"])


# ------------------------------------------------------------- tree shapes

def _ordered_trees(n):
    if n == 1:
        return [()]
    out = []
    for first_size in range(1, n):
        for first in _ordered_trees(first_size):
            for rest in _ordered_forests(n - 1 - first_size):
                out.append((first,) + rest)
    return out


def _ordered_forests(n):
    if n == 0:
        return [()]
    out = []
    for first_size in range(1, n + 1):
        for first in _ordered_trees(first_size):
            for rest in _ordered_forests(n - first_size):
                out.append((first,) + rest)
    return out


def _p_ordered(t):
    p = math.exp(-1) / math.factorial(len(t))
    for child in t:
        p *= _p_ordered(child)
    return p


def _canon(t):
    return tuple(sorted(_canon(c) for c in t))


def test_marked_probability_against_ordered_enumeration():
    # exact two-root probabilities from a brute-force ordered enumeration
    rooted = {}
    for n in range(1, 5):
        for t in _ordered_trees(n):
            rooted[_canon(t)] = rooted.get(_canon(t), 0.0) + _p_ordered(t)
    pair_probs = {}
    for a, pa in rooted.items():
        for b, pb in rooted.items():
            key = (a, b) if a <= b else (b, a)
            pair_probs[key] = pair_probs.get(key, 0.0) + pa * pb

    seen = set()
    gen = RngStream(41).generator()
    for _ in range(300):
        t = sample_tree(gen, node_cap=50)
        if t.truncated or t.size > 8:
            continue
        canon = marked_canon_of_tree(t)
        if canon in seen or canon not in pair_probs:
            continue
        seen.add(canon)
        assert marked_tree_probability(t) == pytest.approx(
            pair_probs[canon], rel=1e-12)
    assert len(seen) >= 5


def test_marked_probability_known_values():
    assert marked_tree_probability(tree_from_parents([-1, -1])) == pytest.approx(
        math.exp(-2), rel=1e-12)
    assert marked_tree_probability(tree_from_parents([-1, -1, 0])) == pytest.approx(
        2 * math.exp(-3), rel=1e-12)
    assert marked_tree_probability(tree_from_parents([-1, -1, 0, 1])) == pytest.approx(
        math.exp(-4), rel=1e-12)


def _brute_marked_isomorphic(t1: GwTree, t2: GwTree) -> bool:
    if t1.size != t2.size:
        return False
    n = t1.size
    adj1 = {v: set() for v in range(n)}
    adj2 = {v: set() for v in range(n)}
    adj1[0].add(1), adj1[1].add(0)
    adj2[0].add(1), adj2[1].add(0)
    for i in range(2, n):
        adj1[i].add(int(t1.parent[i]))
        adj1[int(t1.parent[i])].add(i)
        adj2[i].add(int(t2.parent[i]))
        adj2[int(t2.parent[i])].add(i)
    rest = list(range(2, n))
    for roots in ((0, 1), (1, 0)):
        for perm in itertools.permutations(rest):
            mapping = {0: roots[0], 1: roots[1]}
            mapping.update({v: p for v, p in zip(rest, perm)})
            if all({mapping[w] for w in adj1[v]} == adj2[mapping[v]] for v in range(n)):
                return True
    return False


def test_marked_canon_matches_brute_force_isomorphism():
    gen = RngStream(42).generator()
    trees = []
    while len(trees) < 12:
        t = sample_tree(gen, node_cap=16)
        if not t.truncated and t.size <= 7:
            trees.append(t)
    for t1 in trees:
        for t2 in trees:
            same_canon = marked_canon_of_tree(t1) == marked_canon_of_tree(t2)
            assert same_canon == _brute_marked_isomorphic(t1, t2)


def test_single_edge_trees_always_match():
    # an isolated edge is degree-1 on both sides: the greedy stage takes it
    from matchcrs.karp_sipser import ks_first_stage
    gen = RngStream(46).generator()
    t = tree_from_parents([-1, -1])
    for _ in range(20):
        assert ks_first_stage(t.to_graph(), gen) == frozenset({0})


def test_component_probe_uniform_instance():
    fm = gen_uniform_knn(200)
    targets = [tree_from_parents([-1, -1]),
               tree_from_parents([-1, -1, 0]),
               tree_from_parents([-1, -1, 0, 1])]
    rep = component_distribution_probe(fm, 0, targets, 30000, RngStream(43))
    assert rep["max_gap"] < 0.015
    single = next(r for r in rep["per_tree"] if r["size"] == 2)
    assert single["exact"] == pytest.approx(math.exp(-2), rel=1e-12)


def test_component_probe_full_scale():
    # vanishing per-edge weights: local components match the tree process
    fm = gen_uniform_knn(1000)
    targets = [tree_from_parents([-1, -1]),
               tree_from_parents([-1, -1, 0]),
               tree_from_parents([-1, -1, 0, 1])]
    rep = component_distribution_probe(fm, 0, targets, 10 ** 5, RngStream(47))
    assert rep["max_gap"] < 0.01


def test_component_probe_gap_grows_at_small_n():
    # the tree approximation degrades as per-edge weights grow: trend check
    targets = [tree_from_parents([-1, -1])]
    gaps = {}
    for n in (4, 64):
        fm = gen_uniform_knn(n)
        rep = component_distribution_probe(fm, 0, targets, 30000, RngStream(44))
        gaps[n] = rep["per_tree"][0]["gap"]
    assert gaps[4] > gaps[64]


def test_component_probe_detects_cycles():
    # a always-present 4-cycle is never tree-isomorphic to anything
    g = Graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)], bipartition=([0, 2], [1, 3]))
    fm = FractionalMatching(g, np.ones(4))
    rep = component_distribution_probe(fm, 0, [tree_from_parents([-1, -1])],
                                       200, RngStream(45))
    assert rep["per_tree"][0]["count"] == 0
    assert rep["unmatched_share"] == 1.0
