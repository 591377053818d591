import math

import numpy as np
import pytest

from matchcrs.errors import TooLarge
from matchcrs.evaluation import (KsSchemeRunner, check_lem_bound,
                                 conjecture_probe, density_experiment,
                                 exact_balancedness, lem_bound_margin,
                                 make_scheme, mc_balancedness,
                                 wilson_coverage_check)
from matchcrs.graphs import (DoublyStochasticMatrix, FractionalMatching, Graph,
                             gen_birkhoff, gen_uniform_knn)
from matchcrs.sampling import RngStream
from matchcrs.schemes import compute_constants

E = math.e


def k22(x=0.5):
    g = Graph(4, [(0, 2), (0, 3), (1, 2), (1, 3)], bipartition=([0, 1], [2, 3]))
    return FractionalMatching(g, np.full(4, x))


def single_edge(x=1.0):
    g = Graph(2, [(0, 1)], bipartition=([0], [1]))
    return FractionalMatching(g, np.array([x]))


class _TakePlanted:
    """Toy scheme: always select exactly the realized singleton ground."""

    def __init__(self, fm):
        self.fm = fm

    def run_batch(self, present, gen):
        return present.copy()


class _TakeNothing:
    def __init__(self, fm):
        self.fm = fm

    def run_batch(self, present, gen):
        return np.zeros_like(present)


def test_mc_trivial_schemes():
    fm = single_edge(1.0)
    rep = mc_balancedness(_TakePlanted(fm), fm, 500, RngStream(1))
    assert rep["per_edge"][0]["estimate"] == 1.0
    rep = mc_balancedness(_TakeNothing(fm), fm, 1000, RngStream(2))
    assert rep["per_edge"][0]["estimate"] == 0.0
    assert rep["per_edge"][0]["ci_high"] < 0.01


def test_mc_matches_exact_for_all_schemes():
    fm = k22(0.5)
    for name in ("simple", "two-stage", "rbg"):
        kwargs = {"step6": "exact"} if name == "rbg" else {}
        runner = make_scheme(name, fm, **kwargs)
        exact = {r["edge"]: r["conditional"]
                 for r in exact_balancedness(name, fm, runner=runner)["per_edge"]}
        rep = mc_balancedness(runner, fm, 30000, RngStream(3), scheme_id=name)
        for row in rep["per_edge"]:
            se = max(row["std_error"], 1e-6)
            assert abs(row["estimate"] - exact[row["edge"]]) < 4 * se


def test_mc_thread_count_invariance():
    fm = k22(0.5)
    runner = make_scheme("two-stage", fm)
    a = mc_balancedness(runner, fm, 20000, RngStream(4), threads=1)
    b = mc_balancedness(runner, fm, 20000, RngStream(4), threads=3)
    assert a == b


def test_exact_single_edge_closed_forms():
    fm = single_edge(1.0)
    c = compute_constants()
    vals = {
        "simple": 1 - math.exp(-1),
        "two-stage": c.two_stage_factor,
        "rbg": c.gamma,
    }
    for name, expect in vals.items():
        got = exact_balancedness(name, fm)["per_edge"][0]["conditional"]
        assert got == pytest.approx(expect, abs=1e-9), name


def test_exact_ks_small():
    g = Graph(4, [(0, 1), (1, 2), (2, 3)])
    fm = FractionalMatching(g, np.array([1.0, 1.0, 1.0]))
    rep = exact_balancedness("ks", fm)
    conds = {r["edge"]: r["conditional"] for r in rep["per_edge"]}
    assert conds == pytest.approx({0: 1.0, 1: 0.0, 2: 1.0})


def test_exact_ks_matches_monte_carlo():
    gen = np.random.default_rng(8)
    g = Graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
    fm = FractionalMatching(g, np.array([0.6, 0.5, 0.4, 0.5, 0.4]))
    exact = {r["edge"]: r["conditional"]
             for r in exact_balancedness("ks", fm)["per_edge"]}
    runner = KsSchemeRunner(fm)
    rep = mc_balancedness(runner, fm, 20000, RngStream(9))
    for row in rep["per_edge"]:
        se = max(row["std_error"], 1e-6)
        assert abs(row["estimate"] - exact[row["edge"]]) < 4.5 * se


def test_exact_too_large():
    with pytest.raises(TooLarge):
        exact_balancedness("simple", gen_uniform_knn(4))  # 16 > 12-edge cap
    with pytest.raises(TooLarge):
        exact_balancedness("ks", gen_uniform_knn(3))      # 9 > 8-edge cap


def test_wilson_coverage():
    coverage = wilson_coverage_check(0.509, 1000, 1000, RngStream(10))
    assert coverage >= 0.98


def test_lem_bound_point_values():
    # single coordinate at 1: LHS (e-1)/e, RHS = sum of per-edge targets
    lhs = (E - 1) / E
    rhs = (1 - math.exp(-1 / E) - 1 / (2 * E * E)) + (E * E - E) / (2 * E * E)
    assert lhs == pytest.approx(0.632121, abs=1e-6)
    assert rhs == pytest.approx(0.556192, abs=1e-6)
    assert lem_bound_margin([1.0]) == pytest.approx(lhs - rhs, abs=1e-12)
    assert lem_bound_margin([0.0]) == pytest.approx(0.0, abs=1e-12)


def test_lem_bound_no_violations():
    rep = check_lem_bound(20000, RngStream(11))
    assert rep["violations"] == 0
    assert rep["min_margin"] >= -1e-12
    assert sum(rep["margin_histogram"]["counts"]) == 20000


def test_density_perfect_matching_instance():
    n = 6
    edges = [(i, n + i) for i in range(n)]
    g = Graph(2 * n, edges, bipartition=(range(n), range(n, 2 * n)))
    fm = FractionalMatching(g, np.ones(n))
    rep = density_experiment(fm, 10, RngStream(12))
    assert rep["ks_density_per_vertex"] == pytest.approx(0.5)
    assert rep["mean_gap_per_vertex"] == 0.0


def test_density_small_uniform():
    fm = gen_uniform_knn(40)
    rep = density_experiment(fm, 30, RngStream(13))
    # asymptotic per-vertex density is ~0.272; wide band for n = 40
    assert 0.22 < rep["ks_density_per_vertex"] < 0.33
    assert rep["max_mean"] >= rep["ks_mean"]


def test_density_thread_invariance():
    fm = gen_uniform_knn(25)
    a = density_experiment(fm, 12, RngStream(14), threads=1)
    b = density_experiment(fm, 12, RngStream(14), threads=2)
    assert a == b


def test_conjecture_probe_permutation_matrix():
    perm = DoublyStochasticMatrix(np.eye(5))
    rep = conjecture_probe([perm], 20, RngStream(15))
    row = rep["results"][1]
    assert row["mean"] == pytest.approx(5.0)
    assert rep["flags"] == []


def test_conjecture_probe_uniform_self():
    n = 6
    uni = DoublyStochasticMatrix(np.full((n, n), 1 / n))
    rep = conjecture_probe([uni], 400, RngStream(16))
    base, same = rep["results"]
    assert abs(base["mean"] - same["mean"]) < (base["ci_high"] - base["ci_low"])
    assert rep["flags"] == []


def test_conjecture_probe_random_birkhoff():
    gen = np.random.default_rng(17)
    mats = [gen_birkhoff(6, 5, gen) for _ in range(4)]
    rep = conjecture_probe(mats, 800, RngStream(18))
    assert rep["flags"] == []  # evidence for the minimum at uniform
    assert all(r["mean"] >= rep["uniform_mean"] - 0.3 for r in rep["results"])
