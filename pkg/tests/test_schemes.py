import math

import numpy as np
import pytest

from matchcrs.errors import (CalibrationInsufficient, DegreeCapExceeded,
                             InputError)
from matchcrs.graphs import FractionalMatching, Graph, complete_loads
from matchcrs.karp_sipser import is_matching
from matchcrs.sampling import RngStream, sample_presence_batch, sample_r
from matchcrs.schemes import (RbgScheme, SimpleScheme, TwoStageScheme,
                              compute_constants, gray_probability,
                              red_probability, rbg_scheme, simple_scheme,
                              two_stage_scheme)

E = math.e


def k22(x=0.5):
    g = Graph(4, [(0, 2), (0, 3), (1, 2), (1, 3)], bipartition=([0, 1], [2, 3]))
    return FractionalMatching(g, np.full(4, x))


def k44(x=0.25):
    edges = [(i, 4 + j) for i in range(4) for j in range(4)]
    g = Graph(8, edges, bipartition=(range(4), range(4, 8)))
    return FractionalMatching(g, np.full(16, x))


def single_edge(x=1.0):
    g = Graph(2, [(0, 1)], bipartition=([0], [1]))
    return FractionalMatching(g, np.array([x]))


def test_constants_digits():
    c = compute_constants()
    assert c.beta == pytest.approx(0.51315, abs=1e-4)
    assert c.gamma == pytest.approx(0.50936, abs=1e-4)
    assert c.gamma >= 0.509
    assert c.simple_factor == pytest.approx(0.48026, abs=1e-4)
    assert c.simple_factor >= 0.480
    assert c.two_stage_factor == pytest.approx(0.4685, abs=1e-4)
    assert c.two_stage_factor >= 0.468
    # the closed forms they came from
    assert c.beta == pytest.approx(
        (math.exp(-1 / E) - math.exp(-1)) / (1 - math.exp(-1)), abs=1e-15)
    assert c.simple_factor == pytest.approx(
        2 * (1 - math.exp(-1 / E)) - math.exp(-2), abs=1e-15)


def test_schemes_require_completed_loads():
    g = Graph(2, [(0, 1)], bipartition=([0], [1]))
    fm = FractionalMatching(g, np.array([0.4]))
    with pytest.raises(InputError):
        SimpleScheme(fm)


def test_schemes_require_bipartition():
    fm = FractionalMatching(Graph(2, [(0, 1)]), np.array([1.0]))
    with pytest.raises(InputError):
        TwoStageScheme(fm)


def test_degree_cap_names_vertex():
    fm = k44()
    with pytest.raises(DegreeCapExceeded) as err:
        RbgScheme(fm, step6="uniform", cap=3)
    assert "vertex" in str(err.value)


def test_all_schemes_emit_matchings():
    gen = np.random.default_rng(0)
    fm, _ = complete_loads(k44(0.2))
    runners = [SimpleScheme(fm), TwoStageScheme(fm),
               RbgScheme(fm, step6="uniform")]
    for runner in runners:
        present = sample_presence_batch(fm, 300, gen)
        sel = runner.run_batch(present, gen)
        for i in range(300):
            chosen = np.flatnonzero(sel[i]).tolist()
            assert is_matching(fm.graph, chosen)
            assert set(chosen) <= set(np.flatnonzero(present[i]).tolist())


def test_two_stage_empty_realized():
    fm = k22()
    assert two_stage_scheme(fm, frozenset(), RngStream(0)) == frozenset()


def test_one_shot_wrappers():
    fm = k22()
    r = sample_r(fm, RngStream(1))
    m1 = simple_scheme(fm, r, RngStream(2))
    assert is_matching(fm.graph, m1)
    m2, state = rbg_scheme(fm, r, RngStream(3), step6_mode="uniform")
    assert is_matching(fm.graph, m2)
    assert state.final == m2


def test_simple_availability_marginal():
    # Pr[edge available at its left endpoint] = (e^x - 1)/e at x = 1/2
    fm = k22(0.5)
    runner = SimpleScheme(fm)
    gen = RngStream(5).generator()
    trials = 10 ** 5
    present = sample_presence_batch(fm, trials, gen)
    active = present & (gen.random(present.shape) < runner.act[None, :])
    # availability of edge 0 = (0,2) at vertex 0: no other active edge at 2
    avail = active[:, 0] & ~active[:, 2]
    expect = (math.exp(0.5) - 1) / E
    assert expect == pytest.approx(0.23865, abs=1e-5)
    assert avail.mean() == pytest.approx(expect, abs=0.005)


def test_rbg_stage_marginal_audits():
    fm = k22(0.5)
    runner = RbgScheme(fm, step6="uniform")
    gen = RngStream(6).generator()
    trials = 10 ** 5
    present = sample_presence_batch(fm, trials, gen)
    stages = runner.pipeline_batch(present, gen)
    x = 0.5

    gray_freq = stages["gray"][:, 0].mean()
    assert gray_probability(x) == pytest.approx(0.10653, abs=1e-5)
    assert gray_freq == pytest.approx(gray_probability(x), abs=0.003)

    red_freq = stages["red"][:, 0].mean()
    assert red_freq == pytest.approx(red_probability(x), abs=0.004)

    blue_freq = stages["blue"][:, 0].mean()
    assert blue_freq == pytest.approx(
        math.exp(-x / E) - math.exp(-x), abs=0.004)

    r1_freq = stages["r1"][:, 0].mean()
    expect_r1 = (1 - math.exp(-1 / E)) * x
    assert expect_r1 == pytest.approx(0.15390, abs=1e-5)
    assert r1_freq == pytest.approx(expect_r1, abs=0.004)

    r2_freq = stages["r2"][:, 0].mean()
    assert r2_freq == pytest.approx(
        (math.exp(-1 / E) - math.exp(-1)) * x, abs=0.004)

    r3_freq = stages["r3"][:, 0].mean()
    assert r3_freq == pytest.approx(x * x / (2 * E), abs=0.003)

    # stages 3-5 are exclusive per left vertex
    arrivals = stages["arrivals"]
    for v_edges in ([0, 1], [2, 3]):  # edges at left vertex 0 and 1
        assert int((arrivals[:, v_edges].sum(axis=1) > 1).sum()) == 0


def test_red_indicator_independence_at_left_vertex():
    fm = k44(0.25)
    runner = RbgScheme(fm, step6="uniform")
    gen = RngStream(7).generator()
    trials = 10 ** 5
    present = sample_presence_batch(fm, trials, gen)
    stages = runner.pipeline_batch(present, gen)
    red = stages["red"].astype(float)
    # edges 0..3 share left vertex 0
    for a in range(3):
        for b in range(a + 1, 4):
            cov = np.mean(red[:, a] * red[:, b]) - red[:, a].mean() * red[:, b].mean()
            se = 1.0 / math.sqrt(trials)
            assert abs(cov) < 4 * se


def test_blue_pairwise_negative_correlation_smoke():
    # acceptance runs this at 10^6 trials on K_{4,4}
    fm = k44(0.25)
    runner = RbgScheme(fm, step6="uniform")
    gen = RngStream(8).generator()
    trials = 2 * 10 ** 5
    present = sample_presence_batch(fm, trials, gen)
    stages = runner.pipeline_batch(present, gen)
    blue, r2 = stages["blue"], stages["r2"]
    e1, e2 = 0, 4  # (0, 4) and (1, 4): incident at right vertex 4
    both_blue = blue[:, e1] & blue[:, e2]
    n = int(both_blue.sum())
    both_r2 = float((r2[:, e1] & r2[:, e2] & both_blue).sum()) / n
    p1 = float((r2[:, e1] & both_blue).sum()) / n
    p2 = float((r2[:, e2] & both_blue).sum()) / n
    se = math.sqrt(max(both_r2 * (1 - both_r2), 0.25) / n)
    assert both_r2 <= p1 * p2 + 4 * se


def test_rbg_single_edge_arrival_distribution():
    from matchcrs.exact import rbg_arrival_distributions
    fm = single_edge(1.0)
    runner = RbgScheme(fm, step6="exact")
    dists = rbg_arrival_distributions(fm, runner)
    (vertex, dist), = dists.items()
    atoms = dict(dist.atoms())
    expect = (1 - math.exp(-1 / E)) + (math.exp(-1 / E) - math.exp(-1)) \
        + 0.5 * math.exp(-1)
    assert expect == pytest.approx(0.8160, abs=1e-4)
    assert atoms[1] == pytest.approx(expect, abs=1e-12)


def test_rbg_colored_state_invariants():
    fm, _ = complete_loads(k44(0.2))
    runner = RbgScheme(fm, step6="uniform")
    left = fm.graph.bipartition[0]
    for t in range(60):
        r = sample_r(fm, RngStream(60, (t,)))
        matching, state = runner.run(r, RngStream(61, (t,)))
        for e, color in state.color.items():
            if color != "absent":
                assert e in r
        for e in state.r1:
            assert state.color[e] == "red"
            u, v = fm.graph.endpoints(e)
            right = v if u in left else u
            # red means unique active at the right endpoint
            others = [e2 for e2 in fm.graph.incident(right)
                      if e2 != e and state.color.get(e2) in ("red", "blue")]
            assert not others
        for e in state.r2:
            assert state.color[e] == "blue"
        for e in state.r3:
            assert state.color[e] == "gray"
        survivors = state.r1 | state.r2 | state.r3
        per_left = {}
        for e in survivors:
            u, v = fm.graph.endpoints(e)
            lv = u if u in left else v
            assert per_left.setdefault(lv, e) == e, "two survivors at one left vertex"
        assert is_matching(fm.graph, state.final)
        assert state.final <= frozenset(fm.real_edges())


def test_rbg_calibrated_runs_and_calibration_insufficient():
    fm = k22(0.5)
    runner = RbgScheme(fm, step6="calibrated", cal_samples=30000,
                       cal_rng=RngStream(77, ("cal",)))
    gen = RngStream(78).generator()
    present = sample_presence_batch(fm, 2000, gen)
    sel = runner.run_batch(present, gen)
    assert all(is_matching(fm.graph, np.flatnonzero(sel[i]).tolist())
               for i in range(2000))
    with pytest.raises(CalibrationInsufficient):
        RbgScheme(fm, step6="calibrated", cal_samples=8,
                  cal_rng=RngStream(0, ("cal",)))


def test_zero_weight_edges_never_partake():
    g = Graph(4, [(0, 2), (0, 3), (1, 2), (1, 3)], bipartition=([0, 1], [2, 3]))
    fm = FractionalMatching(g, np.array([1.0, 0.0, 0.0, 1.0]))
    runner = RbgScheme(fm, step6="exact")
    gen = RngStream(90).generator()
    present = sample_presence_batch(fm, 500, gen)
    assert not present[:, 1].any() and not present[:, 2].any()
    sel = runner.run_batch(present, gen)
    assert not sel[:, 1].any() and not sel[:, 2].any()
    assert sel[:, 0].mean() > 0.4


def test_unknown_step6_mode():
    with pytest.raises(InputError):
        RbgScheme(k22(), step6="bogus")
