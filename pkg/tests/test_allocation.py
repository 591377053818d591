import json

import numpy as np
import pytest

from matchcrs.allocation import (AllocationInstance, AllocationRounder,
                                 allocation_violations, brute_force_integral,
                                 round_solution, solve_config_lp)
from matchcrs.errors import InputError
from matchcrs.sampling import RngStream


def single_item_1x1(value=1.0):
    return AllocationInstance(1, 1, ["a"], {(0, 0): [{"a": value}]})


def two_item_2x2():
    return AllocationInstance(2, 2, ["a", "b"], {
        (0, 0): [{"a": 2.0, "b": 1.0}],
        (0, 1): [{"b": 2.0}],
        (1, 0): [{"a": 1.0}],
        (1, 1): [{"a": 1.5, "b": 1.5}],
    })


def test_xos_value_is_max_clause_and_monotone():
    inst = AllocationInstance(1, 1, ["a", "b"], {
        (0, 0): [{"a": 3.0}, {"a": 1.0, "b": 2.5}]})
    v = inst.value
    assert v(0, 0, set()) == 0.0
    assert v(0, 0, {"a"}) == 3.0
    assert v(0, 0, {"b"}) == 2.5
    assert v(0, 0, {"a", "b"}) == 3.5
    assert v(0, 0, {"a", "b"}) >= v(0, 0, {"a"})


def test_lp_single_item():
    sol = solve_config_lp(single_item_1x1())
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    assert sol.violations() == []
    mask_a = 0b1
    assert sol.weights[0, 0, mask_a] == pytest.approx(1.0, abs=1e-6)


def test_lp_zero_valuations():
    inst = AllocationInstance(2, 2, ["a"], {})
    sol = solve_config_lp(inst)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_lp_single_item_distinct_cells_matches_brute_force():
    inst = AllocationInstance(2, 2, ["a"], {
        (0, 0): [{"a": 0.3}], (0, 1): [{"a": 0.9}],
        (1, 0): [{"a": 0.5}], (1, 1): [{"a": 0.7}],
    })
    sol = solve_config_lp(inst)
    bf, _ = brute_force_integral(inst)
    # one item may fill a full grid matching: best = 0.9 + 0.5 = 1.4
    assert bf == pytest.approx(1.4)
    assert sol.objective == pytest.approx(bf, abs=1e-6)


def test_lp_matches_brute_force_2x2():
    inst = two_item_2x2()
    sol = solve_config_lp(inst)
    bf, _ = brute_force_integral(inst)
    assert sol.objective == pytest.approx(bf, abs=1e-6)
    assert sol.violations() == []


def test_rounding_respects_disjointness():
    inst = two_item_2x2()
    sol = solve_config_lp(inst)
    for t in range(25):
        alloc, welfare = round_solution(inst, sol, RngStream(100, (t,)))
        assert allocation_violations(inst, alloc) == []
        assert welfare >= 0.0


def test_rounding_welfare_bound_small():
    inst = two_item_2x2()
    sol = solve_config_lp(inst)
    rounder = AllocationRounder(inst, sol, step6="exact")
    rep = rounder.round_batch(4000, RngStream(101))
    assert rep["mean_welfare"] >= 0.509 * sol.objective - 4 * rep["std_error"]


def test_rounding_single_item_survival_rate():
    inst = single_item_1x1()
    sol = solve_config_lp(inst)
    rounder = AllocationRounder(inst, sol, step6="exact")
    rep = rounder.round_batch(4000, RngStream(102))
    from matchcrs.schemes import compute_constants
    gamma = compute_constants().gamma
    se = rep["std_error"]
    assert abs(rep["mean_welfare"] - gamma) < 4 * se


def test_fractional_lp_instance():
    # XOS forces a genuinely fractional optimum: two items, one slot pair
    inst = AllocationInstance(2, 2, ["a", "b"], {
        (0, 0): [{"a": 1.0}, {"b": 1.0}],
        (1, 1): [{"a": 1.0}, {"b": 1.0}],
    })
    sol = solve_config_lp(inst)
    bf, _ = brute_force_integral(inst)
    assert sol.objective >= bf - 1e-6
    rounder = AllocationRounder(inst, sol, step6="exact")
    rep = rounder.round_batch(4000, RngStream(103))
    assert rep["mean_welfare"] >= 0.509 * sol.objective - 4 * rep["std_error"]


def test_zero_valuations_round_to_zero_welfare():
    inst = AllocationInstance(2, 2, ["a"], {})
    sol = solve_config_lp(inst)
    rounder = AllocationRounder(inst, sol, step6="exact")
    rep = rounder.round_batch(200, RngStream(104))
    assert rep["mean_welfare"] == 0.0


def test_instance_files_roundtrip(tmp_path):
    inst = two_item_2x2()
    p = tmp_path / "alloc.json"
    p.write_text(json.dumps(inst.to_dict()))
    inst2 = AllocationInstance.load(p)
    assert inst2.m == 2 and inst2.n == 2
    assert inst2.items == ["a", "b"]
    assert inst2.value(0, 0, {"a", "b"}) == 3.0


def test_instance_malformed():
    with pytest.raises(InputError):
        AllocationInstance.from_dict({"m": 1})
    with pytest.raises(InputError):
        AllocationInstance(1, 1, ["a"], {(0, 0): [{"zzz": 1.0}]})
    with pytest.raises(InputError):
        AllocationInstance(1, 1, ["a"], {(2, 0): [{"a": 1.0}]})
