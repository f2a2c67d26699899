from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routeaudit.distance import DistanceMatrix
from routeaudit.errors import BadIndex, Infeasible, TooLarge
from routeaudit.solver import (
    EXACT_LIMIT,
    Instance,
    RoutePlan,
    plan_cost,
    read_cvrplib,
    solve_exact,
    solve_heuristic,
    validate,
)

from conftest import random_instance


def line_instance(xs, demands, cap, vehicles):
    """Points on a line with the depot at 0 -> distances are |xi - xj|."""
    pts = [0.0, *xs]
    d = np.abs(np.subtract.outer(pts, pts))
    return Instance(DistanceMatrix(d), tuple(demands), cap, vehicles)


SMALL = np.array(
    [
        [0, 2, 3, 4],
        [2, 0, 1, 5],
        [3, 1, 0, 2],
        [4, 5, 2, 0],
    ],
    dtype=float,
)


def small_instance(cap=10, vehicles=2):
    return Instance(DistanceMatrix(SMALL), (1, 1, 1), cap, vehicles)


# cost ---------------------------------------------------------------------------------


def test_cost_hand_summed():
    inst = small_instance()
    # 0-1-2-3-0 = 2 + 1 + 2 + 4
    assert plan_cost(inst, [[1, 2, 3]]) == 9.0
    # 0-1-0 + 0-3-2-0 = 4 + (4 + 2 + 3)
    assert plan_cost(inst, [[1], [3, 2]]) == 13.0
    assert plan_cost(inst, []) == 0.0
    assert plan_cost(inst, [[]]) == 0.0


def test_cost_is_direction_free_on_symmetric_matrix():
    inst = small_instance()
    assert plan_cost(inst, [[1, 2, 3]]) == plan_cost(inst, [[3, 2, 1]])


@pytest.mark.parametrize("bad", [[[0]], [[4]], [[-1]], [[1.5]]])
def test_bad_index(bad):
    with pytest.raises(BadIndex):
        plan_cost(small_instance(), bad)


def test_fixture_plan_cost_by_hand(fs):
    from routeaudit.distance import build_matrix
    from routeaudit.sampling import SampleConfig, cluster_points, densify, two_stage_sample

    ss = two_stage_sample(cluster_points(densify(fs, 25), 20, 3), SampleConfig(3, 10, 20, 8, 5))
    inst = Instance.from_stops(ss)
    plan = solve_heuristic(inst)
    d = build_matrix(ss).d
    (r,) = plan.routes
    total = d[0, r[0]] + sum(d[a, b] for a, b in zip(r, r[1:])) + d[r[-1], 0]
    assert plan.cost == pytest.approx(total, rel=1e-12)


# validation ---------------------------------------------------------------------------


def test_validate_ok():
    rep = validate(small_instance(), RoutePlan(((1, 2, 3),), 9.0))
    assert rep.ok and not rep


def test_validate_missing_customer():
    rep = validate(small_instance(), RoutePlan(((1, 3),), 0.0))
    (v,) = rep.violations
    assert v.family == "visit_once" and v.kind == "missing" and "2" in v.detail


def test_validate_duplicate_customer():
    rep = validate(small_instance(), RoutePlan(((1, 2), (2, 3)), 0.0))
    assert [v.kind for v in rep.by_family("visit_once")] == ["duplicate"]


def test_validate_capacity_excess():
    inst = Instance(DistanceMatrix(SMALL), (2, 2, 1), 4, 2)
    rep = validate(inst, RoutePlan(((1, 2, 3),), 0.0))
    (v,) = rep.by_family("capacity")
    assert v.amount == 1.0


def test_validate_fleet_and_empty_route():
    inst = small_instance(vehicles=1)
    rep = validate(inst, RoutePlan(((1, 2, 3), ()), 0.0))
    assert {v.family for v in rep.violations} == {"depot", "fleet"}


def test_validate_bad_index():
    rep = validate(small_instance(), RoutePlan(((1, 2, 3, 7),), 0.0))
    assert rep.by_family("index")


def test_instance_rejects_inconsistent_inputs():
    with pytest.raises(ValueError):
        Instance(DistanceMatrix(SMALL), (1, 1), 10, 1)
    with pytest.raises(ValueError):
        Instance(DistanceMatrix(SMALL), (1, 1, 11), 10, 1)
    with pytest.raises(ValueError):
        Instance(DistanceMatrix(SMALL), (1, 1, 1), 10, 0)


def test_plan_json_roundtrip():
    p = RoutePlan(((1, 2), (3,)), 12.5)
    assert RoutePlan.from_json(p.to_json()) == p
    assert p.arcs() == {(0, 1, 0), (1, 2, 0), (2, 0, 0), (0, 3, 1), (3, 0, 1)}


# exact ---------------------------------------------------------------------------------


def test_exact_single_customer():
    inst = line_instance([7.0], [1], 5, 1)
    plan = solve_exact(inst)
    assert plan.routes == ((1,),) and plan.cost == 14.0


def test_exact_three_far_customers_unit_capacity():
    # each customer at distance R, pairwise far apart, Q = 1 -> three out-and-back trips
    R = 100.0
    d = np.full((4, 4), 1000.0)
    np.fill_diagonal(d, 0.0)
    d[0, 1:] = d[1:, 0] = R
    inst = Instance(DistanceMatrix(d), (1, 1, 1), 1, 3)
    plan = solve_exact(inst)
    assert plan.cost == 6 * R
    assert sorted(plan.routes) == [(1,), (2,), (3,)]


def test_exact_too_large():
    inst = random_instance(random.Random(0), EXACT_LIMIT + 1)
    with pytest.raises(TooLarge):
        solve_exact(inst)


def test_exact_infeasible():
    inst = line_instance([1, 2, 3], [2, 2, 2], 2, 2)
    with pytest.raises(Infeasible):
        solve_exact(inst)


def _random_feasible_plan(inst: Instance, rng: random.Random):
    n = inst.n_customers
    perm = list(range(1, n + 1))
    rng.shuffle(perm)
    k = rng.randint(1, min(n, inst.vehicle_count))
    cuts = sorted(rng.sample(range(1, n), k - 1)) if k > 1 else []
    routes = [perm[a:b] for a, b in zip([0, *cuts], [*cuts, n])]
    if all(sum(inst.demand(c) for c in r) <= inst.capacity for r in routes):
        return routes
    return None


def test_exact_beats_10000_random_feasible_plans():
    rng = random.Random(17)
    inst = random_instance(rng, 7, vehicles=3)
    best = solve_exact(inst)
    assert validate(inst, best).ok
    tried = 0
    while tried < 10_000:
        routes = _random_feasible_plan(inst, rng)
        if routes is None:
            continue
        tried += 1
        assert best.cost <= plan_cost(inst, routes) + 1e-9


def _brute_force(inst: Instance) -> float:
    """Enumerate every ordered split of every permutation."""
    n = inst.n_customers
    best = math.inf
    for perm in itertools.permutations(range(1, n + 1)):
        for mask in range(1 << (n - 1)):
            routes, cur = [], [perm[0]]
            for i in range(1, n):
                if mask >> (i - 1) & 1:
                    routes.append(cur)
                    cur = []
                cur.append(perm[i])
            routes.append(cur)
            if len(routes) > inst.vehicle_count:
                continue
            if any(sum(inst.demand(c) for c in r) > inst.capacity for r in routes):
                continue
            best = min(best, plan_cost(inst, routes))
    return best


@pytest.mark.parametrize("seed", range(6))
def test_exact_matches_brute_force(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, 5, vehicles=rng.randint(2, 5))
    try:
        plan = solve_exact(inst)
    except Infeasible:
        assert _brute_force(inst) == math.inf
        return
    assert plan.cost == pytest.approx(_brute_force(inst), rel=1e-12)


# heuristic -----------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_heuristic_is_feasible_and_not_below_exact(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, rng.randint(2, 7))
    h = solve_heuristic(inst)
    assert validate(inst, h).ok
    assert h.cost == pytest.approx(plan_cost(inst, h), rel=1e-12)
    assert h.cost >= solve_exact(inst).cost - 1e-9


def test_heuristic_trace_strictly_decreasing():
    for seed in range(30):
        inst = random_instance(random.Random(seed), 15)
        trace: list[float] = []
        plan = solve_heuristic(inst, trace=trace)
        assert trace, "trace records at least the starting cost"
        assert all(b < a for a, b in zip(trace, trace[1:]))
        assert plan.cost == pytest.approx(trace[-1], rel=1e-12)


def test_heuristic_deterministic():
    inst = random_instance(random.Random(3), 18)
    assert solve_heuristic(inst, seed=1) == solve_heuristic(inst, seed=1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.001, 0.5, 3.0, 1000.0]))
def test_heuristic_scale_invariant(seed, alpha):
    inst = random_instance(random.Random(seed), 9)
    scaled = Instance(DistanceMatrix(inst.matrix.d * alpha), inst.demands, inst.capacity, inst.vehicle_count)
    a, b = solve_heuristic(inst), solve_heuristic(scaled)
    assert a.routes == b.routes
    assert b.cost == pytest.approx(alpha * a.cost, rel=1e-9)


def test_heuristic_infeasible_fleet():
    inst = line_instance([1, 2, 3, 4], [3, 3, 3, 3], 3, 2)
    with pytest.raises(Infeasible):
        solve_heuristic(inst)


def test_heuristic_single_vehicle_is_a_tour():
    inst = random_instance(random.Random(9), 12, vehicles=1)
    inst = Instance(inst.matrix, inst.demands, sum(inst.demands), 1)
    plan = solve_heuristic(inst)
    assert len(plan.routes) == 1 and sorted(plan.routes[0]) == list(range(1, 13))


def test_heuristic_empty_instance():
    inst = Instance(DistanceMatrix(np.zeros((1, 1))), (), 1, 1)
    assert solve_heuristic(inst) == RoutePlan((), 0.0)


# CVRPLIB ---------------------------------------------------------------------------------

VRP = """NAME : toy-n4
COMMENT : hand-made
TYPE : CVRP
DIMENSION : 5
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 3
NODE_COORD_SECTION
1 0 0
2 3 4
3 6 8
4 -3 4
5 -6 8
DEMAND_SECTION
1 0
2 1
3 2
4 1
5 2
DEPOT_SECTION
1
-1
EOF
"""


def test_read_cvrplib(tmp_path):
    p = tmp_path / "toy.vrp"
    p.write_text(VRP)
    inst = read_cvrplib(p)
    assert inst.n_customers == 4 and inst.capacity == 3 and inst.demands == (1, 2, 1, 2)
    assert inst.matrix.d[0, 1] == 5.0 and inst.matrix.d[1, 3] == 6.0
    plan = solve_exact(inst)
    # two spokes: 0-(3,4)-(6,8)-0 and the mirror image -> 2 * (5 + 5 + 10)
    assert plan.cost == 40.0
    assert solve_heuristic(inst).cost == 40.0


def test_read_cvrplib_rejects_other_weights(tmp_path):
    p = tmp_path / "x.vrp"
    p.write_text(VRP.replace("EUC_2D", "GEO"))
    with pytest.raises(ValueError):
        read_cvrplib(p)


def test_heuristic_feasible_whenever_exact_is():
    # tight fleets where savings merging alone gets stuck
    rng = random.Random(11)
    checked = 0
    for _ in range(400):
        n = rng.randint(3, 7)
        inst = random_instance(rng, n, vehicles=rng.randint(1, 3))
        try:
            exact = solve_exact(inst)
        except Infeasible:
            with pytest.raises(Infeasible):
                solve_heuristic(inst)
            continue
        plan = solve_heuristic(inst)
        assert validate(inst, plan).ok
        assert plan.cost >= exact.cost - 1e-9
        checked += 1
    assert checked > 50
