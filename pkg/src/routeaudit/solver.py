"""Capacitated VRP: plan cost, feasibility checks, exact and heuristic solvers.

A plan is a list of routes, each an ordered sequence of customer indices
(1..n-1); every route implicitly starts and ends at the depot (index 0).
This sequence form is a concrete encoding of the binary arc variables
x_ijk: x_ijk = 1 exactly when j follows i on route k, counting the depot
at both ends. Disconnected sub-tours cannot be written down in it.

All plan costs are summed with ``math.fsum`` over the edge multiset, so a
route and its reversal cost exactly the same on a symmetric matrix and
tie-breaks depend only on visit order, never on summation order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .distance import DistanceMatrix
from .errors import BadIndex, Infeasible, TooLarge

EXACT_LIMIT = 9

Route = tuple[int, ...]


@dataclass(frozen=True)
class Instance:
    matrix: DistanceMatrix
    demands: tuple[int, ...]  # per customer, customer i has demands[i - 1]
    capacity: int
    vehicle_count: int = 1

    def __post_init__(self):
        if len(self.demands) != self.matrix.n - 1:
            raise ValueError("demands length must equal matrix.n - 1")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.vehicle_count < 1:
            raise ValueError("vehicle_count must be >= 1")
        if any(d < 0 for d in self.demands):
            raise ValueError("demands must be non-negative")
        if any(d > self.capacity for d in self.demands):
            raise ValueError("a single demand exceeds capacity")

    @property
    def n_customers(self) -> int:
        return self.matrix.n - 1

    def demand(self, i: int) -> int:
        return self.demands[i - 1]

    @classmethod
    def from_stops(cls, stops, vehicle_count: int = 1) -> "Instance":
        from .distance import build_matrix

        return cls(build_matrix(stops), tuple(stops.demands), stops.capacity, vehicle_count)

    def to_json(self) -> dict:
        return {
            "matrix": self.matrix.d.tolist(),
            "demands": list(self.demands),
            "capacity": self.capacity,
            "vehicle_count": self.vehicle_count,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Instance":
        return cls(
            DistanceMatrix(np.array(doc["matrix"], dtype=float)),
            tuple(int(d) for d in doc["demands"]),
            int(doc["capacity"]),
            int(doc.get("vehicle_count", 1)),
        )


@dataclass(frozen=True)
class RoutePlan:
    routes: tuple[Route, ...]
    cost: float

    def to_json(self) -> dict:
        return {"routes": [list(r) for r in self.routes], "cost": self.cost}

    @classmethod
    def from_json(cls, doc: dict) -> "RoutePlan":
        return cls(tuple(tuple(int(i) for i in r) for r in doc["routes"]), float(doc["cost"]))

    def arcs(self) -> set[tuple[int, int, int]]:
        """The (i, j, k) triples with x_ijk = 1."""
        out = set()
        for k, r in enumerate(self.routes):
            seq = (0, *r, 0)
            out.update((i, j, k) for i, j in zip(seq, seq[1:]))
        return out


def _route_edges(d: np.ndarray, route: Sequence[int]) -> list[float]:
    if not route:
        return []
    seq = (0, *route, 0)
    return [float(d[i, j]) for i, j in zip(seq, seq[1:])]


def _plan_edges(d: np.ndarray, routes: Sequence[Sequence[int]]) -> list[float]:
    out: list[float] = []
    for r in routes:
        out.extend(_route_edges(d, r))
    return out


def plan_cost(inst: Instance, plan: RoutePlan | Sequence[Sequence[int]]) -> float:
    """Objective value: sum of depot -> c1 -> ... -> cL -> depot edge costs."""
    routes = plan.routes if isinstance(plan, RoutePlan) else plan
    n = inst.matrix.n
    for r in routes:
        for c in r:
            if not isinstance(c, (int, np.integer)) or not 1 <= c < n:
                raise BadIndex(f"customer index {c!r} outside 1..{n - 1}")
    return math.fsum(_plan_edges(inst.matrix.d, routes))


@dataclass(frozen=True)
class Violation:
    family: str  # visit_once | depot | capacity | fleet | index
    kind: str
    detail: str
    amount: float = 0.0


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        # truthy when there is something to report
        return bool(self.violations)

    def by_family(self, family: str) -> list[Violation]:
        return [v for v in self.violations if v.family == family]


def validate(inst: Instance, plan: RoutePlan) -> ValidationReport:
    """List every violated constraint; an empty report means the plan is feasible.

    Depot bracketing is structural: each route is written without the depot
    and always interpreted as leaving from and returning to it, so the only
    depot-family violation possible is an empty route (a vehicle that leaves
    and returns without serving anyone). Sub-tours are unrepresentable.
    """
    rep = ValidationReport()
    n = inst.matrix.n
    seen: dict[int, int] = {}
    for k, r in enumerate(plan.routes):
        if len(r) == 0:
            rep.violations.append(Violation("depot", "empty_route", f"route {k} serves nobody"))
        load = 0
        for c in r:
            if not isinstance(c, (int, np.integer)) or not 1 <= c < n:
                rep.violations.append(Violation("index", "bad_index", f"route {k}: {c!r}"))
                continue
            seen[c] = seen.get(c, 0) + 1
            load += inst.demand(c)
        if load > inst.capacity:
            rep.violations.append(
                Violation(
                    "capacity",
                    "capacity_excess",
                    f"route {k} carries {load} > {inst.capacity}",
                    float(load - inst.capacity),
                )
            )
    for c in range(1, n):
        cnt = seen.get(c, 0)
        if cnt == 0:
            rep.violations.append(Violation("visit_once", "missing", f"customer {c} not visited"))
        elif cnt > 1:
            rep.violations.append(
                Violation("visit_once", "duplicate", f"customer {c} visited {cnt} times", cnt - 1)
            )
    if len(plan.routes) > inst.vehicle_count:
        rep.violations.append(
            Violation(
                "fleet",
                "too_many_routes",
                f"{len(plan.routes)} routes for {inst.vehicle_count} vehicles",
                float(len(plan.routes) - inst.vehicle_count),
            )
        )
    return rep


# exact ---------------------------------------------------------------------


def _best_order(d: np.ndarray, block: tuple[int, ...]) -> tuple[Route, list[float]]:
    """Optimal visiting order of one block; first optimum in lexicographic order."""
    if len(block) == 1:
        return block, _route_edges(d, block)
    best: Route | None = None
    best_cost = math.inf
    best_edges: list[float] = []
    for perm in itertools.permutations(block):
        if perm[0] > perm[-1]:
            continue  # reversal of an earlier permutation, same cost
        edges = _route_edges(d, perm)
        c = math.fsum(edges)
        if c < best_cost:
            best, best_cost, best_edges = perm, c, edges
    assert best is not None
    return best, best_edges


def _set_partitions(items: list[int], max_blocks: int):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest, max_blocks):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        if len(part) < max_blocks:
            yield [[first]] + part


def solve_exact(inst: Instance) -> RoutePlan:
    """Globally optimal plan by enumerating set partitions and route orders.

    Among equal-cost optima the lexicographically smallest sorted route list
    wins. Limited to 9 customers.
    """
    n = inst.n_customers
    if n > EXACT_LIMIT:
        raise TooLarge(f"{n} customers > exact limit {EXACT_LIMIT}")
    if n == 0:
        return RoutePlan((), 0.0)
    d = inst.matrix.d
    cache: dict[tuple[int, ...], tuple[Route, list[float]]] = {}
    best_routes: list[Route] | None = None
    best_cost = math.inf
    for part in _set_partitions(list(range(1, n + 1)), inst.vehicle_count):
        blocks = [tuple(sorted(b)) for b in part]
        if any(sum(inst.demand(c) for c in b) > inst.capacity for b in blocks):
            continue
        routes = []
        edges: list[float] = []
        for b in blocks:
            if b not in cache:
                cache[b] = _best_order(d, b)
            r, e = cache[b]
            routes.append(r)
            edges.extend(e)
        routes.sort()
        cost = math.fsum(edges)
        if cost < best_cost or (cost == best_cost and routes < best_routes):
            best_routes, best_cost = routes, cost
    if best_routes is None:
        raise Infeasible("no partition fits the fleet and capacity")
    return RoutePlan(tuple(best_routes), best_cost)


# heuristic -----------------------------------------------------------------


def _savings(inst: Instance) -> list[list[int]]:
    """Clarke-Wright parallel savings, ties broken by lowest (i, j)."""
    d = inst.matrix.d
    n = inst.n_customers
    routes: dict[int, list[int]] = {i: [i] for i in range(1, n + 1)}
    owner = {i: i for i in range(1, n + 1)}
    load = {i: inst.demand(i) for i in range(1, n + 1)}
    pairs = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            s = math.fsum([float(d[0, i]), float(d[0, j]), -float(d[i, j])])
            pairs.append((-s, i, j))
    pairs.sort()
    for neg_s, i, j in pairs:
        if neg_s >= 0:
            break
        ri, rj = owner[i], owner[j]
        if ri == rj or load[ri] + load[rj] > inst.capacity:
            continue
        a, b = routes[ri], routes[rj]
        if a[-1] == i and b[0] == j:
            merged = a + b
        elif a[0] == i and b[-1] == j:
            merged = b + a
        elif a[-1] == i and b[-1] == j:
            merged = a + b[::-1]
        elif a[0] == i and b[0] == j:
            merged = a[::-1] + b
        else:
            continue
        keep = min(ri, rj)
        drop = max(ri, rj)
        routes[keep] = merged
        load[keep] = load[ri] + load[rj]
        del routes[drop], load[drop]
        for c in merged:
            owner[c] = keep
    return [routes[k] for k in sorted(routes)]


def _reduce_fleet(inst: Instance, routes: list[list[int]]) -> list[list[int]]:
    """Concatenate routes cheaply until the fleet limit holds, if capacity allows."""
    d = inst.matrix.d
    while len(routes) > inst.vehicle_count:
        best = None
        for a in range(len(routes)):
            for b in range(len(routes)):
                if a == b:
                    continue
                ra, rb = routes[a], routes[b]
                if sum(map(inst.demand, ra)) + sum(map(inst.demand, rb)) > inst.capacity:
                    continue
                for cand in (ra + rb, ra + rb[::-1]):
                    c = math.fsum(_route_edges(d, cand))
                    key = (c - math.fsum(_route_edges(d, ra)) - math.fsum(_route_edges(d, rb)), a, b)
                    if best is None or key < best[0]:
                        best = (key, a, b, cand)
        if best is None:
            return _repack(inst, routes)
        _, a, b, cand = best
        routes = [r for k, r in enumerate(routes) if k not in (a, b)] + [cand]
    return routes


def _repack(inst: Instance, routes: list[list[int]]) -> list[list[int]]:
    """Bin-pack customers into ``vehicle_count`` loads when pairwise merging is stuck.

    Depth-first search over customers by decreasing demand (ties by id), with
    empty-bin symmetry breaking; exact, so failure means the fleet truly cannot
    carry the demand. Each load keeps the visiting order customers had in the
    savings routes; local search then repairs the cost.
    """
    order = {c: k for k, c in enumerate(c for r in routes for c in r)}
    custs = sorted(order, key=lambda c: (-inst.demand(c), c))
    k = inst.vehicle_count
    loads = [0] * k
    bins: list[list[int]] = [[] for _ in range(k)]

    def place(i: int) -> bool:
        if i == len(custs):
            return True
        c = custs[i]
        tried_empty = False
        for b in range(k):
            if loads[b] + inst.demand(c) > inst.capacity:
                continue
            if not bins[b]:
                if tried_empty:
                    continue
                tried_empty = True
            bins[b].append(c)
            loads[b] += inst.demand(c)
            if place(i + 1):
                return True
            bins[b].pop()
            loads[b] -= inst.demand(c)
        return False

    if not place(0):
        raise Infeasible(
            f"total demand {sum(inst.demands)} cannot be packed into "
            f"{k} vehicles of capacity {inst.capacity}"
        )
    return [sorted(b, key=order.__getitem__) for b in bins if b]


def _two_opt_moves(routes: list[list[int]]):
    for k, r in enumerate(routes):
        for i in range(len(r) - 1):
            for j in range(i + 1, len(r)):
                new = r[:i] + r[i : j + 1][::-1] + r[j + 1 :]
                yield [*routes[:k], new, *routes[k + 1 :]]


def _or_opt_moves(inst: Instance, routes: list[list[int]], max_seg: int = 3):
    loads = [sum(inst.demand(c) for c in r) for r in routes]
    for src, r in enumerate(routes):
        for length in range(1, min(max_seg, len(r)) + 1):
            for i in range(len(r) - length + 1):
                seg = r[i : i + length]
                rest = r[:i] + r[i + length :]
                seg_load = sum(inst.demand(c) for c in seg)
                for dst in range(len(routes)):
                    if dst == src:
                        base, cap_ok = rest, True
                    else:
                        base, cap_ok = routes[dst], loads[dst] + seg_load <= inst.capacity
                    if not cap_ok:
                        continue
                    for pos in range(len(base) + 1):
                        for piece in (seg, seg[::-1]) if length > 1 else (seg,):
                            new_dst = base[:pos] + piece + base[pos:]
                            out = list(routes)
                            if dst == src:
                                if new_dst == r:
                                    continue
                                out[src] = new_dst
                            else:
                                out[src] = rest
                                out[dst] = new_dst
                            yield [x for x in out if x]


def local_search(
    inst: Instance, routes: list[list[int]], trace: list[float] | None = None
) -> list[list[int]]:
    """First-improvement descent over intra-route 2-opt and or-opt relocation.

    A move is taken only when the recomputed plan cost is strictly lower, so
    the cost sequence appended to ``trace`` is strictly decreasing and the
    loop terminates.
    """
    d = inst.matrix.d
    current = [list(r) for r in routes]
    cost = math.fsum(_plan_edges(d, current))
    if trace is not None:
        trace.append(cost)
    improved = True
    while improved:
        improved = False
        for moves in (_two_opt_moves(current), _or_opt_moves(inst, current)):
            for cand in moves:
                if len(cand) > inst.vehicle_count:
                    continue
                c = math.fsum(_plan_edges(d, cand))
                if c < cost:
                    current, cost = cand, c
                    if trace is not None:
                        trace.append(cost)
                    improved = True
                    break
            if improved:
                break
    return current


def _canonical(routes: list[list[int]]) -> tuple[Route, ...]:
    out = []
    for r in routes:
        if not r:
            continue
        out.append(tuple(r) if r[0] <= r[-1] else tuple(reversed(r)))
    return tuple(sorted(out))


def solve_heuristic(
    inst: Instance, seed: int = 0, trace: list[float] | None = None
) -> RoutePlan:
    """Savings construction followed by 2-opt / or-opt descent.

    The procedure is fully deterministic; ``seed`` is recorded for replay
    bookkeeping and does not change the result. Pass a list as ``trace`` to
    receive the improvement-loop cost sequence.
    """
    n = inst.n_customers
    if n == 0:
        return RoutePlan((), 0.0)
    min_d = min(inst.demands)
    if min_d > 0 and n > inst.vehicle_count * (inst.capacity // min_d):
        raise Infeasible(
            f"{n} customers exceed fleet reach {inst.vehicle_count}x{inst.capacity // min_d}"
        )
    routes = _savings(inst)
    routes = _reduce_fleet(inst, routes)
    routes = local_search(inst, routes, trace)
    canon = _canonical(routes)
    return RoutePlan(canon, plan_cost(inst, canon))


# CVRPLIB -------------------------------------------------------------------


def read_cvrplib(path: str | Path, round_distances: bool = True) -> Instance:
    """Parse a CVRPLIB/TSPLIB ``.vrp`` file with EUC_2D weights.

    The depot is moved to index 0; other nodes keep their file order.
    ``round_distances`` applies the TSPLIB nearest-integer convention.
    """
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demand: dict[int, int] = {}
    depots: list[int] = []
    section = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line == "EOF":
            continue
        if line.endswith("_SECTION"):
            section = line
            continue
        if ":" in line:
            key, val = line.split(":", 1)
            header[key.strip().upper()] = val.strip()
            section = None
            continue
        if section is None:
            continue
        parts = line.split()
        if section == "NODE_COORD_SECTION":
            coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
        elif section == "DEMAND_SECTION":
            demand[int(parts[0])] = int(parts[1])
        elif section == "DEPOT_SECTION":
            v = int(parts[0])
            if v != -1:
                depots.append(v)
    if header.get("EDGE_WEIGHT_TYPE", "EUC_2D") != "EUC_2D":
        raise ValueError(f"unsupported EDGE_WEIGHT_TYPE {header['EDGE_WEIGHT_TYPE']}")
    if "CAPACITY" not in header or not coords:
        raise ValueError("missing CAPACITY or NODE_COORD_SECTION")
    depot = depots[0] if depots else min(coords)
    order = [depot] + [i for i in sorted(coords) if i != depot]
    xy = np.array([coords[i] for i in order])
    d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2))
    if round_distances:
        d = np.floor(d + 0.5)
    vehicles = header.get("VEHICLES")
    return Instance(
        DistanceMatrix(d),
        tuple(demand.get(i, 0) for i in order[1:]),
        int(header["CAPACITY"]),
        int(vehicles) if vehicles else len(order) - 1,
    )


def dump_plan(plan: RoutePlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan.to_json(), indent=2))
