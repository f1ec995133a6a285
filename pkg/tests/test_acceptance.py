"""Acceptance criteria 1-9.  Each test prints one PASS/FAIL line."""
import itertools
import math
import random
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from dpdp.dispatcher import (OPERATORS, DispatcherConfig, NoInsertionError, WorkingSolution,
                             cheapest_insertion, improves, neighborhood_best, neighbors, reconstruct, vns)
from dpdp.docking import ReservationList
from dpdp.evaluator import SimContext, simulate
from dpdp.feasibility import Route, delivery, lifo_ok, pickup
from dpdp.instances import generate, preset
from dpdp.model import Factory, Instance, Multipliers, Order, TravelModel, Vehicle
from dpdp.runner import multipliers_for, recompute_score, run, sweep
from dpdp.sdp import Action, PlanVisit, State, VehicleStatus, check_solution, initial_state, transition

from helpers import nodes_of, oracle_plans, order, random_instance, random_state, starts_of, uniform_instance
from oracles import (block_units, bridge_units, exchanges, insertions, reference_cost, relocations,
                     route_ok, stack_lifo_ok, time_stepped_ports)


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, seconds, limit, detail=""):
        ok = ok and seconds < limit
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title} "
                  f"({seconds:.1f}s, limit {limit:.0f}s){' ' + detail if detail else ''}")
        return ok
    return report


def pv(f, dl=(), pk=()):
    return PlanVisit(f, None, None, tuple(dl), tuple(pk))


# -- 1. golden timeline ---------------------------------------------------------

def test_criterion_1_golden_timeline(verdict):
    t0 = time.perf_counter()
    o1, o2 = order("o1", "f1", "f2", release=5), order("o2", "f1", "f3", release=5)
    o3 = order("o3", "f4", "f5", release=25)
    o4 = order("o4", "f6", "f5", release=35)
    inst = uniform_instance(7, travel=11, dock_time=2, orders=(o1, o2, o3, o4))
    st = State(1, 10, (VehicleStatus("v1", "f0", 10),), (o1, o2, o3))
    route = (pv("f1", pk=(o2, o1)), pv("f2", dl=(o1,)), pv("f3", dl=(o2,)), pv("f4", pk=(o3,)),
             pv("f5", dl=(o3,)))
    before = simulate(inst, st, {"v1": route}).windows("v1")

    # roll the engine forward to tau = 50 and apply the re-planned route
    state = transition(initial_state(inst), Action({}), inst)
    state = transition(state, Action({"v1": route[:3]}), inst)
    state = transition(state, Action({"v1": state.statuses[0].plan}), inst)
    state = transition(state, Action({"v1": state.statuses[0].plan + route[3:]}), inst)
    head = state.statuses[0].plan[0]
    after_action = Action({"v1": (head, pv("f6", pk=(o4,)), pv("f4", pk=(o3,)), pv("f5", dl=(o3, o4)))})
    after = simulate(inst, state, after_action.plans).windows("v1")
    ok = (before == [(21, 25), (36, 39), (50, 53), (64, 67), (78, 81)]
          and after == [(50, 53), (64, 67), (78, 81), (92, 96)])
    assert verdict(1, "golden timeline", ok, time.perf_counter() - t0, 1), (before, after)


# -- 2. docking queue -----------------------------------------------------------

def reservation_departures(arrivals, ports):
    res = ReservationList("f", ports)
    pending, out = [], []
    for i, (t, s) in enumerate(arrivals):
        for d, v in sorted(pending):
            if d <= t:
                res.release(v, d)
        pending = [(d, v) for d, v in pending if d > t]
        _, dep = res.enqueue(f"v{i}", t, s)
        pending.append((dep, f"v{i}"))
        out.append(dep)
    return out


def test_criterion_2_docking_oracle(verdict):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    bad = 0
    for _ in range(200):
        arrivals = sorted((rng.randint(0, 40), rng.randint(1, 15)) for _ in range(rng.randint(1, 8)))
        c = rng.choice([1, 2, 3])
        bad += reservation_departures(arrivals, c) != time_stepped_ports(arrivals, c)
    res = ReservationList("f", 2)
    pattern = [res.enqueue(f"v{i}", t, 4) for i, t in enumerate((0, 1, 2, 3))]
    pattern_ok = [d for _, d in pattern] == [4, 5, 8, 9] and [w for w, _ in pattern] == [0, 0, 2, 2]
    ok = bad == 0 and pattern_ok
    assert verdict(2, "docking queue vs time-stepped ports", ok, time.perf_counter() - t0, 5,
                   f"mismatches={bad}")


# -- 3. LIFO equivalence --------------------------------------------------------

def consistent_sequences(n):
    """Every order-consistent node sequence over n orders, any number carried."""
    orders = [Order(f"x{i}", "f1", "f2", 0, 9, 1, 1, 1) for i in range(n)]
    for k in range(n + 1):
        for carried in itertools.combinations(orders, k):
            fresh = [o for o in orders if o not in carried]
            tokens = [(o, False) for o in carried] + [(o, True) for o in fresh] + [(o, False) for o in fresh]

            def extend(prefix, left, picked):
                if not left:
                    yield prefix
                    return
                seen = set()
                for i, (o, is_p) in enumerate(left):
                    key = (o.id, is_p)
                    if key in seen or (not is_p and o in fresh and o.id not in picked):
                        continue
                    seen.add(key)
                    yield from extend(prefix + [(o, is_p)], left[:i] + left[i + 1:],
                                      picked | {o.id} if is_p else picked)
            for nodes in extend([], tokens, frozenset()):
                yield carried, nodes


def test_criterion_3_lifo_equivalence(verdict):
    t0 = time.perf_counter()
    count = bad = 0
    for n in range(5):
        for carried, nodes in consistent_sequences(n):
            r = Route("v", tuple(carried), tuple((pickup if p else delivery)(o) for o, p in nodes))
            count += 1
            bad += lifo_ok(r) != stack_lifo_ok(carried, nodes)
    # each fresh pickup precedes its delivery: (2n-k)!/2^(n-k) orderings per carried subset
    expected = sum(math.comb(n, k) * math.factorial(2 * n - k) // 2 ** (n - k)
                   for n in range(5) for k in range(n + 1))
    ok = bad == 0 and count == expected
    assert verdict(3, "LIFO check vs stack simulation", ok, time.perf_counter() - t0, 10,
                   f"routes={count} mismatches={bad}")


# -- 4. insertion optimality ----------------------------------------------------

def oracle_value(inst, state, node_lists):
    return reference_cost(inst, starts_of(state), oracle_plans(node_lists), state.time, inst.multipliers)


def feasible(routes_template, node_lists, capacity):
    return all(route_ok(r.carried, nodes, capacity, r.destination, r.locked_deliveries)
               for r, nodes in zip(routes_template, node_lists))


def test_criterion_4_insertion_optimality(verdict):
    t0 = time.perf_counter()
    bad = 0
    for seed in range(100):
        rng = random.Random(4000 + seed)
        inst = random_instance(rng, n_vehicles=2)
        state, make = random_state(rng, inst)
        new = make()
        state = replace(state, unprocessed=state.unprocessed + (new,))
        ctx = SimContext(inst, state)
        sol = WorkingSolution.evaluate(ctx, reconstruct(state))
        base = [nodes_of(r) for r in sol.routes]
        gaps = [r.first_gap for r in sol.routes]
        values = [oracle_value(inst, state, cand) for cand in insertions(base, new, gaps)
                  if feasible(sol.routes, cand, inst.capacity)]
        try:
            got = cheapest_insertion(ctx, sol, new, inst.capacity).value
        except NoInsertionError:
            got = None
        bad += got != (min(values) if values else None)
    assert verdict(4, "cheapest insertion vs exhaustive enumeration", bad == 0,
                   time.perf_counter() - t0, 30, f"mismatches={bad}/100")


# -- 5. neighborhood completeness ----------------------------------------------

def oracle_candidates(routes, operator):
    nodes = [nodes_of(r) for r in routes]
    gaps = [int(r.destination is not None) for r in routes]
    if operator == "relocate-block":
        return list(relocations(nodes, list(block_units(nodes)), gaps))
    if operator == "relocate-bridge":
        return list(relocations(nodes, list(bridge_units(nodes)), gaps))
    return list(exchanges(nodes))


def signature(node_lists):
    return tuple(tuple((o.id, p) for o, p in n) for n in node_lists)


def test_criterion_5_neighborhoods(verdict):
    t0 = time.perf_counter()
    bad = cells = 0
    for seed in range(50):
        rng = random.Random(5000 + seed)
        inst = random_instance(rng, n_vehicles=2)
        state, _ = random_state(rng, inst)
        ctx = SimContext(inst, state)
        sol = WorkingSolution.evaluate(ctx, reconstruct(state))
        for op in OPERATORS:
            cells += 1
            want = [c for c in oracle_candidates(sol.routes, op) if feasible(sol.routes, c, inst.capacity)]
            got = [[nodes_of(r) for r in c] for c in neighbors(sol, op, inst.capacity)]
            same_set = sorted(map(signature, want)) == sorted(map(signature, got))
            best = neighborhood_best(ctx, sol, op, inst.capacity)
            want_best = min((oracle_value(inst, state, c) for c in want), default=None)
            bad += not same_set or (None if best is None else best.value) != want_best
    assert verdict(5, "operator neighborhoods vs brute force", bad == 0, time.perf_counter() - t0, 60,
                   f"mismatches={bad}/{cells}")


# -- 6. VNS descent -------------------------------------------------------------

def block_swap_instance():
    # A=f0, B=f1, C=f2, D=f3; only A-C, B-D and A-B are short
    d = np.full((4, 4), 100.0)
    np.fill_diagonal(d, 0)
    for a, b, x in ((0, 2, 1), (1, 3, 1), (0, 1, 10)):
        d[a, b] = d[b, a] = x
    ids = ("f0", "f1", "f2", "f3")
    x = Order("x", "f1", "f3", 0, 10**6, 1, 1, 1)
    y = Order("y", "f0", "f2", 0, 10**6, 1, 1, 1)
    inst = Instance({f: Factory(f, 2) for f in ids}, TravelModel(ids, d, d.astype(np.int64)),
                    (Vehicle("v1", "f0"), Vehicle("v2", "f1")), (x, y),
                    Multipliers(distance=1.0, tardiness=1.0), dock_time=1, epoch_length=10)
    state = State(0, 0, (VehicleStatus("v1", "f0", 0), VehicleStatus("v2", "f1", 0)), (x, y))
    misassigned = [Route("v1", (), (pickup(x), delivery(x))), Route("v2", (), (pickup(y), delivery(y)))]
    return inst, state, misassigned, (x, y)


def test_criterion_6_vns_descent(verdict):
    t0 = time.perf_counter()
    problems = []
    for seed in range(50):
        rng = random.Random(6000 + seed)
        inst = random_instance(rng, n_vehicles=2)
        state, _ = random_state(rng, inst, max_nodes=6)
        ctx = SimContext(inst, state)
        start = WorkingSolution.evaluate(ctx, reconstruct(state))
        trace = []
        out = vns(ctx, start, inst.capacity, trace=trace)
        values = [start.value] + [m.cost_after for m in trace]
        if any(not improves(b, a) for a, b in zip(values, values[1:])) or out.value != values[-1]:
            problems.append(f"seed {seed}: trace not strictly decreasing")
        for op in OPERATORS:
            cands = [c for c in oracle_candidates(out.routes, op) if feasible(out.routes, c, inst.capacity)]
            if any(improves(oracle_value(inst, state, c), out.value) for c in cands):
                problems.append(f"seed {seed}: {op} still improves")

    inst, state, routes, (x, y) = block_swap_instance()
    ctx = SimContext(inst, state)
    trace = []
    out = vns(ctx, WorkingSolution.evaluate(ctx, routes), inst.capacity, trace=trace)
    # exhaustive search over every feasible joint route for both orders
    everything = [c2 for c1 in insertions([[], []], x, [0, 0]) for c2 in insertions(c1, y, [0, 0])]
    optimum = min(oracle_value(inst, state, c) for c in everything)
    if not (out.value == optimum and [m.operator for m in trace] == ["block-exchange"]):
        problems.append(f"block swap: got {out.value} via {[m.operator for m in trace]}, optimum {optimum}")
    ok = not problems
    assert verdict(6, "VNS descent and local optimality", ok, time.perf_counter() - t0, 120,
                   "; ".join(problems[:3])), problems


# -- 7. episode validity --------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1])
def test_criterion_7_episode_validity(verdict, seed):
    inst = generate(preset("group1", seed=seed))
    t0 = time.perf_counter()
    report, result = run(inst, DispatcherConfig(vns_budget_seconds=2.0, seed=seed))
    seconds = time.perf_counter() - t0
    delivered = {o.id for r in result.realized.records() for o in r.deliveries}
    violations = check_solution(inst, result.realized)
    recomputed = recompute_score(inst, report.routes)
    ok = (delivered == {o.id for o in inst.orders} and not violations and recomputed == report.score
          and inst.epoch_length == 600 and len(inst.vehicles) == 5)
    assert verdict(7, f"group-1 episode (seed {seed})", ok, seconds, 120,
                   f"delivered={len(delivered)}/{len(inst.orders)} violations={len(violations)} "
                   f"score={report.score:.2f} recomputed={recomputed:.2f}")


# -- 8. CFA directional effect --------------------------------------------------

SEEDS = range(5)
ITERS = 200


def mean_over_seeds(preset_name, grid, metric):
    """grid: list of (lambda3, lambda4); returns {cell: [per-seed metric]}."""
    out = {cell: [] for cell in grid}
    for seed in SEEDS:
        inst = generate(preset(preset_name, seed=seed))
        configs = [DispatcherConfig(multipliers=multipliers_for(inst, l3, l4), vns_budget_iterations=ITERS)
                   for l3, l4 in grid]
        for cell, rep in zip(grid, sweep(inst, configs, jobs=len(configs))):
            out[cell].append(metric(rep))
    return out


def test_criterion_8_cfa_direction(verdict):
    t0 = time.perf_counter()
    # congested: waiting penalty lambda3 = 0.5 * lambda2 vs 0, idle penalty off in both
    lam2 = generate(preset("congested", seed=0)).multipliers.tardiness
    wait = mean_over_seeds("congested", [(0.0, 0.0), (0.5 * lam2, 0.0)],
                           lambda r: r.cost["waiting_seconds"])
    w0, w1 = statistics.mean(wait[(0.0, 0.0)]), statistics.mean(wait[(0.5 * lam2, 0.0)])
    # sparse: idle penalty lambda4 = 5 vs 0, waiting penalty off in both
    score = mean_over_seeds("sparse", [(0.0, 0.0), (0.0, 5.0)], lambda r: r.score)
    s0, s5 = statistics.mean(score[(0.0, 0.0)]), statistics.mean(score[(0.0, 5.0)])
    ok = w1 < w0 and s5 <= s0
    assert verdict(8, "CFA penalties move in the expected direction", ok, time.perf_counter() - t0, 600,
                   f"congested waiting {w0:.0f} -> {w1:.0f}; sparse score {s0:.1f} -> {s5:.1f}")


# -- 9. determinism -------------------------------------------------------------

def test_criterion_9_determinism(verdict):
    t0 = time.perf_counter()
    inst = generate(preset("congested", seed=3))
    config = DispatcherConfig(vns_budget_iterations=60, seed=7)
    a, _ = run(inst, config)
    b, _ = run(inst, config)
    ok = a.canonical() == b.canonical() and a.to_json(timing=False) == b.to_json(timing=False)
    assert verdict(9, "iteration-mode runs are bit-identical", ok, time.perf_counter() - t0, 60)
