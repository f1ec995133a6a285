"""Cost-function-approximation dispatcher: cheapest insertion plus VNS descent.

Solutions are scored by the perturbed reward (distance, tardiness, waiting
and idle-vehicle terms) through a full joint simulation of every vehicle,
because port contention couples the routes.
"""
from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

from .evaluator import SimContext
from .feasibility import (Route, capacity_ok, destination_ok, enumerate_blocks,
                          enumerate_maximal_bridges, insert_order)
from .model import CostBreakdown, Instance, Multipliers, Order, estimated_delay
from .sdp import Action, PlanVisit, State

log = logging.getLogger(__name__)

OPERATORS = ("relocate-bridge", "block-exchange", "relocate-block")


class NoInsertionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DispatcherConfig:
    multipliers: Multipliers | None = None
    urgency_threshold: int | None = None
    vns_budget_seconds: float | None = None
    vns_budget_iterations: int | None = None
    seed: int = 0
    disturbance_enabled: bool = False
    # wall-clock cap on construction plus descent; None means unbounded
    epoch_budget_seconds: float | None = None


@dataclass
class WorkingSolution:
    routes: list[Route]
    cost: CostBreakdown

    @property
    def value(self) -> float:
        return self.cost.weighted_total

    @classmethod
    def evaluate(cls, ctx: SimContext, routes: Sequence[Route]) -> "WorkingSolution":
        routes = list(routes)
        return cls(routes, ctx.cost(routes))


class UrgencyPartition(NamedTuple):
    urgent: list[Order]
    non_urgent: list[Order]
    delay: dict[str, int]

    @property
    def sequence(self) -> list[Order]:
        return self.urgent + self.non_urgent


@dataclass
class Move:
    operator: str
    cost_before: float
    cost_after: float

    @property
    def delta(self) -> float:
        return self.cost_after - self.cost_before


class _Deadline:
    def __init__(self, seconds: float | None):
        self.at = None if seconds is None else time.perf_counter() + seconds

    def passed(self) -> bool:
        return self.at is not None and time.perf_counter() >= self.at

    def remaining(self) -> float | None:
        return None if self.at is None else max(0.0, self.at - time.perf_counter())


NEVER = _Deadline(None)


def reconstruct(state: State, previous: Sequence[Route] | None = None) -> list[Route]:
    """Routes implied by the state's plans.

    The state already carries the previous plans with executed visits cut
    off, so ``previous`` is only checked for vehicle alignment.
    """
    routes = [s.route() for s in state.statuses]
    if previous is not None and [r.vehicle_id for r in previous] != [r.vehicle_id for r in routes]:
        raise ValueError("previous solution does not match the state's vehicles")
    return routes


def classify_and_order(state: State, instance: Instance, threshold: int | None = None,
                       exclude: set[str] = frozenset()) -> UrgencyPartition:
    """Split unprocessed orders into urgent (slack <= threshold) and the rest.

    Within each class orders are grouped by pickup factory (ascending id);
    inside a group larger estimated delay comes first, ties by order id.
    """
    U = instance.urgency_threshold if threshold is None else threshold
    delay = {o.id: estimated_delay(o, state.time, instance.travel_model, instance.dock_time)
             for o in state.unprocessed if o.id not in exclude}
    todo = [o for o in state.unprocessed if o.id in delay]
    key = lambda o: (o.pickup_factory, -delay[o.id], o.id)
    urgent = sorted((o for o in todo if delay[o.id] <= U), key=key)
    rest = sorted((o for o in todo if delay[o.id] > U), key=key)
    return UrgencyPartition(urgent, rest, delay)


def cheapest_insertion(ctx: SimContext, solution: WorkingSolution, order: Order,
                       capacity: int) -> WorkingSolution:
    """Insert ``order`` where the perturbed reward is lowest.

    Every vehicle and every pickup/delivery gap pair is tried; ties keep the
    first candidate in (vehicle index, pickup gap, delivery gap) order.
    """
    best: WorkingSolution | None = None
    routes = solution.routes
    for v, route in enumerate(routes):
        n = len(route.nodes)
        for p in range(route.first_gap, n + 1):
            for d in range(p, n + 1):
                new = insert_order(route, order, p, d, capacity)
                if new is None:
                    continue
                cand = routes[:v] + [new] + routes[v + 1:]
                cost = ctx.cost(cand)
                if best is None or cost.weighted_total < best.value:
                    best = WorkingSolution(cand, cost)
    if best is None:
        raise NoInsertionError(f"order {order.id} cannot be inserted anywhere")
    return best


# -- neighborhoods ---------------------------------------------------------

def _feasible(route: Route, capacity: int) -> bool:
    return capacity_ok(route, capacity) and destination_ok(route)


def _relocate_candidates(routes: list[Route], capacity: int, units):
    """Yield candidate route lists for moving each ``(v, kept, unit, origin)``.

    ``kept`` are the route's nodes with the unit removed; the unit goes to
    every gap of every route (the origin gap of the same route is skipped).
    """
    for v, kept, unit, origin in units:
        src = routes[v].with_nodes(kept)
        for w, target in enumerate(routes):
            base = src if w == v else target
            for g in range(base.first_gap, len(base.nodes) + 1):
                if w == v and g == origin:
                    continue
                moved = base.with_nodes(base.nodes[:g] + unit + base.nodes[g:])
                if not _feasible(moved, capacity):
                    continue
                if w == v:
                    yield routes[:v] + [moved] + routes[v + 1:]
                else:
                    if not destination_ok(src):
                        continue
                    out = list(routes)
                    out[v] = src
                    out[w] = moved
                    yield out


def _block_units(routes: list[Route]):
    for v, route in enumerate(routes):
        nodes = route.nodes
        for b in enumerate_blocks(route):
            yield v, nodes[:b.start] + nodes[b.end + 1:], nodes[b.start:b.end + 1], b.start


def _bridge_units(routes: list[Route]):
    for v, route in enumerate(routes):
        nodes = route.nodes
        for br in enumerate_maximal_bridges(route):
            ps, ds, k = br.pickup_start, br.delivery_start, br.size
            unit = nodes[ps:ps + k] + nodes[ds:ds + k]
            kept = nodes[:ps] + nodes[ps + k:ds] + nodes[ds + k:]
            # already adjacent: putting it back at its own start is the identity
            origin = ps if ds == ps + k else -1
            yield v, kept, unit, origin


def _exchange_candidates(routes: list[Route], capacity: int):
    blocks = [(v, b) for v, r in enumerate(routes) for b in enumerate_blocks(r)]
    for i, (v1, b1) in enumerate(blocks):
        for v2, b2 in blocks[i + 1:]:
            if v1 == v2:
                if not (b1.end < b2.start or b2.end < b1.start):
                    continue  # nested blocks
                lo, hi = (b1, b2) if b1.start < b2.start else (b2, b1)
                n = routes[v1].nodes
                new = routes[v1].with_nodes(n[:lo.start] + n[hi.start:hi.end + 1]
                                            + n[lo.end + 1:hi.start]
                                            + n[lo.start:lo.end + 1] + n[hi.end + 1:])
                if _feasible(new, capacity):
                    yield routes[:v1] + [new] + routes[v1 + 1:]
            else:
                n1, n2 = routes[v1].nodes, routes[v2].nodes
                r1 = routes[v1].with_nodes(n1[:b1.start] + n2[b2.start:b2.end + 1] + n1[b1.end + 1:])
                r2 = routes[v2].with_nodes(n2[:b2.start] + n1[b1.start:b1.end + 1] + n2[b2.end + 1:])
                if _feasible(r1, capacity) and _feasible(r2, capacity):
                    out = list(routes)
                    out[v1], out[v2] = r1, r2
                    yield out


def neighbors(solution: WorkingSolution, operator: str, capacity: int):
    """All feasible neighbor route lists of ``operator``, in canonical order."""
    routes = solution.routes
    if operator == "relocate-block":
        return _relocate_candidates(routes, capacity, _block_units(routes))
    if operator == "relocate-bridge":
        return _relocate_candidates(routes, capacity, _bridge_units(routes))
    if operator == "block-exchange":
        return _exchange_candidates(routes, capacity)
    raise ValueError(f"unknown operator {operator!r}")


def neighborhood_best(ctx: SimContext, solution: WorkingSolution, operator: str, capacity: int,
                      deadline: _Deadline = NEVER) -> WorkingSolution | None:
    """Least-cost neighbor (first in canonical order on ties), or None if the
    neighborhood is empty.  A passed deadline truncates the scan."""
    best = None
    for cand in neighbors(solution, operator, capacity):
        cost = ctx.cost(cand)
        if best is None or cost.weighted_total < best.value:
            best = WorkingSolution(cand, cost)
        if deadline.passed():
            break
    return best


def improves(new: float, cur: float) -> bool:
    return new < cur - 1e-9 * abs(cur)


def _descend(ctx, solution, capacity, deadline, budget, trace):
    i = 0
    while i < len(OPERATORS):
        if deadline.passed() or (budget is not None and budget[0] <= 0):
            return solution, False
        if budget is not None:
            budget[0] -= 1
        op = OPERATORS[i]
        cand = neighborhood_best(ctx, solution, op, capacity, deadline)
        if cand is not None and improves(cand.value, solution.value):
            trace.append(Move(op, solution.value, cand.value))
            solution = cand
            i = 0
        else:
            i += 1
    return solution, True


def random_relocation(solution: WorkingSolution, rng: random.Random, capacity: int,
                      ctx: SimContext) -> WorkingSolution | None:
    """Disturbance: a uniformly drawn feasible block relocation."""
    cands = list(neighbors(solution, "relocate-block", capacity))
    if not cands:
        return None
    return WorkingSolution.evaluate(ctx, rng.choice(cands))


def vns(ctx: SimContext, solution: WorkingSolution, capacity: int, *,
        budget_seconds: float | None = None, budget_iterations: int | None = None,
        trace: list[Move] | None = None, disturbance: Callable | None = None,
        rng: random.Random | None = None) -> WorkingSolution:
    """Best-improvement descent over the three neighborhoods.

    ``budget_iterations`` counts neighborhood scans.  With a disturbance hook
    the search restarts from a disturbed copy of the incumbent at each local
    optimum until the budget runs out (requires a budget).
    """
    trace = [] if trace is None else trace
    deadline = _Deadline(budget_seconds)
    budget = None if budget_iterations is None else [budget_iterations]
    best, local = _descend(ctx, solution, capacity, deadline, budget, trace)
    if disturbance is None or not local:
        return best
    if budget_seconds is None and budget_iterations is None:
        raise ValueError("a disturbance needs a time or iteration budget")
    rng = rng or random.Random(0)
    while not deadline.passed() and (budget is None or budget[0] > 0):
        start = disturbance(best, rng, capacity, ctx)
        if start is None:
            break
        if budget is not None:
            budget[0] -= 1
        scratch: list[Move] = []
        cand, _ = _descend(ctx, start, capacity, deadline, budget, scratch)
        if improves(cand.value, best.value):
            trace.append(Move("disturbance", best.value, cand.value))
            best = cand
    return best


def to_action(ctx: SimContext, routes: Sequence[Route]) -> Action:
    """Visit lists with the tentative times of the joint simulation."""
    timeline = ctx.timeline(list(routes))
    plans = {}
    for vt in timeline:
        plans[vt.vehicle_id] = tuple(PlanVisit(r.factory, r.arrival, r.departure, r.deliveries, r.pickups)
                                     for r in vt.visits)
    return Action(plans)


@dataclass
class Decision:
    action: Action
    solution: WorkingSolution
    inserted: list[str]
    postponed: list[str]
    trace: list[Move] = field(default_factory=list)
    seconds: float = 0.0


def decide(state: State, instance: Instance, config: DispatcherConfig = DispatcherConfig(),
           previous: Sequence[Route] | None = None) -> Decision:
    t0 = time.perf_counter()
    deadline = _Deadline(config.epoch_budget_seconds)
    mult = config.multipliers or instance.multipliers
    ctx = SimContext(instance, state, mult)
    routes = reconstruct(state, previous)
    planned = set().union(*(r.order_ids for r in routes)) if routes else set()
    part = classify_and_order(state, instance, config.urgency_threshold, planned)
    sol = WorkingSolution.evaluate(ctx, routes)
    inserted, postponed = [], []
    for o in part.sequence:
        if deadline.passed():
            postponed.append(o.id)
            continue
        sol = cheapest_insertion(ctx, sol, o, instance.capacity)
        inserted.append(o.id)
    budget = config.vns_budget_seconds
    left = deadline.remaining()
    if left is not None:
        budget = left if budget is None else min(budget, left)
    trace: list[Move] = []
    sol = vns(ctx, sol, instance.capacity, budget_seconds=budget,
              budget_iterations=config.vns_budget_iterations, trace=trace,
              disturbance=random_relocation if config.disturbance_enabled else None,
              rng=random.Random(config.seed * 1_000_003 + state.epoch))
    return Decision(to_action(ctx, sol.routes), sol, inserted, postponed, trace,
                    time.perf_counter() - t0)


class CfaVnsDispatcher:
    """Callable policy for :func:`dpdp.sdp.run_episode`."""

    def __init__(self, instance: Instance, config: DispatcherConfig = DispatcherConfig()):
        self.instance = instance
        self.config = config
        self.decisions: list[Decision] = []
        self._previous: list[Route] | None = None

    def __call__(self, state: State) -> Action:
        prev = self._previous
        if prev is not None and [r.vehicle_id for r in prev] != [s.vehicle_id for s in state.statuses]:
            prev = None
        d = decide(state, self.instance, self.config, prev)
        self.decisions.append(d)
        self._previous = d.solution.routes
        for m in d.trace:
            log.debug("epoch %d %s %.6f -> %.6f", state.epoch, m.operator, m.cost_before, m.cost_after)
        return d.action
