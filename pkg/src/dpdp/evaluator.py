"""Joint event-driven evaluation of all vehicles' route plans.

Every vehicle departs as early as possible; arrivals queue FCFS at the
factory's docking ports.  ``SimContext`` caches the per-state arrays so the
dispatcher can score thousands of candidate solutions per epoch.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .feasibility import Route, Visit
from .model import CostBreakdown, Instance, Multipliers, Order

if TYPE_CHECKING:
    from .sdp import State


@dataclass(frozen=True)
class VisitRecord:
    vehicle_id: str
    factory: str
    arrival: int
    waiting: int
    departure: int
    deliveries: tuple[Order, ...]
    pickups: tuple[Order, ...]

    def as_dict(self) -> dict:
        return {"vehicle": self.vehicle_id, "factory": self.factory, "arrival": self.arrival,
                "waiting": self.waiting, "departure": self.departure,
                "deliveries": [o.id for o in self.deliveries],
                "pickups": [o.id for o in self.pickups]}


@dataclass
class VehicleTimeline:
    vehicle_id: str
    origin: str | None
    ready_time: int | None
    visits: list[VisitRecord] = field(default_factory=list)
    # actual departure from ``origin`` (realized timelines only)
    departed: int | None = None


@dataclass
class Timeline:
    start_time: int
    vehicles: list[VehicleTimeline]

    def __iter__(self):
        return iter(self.vehicles)

    def records(self) -> Iterable[VisitRecord]:
        for vt in self.vehicles:
            yield from vt.visits

    def windows(self, vehicle_id: str) -> list[tuple[int, int]]:
        for vt in self.vehicles:
            if vt.vehicle_id == vehicle_id:
                return [(r.arrival, r.departure) for r in vt.visits]
        raise KeyError(vehicle_id)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.as_dict()) + "\n" for r in self.records())


def plan_visits(plan) -> tuple[Visit, ...]:
    """Normalise a Route or a sequence of visit-like records to ``Visit`` tuples."""
    if isinstance(plan, Route):
        return plan.visits
    return tuple(Visit(p.factory, tuple(p.deliveries), tuple(p.pickups)) for p in plan)


class SimContext:
    """Evaluation context for one decision state.

    ``multipliers`` weighs the four terms; the idle term counts vehicles with
    an empty plan whose earliest departure precedes the next update time.
    """

    def __init__(self, instance: Instance, state: "State", multipliers: Multipliers | None = None,
                 tie_rank: Sequence[int] | None = None):
        self.instance = instance
        self.state = state
        self.multipliers = multipliers or instance.multipliers
        tm = instance.travel_model
        self.index = tm.index
        self.dist = tm.dist
        self.travel = tm.travel
        self.ports = np.array([instance.factories[f].port_count for f in tm.factory_ids], np.int64)
        self.now = int(state.time)
        self.epoch_end = self.now + instance.epoch_length
        statuses = state.statuses
        self.vehicle_ids = [s.vehicle_id for s in statuses]
        n = len(statuses)
        self.start_kind = np.empty(n, np.int64)
        self.start_factory = np.full(n, -1, np.int64)
        self.start_time = np.empty(n, np.int64)
        self.idle_eligible = np.zeros(n, bool)
        for v, s in enumerate(statuses):
            if s.current_factory is not None:
                self.start_kind[v] = _kernels.DOCKED
                self.start_factory[v] = self.index[s.current_factory]
                self.start_time[v] = s.earliest_departure
                self.idle_eligible[v] = s.earliest_departure < self.epoch_end
            else:
                self.start_kind[v] = _kernels.IN_TRANSIT
                self.start_time[v] = s.plan[0].arrival
        self.rank = np.asarray(tie_rank if tie_rank is not None else range(n), np.int64)
        self._cache: dict[int, tuple] = {}

    # -- compilation -----------------------------------------------------
    def _compile(self, plan):
        key = id(plan)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is plan:
            return hit[1]
        visits = plan_visits(plan)
        dock = self.instance.dock_time
        fac = np.fromiter((self.index[v.factory] for v in visits), np.int64, len(visits))
        service = np.fromiter(
            (dock + sum(o.unload_time for o in v.deliveries) + sum(o.load_time for o in v.pickups)
             for v in visits), np.int64, len(visits))
        counts = np.fromiter((len(v.deliveries) for v in visits), np.int64, len(visits))
        due = np.fromiter((o.due_date for v in visits for o in v.deliveries), np.int64)
        legs = float(self.dist[fac[:-1], fac[1:]].sum()) if len(fac) > 1 else 0.0
        compiled = (fac, service, counts, due, legs)
        if len(self._cache) > 50000:
            self._cache.clear()
        self._cache[key] = (plan, compiled)
        return compiled

    def run(self, plans: Sequence, horizon: int = _kernels.FOREVER):
        """Run the kernel over per-vehicle plans (in ``state.statuses`` order)."""
        parts = [self._compile(p) for p in plans]
        sizes = np.fromiter((len(p[0]) for p in parts), np.int64, len(parts))
        visit_ptr = np.zeros(len(parts) + 1, np.int64)
        np.cumsum(sizes, out=visit_ptr[1:])
        if parts:
            fac = np.concatenate([p[0] for p in parts])
            service = np.concatenate([p[1] for p in parts])
            counts = np.concatenate([p[2] for p in parts])
            due = np.concatenate([p[3] for p in parts])
        else:
            fac = service = counts = due = np.zeros(0, np.int64)
        due_ptr = np.zeros(len(counts) + 1, np.int64)
        np.cumsum(counts, out=due_ptr[1:])
        out = _kernels.simulate_plans(self.start_kind, self.start_factory, self.start_time, self.rank,
                                      visit_ptr, fac, service, due_ptr, due,
                                      self.travel, self.ports, np.int64(self.now), np.int64(horizon))
        return parts, visit_ptr, out

    # -- scoring ---------------------------------------------------------
    def terms(self, plans: Sequence) -> tuple[float, int, int, int]:
        parts, _, out = self.run(plans)
        f1 = 0.0
        f4 = 0
        for v, p in enumerate(parts):
            if len(p[0]) == 0:
                if self.start_kind[v] == _kernels.DOCKED and self.idle_eligible[v]:
                    f4 += 1
                continue
            f1 += p[4]
            if self.start_kind[v] == _kernels.DOCKED:
                f1 += self.dist[self.start_factory[v], p[0][0]]
        return f1, int(out[6]), int(out[7]), f4

    def cost(self, plans: Sequence) -> CostBreakdown:
        return CostBreakdown.from_terms(*self.terms(plans), self.multipliers)

    def timeline(self, plans: Sequence) -> Timeline:
        parts, visit_ptr, out = self.run(plans)
        arrival, waiting, departure = out[0], out[1], out[2]
        vehicles = []
        for v, (vid, plan) in enumerate(zip(self.vehicle_ids, plans)):
            status = self.state.statuses[v]
            vt = VehicleTimeline(vid, status.current_factory, status.earliest_departure)
            for j, visit in enumerate(plan_visits(plan)):
                g = visit_ptr[v] + j
                vt.visits.append(VisitRecord(vid, visit.factory, int(arrival[g]), int(waiting[g]),
                                             int(departure[g]), visit.deliveries, visit.pickups))
            vehicles.append(vt)
        return Timeline(self.now, vehicles)


def _ordered_plans(state: "State", plans: Mapping[str, object]) -> list:
    return [plans.get(s.vehicle_id, ()) for s in state.statuses]


def simulate(instance: Instance, state: "State", plans: Mapping[str, object]) -> Timeline:
    """Timeline of all vehicles' plans (Routes or visit sequences) from ``state``."""
    return SimContext(instance, state).timeline(_ordered_plans(state, plans))


def tardiness(records: Iterable[VisitRecord], per_parent: bool) -> int:
    """Sum of delivery lateness; with ``per_parent`` split fragments count once (worst one)."""
    if not per_parent:
        return sum(max(0, r.arrival - o.due_date) for r in records for o in r.deliveries)
    worst: dict[str, int] = defaultdict(int)
    for r in records:
        for o in r.deliveries:
            worst[o.root_id] = max(worst[o.root_id], r.arrival - o.due_date)
    return sum(worst.values())


def cost_terms(timeline: Timeline, instance: Instance, multipliers: Multipliers,
               mode: str = "perturbed", epoch_end: int | None = None) -> CostBreakdown:
    """Cost terms of a timeline.

    ``mode="true"`` zeroes the waiting and idle multipliers and charges a split
    order's tardiness once per parent; ``mode="perturbed"`` needs ``epoch_end``
    for the idle-vehicle count.
    """
    if mode not in ("true", "perturbed"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "perturbed" and epoch_end is None:
        raise ValueError("perturbed mode needs epoch_end")
    tm = instance.travel_model
    f1 = 0.0
    f4 = 0
    for vt in timeline:
        if not vt.visits:
            if (epoch_end is not None and vt.origin is not None and vt.ready_time is not None
                    and vt.ready_time < epoch_end):
                f4 += 1
            continue
        if vt.origin is not None:
            f1 += tm.distance(vt.origin, vt.visits[0].factory)
        for a, b in zip(vt.visits, vt.visits[1:]):
            f1 += tm.distance(a.factory, b.factory)
    records = list(timeline.records())
    f2 = tardiness(records, per_parent=(mode == "true"))
    f3 = sum(r.waiting for r in records)
    if mode == "true":
        return CostBreakdown.from_terms(f1, f2, f3, f4, multipliers.true_objective())
    return CostBreakdown.from_terms(f1, f2, f3, f4, multipliers)


def committed_time(status, now: int, timeline: Timeline | None = None) -> int:
    """Time span after ``now`` that the next decision can no longer change."""
    if status.current_factory is not None:
        return max(0, status.earliest_departure - now)
    if timeline is not None:
        for vt in timeline:
            if vt.vehicle_id == status.vehicle_id and vt.visits:
                return vt.visits[0].departure - now
    return status.plan[0].departure - now
