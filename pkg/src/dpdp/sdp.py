"""Epoch-based sequential decision process: states, actions, transitions."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .evaluator import SimContext, Timeline, VehicleTimeline, VisitRecord, committed_time, cost_terms, plan_visits
from .feasibility import Route, RouteError, capacity_ok, check_consistency, delivery, lifo_ok, pickup
from .model import CostBreakdown, Instance, Order, service_time

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanVisit:
    factory: str
    arrival: int | None
    departure: int | None
    deliveries: tuple[Order, ...] = ()
    pickups: tuple[Order, ...] = ()

    def as_dict(self) -> dict:
        return {"factory": self.factory, "arrival": self.arrival, "departure": self.departure,
                "deliveries": [o.id for o in self.deliveries],
                "pickups": [o.id for o in self.pickups]}


@dataclass(frozen=True)
class VehicleStatus:
    """Where a vehicle is at an update time.

    Docked (``current_factory`` set, possibly idle-parked) or in transit to
    ``plan[0]``, whose factory and arrival time are then fixed.
    """

    vehicle_id: str
    current_factory: str | None
    earliest_departure: int | None
    carried: tuple[Order, ...] = ()
    plan: tuple[PlanVisit, ...] = ()
    arrived_at: int | None = None
    service_start: int | None = None

    def __post_init__(self):
        if self.current_factory is None:
            if not self.plan or self.plan[0].arrival is None:
                raise ValueError(f"vehicle {self.vehicle_id}: in transit without a destination")
        elif self.earliest_departure is None:
            raise ValueError(f"vehicle {self.vehicle_id}: docked without earliest departure")

    @property
    def in_transit(self) -> bool:
        return self.current_factory is None

    @property
    def destination(self) -> str | None:
        return self.plan[0].factory if self.in_transit else None

    def route(self) -> Route:
        """The plan in node form (deliveries before pickups within each visit)."""
        nodes = []
        for v in self.plan:
            nodes.extend(delivery(o) for o in v.deliveries)
            nodes.extend(pickup(o) for o in v.pickups)
        if self.in_transit:
            return Route(self.vehicle_id, self.carried, tuple(nodes), self.plan[0].factory,
                         frozenset(o.id for o in self.plan[0].deliveries))
        return Route(self.vehicle_id, self.carried, tuple(nodes))


@dataclass(frozen=True)
class State:
    epoch: int
    time: int
    statuses: tuple[VehicleStatus, ...]
    unprocessed: tuple[Order, ...]

    def status(self, vehicle_id: str) -> VehicleStatus:
        for s in self.statuses:
            if s.vehicle_id == vehicle_id:
                return s
        raise KeyError(vehicle_id)


@dataclass(frozen=True)
class Action:
    plans: Mapping[str, tuple[PlanVisit, ...]]

    @classmethod
    def from_routes(cls, routes: Iterable[Route]) -> "Action":
        return cls({r.vehicle_id: tuple(PlanVisit(v.factory, None, None, v.deliveries, v.pickups)
                                        for v in r.visits) for r in routes})

    def as_dict(self) -> dict:
        return {vid: [v.as_dict() for v in plan] for vid, plan in sorted(self.plans.items())}

    def digest(self) -> str:
        skeleton = {vid: [(v["factory"], v["deliveries"], v["pickups"]) for v in plan]
                    for vid, plan in self.as_dict().items()}
        return hashlib.sha256(json.dumps(skeleton, sort_keys=True).encode()).hexdigest()[:16]


class Violation(NamedTuple):
    kind: str
    vehicle_id: str | None
    detail: str


class InvalidActionError(RuntimeError):
    def __init__(self, violations: Sequence[Violation], epoch: int | None = None):
        self.violations = list(violations)
        self.epoch = epoch
        lines = "; ".join(f"{v.kind}[{v.vehicle_id}]: {v.detail}" for v in self.violations[:10])
        super().__init__(f"invalid action at epoch {epoch}: {lines}")


Dispatcher = Callable[[State], Action]


def initial_state(instance: Instance) -> State:
    statuses = tuple(VehicleStatus(v.id, v.initial_factory, 0) for v in instance.vehicles)
    return State(0, 0, statuses, tuple(reveal(instance, 0)))


def reveal(instance: Instance, k: int) -> list[Order]:
    """Orders released in ``(tau_{k-1}, tau_k]`` (``k == 0``: released at or before 0)."""
    hi = k * instance.epoch_length
    if k == 0:
        return [o for o in instance.orders if o.release_time <= hi]
    lo = hi - instance.epoch_length
    return [o for o in instance.orders if lo < o.release_time <= hi]


def _visit_route(status: VehicleStatus, plan: Sequence[PlanVisit]) -> Route:
    nodes = []
    for v in plan:
        nodes.extend(delivery(o) for o in v.deliveries)
        nodes.extend(pickup(o) for o in v.pickups)
    return Route(status.vehicle_id, status.carried, tuple(nodes))


def validate_action(state: State, action: Action, instance: Instance) -> list[Violation]:
    """All feasibility violations of ``action`` in ``state`` (empty list = valid)."""
    out: list[Violation] = []
    known = {s.vehicle_id for s in state.statuses}
    for vid in action.plans:
        if vid not in known:
            out.append(Violation("unknown-vehicle", vid, "no such vehicle"))
    unprocessed = {o.id for o in state.unprocessed}
    owner: dict[str, str] = {}
    for status in state.statuses:
        vid = status.vehicle_id
        plan = tuple(action.plans.get(vid, ()))
        for v in plan:
            for o in v.pickups:
                if o.pickup_factory != v.factory:
                    out.append(Violation("factory", vid, f"{o.id} picked up at {v.factory}"))
                if o.id not in unprocessed:
                    out.append(Violation("unprocessed", vid, f"{o.id} is not an unprocessed order"))
            for o in v.deliveries:
                if o.delivery_factory != v.factory:
                    out.append(Violation("factory", vid, f"{o.id} delivered at {v.factory}"))
        served = [o.id for o in status.carried] + [o.id for v in plan for o in v.pickups]
        for oid in served:
            if oid in owner and owner[oid] != vid:
                out.append(Violation("compatibility", vid, f"{oid} also served by {owner[oid]}"))
            owner.setdefault(oid, vid)
        route = _visit_route(status, plan)
        try:
            check_consistency(route)
        except RouteError as exc:
            out.append(Violation("order-consistency", vid, str(exc)))
        else:
            if not lifo_ok(route):
                out.append(Violation("lifo", vid, "loading order violates LIFO"))
        if not capacity_ok(route, instance.capacity):
            out.append(Violation("capacity", vid, "load exceeds capacity"))
        if status.in_transit:
            locked = status.plan[0]
            if not plan or plan[0].factory != locked.factory:
                out.append(Violation("destination-lock", vid,
                                     f"first visit must stay {locked.factory}"))
            elif {o.id for o in plan[0].deliveries} != {o.id for o in locked.deliveries}:
                out.append(Violation("destination-lock", vid, "deliveries at destination changed"))
    return out


@dataclass
class Advance:
    """Result of moving from one update time to the next."""

    state: State
    records: dict[str, list[VisitRecord]]
    left_at: dict[str, int]
    picked: set[str]
    delivered: set[str]


def advance(state: State, action: Action, instance: Instance,
            tie_rank: Sequence[int] | None = None) -> Advance:
    """Simulate ``action`` jointly and stop at the next update time.

    Events at exactly the next update time belong to the new state.  Every
    vehicle ends in one of: docked (still in service, possibly just arrived),
    in transit to its next visit, or parked and available.
    """
    H = state.time + instance.epoch_length
    ctx = SimContext(instance, state, tie_rank=tie_rank)
    plans = [tuple(action.plans.get(s.vehicle_id, ())) for s in state.statuses]
    parts, visit_ptr, out = ctx.run(plans)
    arrival, waiting, departure = out[0], out[1], out[2]
    statuses = []
    records: dict[str, list[VisitRecord]] = {}
    left_at: dict[str, int] = {}
    picked: set[str] = set()
    delivered: set[str] = set()
    for v, status in enumerate(state.statuses):
        vid = status.vehicle_id
        visits = plan_visits(plans[v])
        b = int(visit_ptr[v])
        m = 0
        while m < len(visits) and arrival[b + m] <= H:
            m += 1
        if status.in_transit:
            left = True
        else:
            leave = max(status.earliest_departure, state.time)
            left = bool(visits) and leave <= H
            if left:
                left_at[vid] = leave
        carried = list(status.carried)
        recs = []
        for j in range(m):
            vis = visits[j]
            gone = {o.id for o in vis.deliveries}
            carried = [o for o in carried if o.id not in gone] + list(vis.pickups)
            recs.append(VisitRecord(vid, vis.factory, int(arrival[b + j]), int(waiting[b + j]),
                                    int(departure[b + j]), vis.deliveries, vis.pickups))
            picked.update(o.id for o in vis.pickups)
            delivered.update(gone)
        records[vid] = recs
        rest = tuple(PlanVisit(visits[j].factory, int(arrival[b + j]), int(departure[b + j]),
                               visits[j].deliveries, visits[j].pickups)
                     for j in range(m, len(visits)))
        if m > 0:
            last_dep = int(departure[b + m - 1])
            if last_dep > H:
                new = VehicleStatus(vid, visits[m - 1].factory, last_dep, tuple(carried), rest,
                                    int(arrival[b + m - 1]), int(arrival[b + m - 1] + waiting[b + m - 1]))
            elif rest:
                new = VehicleStatus(vid, None, None, tuple(carried), rest)
            else:
                new = VehicleStatus(vid, visits[m - 1].factory, H, tuple(carried), (),
                                    int(arrival[b + m - 1]), int(arrival[b + m - 1] + waiting[b + m - 1]))
        elif status.in_transit or left:
            new = VehicleStatus(vid, None, None, tuple(carried), rest)
        elif status.earliest_departure > H:
            new = VehicleStatus(vid, status.current_factory, status.earliest_departure,
                                tuple(carried), rest, status.arrived_at, status.service_start)
        else:
            new = VehicleStatus(vid, status.current_factory, H, tuple(carried), rest,
                                status.arrived_at, status.service_start)
        statuses.append(new)
    k1 = state.epoch + 1
    unprocessed = [o for o in state.unprocessed if o.id not in picked] + reveal(instance, k1)
    nxt = State(k1, H, tuple(statuses), tuple(unprocessed))
    return Advance(nxt, records, left_at, picked, delivered)


def transition(state: State, action: Action, instance: Instance) -> State:
    violations = validate_action(state, action, instance)
    if violations:
        raise InvalidActionError(violations, state.epoch)
    return advance(state, action, instance).state


def waiting_vehicles(state: State) -> int:
    """Vehicles queued for a port at the update time."""
    return sum(1 for s in state.statuses
               if s.current_factory is not None and s.arrived_at is not None
               and s.arrived_at <= state.time < s.service_start)


def mean_committed_time(state: State) -> float:
    if not state.statuses:
        return 0.0
    return float(np.mean([committed_time(s, state.time) for s in state.statuses]))


@dataclass
class EpochRecord:
    epoch: int
    time: int
    revealed: list[str]
    action: dict
    action_digest: str
    vehicles: list[dict]
    waiting_vehicles: int
    mean_committed_time: float
    decision_seconds: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpisodeResult:
    realized: Timeline
    cost: CostBreakdown
    epochs: list[EpochRecord] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)

    @property
    def score(self) -> float:
        return self.cost.weighted_total


def _vehicle_summary(s: VehicleStatus) -> dict:
    return {"vehicle": s.vehicle_id, "current": s.current_factory,
            "earliest_departure": s.earliest_departure,
            "destination": s.destination, "carried": [o.id for o in s.carried],
            "plan_length": len(s.plan)}


def run_episode(instance: Instance, dispatcher: Dispatcher, *, max_epochs: int | None = None,
                on_epoch: Callable[[EpochRecord], None] | None = None,
                tie_rank: Sequence[int] | None = None) -> EpisodeResult:
    """Drive the decision process until every order is delivered.

    Raises :class:`InvalidActionError` if the dispatcher emits an infeasible
    action and ``RuntimeError`` if ``max_epochs`` is exhausted.
    """
    import time as _time

    if max_epochs is None:
        last_release = max((o.release_time for o in instance.orders), default=0)
        max_epochs = last_release // instance.epoch_length + 2000
    state = initial_state(instance)
    realized = Timeline(0, [VehicleTimeline(v.id, v.initial_factory, 0) for v in instance.vehicles])
    by_vid = {vt.vehicle_id: vt for vt in realized.vehicles}
    delivered: set[str] = set()
    total = len(instance.orders)
    epochs: list[EpochRecord] = []
    revealed = [o.id for o in state.unprocessed]
    while len(delivered) < total:
        if state.epoch >= max_epochs:
            raise RuntimeError(f"episode did not finish within {max_epochs} epochs")
        t0 = _time.perf_counter()
        action = dispatcher(state)
        elapsed = _time.perf_counter() - t0
        violations = validate_action(state, action, instance)
        if violations:
            raise InvalidActionError(violations, state.epoch)
        rec = EpochRecord(state.epoch, state.time, revealed, action.as_dict(), action.digest(),
                          [_vehicle_summary(s) for s in state.statuses],
                          waiting_vehicles(state), mean_committed_time(state), elapsed)
        epochs.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        step = advance(state, action, instance, tie_rank=tie_rank)
        for vid, t in step.left_at.items():
            vt = by_vid[vid]
            if vt.visits:
                vt.visits[-1] = _with_departure(vt.visits[-1], t)
            else:
                vt.departed = t
        for vid, recs in step.records.items():
            by_vid[vid].visits.extend(recs)
        delivered |= step.delivered
        state = step.state
        revealed = [o.id for o in reveal(instance, state.epoch)]
    for vt in realized.vehicles:
        if vt.departed is None and not vt.visits:
            vt.departed = 0
    violations = check_solution(instance, realized)
    if violations:
        raise InvalidActionError(violations, state.epoch)
    cost = cost_terms(realized, instance, instance.multipliers, mode="true")
    return EpisodeResult(realized, cost, epochs)


def _with_departure(r: VisitRecord, t: int) -> VisitRecord:
    return VisitRecord(r.vehicle_id, r.factory, r.arrival, r.waiting, t, r.deliveries, r.pickups)


def check_solution(instance: Instance, realized: Timeline) -> list[Violation]:
    """Feasibility of a finished episode's routes (every order served once,
    pickup before delivery, LIFO, capacity, fixed travel times, service)."""
    out: list[Violation] = []
    tm = instance.travel_model
    owner: dict[str, str] = {}
    delivered_by: dict[str, str] = {}
    for vt in realized:
        vid = vt.vehicle_id
        picked_at: dict[str, int] = {}
        for j, r in enumerate(vt.visits):
            for o in r.pickups:
                if o.id in owner:
                    out.append(Violation("orders", vid, f"{o.id} picked up twice"))
                owner[o.id] = vid
                picked_at[o.id] = j
                if r.arrival < o.release_time:
                    out.append(Violation("release", vid, f"{o.id} picked up before release"))
            for o in r.deliveries:
                if o.id in delivered_by:
                    out.append(Violation("orders", vid, f"{o.id} delivered twice"))
                delivered_by[o.id] = vid
                if picked_at.get(o.id, j) >= j:
                    out.append(Violation("precedence", vid, f"{o.id} not picked up before delivery"))
        route = Route(vid, (), tuple(n for r in vt.visits
                                     for n in [delivery(o) for o in r.deliveries]
                                     + [pickup(o) for o in r.pickups]))
        try:
            check_consistency(route)
            if not lifo_ok(route):
                out.append(Violation("lifo", vid, "realized route violates LIFO"))
        except RouteError as exc:
            out.append(Violation("order-consistency", vid, str(exc)))
        if not capacity_ok(route, instance.capacity):
            out.append(Violation("capacity", vid, "realized route exceeds capacity"))
        prev_f, prev_t = vt.origin, vt.departed
        for r in vt.visits:
            if prev_t is not None and r.arrival - prev_t != tm.time(prev_f, r.factory):
                out.append(Violation("travel", vid, f"arrival at {r.factory} at {r.arrival} "
                                                    f"inconsistent with departure {prev_t}"))
            if r.arrival + r.waiting + service_time(r.deliveries, r.pickups, instance.dock_time) > r.departure:
                out.append(Violation("service", vid, f"departure from {r.factory} before service end"))
            prev_f, prev_t = r.factory, r.departure
    for o in instance.orders:
        if o.id not in owner or o.id not in delivered_by:
            out.append(Violation("orders", None, f"{o.id} not served"))
        elif owner[o.id] != delivered_by[o.id]:
            out.append(Violation("orders", None, f"{o.id} split across vehicles"))
    return out
