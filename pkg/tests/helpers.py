"""Builders for small instances, states and routes used across the tests."""
from __future__ import annotations

import random

import numpy as np

from dpdp.feasibility import Route, delivery, pickup
from dpdp.model import Factory, Instance, Multipliers, Order, TravelModel, Vehicle
from dpdp.sdp import PlanVisit, State, VehicleStatus

from oracles import group_visits


def uniform_instance(n_factories, travel=11, dist=None, ports=6, vehicles=("v1",), start="f0",
                     dock_time=2, epoch_length=10, orders=(), multipliers=None, capacity=60):
    """Complete graph where every leg takes ``travel`` time units."""
    ids = tuple(f"f{i}" for i in range(n_factories))
    t = np.full((n_factories, n_factories), travel, np.int64)
    np.fill_diagonal(t, 0)
    d = t.astype(float) if dist is None else dist
    return Instance({f: Factory(f, ports) for f in ids}, TravelModel(ids, d, t),
                    tuple(Vehicle(v, start) for v in vehicles), tuple(orders),
                    multipliers or Multipliers.for_fleet(len(vehicles)), capacity=capacity,
                    dock_time=dock_time, epoch_length=epoch_length)


def order(oid, p, d, release=0, due=1000, q=1, h=1):
    return Order(oid, p, d, release, due, q, h, h)


def random_instance(rng: random.Random, n_factories=5, n_vehicles=2, capacity=6, ports=None,
                    multipliers=None):
    """Integer distances (so float sums are exact) and small docking times."""
    ids = tuple(f"f{i}" for i in range(n_factories))
    xy = [(rng.randint(0, 9), rng.randint(0, 9)) for _ in ids]
    dist = np.array([[abs(a[0] - b[0]) + abs(a[1] - b[1]) for b in xy] for a in xy], float)
    travel = (dist * 10).astype(np.int64)
    facs = {f: Factory(f, ports or rng.randint(1, 2)) for f in ids}
    vehicles = tuple(Vehicle(f"v{i}", rng.choice(ids)) for i in range(n_vehicles))
    if multipliers is None:
        multipliers = Multipliers(distance=1.0, tardiness=1.0, waiting=rng.choice([0.0, 0.5]),
                                  idle=rng.choice([0.0, 5.0]))
    return Instance(facs, TravelModel(ids, dist, travel), vehicles, (), multipliers,
                    capacity=capacity, dock_time=20, epoch_length=60)


class OrderMaker:
    def __init__(self, rng: random.Random, instance: Instance, now: int):
        self.rng = rng
        self.ids = instance.travel_model.factory_ids
        self.now = now
        self.count = 0

    def __call__(self, max_q=3):
        self.count += 1
        p, d = self.rng.sample(self.ids, 2)
        due = self.now + self.rng.randint(0, 400)
        return Order(f"o{self.count}", p, d, 0, max(due, 1), self.rng.randint(1, max_q),
                     self.rng.randint(1, 5), self.rng.randint(1, 5))


def random_node_route(rng, make, capacity, n_carried, n_new):
    """Random LIFO sequence via a stack process; ``None`` if capacity fails."""
    carried = [make() for _ in range(n_carried)]
    stack = [o.id for o in carried]
    by_id = {o.id: o for o in carried}
    nodes = []
    left = n_new
    while left or stack:
        if left and (not stack or rng.random() < 0.5):
            o = make()
            by_id[o.id] = o
            nodes.append((o, True))
            stack.append(o.id)
            left -= 1
        else:
            nodes.append((by_id[stack.pop()], False))
    load = sum(o.quantity for o in carried)
    if load > capacity:
        return None
    for o, is_p in nodes:
        load += o.quantity if is_p else -o.quantity
        if load > capacity:
            return None
    return carried, nodes


def to_plan(nodes, eta=None):
    visits = group_visits(nodes)
    out = []
    for j, (f, dl, pk) in enumerate(visits):
        out.append(PlanVisit(f, eta if j == 0 else None, None, tuple(dl), tuple(pk)))
    return tuple(out)


def random_state(rng: random.Random, instance: Instance, max_nodes=8, now=120):
    """Random state: each vehicle docked (busy or free) or in transit, with a
    random LIFO- and capacity-feasible plan of at most ``max_nodes`` nodes."""
    make = OrderMaker(rng, instance, now)
    statuses = []
    unprocessed = []
    in_service = {f: 0 for f in instance.factories}
    for v in instance.vehicles:
        while True:
            n_carried = rng.randint(0, 2)
            n_new = rng.randint(0, max(0, (max_nodes - n_carried) // 2))
            kind = rng.choice(["docked", "busy", "transit"])
            if kind == "transit" and n_carried + n_new == 0:
                continue
            built = random_node_route(rng, make, instance.capacity, n_carried, n_new)
            if built is not None:
                break
        carried, nodes = built
        unprocessed.extend(o for o, is_p in nodes if is_p)
        if kind == "transit":
            statuses.append(VehicleStatus(v.id, None, None, tuple(carried),
                                          to_plan(nodes, eta=now + rng.randint(0, 90))))
        else:
            f = rng.choice(instance.travel_model.factory_ids)
            # a vehicle still in service holds one of the factory's ports
            if kind == "busy" and in_service[f] < instance.factories[f].port_count:
                in_service[f] += 1
                td = now + rng.randint(1, 100)
            else:
                td = now - rng.randint(0, 50)
            statuses.append(VehicleStatus(v.id, f, td, tuple(carried), to_plan(nodes)))
    return State(now // instance.epoch_length, now, tuple(statuses), tuple(unprocessed)), make


def starts_of(state: State):
    out = []
    for s in state.statuses:
        if s.current_factory is not None:
            out.append(("docked", s.current_factory, s.earliest_departure))
        else:
            out.append(("transit", None, s.plan[0].arrival))
    return out


def nodes_of(route: Route):
    return [(n.order, n.pickup) for n in route.nodes]


def route_of(template: Route, nodes) -> Route:
    return template.with_nodes(pickup(o) if is_p else delivery(o) for o, is_p in nodes)


def oracle_plans(node_lists):
    return [group_visits(n) for n in node_lists]
