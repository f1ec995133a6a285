"""Node-sequence route representation, blocks, bridges and structural checks.

A route stores only its inner nodes; the head (orders already on board,
in loading order) lives in ``Route.carried`` and the terminal node is
implicit.  Gap ``g`` means "before ``nodes[g]``" (``g == len(nodes)`` is
the tail).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple

from .model import Order


class RouteError(ValueError):
    """A route is not order-consistent (a solver bug, not an infeasible move)."""


@dataclass(frozen=True, slots=True)
class Node:
    order: Order
    pickup: bool

    @property
    def factory(self) -> str:
        return self.order.pickup_factory if self.pickup else self.order.delivery_factory

    @property
    def kind(self) -> str:
        return "pickup" if self.pickup else "delivery"

    def __repr__(self):
        return f"{self.order.id}{'+' if self.pickup else '-'}@{self.factory}"


def pickup(order: Order) -> Node:
    return Node(order, True)


def delivery(order: Order) -> Node:
    return Node(order, False)


class Visit(NamedTuple):
    factory: str
    deliveries: tuple[Order, ...]
    pickups: tuple[Order, ...]


@dataclass(frozen=True, eq=False)
class Route:
    vehicle_id: str
    carried: tuple[Order, ...] = ()
    nodes: tuple[Node, ...] = ()
    # set for in-transit vehicles: the first visit's factory and delivery set are fixed
    destination: str | None = None
    locked_deliveries: frozenset[str] = frozenset()

    def __eq__(self, other):
        if not isinstance(other, Route):
            return NotImplemented
        return (self.vehicle_id == other.vehicle_id
                and _ids(self.carried) == _ids(other.carried)
                and self.signature == other.signature
                and self.destination == other.destination
                and self.locked_deliveries == other.locked_deliveries)

    __hash__ = None

    def with_nodes(self, nodes) -> "Route":
        return replace(self, nodes=tuple(nodes))

    @cached_property
    def signature(self) -> tuple[tuple[str, bool], ...]:
        return tuple((n.order.id, n.pickup) for n in self.nodes)

    @cached_property
    def visits(self) -> tuple[Visit, ...]:
        """Group nodes into factory visits.

        Consecutive nodes at one factory form one visit (unloading first,
        then loading).  A delivery that follows a pickup at the same factory
        starts a new visit so that the node order is the service order.
        """
        out: list[Visit] = []
        cur_f = None
        dl: list[Order] = []
        pk: list[Order] = []
        for n in self.nodes:
            f = n.factory
            if f != cur_f or (not n.pickup and pk):
                if cur_f is not None:
                    out.append(Visit(cur_f, tuple(dl), tuple(pk)))
                cur_f, dl, pk = f, [], []
            (pk if n.pickup else dl).append(n.order)
        if cur_f is not None:
            out.append(Visit(cur_f, tuple(dl), tuple(pk)))
        return tuple(out)

    @cached_property
    def match(self) -> dict[int, int]:
        """pickup index -> delivery index for orders picked up on this route."""
        open_: dict[str, int] = {}
        out: dict[int, int] = {}
        for i, n in enumerate(self.nodes):
            if n.pickup:
                open_[n.order.id] = i
            elif n.order.id in open_:
                out[open_.pop(n.order.id)] = i
        return out

    @property
    def order_ids(self) -> set[str]:
        return {n.order.id for n in self.nodes} | set(_ids(self.carried))

    @property
    def first_gap(self) -> int:
        """Smallest gap where new nodes may go (gap 0 is locked while in transit)."""
        return 1 if self.destination is not None else 0


def _ids(orders) -> tuple[str, ...]:
    return tuple(o.id for o in orders)


class Block(NamedTuple):
    start: int
    end: int


class Bridge(NamedTuple):
    """Pickup span ``nodes[pickup_start:pickup_start+size]`` (l1..lk) and
    delivery span ``nodes[delivery_start:delivery_start+size]`` (rk..r1)."""

    pickup_start: int
    delivery_start: int
    size: int

    @property
    def pickup_span(self) -> range:
        return range(self.pickup_start, self.pickup_start + self.size)

    @property
    def delivery_span(self) -> range:
        return range(self.delivery_start, self.delivery_start + self.size)


def check_consistency(route: Route) -> None:
    """Raise :class:`RouteError` unless every order appears as a matched pair.

    Carried orders must have exactly one delivery node and no pickup node;
    every other order needs one pickup followed later by one delivery.
    """
    carried = set()
    for o in route.carried:
        if o.id in carried:
            raise RouteError(f"order {o.id} carried twice")
        carried.add(o.id)
    picked: set[str] = set()
    delivered: set[str] = set()
    for n in route.nodes:
        oid = n.order.id
        if n.pickup:
            if oid in carried:
                raise RouteError(f"carried order {oid} has a pickup node")
            if oid in picked:
                raise RouteError(f"order {oid} picked up twice")
            picked.add(oid)
        else:
            if oid in delivered:
                raise RouteError(f"order {oid} delivered twice")
            if oid not in carried and oid not in picked:
                raise RouteError(f"order {oid} delivered before pickup")
            delivered.add(oid)
    missing = (carried | picked) - delivered
    if missing:
        raise RouteError(f"orders without delivery node: {sorted(missing)}")


def lifo_ok(route: Route) -> bool:
    """Pairwise LIFO condition on the carried-prefixed pickup/delivery list.

    For orders i, j with pos(i+) < pos(j+) we need pos(i-) <= pos(j+) or
    pos(j-) <= pos(i-): the [pos+, pos-] intervals must form a laminar family.
    """
    check_consistency(route)
    start: dict[str, int] = {}
    spans: list[tuple[int, int]] = []
    for pos, o in enumerate(route.carried):
        start[o.id] = pos
    offset = len(route.carried)
    for i, n in enumerate(route.nodes):
        if n.pickup:
            start[n.order.id] = offset + i
        else:
            spans.append((start[n.order.id], offset + i))
    spans.sort()
    ends: list[int] = []  # ends of currently open enclosing intervals
    for s, e in spans:
        while ends and ends[-1] < s:
            ends.pop()
        if ends and ends[-1] < e:
            return False
        ends.append(e)
    return True


def capacity_ok(route: Route, capacity: int) -> bool:
    load = sum(o.quantity for o in route.carried)
    if load > capacity:
        return False
    for n in route.nodes:
        if n.pickup:
            load += n.order.quantity
            if load > capacity:
                return False
        else:
            load -= n.order.quantity
    return True


def destination_ok(route: Route) -> bool:
    """An in-transit vehicle's first visit keeps its factory and delivery set."""
    if route.destination is None:
        return True
    visits = route.visits
    if not visits or visits[0].factory != route.destination:
        return False
    return frozenset(_ids(visits[0].deliveries)) == route.locked_deliveries


def enumerate_blocks(route: Route) -> list[Block]:
    """All (pickup, matching delivery) index pairs, ordered by delivery index."""
    return sorted((Block(i, j) for i, j in route.match.items()), key=lambda b: b.end)


def _pairs_with(route: Route, pi: int, di: int, outer_p: int, outer_d: int) -> bool:
    """True if nodes (pi, di) are a matched pair sharing the span factories."""
    nodes = route.nodes
    if pi < 0 or di >= len(nodes) or pi >= di:
        return False
    a, b = nodes[pi], nodes[di]
    return (a.pickup and not b.pickup and route.match.get(pi) == di
            and a.factory == nodes[outer_p].factory and b.factory == nodes[outer_d].factory)


def enumerate_maximal_bridges(route: Route) -> list[Bridge]:
    """Maximal bridges, ordered by pickup start.

    Every block is a size-1 bridge and the outward/inward extension is
    unique, so the maximal bridges partition the blocks into chains.
    """
    out = []
    for i, j in sorted(route.match.items()):
        if _pairs_with(route, i - 1, j + 1, i, j):
            continue  # not the outermost pair of its chain
        k = 1
        while _pairs_with(route, i + k, j - k, i, j):
            k += 1
        out.append(Bridge(i, j - k + 1, k))
    return out


def insert_order(route: Route, order: Order, pickup_pos: int, delivery_pos: int,
                 capacity: int) -> Route | None:
    """Insert ``order`` with its pickup at gap ``pickup_pos`` and delivery at gap
    ``delivery_pos`` of the original route (``delivery_pos >= pickup_pos``).

    Returns ``None`` when the result breaks LIFO, capacity or the destination lock.
    """
    n = len(route.nodes)
    if not (0 <= pickup_pos <= delivery_pos <= n):
        raise IndexError(f"invalid insertion gaps ({pickup_pos}, {delivery_pos}) for {n} nodes")
    if order.id in route.order_ids:
        raise RouteError(f"order {order.id} already on route {route.vehicle_id}")
    if pickup_pos < route.first_gap:
        return None
    nodes = route.nodes
    new = route.with_nodes(nodes[:pickup_pos] + (pickup(order),) + nodes[pickup_pos:delivery_pos]
                           + (delivery(order),) + nodes[delivery_pos:])
    if not (capacity_ok(new, capacity) and destination_ok(new) and lifo_ok(new)):
        return None
    return new


def remove_order(route: Route, order_id: str) -> Route:
    return route.with_nodes(n for n in route.nodes if n.order.id != order_id)


def dump(route: Route) -> str:
    """Debug dump: ``<seq> <kind> <order-id> <factory-id>`` per node."""
    head = ",".join(_ids(route.carried)) or "-"
    lines = [f"0 head {head} {route.destination or '-'}"]
    for i, n in enumerate(route.nodes, start=1):
        lines.append(f"{i} {n.kind} {n.order.id} {n.factory}")
    lines.append(f"{len(route.nodes) + 1} terminal - -")
    return "\n".join(lines)
