"""Domain types shared across the engine.

All times are integer seconds.  Quantities are integer quarter-units
(one box = 1, small pallet = 2, standard pallet = 4) so that capacity
checks are exact; the JSON schema carries them as decimal strings.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np


class InvalidInstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


QUARTERS_PER_UNIT = 4

# kind -> (size in quarter-units, load/unload seconds)
ITEM_KINDS: dict[str, tuple[int, int]] = {
    "box": (1, 15),
    "small_pallet": (2, 30),
    "standard_pallet": (4, 60),
}


def quarters(value: str | int | float | Decimal) -> int:
    """Convert a decimal quantity (e.g. ``"1.25"``) to quarter-units."""
    q = Decimal(str(value)) * QUARTERS_PER_UNIT
    if q != q.to_integral_value():
        raise InvalidInstanceError(f"quantity {value!r} is not a multiple of 0.25")
    return int(q)


def format_quantity(q: int) -> str:
    d = Decimal(q) / QUARTERS_PER_UNIT
    return format(d.normalize(), "f") if d != d.to_integral_value() else str(int(d))


@dataclass(frozen=True)
class Factory:
    id: str
    port_count: int = 6

    def __post_init__(self):
        if self.port_count < 1:
            raise InvalidInstanceError(f"factory {self.id}: port_count must be >= 1")


@dataclass(frozen=True, eq=False)
class TravelModel:
    """Dense distance / travel-time matrices indexed in ``factory_ids`` order."""

    factory_ids: tuple[str, ...]
    dist: np.ndarray
    travel: np.ndarray
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.factory_ids)
        dist = np.asarray(self.dist, dtype=np.float64)
        travel = np.asarray(self.travel, dtype=np.int64)
        for name, m in (("dist", dist), ("travel", travel)):
            if m.shape != (n, n):
                raise InvalidInstanceError(f"{name} matrix has shape {m.shape}, expected {(n, n)}")
            if (m < 0).any():
                raise InvalidInstanceError(f"{name} matrix has negative entries")
            if (np.diag(m) != 0).any():
                raise InvalidInstanceError(f"{name} matrix has a non-zero diagonal")
        dist.setflags(write=False)
        travel.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "travel", travel)
        object.__setattr__(self, "index", {f: i for i, f in enumerate(self.factory_ids)})

    def distance(self, a: str, b: str) -> float:
        return float(self.dist[self.index[a], self.index[b]])

    def time(self, a: str, b: str) -> int:
        return int(self.travel[self.index[a], self.index[b]])


@dataclass(frozen=True)
class Order:
    id: str
    pickup_factory: str
    delivery_factory: str
    release_time: int
    due_date: int
    quantity: int
    load_time: int
    unload_time: int
    parent_id: str | None = None
    items: tuple[str, ...] = ()

    def __post_init__(self):
        if self.release_time >= self.due_date:
            raise InvalidInstanceError(f"order {self.id}: release_time must precede due_date")
        if self.quantity <= 0:
            raise InvalidInstanceError(f"order {self.id}: quantity must be positive")

    @property
    def root_id(self) -> str:
        """Id of the customer order this (possibly split) order belongs to."""
        return self.parent_id or self.id

    @classmethod
    def from_items(cls, id: str, pickup_factory: str, delivery_factory: str,
                   release_time: int, due_date: int, items: Iterable[str],
                   parent_id: str | None = None) -> "Order":
        items = tuple(items)
        unknown = [k for k in items if k not in ITEM_KINDS]
        if unknown:
            raise InvalidInstanceError(f"order {id}: unknown item kinds {sorted(set(unknown))}")
        size = sum(ITEM_KINDS[k][0] for k in items)
        handling = sum(ITEM_KINDS[k][1] for k in items)
        return cls(id, pickup_factory, delivery_factory, int(release_time), int(due_date),
                   size, handling, handling, parent_id, items)


@dataclass(frozen=True)
class Vehicle:
    id: str
    initial_factory: str


@dataclass(frozen=True)
class Multipliers:
    """Weights of distance, tardiness, waiting and idle-vehicle terms."""

    distance: float
    tardiness: float = 10000 / 3600
    waiting: float = 0.5 * 10000 / 3600
    idle: float = 5.0

    def __post_init__(self):
        if self.distance <= 0 or self.tardiness <= 0:
            raise InvalidInstanceError("distance and tardiness multipliers must be positive")
        if self.waiting < 0 or self.idle < 0:
            raise InvalidInstanceError("waiting and idle multipliers must be non-negative")

    @classmethod
    def for_fleet(cls, n_vehicles: int, **overrides) -> "Multipliers":
        return cls(distance=1.0 / max(n_vehicles, 1), **overrides)

    def true_objective(self) -> "Multipliers":
        return replace(self, waiting=0.0, idle=0.0)

    def weigh(self, f1: float, f2: float, f3: float, f4: float) -> float:
        return self.distance * f1 + self.tardiness * f2 + self.waiting * f3 + self.idle * f4


@dataclass(frozen=True)
class CostBreakdown:
    distance: float
    tardiness: float
    waiting: float
    idle: int
    weighted_total: float

    @classmethod
    def from_terms(cls, f1, f2, f3, f4, multipliers: Multipliers) -> "CostBreakdown":
        return cls(float(f1), float(f2), float(f3), int(f4),
                   multipliers.weigh(f1, f2, f3, f4))

    def as_dict(self) -> dict:
        return {"distance": self.distance, "tardiness_seconds": self.tardiness,
                "waiting_seconds": self.waiting, "idle_vehicle_count": self.idle,
                "weighted_total": self.weighted_total}


@dataclass(frozen=True, eq=False)
class Instance:
    factories: Mapping[str, Factory]
    travel_model: TravelModel
    vehicles: tuple[Vehicle, ...]
    orders: tuple[Order, ...]
    multipliers: Multipliers
    capacity: int = 60
    dock_time: int = 1800
    epoch_length: int = 600
    urgency_threshold: int = 3600
    name: str = "instance"

    def __post_init__(self):
        if self.capacity <= 0:
            raise InvalidInstanceError("capacity must be positive")
        if self.epoch_length <= 0:
            raise InvalidInstanceError("epoch_length must be positive")
        known = set(self.travel_model.factory_ids)
        if set(self.factories) != known:
            raise InvalidInstanceError("factory list and travel matrix ids differ")
        seen = set()
        for v in self.vehicles:
            if v.initial_factory not in known:
                raise InvalidInstanceError(f"vehicle {v.id}: unknown factory {v.initial_factory}")
            if v.id in seen:
                raise InvalidInstanceError(f"duplicate vehicle id {v.id}")
            seen.add(v.id)
        seen = set()
        for o in self.orders:
            for f in (o.pickup_factory, o.delivery_factory):
                if f not in known:
                    raise InvalidInstanceError(f"order {o.id}: unknown factory {f}")
            if o.quantity > self.capacity:
                raise InvalidInstanceError(f"order {o.id}: quantity exceeds capacity (split it first)")
            if o.id in seen:
                raise InvalidInstanceError(f"duplicate order id {o.id}")
            seen.add(o.id)
        ordered = tuple(sorted(self.orders, key=lambda o: (o.release_time, o.id)))
        object.__setattr__(self, "orders", ordered)
        object.__setattr__(self, "factories", dict(self.factories))

    @property
    def order_by_id(self) -> dict[str, Order]:
        return {o.id: o for o in self.orders}

    def with_params(self, **changes) -> "Instance":
        return replace(self, **changes)


def service_time(deliveries: Sequence[Order], pickups: Sequence[Order], dock_time: int) -> int:
    """Dock approach plus unloading of ``deliveries`` plus loading of ``pickups``."""
    return dock_time + sum(o.unload_time for o in deliveries) + sum(o.load_time for o in pickups)


def estimated_delay(order: Order, now: int, travel_model: TravelModel, dock_time: int) -> int:
    """Slack left after the fastest possible service of ``order``; negative means late."""
    direct = travel_model.time(order.pickup_factory, order.delivery_factory)
    return (order.due_date - now) - (dock_time + order.load_time + direct)


def split_order(order: Order, capacity: int) -> list[Order]:
    """First-fit split of an oversized order into capacity-sized fragments.

    Items are packed largest first; each bin becomes a fragment that keeps
    the parent's factories and time window.
    """
    if order.quantity <= capacity:
        return [order]
    if not order.items:
        raise InvalidInstanceError(
            f"order {order.id}: quantity {order.quantity} exceeds capacity and no items to split")
    items = sorted(order.items, key=lambda k: ITEM_KINDS[k][0], reverse=True)
    if ITEM_KINDS[items[0]][0] > capacity:
        raise InvalidInstanceError(f"order {order.id}: item {items[0]} larger than capacity")
    bins: list[list[str]] = []
    loads: list[int] = []
    for kind in items:
        size = ITEM_KINDS[kind][0]
        for b, load in enumerate(loads):
            if load + size <= capacity:
                bins[b].append(kind)
                loads[b] += size
                break
        else:
            bins.append([kind])
            loads.append(size)
    return [
        Order.from_items(f"{order.id}#{i + 1}", order.pickup_factory, order.delivery_factory,
                         order.release_time, order.due_date, content, parent_id=order.id)
        for i, content in enumerate(bins)
    ]
