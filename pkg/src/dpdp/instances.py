"""Instance files (JSON schema), a random generator and its presets.

Canonical schema (quantities are decimal strings in units, one standard
pallet = 1; everything time-like is integer seconds)::

    {
      "name": "demo",
      "factories": [{"id": "f1", "ports": 6}, ...],
      "travel": {"distance": [[0.0, 12.5], [12.5, 0.0]],
                 "time": [[0, 1125], [1125, 0]]},
      "vehicles": [{"id": "v1", "initial_factory": "f1"}],
      "orders": [{"id": "o1", "pickup": "f1", "delivery": "f2",
                  "release_time": 0, "due_date": 14400,
                  "items": {"box": 3, "standard_pallet": 1}}],
      "params": {"capacity": "15", "dock_time": 1800, "epoch_length": 600,
                 "urgency_threshold": 3600,
                 "multipliers": {"distance": 0.2, "tardiness": 2.78,
                                 "waiting": 1.39, "idle": 5}}
    }

Matrix rows follow the order of ``factories``.  ``params`` and each of its
keys are optional.  An order may give ``"quantity"``, ``"load_time"`` and
``"unload_time"`` instead of ``"items"``.  Orders larger than the capacity
are split on load; a saved fragment carries ``"parent"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from .model import (ITEM_KINDS, Factory, Instance, InvalidInstanceError, Multipliers, Order,
                    TravelModel, Vehicle, format_quantity, quarters, split_order)

ORDER_WINDOW = 14400


class SchemaError(InvalidInstanceError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _get(obj: dict, key: str, path: str, kind=None, default=...):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise SchemaError(f"{path}.{key}", "missing field")
        return default
    val = obj[key]
    if kind is not None and (not isinstance(val, kind) or isinstance(val, bool)):
        raise SchemaError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _matrix(raw, n: int, path: str, integer: bool) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != n:
        raise SchemaError(path, f"expected {n} rows")
    rows = []
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaError(f"{path}[{i}]", f"row {i} must have {n} entries")
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) or x < 0:
                raise SchemaError(f"{path}[{i}][{j}]", f"row {i}: invalid entry {x!r}")
            if integer and x != int(x):
                raise SchemaError(f"{path}[{i}][{j}]", f"row {i}: travel times must be integers")
        rows.append(row)
    return np.array(rows, dtype=np.int64 if integer else np.float64)


def _order(raw: dict, path: str) -> Order:
    oid = str(_get(raw, "id", path))
    args = (oid, str(_get(raw, "pickup", path)), str(_get(raw, "delivery", path)),
            int(_get(raw, "release_time", path, (int, float))),
            int(_get(raw, "due_date", path, (int, float))))
    try:
        if "items" in raw:
            items = _get(raw, "items", path, (dict, list))
            if isinstance(items, dict):
                items = [k for k, c in sorted(items.items()) for _ in range(int(c))]
            return Order.from_items(*args, items=items, parent_id=raw.get("parent"))
        q = quarters(_get(raw, "quantity", path))
        return Order(*args, quantity=q, load_time=int(_get(raw, "load_time", path, (int, float))),
                     unload_time=int(_get(raw, "unload_time", path, (int, float))),
                     parent_id=raw.get("parent"))
    except SchemaError:
        raise
    except InvalidInstanceError as exc:
        raise SchemaError(path, str(exc)) from None


def instance_from_dict(doc: dict[str, Any]) -> Instance:
    params = _get(doc, "params", "$", dict, {})
    capacity = quarters(_get(params, "capacity", "$.params", default="15"))
    facs = _get(doc, "factories", "$", list)
    factories = {}
    for i, f in enumerate(facs):
        p = f"$.factories[{i}]"
        fid = str(_get(f, "id", p))
        if fid in factories:
            raise SchemaError(p, f"duplicate factory id {fid}")
        try:
            factories[fid] = Factory(fid, int(_get(f, "ports", p, int, 6)))
        except InvalidInstanceError as exc:
            raise SchemaError(p, str(exc)) from None
    ids = tuple(factories)
    travel = _get(doc, "travel", "$", dict)
    dist = _matrix(_get(travel, "distance", "$.travel"), len(ids), "$.travel.distance", integer=False)
    times = _matrix(_get(travel, "time", "$.travel"), len(ids), "$.travel.time", integer=True)
    try:
        tm = TravelModel(ids, dist, times)
    except InvalidInstanceError as exc:
        raise SchemaError("$.travel", str(exc)) from None
    vehicles = tuple(Vehicle(str(_get(v, "id", f"$.vehicles[{i}]")),
                             str(_get(v, "initial_factory", f"$.vehicles[{i}]")))
                     for i, v in enumerate(_get(doc, "vehicles", "$", list)))
    orders = []
    for i, raw in enumerate(_get(doc, "orders", "$", list)):
        o = _order(raw, f"$.orders[{i}]")
        try:
            orders.extend(split_order(o, capacity))
        except InvalidInstanceError as exc:
            raise SchemaError(f"$.orders[{i}]", str(exc)) from None
    m = _get(params, "multipliers", "$.params", dict, {})
    mult = Multipliers.for_fleet(len(vehicles))
    unknown = set(m) - {"distance", "tardiness", "waiting", "idle"}
    if unknown:
        raise SchemaError("$.params.multipliers", f"unknown keys {sorted(unknown)}")
    try:
        mult = replace(mult, **{k: float(v) for k, v in m.items()})
        return Instance(factories, tm, vehicles, tuple(orders), mult, capacity=capacity,
                        dock_time=int(_get(params, "dock_time", "$.params", int, 1800)),
                        epoch_length=int(_get(params, "epoch_length", "$.params", int, 600)),
                        urgency_threshold=int(_get(params, "urgency_threshold", "$.params", int, 3600)),
                        name=str(doc.get("name", "instance")))
    except SchemaError:
        raise
    except InvalidInstanceError as exc:
        raise SchemaError("$", str(exc)) from None


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON ({exc})") from None
    try:
        return instance_from_dict(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}:{exc.path}", str(exc).split(": ", 1)[-1]) from None


def _order_dict(o: Order) -> dict:
    d = {"id": o.id, "pickup": o.pickup_factory, "delivery": o.delivery_factory,
         "release_time": o.release_time, "due_date": o.due_date}
    if o.parent_id is not None:
        d["parent"] = o.parent_id
    if o.items:
        counts: dict[str, int] = {}
        for k in o.items:
            counts[k] = counts.get(k, 0) + 1
        d["items"] = dict(sorted(counts.items()))
    else:
        d.update(quantity=format_quantity(o.quantity), load_time=o.load_time, unload_time=o.unload_time)
    return d


def instance_to_dict(inst: Instance) -> dict:
    tm = inst.travel_model
    return {
        "name": inst.name,
        "factories": [{"id": f, "ports": inst.factories[f].port_count} for f in tm.factory_ids],
        "travel": {"distance": tm.dist.tolist(), "time": tm.travel.tolist()},
        "vehicles": [{"id": v.id, "initial_factory": v.initial_factory} for v in inst.vehicles],
        "orders": [_order_dict(o) for o in inst.orders],
        "params": {"capacity": format_quantity(inst.capacity), "dock_time": inst.dock_time,
                   "epoch_length": inst.epoch_length,
                   "urgency_threshold": inst.urgency_threshold,
                   "multipliers": asdict(inst.multipliers)},
    }


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1))


def load_icaps(directory: str | Path) -> Instance:
    """Adapter hook for the original competition CSV files (not provided)."""
    raise NotImplementedError("competition CSV parsing is not part of this package; "
                              "convert to the JSON schema instead")


# -- generator --------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    factory_count: int = 20
    port_count: int = 6
    vehicle_count: int = 5
    order_count: int = 50
    planning_horizon: int = 86400
    area_km: float = 60.0
    speed_kmh: float = 40.0
    temporal: str = "uniform"   # or "bursty"
    burst_count: int = 4
    burst_width: int = 1800
    item_weights: tuple[float, float, float] = (0.5, 0.3, 0.2)
    max_items: int = 12
    # orders released at time 0 (drawn before the rest)
    initial_orders: int = 0
    # restrict pickups to the first k factories (0 = any)
    pickup_factories: int = 0
    # same, for the orders released at time 0 only
    initial_pickup_factories: int = 0
    # vehicles start at the first k factories (0 = any)
    start_factories: int = 0
    capacity_units: int = 15
    dock_time: int = 1800
    epoch_length: int = 600
    seed: int = 0
    name: str | None = None


PRESETS: dict[str, GeneratorSpec] = {
    # Table-2 group-1 shape: 50 orders, 5 vehicles
    "group1": GeneratorSpec(),
    # few one-port factories shared by many vehicles, orders in waves
    "congested": GeneratorSpec(factory_count=4, port_count=1, vehicle_count=10, order_count=40,
                               planning_horizon=4 * 3600, area_km=20.0, temporal="bursty",
                               burst_count=2, burst_width=600, pickup_factories=2,
                               start_factories=2),
    # a batch of initial orders at the vehicles' home factory, later orders
    # anywhere on a wide map, many idle vehicles
    "sparse": GeneratorSpec(factory_count=12, vehicle_count=6, order_count=14, initial_orders=6,
                            planning_horizon=8 * 3600, area_km=120.0, initial_pickup_factories=1,
                            start_factories=1, max_items=6),
}


def preset(name: str, **overrides) -> GeneratorSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, name=overrides.pop("name", None) or f"{name}-s{overrides.get('seed', spec.seed)}",
                   **overrides)


def generate(spec: GeneratorSpec) -> Instance:
    """Random instance; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    nf = spec.factory_count
    ids = tuple(f"f{i + 1}" for i in range(nf))
    xy = rng.uniform(0.0, spec.area_km, size=(nf, 2))
    dist = np.round(np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1)), 3)
    travel = np.rint(dist / spec.speed_kmh * 3600).astype(np.int64)
    np.fill_diagonal(dist, 0.0)
    np.fill_diagonal(travel, 0)
    factories = {f: Factory(f, spec.port_count) for f in ids}
    starts = spec.start_factories or nf
    vehicles = tuple(Vehicle(f"v{i + 1}", ids[int(rng.integers(starts))])
                     for i in range(spec.vehicle_count))
    kinds = tuple(ITEM_KINDS)
    weights = np.asarray(spec.item_weights, float)
    weights = weights / weights.sum()
    n_late = spec.order_count - spec.initial_orders
    # leave the last order window inside the horizon so it can be completed
    last = max(spec.planning_horizon - ORDER_WINDOW, spec.epoch_length)
    if spec.temporal == "uniform":
        late = rng.integers(1, last + 1, size=n_late)
    elif spec.temporal == "bursty":
        centers = rng.integers(spec.burst_width, last + 1, size=spec.burst_count)
        late = centers[rng.integers(spec.burst_count, size=n_late)] + rng.integers(
            -spec.burst_width // 2, spec.burst_width // 2 + 1, size=n_late)
        late = np.clip(late, 1, last)
    else:
        raise ValueError(f"unknown temporal model {spec.temporal!r}")
    release = np.concatenate([np.zeros(spec.initial_orders, np.int64), np.sort(late)])
    cap = spec.capacity_units * 4
    pickups = spec.pickup_factories or nf
    first = spec.initial_pickup_factories or pickups
    orders = []
    for i, t in enumerate(release):
        p = int(rng.integers(first if i < spec.initial_orders else pickups))
        d = int(rng.integers(nf - 1))
        d += d >= p
        count = int(rng.integers(1, spec.max_items + 1))
        items = [kinds[k] for k in rng.choice(len(kinds), size=count, p=weights)]
        o = Order.from_items(f"o{i + 1}", ids[p], ids[d], int(t), int(t) + ORDER_WINDOW, items)
        orders.extend(split_order(o, cap))
    return Instance(factories, TravelModel(ids, dist, travel), vehicles, tuple(orders),
                    Multipliers.for_fleet(spec.vehicle_count), capacity=cap,
                    dock_time=spec.dock_time, epoch_length=spec.epoch_length,
                    name=spec.name or f"gen-s{spec.seed}")
