"""Episode orchestration, reports, sweeps and replays."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .dispatcher import CfaVnsDispatcher, DispatcherConfig
from .model import Instance, Multipliers
from .sdp import Action, EpisodeResult, PlanVisit, State, run_episode


def config_dict(instance: Instance, config: DispatcherConfig) -> dict:
    m = config.multipliers or instance.multipliers
    d = asdict(config)
    d["multipliers"] = asdict(m)
    return d


def config_digest(instance: Instance, config: DispatcherConfig) -> str:
    blob = json.dumps(config_dict(instance, config), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Report:
    instance: str
    config: dict
    config_digest: str
    score: float
    cost: dict
    orders: int
    epochs: int
    series: list[dict]
    routes: list[dict]
    # wall-clock figures; excluded from canonical() since they vary run to run
    timing: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("timing")
        return d

    def to_json(self, timing: bool = True) -> str:
        d = asdict(self) if timing else self.canonical()
        return json.dumps(d, indent=1, sort_keys=True)

    def write(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        with open(out / "series.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, ["epoch", "time", "waiting_vehicles", "mean_committed_time"])
            w.writeheader()
            w.writerows(self.series)
        with open(out / "realized.jsonl", "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in self.routes)


def build_report(instance: Instance, config: DispatcherConfig, result: EpisodeResult,
                 seconds: float) -> Report:
    decisions = [e.decision_seconds for e in result.epochs]
    timing = {"total_seconds": seconds,
              "mean_decision_seconds": sum(decisions) / len(decisions) if decisions else 0.0,
              "max_decision_seconds": max(decisions, default=0.0)}
    series = [{"epoch": e.epoch, "time": e.time, "waiting_vehicles": e.waiting_vehicles,
               "mean_committed_time": e.mean_committed_time} for e in result.epochs]
    return Report(instance.name, config_dict(instance, config), config_digest(instance, config),
                  result.score, result.cost.as_dict(), len(instance.orders), len(result.epochs),
                  series, [r.as_dict() for r in result.realized.records()], timing)


def run(instance: Instance, config: DispatcherConfig = DispatcherConfig(), out: str | Path | None = None,
        max_epochs: int | None = None) -> tuple[Report, EpisodeResult]:
    """Run one episode with the CFA-VNS dispatcher; optionally write outputs to ``out``."""
    dispatcher = CfaVnsDispatcher(instance, config)
    log_fh = None
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        log_fh = open(Path(out) / "episode.jsonl", "w")

    def on_epoch(rec):
        if log_fh is not None:
            d = rec.as_dict()
            d.pop("decision_seconds")
            log_fh.write(json.dumps(d, sort_keys=True) + "\n")

    t0 = time.perf_counter()
    try:
        result = run_episode(instance, dispatcher, max_epochs=max_epochs, on_epoch=on_epoch)
    finally:
        if log_fh is not None:
            log_fh.close()
    report = build_report(instance, config, result, time.perf_counter() - t0)
    if out is not None:
        report.write(out)
    return report, result


def recompute_score(instance: Instance, routes: Sequence[dict]) -> float:
    """True objective from logged realized visits, independent of the episode engine."""
    tm = instance.travel_model
    by_id = instance.order_by_id
    origin = {v.id: v.initial_factory for v in instance.vehicles}
    last: dict[str, str] = {}
    dist = 0.0
    worst: dict[str, int] = {}
    for r in routes:
        v = r["vehicle"]
        dist += tm.distance(last.get(v, origin[v]), r["factory"])
        last[v] = r["factory"]
        for oid in r["deliveries"]:
            o = by_id[oid]
            worst[o.root_id] = max(worst.get(o.root_id, 0), r["arrival"] - o.due_date)
    m = instance.multipliers
    return m.distance * dist + m.tardiness * sum(worst.values())


# -- sweep ----------------------------------------------------------------------

def _cell(args):
    instance, config, out = args
    report, _ = run(instance, config, out)
    return report


def sweep(instance: Instance, configs: Sequence[DispatcherConfig], out: str | Path | None = None,
          jobs: int = 1) -> list[Report]:
    """One report per config; cells run in separate processes when ``jobs > 1``."""
    cells = [(instance, c, None if out is None else Path(out) / f"cell{i:03d}")
             for i, c in enumerate(configs)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            reports = list(pool.map(_cell, cells))
    else:
        reports = [_cell(c) for c in cells]
    if out is not None:
        with open(Path(out) / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "config_digest", "lambda3", "lambda4", "seed", "score",
                        "distance", "tardiness_seconds", "waiting_seconds"])
            for i, r in enumerate(reports):
                m = r.config["multipliers"]
                w.writerow([i, r.config_digest, m["waiting"], m["idle"], r.config["seed"], r.score,
                            r.cost["distance"], r.cost["tardiness_seconds"], r.cost["waiting_seconds"]])
    return reports


# -- replay ---------------------------------------------------------------------

class ReplayDispatcher:
    """Feeds logged actions back into the engine, epoch by epoch."""

    def __init__(self, instance: Instance, actions: Sequence[dict]):
        self.actions = list(actions)
        self.by_id = instance.order_by_id

    def __call__(self, state: State) -> Action:
        if state.epoch >= len(self.actions):
            raise RuntimeError(f"log has no action for epoch {state.epoch}")
        plans = {}
        for vid, visits in self.actions[state.epoch].items():
            plans[vid] = tuple(PlanVisit(v["factory"], None, None,
                                         tuple(self.by_id[o] for o in v["deliveries"]),
                                         tuple(self.by_id[o] for o in v["pickups"]))
                               for v in visits)
        return Action(plans)


def replay(instance: Instance, episode_log: str | Path) -> EpisodeResult:
    with open(episode_log) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    actions = [r["action"] for r in sorted(records, key=lambda r: r["epoch"])]
    return run_episode(instance, ReplayDispatcher(instance, actions), max_epochs=len(actions))


def multipliers_for(instance: Instance, lambda3: float | None = None,
                    lambda4: float | None = None) -> Multipliers:
    m = instance.multipliers
    if lambda3 is not None:
        m = replace(m, waiting=lambda3)
    if lambda4 is not None:
        m = replace(m, idle=lambda4)
    return m
