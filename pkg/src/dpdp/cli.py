"""Command line: generate, run, sweep, validate and replay episodes.

Defaults for the run flags can be set through environment variables
(``DPDP_LAMBDA3``, ``DPDP_LAMBDA4``, ``DPDP_VNS_SECONDS``,
``DPDP_VNS_ITERATIONS``, ``DPDP_SEED``, ``DPDP_OUT``); explicit flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .dispatcher import DispatcherConfig
from .instances import PRESETS, SchemaError, generate, load_instance, preset, save_instance
from .model import InvalidInstanceError
from .runner import multipliers_for, recompute_score, replay, run, sweep
from .sdp import InvalidActionError, check_solution

ENV = {
    "lambda3": ("DPDP_LAMBDA3", float),
    "lambda4": ("DPDP_LAMBDA4", float),
    "vns_seconds": ("DPDP_VNS_SECONDS", float),
    "vns_iterations": ("DPDP_VNS_ITERATIONS", int),
    "seed": ("DPDP_SEED", int),
    "out": ("DPDP_OUT", str),
}


def _env_default(name):
    var, conv = ENV[name]
    raw = os.environ.get(var)
    return None if raw in (None, "") else conv(raw)


def _add_run_flags(p: argparse.ArgumentParser, sweep_mode: bool = False):
    p.add_argument("--instance", required=True, help="instance JSON file")
    if not sweep_mode:
        p.add_argument("--lambda3", type=float, default=_env_default("lambda3"),
                       help="waiting-time multiplier (default 0.5 * tardiness multiplier)")
        p.add_argument("--lambda4", type=float, default=_env_default("lambda4"),
                       help="idle-vehicle multiplier (default 5)")
        p.add_argument("--seed", type=int, default=_env_default("seed") or 0)
    p.add_argument("--vns-seconds", type=float, default=_env_default("vns_seconds"),
                   help="wall-clock budget of the descent per epoch")
    p.add_argument("--vns-iterations", type=int, default=_env_default("vns_iterations"),
                   help="neighborhood scans per epoch (deterministic budget)")
    p.add_argument("--epoch-length", type=int, help="override the instance's epoch length")
    p.add_argument("--dock-time", type=int, help="override the instance's docking time")
    p.add_argument("--urgency", type=int, help="override the urgency threshold U")
    p.add_argument("--out", default=_env_default("out"), help="output directory")


def _instance(args):
    inst = load_instance(args.instance)
    changes = {k: v for k, v in (("epoch_length", args.epoch_length), ("dock_time", args.dock_time),
                                 ("urgency_threshold", args.urgency)) if v is not None}
    return inst.with_params(**changes) if changes else inst


def _config(inst, args, lambda3=None, lambda4=None, seed=0):
    return DispatcherConfig(multipliers=multipliers_for(inst, lambda3, lambda4),
                            vns_budget_seconds=args.vns_seconds,
                            vns_budget_iterations=args.vns_iterations, seed=seed)


def cmd_generate(args) -> int:
    overrides = {"seed": args.seed}
    for key in ("order_count", "vehicle_count", "factory_count", "port_count"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    inst = generate(preset(args.preset, **overrides))
    save_instance(inst, args.output)
    print(f"wrote {args.output}: {len(inst.orders)} orders, {len(inst.vehicles)} vehicles, "
          f"{len(inst.factories)} factories")
    return 0


def cmd_run(args) -> int:
    inst = _instance(args)
    config = _config(inst, args, args.lambda3, args.lambda4, args.seed)
    try:
        report, _ = run(inst, config, args.out)
    except InvalidActionError as exc:
        print(f"episode aborted: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"instance": report.instance, "score": report.score, **report.cost,
                      "epochs": report.epochs}, indent=1))
    return 0


def cmd_sweep(args) -> int:
    inst = _instance(args)
    l3 = args.lambda3 or [None]
    l4 = args.lambda4 or [None]
    configs = [_config(inst, args, a, b, s) for a in l3 for b in l4 for s in args.seeds]
    reports = sweep(inst, configs, args.out, jobs=args.jobs)
    for r in reports:
        m = r.config["multipliers"]
        print(f"lambda3={m['waiting']:.4f} lambda4={m['idle']:.2f} seed={r.config['seed']} "
              f"score={r.score:.3f} waiting={r.cost['waiting_seconds']:.0f}")
    return 0


def cmd_validate(args) -> int:
    try:
        inst = load_instance(args.instance)
    except InvalidInstanceError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {inst.name}: {len(inst.orders)} orders, {len(inst.vehicles)} vehicles")
    if args.run_dir:
        from .evaluator import Timeline, VehicleTimeline, VisitRecord
        by_id = inst.order_by_id
        vts = {v.id: VehicleTimeline(v.id, v.initial_factory, None) for v in inst.vehicles}
        routes = [json.loads(x) for x in open(Path(args.run_dir) / "realized.jsonl") if x.strip()]
        for r in routes:
            vts[r["vehicle"]].visits.append(VisitRecord(
                r["vehicle"], r["factory"], r["arrival"], r["waiting"], r["departure"],
                tuple(by_id[o] for o in r["deliveries"]), tuple(by_id[o] for o in r["pickups"])))
        # departures from the origins are not logged, so first legs are not timed
        violations = check_solution(inst, Timeline(0, list(vts.values())))
        score = recompute_score(inst, routes)
        for v in violations:
            print(f"violation {v.kind} [{v.vehicle_id}]: {v.detail}", file=sys.stderr)
        print(f"recomputed score: {score}")
        rp = Path(args.run_dir) / "report.json"
        if rp.exists():
            logged = json.loads(rp.read_text())["score"]
            if logged != score:
                print(f"score mismatch: report {logged} vs recomputed {score}", file=sys.stderr)
                return 1
        return 1 if violations else 0
    return 0


def cmd_replay(args) -> int:
    inst = load_instance(args.instance)
    result = replay(inst, Path(args.run_dir) / "episode.jsonl")
    print(json.dumps({"score": result.score, **result.cost.as_dict()}, indent=1))
    rp = Path(args.run_dir) / "report.json"
    if rp.exists() and json.loads(rp.read_text())["score"] != result.score:
        print("replayed score differs from the report", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpdp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--preset", choices=sorted(PRESETS), default="group1")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--orders", dest="order_count", type=int)
    g.add_argument("--vehicles", dest="vehicle_count", type=int)
    g.add_argument("--factories", dest="factory_count", type=int)
    g.add_argument("--ports", dest="port_count", type=int)
    g.add_argument("output")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one episode")
    _add_run_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a grid of multipliers and seeds")
    _add_run_flags(s, sweep_mode=True)
    s.add_argument("--lambda3", type=float, nargs="*")
    s.add_argument("--lambda4", type=float, nargs="*")
    s.add_argument("--seeds", type=int, nargs="*", default=[0])
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check an instance file (and optionally a run)")
    v.add_argument("--instance", required=True)
    v.add_argument("--run-dir", help="directory written by `run --out`")
    v.set_defaults(func=cmd_validate)

    p = sub.add_parser("replay", help="re-simulate a logged episode")
    p.add_argument("--instance", required=True)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
