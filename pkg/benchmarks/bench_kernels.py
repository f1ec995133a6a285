"""Time the joint-simulation kernel: numba-compiled vs pure Python/numpy.

    python benchmarks/bench_kernels.py [--repeat 200] [--epochs 30]

The workload is the plan set a dispatcher holds mid-episode on a group-1
instance, i.e. exactly what every candidate evaluation simulates.
"""
import argparse
import time

import numpy as np

from dpdp import _kernels
from dpdp.dispatcher import CfaVnsDispatcher, DispatcherConfig
from dpdp.evaluator import SimContext
from dpdp.instances import generate, preset
from dpdp.sdp import initial_state, transition


def kernel_args(ctx, plans):
    parts = [ctx._compile(p) for p in plans]
    empty = np.zeros(0, np.int64)
    vp = np.concatenate([[0], np.cumsum([len(p[0]) for p in parts])]).astype(np.int64)
    fac, svc, cnt, due = (np.concatenate([p[i] for p in parts] + [empty]) for i in range(4))
    dp = np.concatenate([[0], np.cumsum(cnt)]).astype(np.int64)
    return (ctx.start_kind, ctx.start_factory, ctx.start_time, ctx.rank, vp, fac, svc, dp, due,
            ctx.travel, ctx.ports, np.int64(ctx.now), np.int64(_kernels.FOREVER))


def busiest_state(epochs, seed):
    inst = generate(preset("group1", seed=seed))
    disp = CfaVnsDispatcher(inst, DispatcherConfig(vns_budget_iterations=10))
    state, best = initial_state(inst), None
    for _ in range(epochs):
        state = transition(state, disp(state), inst)
        size = sum(len(s.plan) for s in state.statuses)
        if best is None or size > best[0]:
            best = (size, state)
    return inst, best[1]


def per_call(fn, args, repeat):
    fn(*args)  # warm-up (triggers compilation for the numba variant)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    inst, state = busiest_state(args.epochs, args.seed)
    ctx = SimContext(inst, state)
    kargs = kernel_args(ctx, [s.plan for s in state.statuses])
    visits = int(kargs[4][-1])
    print(f"workload: {len(state.statuses)} vehicles, {visits} planned visits at t={state.time}")

    py = per_call(_kernels.simulate_plans_py, kargs, args.repeat)
    print(f"python/numpy : {py * 1e6:9.1f} us/call")
    compiled = _kernels.compiled_variant()
    if compiled is None:
        print("numba        : not installed")
        return
    nb = per_call(compiled, kargs, args.repeat)
    same = all(np.array_equal(np.asarray(a), np.asarray(b))
               for a, b in zip(_kernels.simulate_plans_py(*kargs), compiled(*kargs)))
    print(f"numba        : {nb * 1e6:9.1f} us/call  ({py / nb:.1f}x, identical output: {same})")
    print(f"active kernel: {'numba' if _kernels.USE_NUMBA else 'python'} (DPDP_DISABLE_NUMBA)")


if __name__ == "__main__":
    main()
