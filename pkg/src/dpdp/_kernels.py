"""Hot simulation kernel.

``simulate_plans`` is compiled with numba when it is importable, unless
``DPDP_DISABLE_NUMBA`` is set to a truthy value; the same source then runs
as plain Python over numpy arrays.  ``simulate_plans_py`` is always the
uncompiled function (used by the benchmark and equivalence tests).
"""
from __future__ import annotations

import os

import numpy as np

DEPART = 0
ARRIVE = 1
NO_EVENT = -1
FOREVER = np.iinfo(np.int64).max

DOCKED = 0
IN_TRANSIT = 1


def _numba_disabled() -> bool:
    return os.environ.get("DPDP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not _numba_disabled()


def simulate_plans_py(start_kind, start_factory, start_time, rank,
                      visit_ptr, visit_factory, visit_service, due_ptr, due,
                      travel, ports, now, horizon):
    """Event-driven joint simulation of all vehicles' visit sequences.

    Vehicle ``v`` owns visits ``visit_ptr[v]:visit_ptr[v+1]``.  A docked
    vehicle (``start_kind == DOCKED``) sits at ``start_factory`` until
    ``start_time`` (holding a port while ``start_time > now``); an in-transit
    vehicle arrives at its first visit at ``start_time``.  Events with time
    ``<= horizon`` are processed; ties go departures first, then by ``rank``.

    Returns per-visit arrival/waiting/departure (``-1`` when not reached),
    each vehicle's pending event (time, kind, visit), and the tardiness and
    waiting totals over processed arrivals.
    """
    n_veh = start_kind.shape[0]
    n_vis = visit_factory.shape[0]
    n_fac = ports.shape[0]
    arrival = np.full(n_vis, -1, np.int64)
    waiting = np.zeros(n_vis, np.int64)
    departure = np.full(n_vis, -1, np.int64)
    ev_time = np.zeros(n_veh, np.int64)
    ev_kind = np.full(n_veh, NO_EVENT, np.int64)
    ev_visit = np.full(n_veh, -1, np.int64)
    res = np.zeros((n_fac, max(n_veh, 1)), np.int64)
    res_n = np.zeros(n_fac, np.int64)
    in_list = np.zeros(n_veh, np.bool_)
    tardiness = 0
    total_wait = 0

    for v in range(n_veh):
        b = visit_ptr[v]
        e = visit_ptr[v + 1]
        if start_kind[v] == DOCKED:
            t = start_time[v]
            if t > now:
                f = start_factory[v]
                k = res_n[f]
                i = k
                while i > 0 and res[f, i - 1] > t:
                    res[f, i] = res[f, i - 1]
                    i -= 1
                res[f, i] = t
                res_n[f] = k + 1
                in_list[v] = True
                ev_time[v] = t
                ev_kind[v] = DEPART
            elif e > b:
                ev_time[v] = now
                ev_kind[v] = DEPART
        else:
            ev_time[v] = start_time[v]
            ev_kind[v] = ARRIVE
            ev_visit[v] = b

    while True:
        best = -1
        for v in range(n_veh):
            if ev_kind[v] == NO_EVENT:
                continue
            if best < 0:
                best = v
                continue
            if ev_time[v] < ev_time[best]:
                best = v
            elif ev_time[v] == ev_time[best]:
                if ev_kind[v] < ev_kind[best]:
                    best = v
                elif ev_kind[v] == ev_kind[best] and rank[v] < rank[best]:
                    best = v
        if best < 0 or ev_time[best] > horizon:
            break
        v = best
        t = ev_time[v]
        j = ev_visit[v]
        e = visit_ptr[v + 1]
        if ev_kind[v] == DEPART:
            f = start_factory[v] if j < 0 else visit_factory[j]
            if in_list[v]:
                k = res_n[f]
                i = 0
                while res[f, i] != t:
                    i += 1
                while i < k - 1:
                    res[f, i] = res[f, i + 1]
                    i += 1
                res_n[f] = k - 1
                in_list[v] = False
            nxt = visit_ptr[v] if j < 0 else j + 1
            if nxt < e:
                ev_time[v] = t + travel[f, visit_factory[nxt]]
                ev_kind[v] = ARRIVE
                ev_visit[v] = nxt
            else:
                ev_kind[v] = NO_EVENT
        else:
            f = visit_factory[j]
            k = res_n[f]
            c = ports[f]
            start = t if k < c else res[f, k - c]
            td = start + visit_service[j]
            i = k
            while i > 0 and res[f, i - 1] > td:
                res[f, i] = res[f, i - 1]
                i -= 1
            res[f, i] = td
            res_n[f] = k + 1
            in_list[v] = True
            arrival[j] = t
            waiting[j] = start - t
            departure[j] = td
            total_wait += start - t
            for d in range(due_ptr[j], due_ptr[j + 1]):
                late = t - due[d]
                if late > 0:
                    tardiness += late
            ev_time[v] = td
            ev_kind[v] = DEPART

    return arrival, waiting, departure, ev_time, ev_kind, ev_visit, tardiness, total_wait


if USE_NUMBA:
    simulate_plans = numba.njit(cache=True)(simulate_plans_py)
else:
    simulate_plans = simulate_plans_py


def compiled_variant():
    """The numba-compiled kernel regardless of the env flag (``None`` without numba)."""
    if numba is None:
        return None
    if USE_NUMBA:
        return simulate_plans
    return numba.njit(cache=True)(simulate_plans_py)
