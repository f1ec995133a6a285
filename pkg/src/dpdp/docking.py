"""First-come-first-served docking ports as a sorted reservation list."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field


class ClockError(RuntimeError):
    """An event was presented to a reservation list out of time order."""


@dataclass
class ReservationList:
    """Vehicles currently at a factory, sorted by earliest departure time.

    With ``k`` vehicles present and ``c`` ports, an arrival is served at once
    if ``k < c``; otherwise it waits for the ``(k-c+1)``-th smallest departure.
    A vehicle leaves the list (and frees its port) at its earliest departure.
    """

    factory_id: str
    port_count: int
    entries: list[tuple[int, str]] = field(default_factory=list)
    clock: int | None = None

    def _tick(self, t: int) -> None:
        if self.clock is not None and t < self.clock:
            raise ClockError(f"{self.factory_id}: time {t} earlier than {self.clock}")
        self.clock = t

    def enqueue(self, vehicle: str, arrival: int, service: int) -> tuple[int, int]:
        """Register an arrival; returns ``(waiting, departure)``."""
        self._tick(arrival)
        k = len(self.entries)
        if k < self.port_count:
            start = arrival
        else:
            start = self.entries[k - self.port_count][0]
        departure = start + service
        bisect.insort(self.entries, (departure, vehicle))
        return start - arrival, departure

    def release(self, vehicle: str, now: int | None = None) -> None:
        if now is not None:
            self._tick(now)
        for i, (_, v) in enumerate(self.entries):
            if v == vehicle:
                del self.entries[i]
                return
        raise KeyError(f"vehicle {vehicle} not at factory {self.factory_id}")

    def occupied(self, vehicle: str, departure: int) -> None:
        """Seed the list with a vehicle already in service (simulation start)."""
        bisect.insort(self.entries, (departure, vehicle))

    def __len__(self):
        return len(self.entries)
