"""Discrete-event core: a time-ordered event queue, the simulation clock and
seeded random streams.

Time is kept in integer nanoseconds internally; the public interface speaks
seconds.
"""
from __future__ import annotations

import enum
import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def to_s(ns: int) -> float:
    return ns / NS_PER_S


class SchedulingInPast(ValueError):
    pass


class EventKind(enum.Enum):
    FRAME_GENERATION = "FrameGeneration"
    SLOT_BOUNDARY = "SlotBoundary"
    PACKET_SERVICE_COMPLETE = "PacketServiceComplete"
    MEASUREMENT_FLUSH = "MeasurementFlush"
    SIMULATION_END = "SimulationEnd"


@dataclass(order=True)
class Event:
    fire_ns: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)
    action: Callable[["Event"], None] | None = field(default=None, compare=False)
    cancelled: bool = field(default=False, compare=False)

    @property
    def fire_time(self) -> float:
        return to_s(self.fire_ns)


class EventHandle:
    def __init__(self, event: Event):
        self._event = event

    @property
    def event(self) -> Event:
        return self._event

    def cancel(self) -> None:
        self._event.cancelled = True

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled


class SimClock:
    def __init__(self, end_time: float = 15.0):
        self.now_ns = 0
        self.end_ns = to_ns(end_time)

    @property
    def now(self) -> float:
        return to_s(self.now_ns)

    @property
    def end_time(self) -> float:
        return to_s(self.end_ns)


class EventQueue:
    """Min-heap of events keyed on (fire time, insertion sequence).

    Equal timestamps pop in insertion order, which keeps replays bit-identical.
    """

    def __init__(self, end_time: float = 15.0):
        self.clock = SimClock(end_time)
        self._heap: list[Event] = []
        self._seq = 0

    def __len__(self) -> int:
        return sum(1 for e in self._heap if not e.cancelled)

    @property
    def now(self) -> float:
        return self.clock.now

    def schedule_ns(self, fire_ns: int, kind: EventKind, payload: Any = None,
                    action: Callable[[Event], None] | None = None) -> EventHandle:
        if fire_ns < self.clock.now_ns:
            raise SchedulingInPast(
                f"event at {to_s(fire_ns)!r}s is before now={self.clock.now!r}s")
        ev = Event(fire_ns, self._seq, kind, payload, action)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return EventHandle(ev)

    def schedule(self, fire_time: float, kind: EventKind, payload: Any = None,
                 action: Callable[[Event], None] | None = None) -> EventHandle:
        return self.schedule_ns(to_ns(fire_time), kind, payload, action)

    def peek_ns(self) -> int | None:
        """Fire time of the next live event, or None."""
        heap = self._heap
        while heap and heap[0].cancelled:
            heapq.heappop(heap)
        return heap[0].fire_ns if heap else None

    def pop(self) -> Event | None:
        while self._heap:
            ev = heapq.heappop(self._heap)
            if not ev.cancelled:
                return ev
        return None

    def run_until(self, end: float) -> int:
        return self.run_until_ns(to_ns(end))

    def run_until_ns(self, end_ns: int) -> int:
        if end_ns < self.clock.now_ns:
            raise SchedulingInPast("run_until target is before now")
        heap = self._heap
        processed = 0
        while heap and heap[0].fire_ns <= end_ns:
            ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.clock.now_ns = ev.fire_ns
            if ev.action is not None:
                ev.action(ev)
            processed += 1
        self.clock.now_ns = end_ns
        return processed


def _stream_seed(label: str, seed: int) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")]


def rng_stream(label: str, seed: int) -> np.random.Generator:
    """Independent PCG64 stream for one stochastic concern of one run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_stream_seed(label, seed))))
