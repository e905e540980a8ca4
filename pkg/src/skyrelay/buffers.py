"""Finite drop-tail transmit queues, one per bearer (RLC buffer abstraction).

All queues of a run live in one set of ring-buffer arrays so the compiled
slot loop can work on them directly.  Row 0 is the UAV->BS uplink bearer,
row k (k >= 1) the BS->vehicle k downlink bearer.
"""
from __future__ import annotations

from collections import namedtuple

import numpy as np

from ._jit import hot

RLC_BUFFER_BYTES = 10 * 1024 * 1024

QueueArrays = namedtuple("QueueArrays", [
    "enq_ns", "size", "dest", "frame",     # [bearers, ring]
    "head", "count", "elig_cnt",           # int64[bearers]
    "occ", "resid", "elig_bytes",          # float64[bearers]
    "capacity",                            # float64[bearers]
    "offered", "dropped_overflow", "dropped_channel", "delivered",
])


def make_queues(n_bearers: int, ring: int, capacity_bytes) -> QueueArrays:
    cap = np.broadcast_to(np.asarray(capacity_bytes, dtype=np.float64), (n_bearers,)).copy()
    z = lambda: np.zeros(n_bearers, dtype=np.int64)  # noqa: E731
    return QueueArrays(
        enq_ns=np.zeros((n_bearers, ring), dtype=np.int64),
        size=np.zeros((n_bearers, ring), dtype=np.int32),
        dest=np.zeros((n_bearers, ring), dtype=np.int32),
        frame=np.zeros((n_bearers, ring), dtype=np.int32),
        head=z(), count=z(), elig_cnt=z(),
        occ=np.zeros(n_bearers), resid=np.zeros(n_bearers), elig_bytes=np.zeros(n_bearers),
        capacity=cap,
        offered=z(), dropped_overflow=z(), dropped_channel=z(), delivered=z(),
    )


# status codes of enqueue()
ACCEPTED = 0
DROPPED_OVERFLOW = 1
RING_FULL = 2


@hot
def enqueue(q, b, t_ns, size, dest, frame):
    q.offered[b] += 1
    if q.occ[b] + size > q.capacity[b]:
        q.dropped_overflow[b] += 1
        return DROPPED_OVERFLOW
    ring = q.enq_ns.shape[1]
    n = q.count[b]
    if n == ring:
        return RING_FULL
    i = (q.head[b] + n) % ring
    q.enq_ns[b, i] = t_ns
    q.size[b, i] = size
    q.dest[b, i] = dest
    q.frame[b, i] = frame
    if n == 0:
        q.resid[b] = size
    q.count[b] = n + 1
    q.occ[b] += size
    return ACCEPTED


@hot
def head_index(q, b):
    """Ring index of the oldest queued packet, or -1 when empty."""
    if q.count[b] == 0:
        return -1
    return q.head[b]


@hot
def pop_head(q, b):
    """Remove the head packet (its residual must already be zero in the byte
    accounting) and return its ring index; fields stay readable until the
    next enqueue on this bearer."""
    ring = q.enq_ns.shape[1]
    i = q.head[b]
    q.head[b] = (i + 1) % ring
    q.count[b] -= 1
    if q.elig_cnt[b] > 0:
        q.elig_cnt[b] -= 1
    if q.count[b] > 0:
        q.resid[b] = q.size[b, q.head[b]]
    else:
        q.resid[b] = 0.0
        q.occ[b] = 0.0
        q.elig_bytes[b] = 0.0
    if q.elig_cnt[b] == 0:
        q.elig_bytes[b] = 0.0
    return i


@hot
def mark_eligible(q, b, cutoff_ns):
    """Extend the scheduler-visible prefix of the queue with every packet
    enqueued at or before ``cutoff_ns``."""
    ring = q.enq_ns.shape[1]
    while q.elig_cnt[b] < q.count[b]:
        i = (q.head[b] + q.elig_cnt[b]) % ring
        if q.enq_ns[b, i] > cutoff_ns:
            break
        if q.elig_cnt[b] == 0:
            q.elig_bytes[b] += q.resid[b]
        else:
            q.elig_bytes[b] += q.size[b, i]
        q.elig_cnt[b] += 1


def ledger_ok(q: QueueArrays) -> bool:
    """offered == delivered + overflow drops + channel drops + still queued."""
    lhs = q.offered
    rhs = q.delivered + q.dropped_overflow + q.dropped_channel + q.count
    return bool(np.array_equal(lhs, rhs))


class BearerQueues:
    """Object view over the queue arrays, mainly for inspection and tests."""

    def __init__(self, n_bearers: int, capacity_bytes=RLC_BUFFER_BYTES, ring: int = 1024):
        self.arrays = make_queues(n_bearers, ring, capacity_bytes)

    def enqueue(self, b: int, t_ns: int, size: int, dest: int = -1, frame: int = 0) -> str:
        if size <= 0:
            raise ValueError("packet size must be positive")
        status = enqueue(self.arrays, b, t_ns, size, dest, frame)
        if status == RING_FULL:
            raise OverflowError("ring storage exhausted")
        return "Accepted" if status == ACCEPTED else "DroppedOverflow"

    def head_of_line(self, b: int):
        """(enqueue time ns, size, residual bytes) of the oldest packet, or None."""
        i = head_index(self.arrays, b)
        if i < 0:
            return None
        a = self.arrays
        return int(a.enq_ns[b, i]), int(a.size[b, i]), float(a.resid[b])

    def occupancy(self, b: int) -> float:
        return float(self.arrays.occ[b])

    def __len__(self) -> int:
        return len(self.arrays.head)

    def queued(self, b: int) -> int:
        return int(self.arrays.count[b])
