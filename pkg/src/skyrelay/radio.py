"""Slotted dynamic-TDD air interface.

Every slot, symbols are first split between uplink and downlink in proportion
to each direction's backlog (expressed as airtime and capped at one slot), then
handed out one whole symbol at a time, round-robin, to the backlogged bearers
of each direction.  A symbol never serves more than one bearer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import hot
from .buffers import pop_head

UL = 0
DL = 1
_EPS = 1e-9


@dataclass(frozen=True)
class SlotShape:
    duration_s: float = 1e-3
    symbol_count: int = 14

    def __post_init__(self):
        if self.duration_s <= 0 or self.symbol_count < 1:
            raise ValueError("slot needs positive duration and at least one symbol")

    @property
    def duration_ns(self) -> int:
        return int(round(self.duration_s * 1e9))

    def symbol_end_offsets_ns(self) -> np.ndarray:
        """End of each symbol relative to the slot start; the last one equals the slot length."""
        k = np.arange(1, self.symbol_count + 1, dtype=np.int64)
        return (k * self.duration_ns) // self.symbol_count


@dataclass(frozen=True)
class Slot:
    index: int
    start_time: float
    shape: SlotShape = SlotShape()

    @property
    def duration(self) -> float:
        return self.shape.duration_s

    @property
    def symbol_count(self) -> int:
        return self.shape.symbol_count


def bytes_per_symbol(rate_bps: float, slot_duration_s: float = 1e-3, symbol_count: int = 14) -> float:
    return rate_bps * slot_duration_s / symbol_count / 8.0


@hot
def split_symbols(demand_ul, demand_dl, weight_ul, weight_dl, n_sym):
    """Number of (UL, DL) symbols for one slot.

    ``demand_*`` are whole symbols needed to drain the direction, ``weight_*``
    its backlog in (fractional, capped) symbols of airtime.
    """
    if demand_ul + demand_dl <= n_sym:
        return demand_ul, demand_dl
    if demand_ul == 0:
        return 0, n_sym
    if demand_dl == 0:
        return n_sym, 0
    u = int(math.floor(n_sym * weight_ul / (weight_ul + weight_dl) + 0.5))
    u = min(max(u, 1), n_sym - 1)
    if u > demand_ul:
        u = demand_ul
        v = min(n_sym - u, demand_dl)
    elif n_sym - u > demand_dl:
        v = demand_dl
        u = min(n_sym - v, demand_ul)
    else:
        v = n_sym - u
    return u, v


@hot
def _round_robin(d, n_give, demand, members, n_members, rr_ptr, owner, first_pos):
    nb = n_members[d]
    if nb == 0 or n_give == 0:
        return 0
    start = rr_ptr[d]
    pos = start
    given = 0
    last = -1
    while given < n_give:
        found = -1
        for k in range(nb):
            p = (pos + k) % nb
            if demand[members[d, p]] > 0:
                found = p
                break
        if found < 0:
            break
        b = members[d, found]
        owner[first_pos + given] = b
        demand[b] -= 1
        given += 1
        last = found
        pos = found + 1
    if last >= 0:
        nxt = (last + 1) % nb
        if nxt == start and nb > 1:
            nxt = (nxt + 1) % nb
        rr_ptr[d] = nxt
    return given


@hot
def allocate(elig_bytes, dir_of, bps, members, n_members, rr_ptr, ul_first, owner, demand):
    """Fill ``owner[j]`` with the bearer served in symbol j (-1: idle).

    Returns (uplink symbols, downlink symbols).
    """
    n_sym = owner.shape[0]
    dem_ul = 0
    dem_dl = 0
    air_ul = 0.0
    air_dl = 0.0
    for b in range(elig_bytes.shape[0]):
        d = dir_of[b]
        if elig_bytes[b] > _EPS:
            k = int(math.ceil(elig_bytes[b] / bps[d] - _EPS))
            if k < 1:
                k = 1
            demand[b] = k
            if d == UL:
                dem_ul += k
                air_ul += elig_bytes[b] / bps[d]
            else:
                dem_dl += k
                air_dl += elig_bytes[b] / bps[d]
        else:
            demand[b] = 0
    u, v = split_symbols(dem_ul, dem_dl, min(air_ul, float(n_sym)), min(air_dl, float(n_sym)), n_sym)
    for j in range(n_sym):
        owner[j] = -1
    if ul_first:
        gu = _round_robin(UL, u, demand, members, n_members, rr_ptr, owner, 0)
        gv = _round_robin(DL, v, demand, members, n_members, rr_ptr, owner, gu)
    else:
        gv = _round_robin(DL, v, demand, members, n_members, rr_ptr, owner, 0)
        gu = _round_robin(UL, u, demand, members, n_members, rr_ptr, owner, gv)
    return gu, gv


@hot
def serve_symbol(q, b, budget, done):
    """Drain up to ``budget`` bytes of eligible data from bearer ``b``.

    Completed packets are popped and their ring indices written to ``done``;
    a packet cut short keeps its residual at the head.  Returns the number of
    completions.
    """
    n = 0
    while budget > _EPS and q.elig_cnt[b] > 0:
        r = q.resid[b]
        if r <= budget + _EPS:
            budget -= r
            q.occ[b] -= r
            q.elig_bytes[b] -= r
            q.resid[b] = 0.0
            done[n] = pop_head(q, b)
            n += 1
        else:
            q.resid[b] = r - budget
            q.occ[b] -= budget
            q.elig_bytes[b] -= budget
            budget = 0.0
    return n


@dataclass
class SlotAllocation:
    owner: np.ndarray              # bearer per symbol, -1 idle
    direction: np.ndarray          # UL/DL per symbol, -1 idle

    @property
    def ul_symbols(self) -> int:
        return int((self.direction == UL).sum())

    @property
    def dl_symbols(self) -> int:
        return int((self.direction == DL).sum())

    def grants(self) -> dict[int, int]:
        ids, counts = np.unique(self.owner[self.owner >= 0], return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))

    def ranges(self) -> list[tuple[int, int, int]]:
        """Maximal runs (first symbol, end symbol, bearer)."""
        out = []
        j = 0
        n = len(self.owner)
        while j < n:
            k = j
            while k + 1 < n and self.owner[k + 1] == self.owner[j]:
                k += 1
            if self.owner[j] >= 0:
                out.append((j, k + 1, int(self.owner[j])))
            j = k + 1
        return out


class SlotScheduler:
    """Stateful wrapper (keeps the round-robin pointers across slots)."""

    def __init__(self, dir_of, bps_ul: float, bps_dl: float, symbol_count: int = 14,
                 ul_first: bool = True):
        self.dir_of = np.asarray(dir_of, dtype=np.int64)
        self.bps = np.array([bps_ul, bps_dl], dtype=np.float64)
        self.n_sym = symbol_count
        self.ul_first = ul_first
        self.members, self.n_members = direction_members(self.dir_of)
        self.rr_ptr = np.zeros(2, dtype=np.int64)
        self._demand = np.zeros(len(self.dir_of), dtype=np.int64)

    def schedule_slot(self, backlog_bytes) -> SlotAllocation:
        owner = np.empty(self.n_sym, dtype=np.int64)
        allocate(np.asarray(backlog_bytes, dtype=np.float64), self.dir_of, self.bps,
                 self.members, self.n_members, self.rr_ptr, self.ul_first, owner, self._demand)
        direction = np.where(owner >= 0, self.dir_of[np.maximum(owner, 0)], -1)
        return SlotAllocation(owner, direction)


def direction_members(dir_of: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    members = np.full((2, max(len(dir_of), 1)), -1, dtype=np.int64)
    n_members = np.zeros(2, dtype=np.int64)
    for b, d in enumerate(dir_of):
        members[d, n_members[d]] = b
        n_members[d] += 1
    return members, n_members
