"""Frame and annotation sources: the frame-size trace, annotation sizing,
fragmentation into UDP datagrams and packet pacing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import NS_PER_S

BOX_SIZE_BYTES = 39.7
UDP_PAYLOAD_BYTES = 1472
UDP_IP_OVERHEAD_BYTES = 28

# Mean frame size per detected-vehicle count, with the spread observed over
# the sampled drone frames.
_TRACE_ROWS = [
    # n, mean, low, high
    (4, 160529.0, 160402.2, 160702.8),
    (5, 159668.0, 159571.59, 159774.2),
    (6, 153324.6, 153060.2, 153532.4),
    (7, 151629.2, 151433.4, 151865.05),
    (8, 146249.2, 145241.6, 147188.6),
    (9, 149530.2, 149240.4, 149734.4),
    (10, 139844.8, 136945.6, 141508.2),
    (11, 143601.0, 143091.6, 143997.2),
    (12, 146011.0, 145461.8, 146585.555),
    (13, 140527.2, 135552.2, 144530.2),
    (14, 146486.6, 145890.4, 147082.8),
    (15, 144966.4, 143832.4, 145768.8),
    (16, 148324.2, 148217.6, 148429.4),
    (17, 148367.0, 148195.4, 148532.8),
    (18, 147567.8, 145550.6, 148658.57),
    (19, 149139.4, 149097.965, 149175.6),
    (20, 155336.2, 154661.0, 155950.74),
    (21, 163442.2, 161325.945, 164593.8),
]


@dataclass(frozen=True)
class FrameTraceEntry:
    vehicle_count: int
    frame_size_bytes: float
    low: float | None = None
    high: float | None = None


def builtin_trace() -> list[FrameTraceEntry]:
    return [FrameTraceEntry(n, m, lo, hi) for n, m, lo, hi in _TRACE_ROWS]


def load_trace_csv(path: str | Path) -> list[FrameTraceEntry]:
    """Read a ``vehicle_count,frame_size_bytes`` CSV."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"vehicle_count", "frame_size_bytes"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"trace file {path} lacks columns {sorted(missing)}")
        for row in reader:
            entries.append(FrameTraceEntry(int(row["vehicle_count"]),
                                           float(row["frame_size_bytes"])))
    if not entries:
        raise ValueError(f"trace file {path} is empty")
    return entries


def trace_lookup(trace: list[FrameTraceEntry], n: int) -> FrameTraceEntry:
    for entry in trace:
        if entry.vehicle_count == n:
            return entry
    raise KeyError(f"no trace entry for {n} vehicles")


def annotation_size(n: int, box_size: float = BOX_SIZE_BYTES) -> float:
    if n < 0:
        raise ValueError("vehicle count must be non-negative")
    return n * box_size


def annotation_payload(n: int, box_size: float = BOX_SIZE_BYTES) -> int:
    # round first so e.g. 10 * 39.7 = 397.00000000000006 does not become 398
    return math.ceil(round(annotation_size(n, box_size), 9))


def fragment(frame_size: int, udp_payload: int = UDP_PAYLOAD_BYTES) -> np.ndarray:
    """Payload sizes of the datagrams carrying one frame."""
    if udp_payload < 1:
        raise ValueError("udp_payload must be >= 1")
    if frame_size < 0:
        raise ValueError("frame_size must be >= 0")
    count = -(-frame_size // udp_payload)
    sizes = np.full(count, udp_payload, dtype=np.int64)
    if count:
        sizes[-1] = frame_size - (count - 1) * udp_payload
    return sizes


def packet_interval_full_frames(frame_size: float, frame_rate: float,
                                udp_payload: int = UDP_PAYLOAD_BYTES) -> float:
    """Inter-datagram gap, in seconds, spreading a frame over its period."""
    if frame_size <= 0 or frame_rate <= 0 or udp_payload <= 0:
        raise ValueError("frame_size, frame_rate and udp_payload must be positive")
    return udp_payload / (frame_size * frame_rate)


@dataclass(frozen=True)
class SourceProfile:
    frame_rate: float = 30.0
    annotation_rate: float | None = None  # None: same as frame_rate
    box_size_bytes: float = BOX_SIZE_BYTES
    udp_payload_bytes: int = UDP_PAYLOAD_BYTES
    per_packet_overhead_bytes: int = UDP_IP_OVERHEAD_BYTES

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.box_size_bytes <= 0:
            raise ValueError("box_size_bytes must be positive")
        if self.udp_payload_bytes < 1:
            raise ValueError("udp_payload_bytes must be >= 1")
        if self.annotation_rate is not None and self.annotation_rate <= 0:
            raise ValueError("annotation_rate must be positive")

    @property
    def anno_rate(self) -> float:
        return self.frame_rate if self.annotation_rate is None else self.annotation_rate


@dataclass
class Emission:
    """Datagrams released by one frame-generation event, in send order."""
    times_ns: np.ndarray
    sizes: np.ndarray      # wire bytes: payload + overhead
    dest: np.ndarray       # vehicle index, -1 for "all"
    frame: int
    fragments: int         # datagrams per copy of the frame


def frame_period_ns(rate: float, index: int) -> int:
    return int(round(index * NS_PER_S / rate))


class FrameSource:
    """UAV application generating either full frames or annotations.

    ``copies`` > 1 produces that many identical, simultaneously paced unicast
    streams (one per vehicle); datagram j of every copy shares one timestamp.
    """

    def __init__(self, profile: SourceProfile, frame_bytes: float, n_vehicles: int,
                 mode: str = "frames", copies: int = 1,
                 size_sampler=None, start_ns: int = 0):
        if mode not in ("frames", "annotations"):
            raise ValueError(f"unknown source mode {mode!r}")
        self.profile = profile
        self.frame_bytes = frame_bytes
        self.n_vehicles = n_vehicles
        self.mode = mode
        self.copies = copies
        self._size_sampler = size_sampler
        self.start_ns = int(start_ns)
        self.frames_emitted = 0
        self.packets_emitted = 0
        self.bytes_emitted = 0
        self.payload_emitted = 0

    @property
    def rate(self) -> float:
        return self.profile.frame_rate if self.mode == "frames" else self.profile.anno_rate

    def frame_time_ns(self, index: int) -> int:
        return self.start_ns + frame_period_ns(self.rate, index)

    def emit(self, index: int) -> Emission:
        t0 = self.frame_time_ns(index)
        p = self.profile
        if self.mode == "annotations":
            payload = np.array([annotation_payload(self.n_vehicles, p.box_size_bytes)])
            offsets = np.zeros(1, dtype=np.int64)
        else:
            size = self.frame_bytes if self._size_sampler is None else self._size_sampler()
            frame_size = math.ceil(round(size, 9))
            payload = fragment(frame_size, p.udp_payload_bytes)
            gap_ns = packet_interval_full_frames(frame_size, p.frame_rate,
                                                 p.udp_payload_bytes) * NS_PER_S
            offsets = np.rint(np.arange(len(payload)) * gap_ns).astype(np.int64)
        k = self.copies
        times = np.repeat(t0 + offsets, k)
        sizes = np.repeat(payload + p.per_packet_overhead_bytes, k)
        if k > 1:
            # copies sharing a timestamp rotate their order so that drop-tail
            # admission does not always favour the same stream
            seq = index * len(payload) + np.arange(len(payload), dtype=np.int64)
            dest = ((seq[:, None] + np.arange(k, dtype=np.int64)) % k).ravel()
        else:
            dest = np.full(len(payload), -1, dtype=np.int64)
        self.frames_emitted += 1
        self.packets_emitted += len(sizes)
        self.bytes_emitted += int(sizes.sum())
        self.payload_emitted += int(payload.sum()) * k
        return Emission(times, sizes.astype(np.int64), dest, index, len(payload))
