"""End-to-end measurement: per-user throughput, L1/L2 latency, reliability,
and the CSV record format."""
from __future__ import annotations

import csv
import io
import math
from collections import namedtuple
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._jit import hot

CSV_COLUMNS = [
    "scenario", "n", "fps", "seed", "throughput_mbps", "l1_ms", "l2_ms", "latency_ms",
    "reliability_pct", "sent_ul", "delivered_ul", "dropped_buf_ul", "dropped_ch_ul",
    "sent_dl", "delivered_dl", "dropped_buf_dl", "dropped_ch_dl",
]

MeterArrays = namedtuple("MeterArrays", ["lat_sum_ns", "lat_n", "bytes_meas", "measure_from"])

_NEVER = np.iinfo(np.int64).max


def make_meters(n_bearers: int) -> MeterArrays:
    return MeterArrays(
        lat_sum_ns=np.zeros(n_bearers, dtype=np.int64),
        lat_n=np.zeros(n_bearers, dtype=np.int64),
        bytes_meas=np.zeros(n_bearers, dtype=np.int64),
        measure_from=np.array([_NEVER], dtype=np.int64),
    )


@hot
def record_delivery(m, b, t_ns, enq_ns, size):
    """Accumulate one per-hop latency sample and the delivered bytes."""
    if t_ns >= m.measure_from[0]:
        m.lat_sum_ns[b] += t_ns - enq_ns
        m.lat_n[b] += 1
        m.bytes_meas[b] += size


@dataclass
class MetricRecord:
    scenario: str
    n_vehicles: int
    fps: float
    seed: int
    per_user_throughput: float          # bit/s
    latency_l1: float | None            # s
    latency_l2: float | None            # s
    reliability: float
    sent_ul: int = 0
    delivered_ul: int = 0
    dropped_overflow_ul: int = 0
    dropped_channel_ul: int = 0
    queued_ul: int = 0
    sent_dl: int = 0
    delivered_dl: int = 0
    dropped_overflow_dl: int = 0
    dropped_channel_dl: int = 0
    queued_dl: int = 0

    @property
    def latency_total(self) -> float | None:
        if self.latency_l1 is None or self.latency_l2 is None:
            return None
        return self.latency_l1 + self.latency_l2

    def ledger_closes(self) -> bool:
        ul = self.delivered_ul + self.dropped_overflow_ul + self.dropped_channel_ul + self.queued_ul
        dl = self.delivered_dl + self.dropped_overflow_dl + self.dropped_channel_dl + self.queued_dl
        return ul == self.sent_ul and dl == self.sent_dl

    def csv_row(self) -> dict:
        def ms(x):
            return "" if x is None else f"{x * 1e3:.6f}"
        fps = int(self.fps) if float(self.fps).is_integer() else self.fps
        return {
            "scenario": self.scenario, "n": self.n_vehicles, "fps": fps, "seed": self.seed,
            "throughput_mbps": f"{self.per_user_throughput / 1e6:.6f}",
            "l1_ms": ms(self.latency_l1), "l2_ms": ms(self.latency_l2),
            "latency_ms": ms(self.latency_total),
            "reliability_pct": f"{self.reliability * 100:.6f}",
            "sent_ul": self.sent_ul, "delivered_ul": self.delivered_ul,
            "dropped_buf_ul": self.dropped_overflow_ul, "dropped_ch_ul": self.dropped_channel_ul,
            "sent_dl": self.sent_dl, "delivered_dl": self.delivered_dl,
            "dropped_buf_dl": self.dropped_overflow_dl, "dropped_ch_dl": self.dropped_channel_dl,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _mean_or_none(total_ns, count) -> float | None:
    return None if count == 0 else total_ns / count / 1e9


def hop_latency(meters: MeterArrays, bearers) -> float | None:
    """Mean latency over ``bearers``: each bearer's mean, averaged over the
    bearers that delivered anything."""
    per = [_mean_or_none(meters.lat_sum_ns[b], meters.lat_n[b]) for b in bearers]
    per = [x for x in per if x is not None]
    return float(np.mean(per)) if per else None


def finalize(scenario: str, n: int, fps: float, seed: int, queues, meters: MeterArrays,
             expected_per_user, window_s: float) -> MetricRecord:
    """Build the run's record.

    ``expected_per_user[k]`` is the number of units the UAV sent for vehicle k
    (the reliability denominator); ``window_s`` the measured interval.
    """
    dl = range(1, n + 1)
    thr = [meters.bytes_meas[b] * 8.0 / window_s for b in dl]
    rel = [queues.delivered[b] / expected_per_user[b - 1] if expected_per_user[b - 1] else 0.0
           for b in dl]
    q = queues
    return MetricRecord(
        scenario=scenario, n_vehicles=n, fps=fps, seed=seed,
        per_user_throughput=float(np.mean(thr)),
        latency_l1=hop_latency(meters, [0]),
        latency_l2=hop_latency(meters, dl),
        reliability=float(min(1.0, np.mean(rel))),
        sent_ul=int(q.offered[0]), delivered_ul=int(q.delivered[0]),
        dropped_overflow_ul=int(q.dropped_overflow[0]),
        dropped_channel_ul=int(q.dropped_channel[0]), queued_ul=int(q.count[0]),
        sent_dl=int(q.offered[1:].sum()), delivered_dl=int(q.delivered[1:].sum()),
        dropped_overflow_dl=int(q.dropped_overflow[1:].sum()),
        dropped_channel_dl=int(q.dropped_channel[1:].sum()), queued_dl=int(q.count[1:].sum()),
    )


KEY_COLUMNS = ["scenario", "n", "fps", "seed"]


def select_columns(columns=None) -> list[str]:
    """Full schema, or the key columns plus a chosen subset (figure views)."""
    if columns is None:
        return list(CSV_COLUMNS)
    bad = [c for c in columns if c not in CSV_COLUMNS]
    if bad:
        raise ValueError(f"unknown columns {bad}")
    return KEY_COLUMNS + [c for c in CSV_COLUMNS if c in columns and c not in KEY_COLUMNS]


def write_csv(records, fh, header_lines=(), columns=None) -> None:
    """Comment lines (``# ...``) first, then the header row and one row per record."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    cols = select_columns(columns)
    w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in records:
        w.writerow(r.csv_row())


def records_to_csv(records, header_lines=(), columns=None) -> str:
    buf = io.StringIO()
    write_csv(records, buf, header_lines, columns)
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for r in rows:
        for k, v in r.items():
            if k == "scenario":
                continue
            r[k] = math.nan if v == "" else float(v)
    return rows
