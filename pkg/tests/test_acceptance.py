"""Acceptance criteria, each at its stated tolerance.

The full four-scenario sweep (720 cells, 15 s each) runs once per session;
criteria 1-8 read their numbers from it and criterion 10 times it.  Every
check records a one-line verdict that is printed after the run.
"""
import math
import time
from collections import defaultdict

import numpy as np
import pytest

from skyrelay.buffers import RLC_BUFFER_BYTES
from skyrelay.calibration import DEGRADED_BELOW
from skyrelay.engine import rng_stream
from skyrelay.metrics import records_to_csv
from skyrelay.radio import DL, UL, SlotScheduler, bytes_per_symbol
from skyrelay.runner import figure_recipe, run_sweep
from skyrelay.scenario import simulate
from skyrelay.topology import LinkModel, channel_draw
from skyrelay.traffic import builtin_trace, fragment

N_ALL = range(4, 22)


class Sweep:
    def __init__(self, result, seconds):
        self.result = result
        self.seconds = seconds
        self.cells = defaultdict(list)
        for r in result.records:
            self.cells[r.scenario, r.n_vehicles, r.fps].append(r)

    def mean(self, kind, n, fps, attr):
        vals = [getattr(r, attr) for r in self.cells[kind, n, float(fps)]]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else math.nan

    def thr(self, kind, n, fps):
        return self.mean(kind, n, fps, "per_user_throughput") / 1e6

    def rel(self, kind, n, fps):
        return self.mean(kind, n, fps, "reliability")

    def lat(self, kind, n, fps):
        return self.mean(kind, n, fps, "latency_total") * 1e3

    def ms(self, kind, n, fps, attr):
        return self.mean(kind, n, fps, attr) * 1e3


@pytest.fixture(scope="session")
def sweep():
    cfg = figure_recipe("fig3a", columns=None)
    t0 = time.perf_counter()
    result = run_sweep(cfg)
    return Sweep(result, time.perf_counter() - t0)


def _verdict(report, tag, ok, detail):
    report.append(f"{tag}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_calibration(sweep, acceptance_report):
    mff = [sweep.rel("mff", n, 30) for n in N_ALL]
    bff = [sweep.rel("bff", n, 30) for n in N_ALL]
    first = lambda rel: next((n for n, r in zip(N_ALL, rel) if r < DEGRADED_BELOW), None)  # noqa: E731
    link = LinkModel()
    _verdict(acceptance_report, "CALIBRATION", first(mff) == 11 and first(bff) == 21,
             f"uplink={link.uplink_rate / 1e6:.0f} downlink={link.downlink_rate / 1e6:.0f} Mbit/s;"
             f" MFF@30 first below 99% at N={first(mff)}, BFF@30 at N={first(bff)}"
             " (targets 11, 21)")


def test_criterion_1_unsaturated_throughput(sweep, acceptance_report):
    got = {(k, f): sweep.thr(k, 4, f) for k in ("mff", "bff") for f in (30, 15)}
    ok = all(abs(v - (39.2 if f == 30 else 19.6)) <= 0.05 * (39.2 if f == 30 else 19.6)
             for (k, f), v in got.items())
    _verdict(acceptance_report, "CRITERION 1", ok,
             "N=4 Mbit/s " + ", ".join(f"{k}@{f}={v:.3f}" for (k, f), v in got.items())
             + " (39.2 / 19.6 +-5%)")


def test_criterion_2_mff_collapse(sweep, acceptance_report):
    rel = {n: sweep.rel("mff", n, 30) for n in N_ALL}
    stable = all(rel[n] >= 0.99 for n in range(4, 11))
    tail = [rel[n] for n in range(11, 22)]
    monotone = all(b <= a for a, b in zip(tail, tail[1:]))
    ok = stable and rel[11] <= 0.96 and monotone and rel[21] <= 0.60
    _verdict(acceptance_report, "CRITERION 2", ok,
             f"min rel N<=10 {min(rel[n] for n in range(4, 11)):.2%}, N=11 {rel[11]:.2%},"
             f" N=21 {rel[21]:.2%}, monotone N>=11: {monotone}")


def test_criterion_3_latency_plateau(sweep, acceptance_report):
    link = LinkModel()
    # the saturated MFF uplink bearer drains at the relay capacity: every byte
    # it sends must cross the downlink in the same TDD airtime
    mu = link.relay_capacity
    plateau = 8 * RLC_BUFFER_BYTES / mu * 1e3
    lo, hi = 0.85 * plateau, 1.15 * plateau
    lat = {n: sweep.lat("mff", n, 30) for n in range(13, 22)}
    ok = all(lo <= v <= hi for v in lat.values())
    literal = 8 * RLC_BUFFER_BYTES / link.uplink_rate * 1e3
    _verdict(acceptance_report, "CRITERION 3", ok,
             f"MFF@30 N>=13 latency {min(lat.values()):.1f}-{max(lat.values()):.1f} ms in"
             f" [{lo:.1f}, {hi:.1f}] (mu = relay capacity {mu / 1e6:.1f} Mbit/s;"
             f" raw uplink rate would give {literal:.1f} ms)")


def test_criterion_4_mff_15fps_threshold(sweep, acceptance_report):
    rel = {n: sweep.rel("mff", n, 15) for n in N_ALL}
    ok = (all(rel[n] >= 0.99 for n in range(4, 20)) and rel[20] < 0.99 and rel[21] < 0.99
          and abs(rel[19] - 0.9958) <= 0.05 and abs(rel[21] - 0.8476) <= 0.05)
    _verdict(acceptance_report, "CRITERION 4", ok,
             f"MFF@15 rel N=19 {rel[19]:.2%}, N=20 {rel[20]:.2%}, N=21 {rel[21]:.2%}")


def test_criterion_5_bff(sweep, acceptance_report):
    thr = [sweep.thr("bff", n, 30) for n in range(4, 21)]
    lat = {n: sweep.lat("bff", n, 30) for n in N_ALL}
    thr_ok = all(35 * 0.9 <= v <= 39 * 1.1 for v in thr)
    spike_ok = all(lat[n] < 100 for n in range(4, 21)) and lat[21] >= 100
    _verdict(acceptance_report, "CRITERION 5", thr_ok and spike_ok,
             f"BFF@30 thr N<=20 {min(thr):.2f}-{max(thr):.2f} Mbit/s,"
             f" max latency N<=20 {max(lat[n] for n in range(4, 21)):.2f} ms,"
             f" N=21 {lat[21]:.1f} ms")


def test_criterion_6_edge_processing(sweep, acceptance_report):
    cells = [(k, n, f) for k in ("bfa", "bao") for n in N_ALL for f in (15, 30)]
    worst_lat = max(sweep.lat(*c) for c in cells)
    worst_rel = min(sweep.rel(*c) for c in cells)
    _verdict(acceptance_report, "CRITERION 6", worst_lat <= 5.0 and worst_rel >= 0.98,
             f"BFA/BAO worst latency {worst_lat:.3f} ms (<=5), worst reliability"
             f" {worst_rel:.2%} (>=98%)")


def test_criterion_7_bao_throughput(sweep, acceptance_report):
    t30, t15 = sweep.thr("bao", 21, 30), sweep.thr("bao", 21, 15)
    ok = abs(t30 - 0.2085) <= 0.05 * 0.2085 and abs(t15 - 0.1045) <= 0.05 * 0.1045
    _verdict(acceptance_report, "CRITERION 7", ok,
             f"BAO N=21 {t30:.4f} Mbit/s @30 (0.2085 +-5%), {t15:.4f} @15 (0.1045 +-5%)")


def test_criterion_8_hop_asymmetry(sweep, acceptance_report):
    l1 = [sweep.ms("bfa", n, 30, "latency_l1") for n in N_ALL]
    l2 = [sweep.ms("bfa", n, 30, "latency_l2") for n in N_ALL]
    ok = (all(a < b for a, b in zip(l1, l2)) and all(0.6 <= a <= 0.8 for a in l1)
          and all(1.0 <= b <= 1.9 for b in l2))
    _verdict(acceptance_report, "CRITERION 8", ok,
             f"BFA@30 L1 {min(l1):.3f}-{max(l1):.3f} ms, L2 {min(l2):.3f}-{max(l2):.3f} ms")


def test_criterion_9_properties(sweep, acceptance_report):
    failures = []
    recs = sweep.result.records
    if not all(r.ledger_closes() for r in recs):
        failures.append("ledger")
    for e in builtin_trace():
        size = math.ceil(e.frame_size_bytes)
        if int(fragment(size).sum()) != size:
            failures.append(f"fragments n={e.vehicle_count}")
    by_key = {(r.scenario, r.n_vehicles, r.fps, r.seed): r for r in recs}
    for (k, n, f, s), r in by_key.items():
        if k == "mff" and r.sent_ul != n * by_key["bff", n, f, s].sent_ul:
            failures.append(f"offered load n={n} fps={f} seed={s}")
    again = [simulate(c) for c in figure_recipe("fig3a", seeds=(3,)).cells()[::37]]
    want = [by_key[r.scenario, r.n_vehicles, r.fps, r.seed] for r in again]
    if records_to_csv(again) != records_to_csv(want):
        failures.append("determinism")
    for k in ("mff", "bff", "bfa", "bao"):
        for n in range(4, 11):
            if abs(sweep.thr(k, n, 15) - sweep.thr(k, n, 30) / 2) > 0.01 * sweep.thr(k, n, 15):
                failures.append(f"fps halving {k} n={n}")
    sched = SlotScheduler([UL] + [DL] * 21, bytes_per_symbol(6.5e8), bytes_per_symbol(8.5e8))
    rng = np.random.default_rng(9)
    for _ in range(10_000):
        backlog = rng.choice([0.0, 900.0, 1e6], size=22, p=[0.5, 0.3, 0.2])
        owner = sched.schedule_slot(backlog).owner
        used = owner[owner >= 0]
        if len(owner) != 14 or any(backlog[b] == 0 for b in used) or (backlog.any() and not len(used)):
            failures.append("scheduler")
            break
    p, n = 2.5e-3, 100_000
    lost = 1 - channel_draw(LinkModel(), "UL", rng_stream("channel", 2024), n).mean()
    if abs(lost - p) > 3 * math.sqrt(p * (1 - p) / n):
        failures.append(f"channel loss {lost:.5f}")
    _verdict(acceptance_report, "CRITERION 9", not failures,
             f"{len(recs)} ledgers, 18 traces, offered-load identity, determinism, fps halving,"
             f" 10^4 scheduler slots, loss {lost:.5f} vs {p}" + (f"; failed {failures}" if failures else ""))


def test_criterion_10_runtime(sweep, acceptance_report):
    n = len(sweep.result.records)
    _verdict(acceptance_report, "CRITERION 10", n == 720 and sweep.seconds < 600,
             f"{n} cells in {sweep.seconds:.1f} s (< 600 s)")
