"""The four UAV-to-ground dissemination strategies wired onto one cell.

MFF  UAV unicasts one full-frame stream per vehicle; the BS forwards each.
BFF  UAV sends one full-frame stream; the BS copies it to every vehicle.
BFA  UAV sends one full-frame stream; the BS detects objects on each
     reassembled frame and sends the annotation to every vehicle.
BAO  UAV detects on board and sends annotations; the BS copies them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as K
from .buffers import RLC_BUFFER_BYTES, make_queues
from .engine import EventKind, EventQueue, NS_PER_S, rng_stream, to_ns
from .metrics import MetricRecord, finalize, make_meters
from .radio import SlotShape, bytes_per_symbol, direction_members
from .topology import DEPLOYMENT_RECT_M, UAV_HEIGHT_M, LinkModel, NodeLayout, place_vehicles
from .traffic import (FrameSource, FrameTraceEntry, SourceProfile, annotation_payload,
                      builtin_trace, fragment, trace_lookup)


class UnknownScenario(ValueError):
    pass


class ScenarioKind(enum.Enum):
    MFF = "mff"
    BFF = "bff"
    BFA = "bfa"
    BAO = "bao"

    @classmethod
    def parse(cls, value) -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise UnknownScenario(f"unknown scenario {value!r}; expected mff|bff|bfa|bao") from None


class RelayAction(enum.Enum):
    FORWARD_PER_VEHICLE_COPY = K.FORWARD
    DUPLICATE_TO_ALL = K.DUPLICATE
    PROCESS_THEN_ANNOTATE_ALL = K.ANNOTATE


@dataclass(frozen=True)
class RelayRule:
    on_uplink_delivery: RelayAction
    processing_delay: float = 0.0
    # fraction of a frame's datagrams that must arrive for detection to run
    min_fragment_fraction: float = 0.9


_RELAY = {
    ScenarioKind.MFF: RelayAction.FORWARD_PER_VEHICLE_COPY,
    ScenarioKind.BFF: RelayAction.DUPLICATE_TO_ALL,
    ScenarioKind.BFA: RelayAction.PROCESS_THEN_ANNOTATE_ALL,
    ScenarioKind.BAO: RelayAction.DUPLICATE_TO_ALL,
}


@dataclass(frozen=True)
class ReassembledFrame:
    frame: int
    fragments: int
    delivered: int


def relay_on_delivery(rule: RelayRule, unit, n_vehicles: int,
                      annotation_bytes: int | None = None) -> list[tuple[int, int]]:
    """Downlink enqueues (bearer, wire bytes) triggered at the BS by ``unit``.

    ``unit`` is a delivered uplink datagram ``(dest, size)`` for the forwarding
    rules, or a :class:`ReassembledFrame` for BFA.
    """
    if rule.on_uplink_delivery is RelayAction.PROCESS_THEN_ANNOTATE_ALL:
        if not K.frame_usable(unit.fragments, unit.delivered, rule.min_fragment_fraction):
            return []
        return [(k + 1, annotation_bytes) for k in range(n_vehicles)]
    dest, size = unit
    out = np.empty(n_vehicles + 1, dtype=np.int64)
    n = K.relay_targets(rule.on_uplink_delivery.value, dest, n_vehicles, out)
    return [(int(b), size) for b in out[:n]]


@dataclass(frozen=True)
class CellConfig:
    """Everything one simulation run needs."""
    scenario: ScenarioKind = ScenarioKind.MFF
    n_vehicles: int = 4
    fps: float = 30.0
    seed: int = 1
    sim_time: float = 15.0
    warmup: float = 0.5
    link: LinkModel = field(default_factory=LinkModel)
    buffer_bytes_ul: int = RLC_BUFFER_BYTES
    buffer_bytes_dl: int = RLC_BUFFER_BYTES
    profile: SourceProfile | None = None
    trace: tuple[FrameTraceEntry, ...] | None = None
    trace_jitter: bool = False
    slot: SlotShape = field(default_factory=SlotShape)
    ul_first: bool = True
    # buffer state is sampled this many symbols before each slot starts
    scheduling_lead_symbols: int = 2
    # offset of the UAV application clock against the slot grid; None draws
    # it uniformly within one slot from the run's seed
    source_phase: float | None = None
    processing_delay: float = 0.0
    min_fragment_fraction: float = 0.9
    uav_height_m: float = UAV_HEIGHT_M
    deployment_rect: tuple[float, float] = DEPLOYMENT_RECT_M

    def __post_init__(self):
        object.__setattr__(self, "scenario", ScenarioKind.parse(self.scenario))
        if self.n_vehicles < 1:
            raise ValueError("need at least one vehicle")
        if self.sim_time <= 0 or not 0 <= self.warmup < self.sim_time:
            raise ValueError("need sim_time > warmup >= 0")
        if self.scheduling_lead_symbols < 0 or (self.source_phase is not None and self.source_phase < 0):
            raise ValueError("scheduling_lead_symbols and source_phase must be non-negative")

    @property
    def source_profile(self) -> SourceProfile:
        return self.profile if self.profile is not None else SourceProfile(frame_rate=self.fps)

    def with_(self, **kw) -> "CellConfig":
        return replace(self, **kw)


class Simulation:
    """One run: sources, queues, radio and relay driven by the event queue."""

    def __init__(self, cfg: CellConfig):
        self.cfg = cfg
        kind = cfg.scenario
        n = cfg.n_vehicles
        self.kind = kind
        self.n = n
        self.profile = cfg.source_profile
        trace = list(cfg.trace) if cfg.trace is not None else builtin_trace()
        self.trace_entry = trace_lookup(trace, n)
        self.layout: NodeLayout = place_vehicles(
            n, cfg.deployment_rect, rng_stream("placement", cfg.seed), cfg.uav_height_m)
        self.rule = RelayRule(_RELAY[kind], cfg.processing_delay, cfg.min_fragment_fraction)

        sampler = None
        e = self.trace_entry
        if cfg.trace_jitter and e.low is not None and e.high is not None:
            trng = rng_stream("trace", cfg.seed)
            sampler = lambda: trng.uniform(e.low, e.high)  # noqa: E731
        mode = "annotations" if kind is ScenarioKind.BAO else "frames"
        copies = n if kind is ScenarioKind.MFF else 1
        if cfg.source_phase is None:
            phase_ns = int(rng_stream("phase", cfg.seed).integers(0, cfg.slot.duration_ns))
        else:
            phase_ns = to_ns(cfg.source_phase)
        self.source = FrameSource(self.profile, e.frame_size_bytes, n, mode, copies, sampler,
                                  start_ns=phase_ns)

        p = self.profile
        slot = cfg.slot
        self.end_ns = to_ns(cfg.sim_time)
        self.slot_ns = slot.duration_ns
        ann_wire = annotation_payload(n, p.box_size_bytes) + p.per_packet_overhead_bytes
        frame_bytes = math.ceil(e.frame_size_bytes)
        frags = len(fragment(frame_bytes, p.udp_payload_bytes))
        frame_wire = frame_bytes + frags * p.per_packet_overhead_bytes
        n_frames = int(math.ceil(cfg.sim_time * self.source.rate)) + 1
        if mode == "frames":
            ul_mean, ul_per_frame = frame_wire / frags, frags * copies
        else:
            ul_mean, ul_per_frame = ann_wire, 1
        dl_mean = ann_wire if kind in (ScenarioKind.BFA, ScenarioKind.BAO) else ul_mean
        dl_per_frame = 1 if kind is ScenarioKind.BFA else ul_per_frame
        if cfg.trace_jitter:
            ul_per_frame += 2 * copies
            dl_per_frame += 2
        ring = max(min(int(2 * cfg.buffer_bytes_ul / ul_mean) + 2 * copies + 16,
                       ul_per_frame * n_frames + 1),
                   min(int(2 * cfg.buffer_bytes_dl / dl_mean) + 16,
                       dl_per_frame * n_frames + 1))
        caps = np.full(n + 1, float(cfg.buffer_bytes_dl))
        caps[0] = cfg.buffer_bytes_ul
        self.queues = make_queues(n + 1, ring, caps)
        self.meters = make_meters(n + 1)

        dir_of = np.ones(n + 1, dtype=np.int64)
        dir_of[0] = 0
        members, n_members = direction_members(dir_of)
        bps = np.array([bytes_per_symbol(cfg.link.uplink_rate, slot.duration_s, slot.symbol_count),
                        bytes_per_symbol(cfg.link.downlink_rate, slot.duration_s, slot.symbol_count)])
        self.kp = K.KParams(
            n_sym=slot.symbol_count, slot_ns=self.slot_ns, sym_end=slot.symbol_end_offsets_ns(),
            bps=bps, dir_of=dir_of, members=members, n_members=n_members,
            loss=np.array([cfg.link.loss_prob_ul, cfg.link.loss_prob_dl]),
            relay=self.rule.on_uplink_delivery.value, n_veh=n,
            proc_ns=to_ns(cfg.processing_delay), ann_size=ann_wire,
            min_ok_frac=float(cfg.min_fragment_fraction), ul_first=bool(cfg.ul_first),
            lead_ns=slot.duration_ns * cfg.scheduling_lead_symbols // slot.symbol_count,
        )
        min_wire = p.per_packet_overhead_bytes + 1
        per_sym = int(bps.max() / min_wire) + 2
        self._draw_bound = slot.symbol_count * per_sym
        src_cap = 4 * (ul_per_frame + 1)
        self._chan = rng_stream("channel", cfg.seed)
        block = max(1 << 16, 4 * self._draw_bound)
        self.state = K.KState(
            src_t=np.zeros(src_cap, dtype=np.int64), src_size=np.zeros(src_cap, dtype=np.int64),
            src_dest=np.zeros(src_cap, dtype=np.int64), src_frame=np.zeros(src_cap, dtype=np.int64),
            src_ptr=np.zeros(2, dtype=np.int64),
            dly_t=np.zeros(n_frames + 1, dtype=np.int64),
            dly_frame=np.zeros(n_frames + 1, dtype=np.int64), dly_ptr=np.zeros(2, dtype=np.int64),
            frame_total=np.zeros(n_frames + 1, dtype=np.int64),
            frame_res=np.zeros(n_frames + 1, dtype=np.int64),
            frame_ok=np.zeros(n_frames + 1, dtype=np.int64),
            ann_frames=np.zeros(1, dtype=np.int64),
            unif=self._chan.random(block), ucur=np.zeros(1, dtype=np.int64),
            rr_ptr=np.zeros(2, dtype=np.int64), owner=np.zeros(slot.symbol_count, dtype=np.int64),
            demand=np.zeros(n + 1, dtype=np.int64), done=np.zeros(per_sym + 2, dtype=np.int64),
            targets=np.zeros(n + 1, dtype=np.int64),
            status=np.zeros(1, dtype=np.int64),
        )
        self.events = EventQueue(cfg.sim_time)
        self.next_slot = 0
        self.finished = False
        self.record: MetricRecord | None = None

    # --- event handlers -------------------------------------------------
    def _on_frame(self, ev):
        f = ev.payload
        em = self.source.emit(f)
        s = self.state
        k = len(em.times_ns)
        cap = len(s.src_t)
        if s.src_ptr[1] + k > cap:
            raise RuntimeError("source ring overflow")
        idx = (s.src_ptr[0] + s.src_ptr[1] + np.arange(k)) % cap
        s.src_t[idx] = em.times_ns
        s.src_size[idx] = em.sizes
        s.src_dest[idx] = em.dest
        s.src_frame[idx] = f
        s.src_ptr[1] += k
        s.frame_total[f] = em.fragments
        nxt = self.source.frame_time_ns(f + 1)
        if nxt < self.end_ns:
            self.events.schedule_ns(nxt, EventKind.FRAME_GENERATION, f + 1, self._on_frame)

    def _refill_draws(self):
        s = self.state
        u = s.unif
        cur = int(s.ucur[0])
        if len(u) - cur >= self._draw_bound:
            return
        rest = len(u) - cur
        u[:rest] = u[cur:]
        u[rest:] = self._chan.random(len(u) - rest)
        s.ucur[0] = 0

    def _on_slot(self, ev):
        """Close every slot that ends at or before now.

        Slots between two engine events are run in one compiled batch; a slot
        ending at ``e`` only needs arrivals strictly before ``e``, all of which
        were pushed by frame events that already fired.
        """
        now = ev.fire_ns
        last = now // self.slot_ns          # slots [next_slot, last) end <= now
        while self.next_slot < last:
            self._refill_draws()
            n = K.step_slots(self.queues, self.meters, self.state, self.kp,
                             self.next_slot * self.slot_ns, last - self.next_slot,
                             self._draw_bound)
            if self.state.status[0]:
                raise RuntimeError(f"slot kernel failed with status {self.state.status[0]}")
            self.next_slot += n
        if now < self.end_ns:
            nxt = self.events.peek_ns()
            target = max(nxt if nxt is not None else self.end_ns, now + self.slot_ns)
            target = min(-(-target // self.slot_ns) * self.slot_ns, self.end_ns)
            self.events.schedule_ns(target, EventKind.SLOT_BOUNDARY, None, self._on_slot)

    def _on_flush(self, ev):
        self.meters.measure_from[0] = ev.fire_ns

    def _on_end(self, ev):
        self.finished = True

    # --- driver ---------------------------------------------------------
    def run(self) -> MetricRecord:
        eq = self.events
        if self.source.frame_time_ns(0) < self.end_ns:
            eq.schedule_ns(self.source.frame_time_ns(0), EventKind.FRAME_GENERATION, 0,
                           self._on_frame)
        eq.schedule_ns(min(self.slot_ns, self.end_ns), EventKind.SLOT_BOUNDARY, None,
                       self._on_slot)
        eq.schedule_ns(to_ns(self.cfg.warmup), EventKind.MEASUREMENT_FLUSH, None, self._on_flush)
        eq.schedule_ns(self.end_ns, EventKind.SIMULATION_END, None, self._on_end)
        eq.run_until_ns(self.end_ns)
        self.record = self._finalize()
        return self.record

    def expected_per_user(self) -> np.ndarray:
        src = self.source
        if self.kind is ScenarioKind.MFF:
            per = src.packets_emitted // self.n
        elif self.kind is ScenarioKind.BFA:
            per = src.frames_emitted
        else:
            per = src.packets_emitted
        return np.full(self.n, per, dtype=np.int64) - self.unreleased_per_user()

    def unreleased_per_user(self) -> np.ndarray:
        """Units per vehicle generated but still held by the pacer when the run
        stops; the UAV never transmitted them, so they are not counted as sent."""
        s = self.state
        held = (s.src_ptr[0] + np.arange(s.src_ptr[1])) % len(s.src_t)
        if self.kind is ScenarioKind.BFA:
            return np.full(self.n, len(np.unique(s.src_frame[held])), dtype=np.int64)
        if self.kind is ScenarioKind.MFF:
            return np.bincount(s.src_dest[held], minlength=self.n)[:self.n].astype(np.int64)
        return np.full(self.n, len(held), dtype=np.int64)

    def _finalize(self) -> MetricRecord:
        cfg = self.cfg
        window = (self.end_ns - int(self.meters.measure_from[0])) / NS_PER_S
        return finalize(self.kind.value, self.n, cfg.fps, cfg.seed, self.queues, self.meters,
                        self.expected_per_user(), window)


def build_scenario(kind, n: int, profile: SourceProfile | None = None,
                   layout: NodeLayout | None = None, link: LinkModel | None = None,
                   **options) -> Simulation:
    """Wire a runnable cell for ``kind`` with ``n`` vehicles."""
    kind = ScenarioKind.parse(kind)
    if n < 1:
        raise ValueError("need at least one vehicle")
    if profile is not None:
        options.setdefault("fps", profile.frame_rate)
        options["profile"] = profile
    if link is not None:
        options["link"] = link
    if layout is not None:
        options.setdefault("uav_height_m", layout.uav_height_m)
        options.setdefault("deployment_rect", layout.deployment_rect)
    sim = Simulation(CellConfig(scenario=kind, n_vehicles=n, **options))
    if layout is not None:
        sim.layout = layout
    return sim


def simulate(cfg: CellConfig) -> MetricRecord:
    return Simulation(cfg).run()
