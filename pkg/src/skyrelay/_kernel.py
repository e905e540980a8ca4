"""Compiled per-slot step: admission, scheduling, service, channel draw, relay."""
from __future__ import annotations

from collections import namedtuple

import numpy as np

from ._jit import hot
from .buffers import ACCEPTED, RING_FULL, enqueue, mark_eligible
from .metrics import record_delivery
from .radio import UL, allocate, serve_symbol

# relay modes at the BS
FORWARD = 0      # MFF: each uplink datagram already names its vehicle
DUPLICATE = 1    # BFF, BAO: one copy per vehicle
ANNOTATE = 2     # BFA: reassemble the frame, then send annotations

KParams = namedtuple("KParams", [
    "n_sym", "slot_ns", "sym_end", "bps", "dir_of", "members", "n_members", "loss",
    "relay", "n_veh", "proc_ns", "ann_size", "min_ok_frac", "ul_first", "lead_ns",
])

KState = namedtuple("KState", [
    "src_t", "src_size", "src_dest", "src_frame", "src_ptr",
    "dly_t", "dly_frame", "dly_ptr",
    "frame_total", "frame_res", "frame_ok", "ann_frames",
    "unif", "ucur",
    "rr_ptr", "owner", "demand", "done", "targets", "status",
])

ERR_RING = 2
_INF = np.iinfo(np.int64).max


@hot
def relay_targets(mode, dest, n_veh, out):
    """Downlink bearers receiving a copy of a delivered uplink datagram."""
    if mode == FORWARD:
        out[0] = dest + 1
        return 1
    if mode == DUPLICATE:
        for k in range(n_veh):
            out[k] = k + 1
        return n_veh
    return 0


@hot
def frame_usable(total, ok, min_ok_frac):
    return ok >= min_ok_frac * total - 1e-9 and ok > 0


@hot
def _put(q, s, b, t, size, dest, frame):
    st = enqueue(q, b, t, size, dest, frame)
    if st == RING_FULL:
        s.status[0] = ERR_RING
    return st


@hot
def _emit_annotations(q, s, kp, f, t):
    s.ann_frames[0] += 1
    for k in range(kp.n_veh):
        _put(q, s, k + 1, t, kp.ann_size, k, f)


@hot
def _resolve_fragment(q, s, kp, f, ok, t):
    s.frame_res[f] += 1
    if ok:
        s.frame_ok[f] += 1
    if s.frame_res[f] == s.frame_total[f]:
        if frame_usable(s.frame_total[f], s.frame_ok[f], kp.min_ok_frac):
            if kp.proc_ns == 0:
                _emit_annotations(q, s, kp, f, t)
            else:
                cap = s.dly_t.shape[0]
                i = (s.dly_ptr[0] + s.dly_ptr[1]) % cap
                s.dly_t[i] = t + kp.proc_ns
                s.dly_frame[i] = f
                s.dly_ptr[1] += 1


@hot
def admit_until(q, s, kp, bound, inclusive):
    """Process source arrivals and delayed annotations up to ``bound``."""
    scap = s.src_t.shape[0]
    dcap = s.dly_t.shape[0]
    while True:
        ts = s.src_t[s.src_ptr[0]] if s.src_ptr[1] > 0 else _INF
        td = s.dly_t[s.dly_ptr[0]] if s.dly_ptr[1] > 0 else _INF
        t = min(ts, td)
        if t == _INF:
            return
        if inclusive:
            if t > bound:
                return
        elif t >= bound:
            return
        if ts <= td:
            i = s.src_ptr[0]
            s.src_ptr[0] = (i + 1) % scap
            s.src_ptr[1] -= 1
            f = s.src_frame[i]
            st = _put(q, s, 0, ts, s.src_size[i], s.src_dest[i], f)
            if st != ACCEPTED and kp.relay == ANNOTATE:
                _resolve_fragment(q, s, kp, f, False, ts)
        else:
            i = s.dly_ptr[0]
            s.dly_ptr[0] = (i + 1) % dcap
            s.dly_ptr[1] -= 1
            _emit_annotations(q, s, kp, s.dly_frame[i], td)


@hot
def _complete(q, m, s, kp, b, i, t, targets):
    u = s.unif[s.ucur[0]]
    s.ucur[0] += 1
    d = kp.dir_of[b]
    ok = u >= kp.loss[d]
    if ok:
        q.delivered[b] += 1
        record_delivery(m, b, t, q.enq_ns[b, i], q.size[b, i])
    else:
        q.dropped_channel[b] += 1
    if d != UL:
        return
    if kp.relay == ANNOTATE:
        _resolve_fragment(q, s, kp, q.frame[b, i], ok, t)
    elif ok:
        n = relay_targets(kp.relay, q.dest[b, i], kp.n_veh, targets)
        for k in range(n):
            _put(q, s, targets[k], t, q.size[b, i], targets[k] - 1, q.frame[b, i])


@hot
def step_slot(q, m, s, kp, slot_start):
    """Advance the cell through one slot starting at ``slot_start`` (ns)."""
    admit_until(q, s, kp, slot_start, True)
    cutoff = slot_start - kp.lead_ns
    nb = q.head.shape[0]
    for b in range(nb):
        mark_eligible(q, b, cutoff)
    allocate(q.elig_bytes, kp.dir_of, kp.bps, kp.members, kp.n_members, s.rr_ptr,
             kp.ul_first, s.owner, s.demand)
    targets = s.targets
    for j in range(kp.n_sym):
        t = slot_start + kp.sym_end[j]
        admit_until(q, s, kp, t, False)
        b = s.owner[j]
        if b < 0:
            continue
        n = serve_symbol(q, b, kp.bps[kp.dir_of[b]], s.done)
        for k in range(n):
            _complete(q, m, s, kp, b, s.done[k], t, targets)
    # arrivals exactly at the slot end wait for the next slot's admission pass
    admit_until(q, s, kp, slot_start + kp.slot_ns, False)
    return s.status[0]


@hot
def step_slots(q, m, s, kp, first_start, n_slots, draw_bound):
    """Run up to ``n_slots`` consecutive slots; stops early when fewer than
    ``draw_bound`` channel draws are left.  Returns the slots completed."""
    done = 0
    while done < n_slots:
        if s.unif.shape[0] - s.ucur[0] < draw_bound:
            break
        if step_slot(q, m, s, kp, first_start + done * kp.slot_ns):
            break
        done += 1
    return done
