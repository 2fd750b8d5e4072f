"""Compiled inner loops of the cycle-accurate simulator.

Everything here works on flat integer/float arrays; the Python wrappers in
``simulator.py`` build those arrays and turn the outputs into statistics.

Rings are slotted: lane ``l`` owns ``length * hop`` slots starting at
``slot_base[l]``.  At cycle ``t`` router ``k`` of the lane sees slot
``(k * hop - t) mod (length * hop)``, so packets advance one position per
cycle without being copied.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _push(q, pk, head, tail, qlen, nxt):
    nxt[pk] = -1
    if qlen[q] == 0:
        head[q] = pk
    else:
        nxt[tail[q]] = pk
    tail[q] = pk
    qlen[q] += 1


@njit(cache=True)
def _pop(q, head, tail, qlen, nxt):
    pk = head[q]
    head[q] = nxt[pk]
    qlen[q] -= 1
    if qlen[q] == 0:
        tail[q] = -1
    return pk


@njit(cache=True)
def network_kernel(
    pkt_cycle,
    pkt_class,
    lane_order,
    lane_len,
    slot_base,
    port_base,
    hop,
    c_lane1,
    c_start1,
    c_tgt1,
    c_p1,
    c_loop1,
    c_lane2,
    c_start2,
    c_tgt2,
    c_p2,
    c_loop2,
    n_loops,
    max_deflections,
    horizon,
    warmup,
    seed,
    debug,
):
    np.random.seed(seed)
    n_pkt = pkt_cycle.size
    n_lanes = lane_len.size
    n_ports = 0
    n_slots = 0
    for l in range(n_lanes):
        n_ports += lane_len[l]
        n_slots += lane_len[l] * hop
    n_queues = 2 * n_ports  # local egress queues, then junction queues

    slots = np.full(n_slots, -1, np.int64)
    head = np.full(n_queues, -1, np.int64)
    tail = np.full(n_queues, -1, np.int64)
    qlen = np.zeros(n_queues, np.int64)
    nxt = np.full(n_pkt, -1, np.int64)

    seg = np.zeros(n_pkt, np.int8)
    dseg = np.zeros(n_pkt, np.int32)
    dtot = np.zeros(n_pkt, np.int32)
    reserved = np.zeros(n_pkt, np.bool_)
    grant1 = np.full(n_pkt, -1, np.int64)
    junc_arr = np.full(n_pkt, -1, np.int64)
    grant2 = np.full(n_pkt, -1, np.int64)
    deliver = np.full(n_pkt, -1, np.int64)

    loop_defl = np.zeros(n_loops, np.int64)
    port_defl = np.zeros(n_ports, np.int64)
    occ = np.zeros(n_queues, np.float64)
    busy = np.zeros(n_ports, np.int64)
    violations = 0

    nxt_pkt = 0
    for t in range(horizon):
        while nxt_pkt < n_pkt and pkt_cycle[nxt_pkt] == t:
            c = pkt_class[nxt_pkt]
            _push(port_base[c_lane1[c]] + c_start1[c], nxt_pkt, head, tail, qlen, nxt)
            nxt_pkt += 1

        for li in range(n_lanes):
            lane = lane_order[li]
            n = lane_len[lane]
            L = n * hop
            sb = slot_base[lane]
            pb = port_base[lane]
            for k in range(n):
                j = sb + (k * hop - t) % L
                pk = slots[j]
                if pk >= 0:
                    c = pkt_class[pk]
                    if seg[pk] == 0:
                        tgt = c_tgt1[c]
                    else:
                        tgt = c_tgt2[c]
                    if k == tgt:
                        if seg[pk] == 0:
                            prob = c_p1[c]
                            loop = c_loop1[c]
                        else:
                            prob = c_p2[c]
                            loop = c_loop2[c]
                        if reserved[pk] or np.random.random() >= prob:
                            slots[j] = -1
                            if seg[pk] == 0 and c_lane2[c] >= 0:
                                seg[pk] = 1
                                dseg[pk] = 0
                                reserved[pk] = False
                                q = n_ports + port_base[c_lane2[c]] + c_start2[c]
                                _push(q, pk, head, tail, qlen, nxt)
                                junc_arr[pk] = t
                            else:
                                deliver[pk] = t + 1
                        else:
                            dseg[pk] += 1
                            dtot[pk] += 1
                            if t >= warmup:
                                loop_defl[loop] += 1
                                port_defl[pb + k] += 1
                            if dseg[pk] >= max_deflections:
                                reserved[pk] = True
                if slots[j] < 0:
                    port = pb + k
                    qj = n_ports + port
                    if qlen[qj] > 0:
                        pk = _pop(qj, head, tail, qlen, nxt)
                        grant2[pk] = t
                        slots[j] = pk
                    elif qlen[port] > 0:
                        pk = _pop(port, head, tail, qlen, nxt)
                        grant1[pk] = t
                        slots[j] = pk
                        if debug and qlen[qj] > 0:
                            violations += 1
                if t >= warmup and slots[j] >= 0:
                    busy[pb + k] += 1

        if t >= warmup:
            for q in range(n_queues):
                occ[q] += qlen[q]

    in_flight = 0
    for j in range(n_slots):
        if slots[j] >= 0:
            in_flight += 1
    queued = 0
    for q in range(n_queues):
        queued += qlen[q]
    return (
        grant1,
        junc_arr,
        grant2,
        deliver,
        dtot,
        loop_defl,
        port_defl,
        occ,
        busy,
        nxt_pkt,
        in_flight,
        queued,
        violations,
    )


@njit(cache=True)
def canonical_kernel(
    pkt_cycle,
    pkt_class,
    c_queue,
    n_queues,
    c_p,
    hops,
    loop_time,
    max_deflections,
    horizon,
    warmup,
    seed,
):
    """One link shared by ``n_queues`` strict-priority FIFO egress queues
    (queue 0 highest; class ``c`` joins ``c_queue[c]``) and the deflected
    packets, which outrank all of them.

    A packet granted at ``g`` reaches the sink at ``g + hops``; if deflected it
    is back at the link at ``g + loop_time``.
    """
    np.random.seed(seed)
    n_pkt = pkt_cycle.size
    nq = n_queues + 1  # the last queue holds deflected packets
    head = np.full(nq, -1, np.int64)
    tail = np.full(nq, -1, np.int64)
    qlen = np.zeros(nq, np.int64)
    nxt = np.full(n_pkt, -1, np.int64)
    ret = np.full(loop_time, -1, np.int64)

    dseg = np.zeros(n_pkt, np.int32)
    grant1 = np.full(n_pkt, -1, np.int64)
    deliver = np.full(n_pkt, -1, np.int64)
    hol = np.full(n_pkt, -1, np.int64)
    enq = np.zeros(n_pkt, np.int64)

    defl_events = 0
    wd_sum = 0.0
    wd_n = 0
    last_d_arrival = -1
    gap_n = 0
    gap_sum = 0.0
    gap_sq = 0.0
    occ = np.zeros(nq, np.float64)
    busy = 0

    nxt_pkt = 0
    for t in range(horizon):
        while nxt_pkt < n_pkt and pkt_cycle[nxt_pkt] == t:
            q = c_queue[pkt_class[nxt_pkt]]
            if qlen[q] == 0:
                hol[nxt_pkt] = t
            _push(q, nxt_pkt, head, tail, qlen, nxt)
            enq[nxt_pkt] = t
            nxt_pkt += 1
        r = ret[t % loop_time]
        if r >= 0:
            ret[t % loop_time] = -1
            _push(n_queues, r, head, tail, qlen, nxt)
            enq[r] = t
            if t >= warmup:
                if last_d_arrival >= 0:
                    g = t - last_d_arrival
                    gap_n += 1
                    gap_sum += g
                    gap_sq += g * g
                last_d_arrival = t

        if t >= warmup:
            for q in range(nq):
                occ[q] += qlen[q]

        pk = -1
        if qlen[n_queues] > 0:
            pk = _pop(n_queues, head, tail, qlen, nxt)
            if t >= warmup:
                wd_sum += t - enq[pk]
                wd_n += 1
        else:
            for q in range(n_queues):
                if qlen[q] > 0:
                    pk = _pop(q, head, tail, qlen, nxt)
                    grant1[pk] = t
                    if qlen[q] > 0:
                        hol[head[q]] = t + 1
                    break
        if pk < 0:
            continue
        if t >= warmup:
            busy += 1
        c = pkt_class[pk]
        if dseg[pk] >= max_deflections or np.random.random() >= c_p[c]:
            deliver[pk] = t + hops + 1
        else:
            dseg[pk] += 1
            if t + hops >= warmup:
                defl_events += 1
            ret[(t + loop_time) % loop_time] = pk

    return (
        grant1,
        deliver,
        dseg,
        hol,
        defl_events,
        wd_sum,
        wd_n,
        gap_n,
        gap_sum,
        gap_sq,
        occ,
        busy,
        nxt_pkt,
    )
