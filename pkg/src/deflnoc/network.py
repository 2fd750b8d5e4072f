"""Multi-class latency model with deflected traffic, and its network-wide use.

A link shared by several priority queues is split into single-class
subsystems.  Each class is solved together with its own deflected packets
(the canonical single-class queue), the per-class deflected streams are
merged into one aggregate, and every queue's wait then follows from the
discrete-time non-preemptive priority formula with the aggregate on top.

For a whole NoC each output port of a ring router is such a link.  In order
of priority it serves: packets circulating after a deflection, packets in
transit along the ring, the junction queue (packets turning onto a row), and
the local egress queue.  A class waits at its source port and, for two-leg
routes, once more at its junction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .canonical import (
    CanonicalInput,
    ServiceProcess,
    UnstableError,
    expected_deflections,
    priority_wait,
    solve_batch,
    solve_canonical,
    split_scv,
    wait_deflected,
)
from .topology import DeflectConfig, NocTopology, loop_ids, route_arrays
from .traffic import GGeoParams, TrafficMatrix, split_stream_scv


class NonConvergenceError(RuntimeError):
    """The fixed point of some class did not converge."""


@dataclass(frozen=True)
class MultiClassSystem:
    """Priority classes sharing one link with their deflected packets.

    ``classes`` are listed in priority order.  ``queues`` groups class
    indices into FIFO queues (first queue highest); by default each class
    has its own.  ``hops`` and ``loop_time`` only enter end-to-end latency:
    the sink is ``hops`` cycles past the link and a deflected packet comes
    back after ``loop_time`` cycles.
    """

    classes: tuple[GGeoParams, ...]
    deflect_prob: float | tuple[float, ...] = 0.0
    service: ServiceProcess = ServiceProcess()
    deflect_service: ServiceProcess = ServiceProcess()
    queues: tuple[tuple[int, ...], ...] | None = None
    hops: int = 0
    loop_time: int = 0

    def __post_init__(self) -> None:
        if not self.classes:
            raise ValueError("need at least one class")
        p = self.probs
        if np.any((p < 0) | (p >= 1)):
            raise ValueError("deflection probability outside [0, 1)")
        members = sorted(i for q in self.queue_sets for i in q)
        if members != list(range(len(self.classes))):
            raise ValueError("queues must partition the classes")

    @property
    def probs(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.deflect_prob, dtype=float), (len(self.classes),)).copy()

    @property
    def queue_sets(self) -> tuple[tuple[int, ...], ...]:
        if self.queues is None:
            return tuple((i,) for i in range(len(self.classes)))
        return tuple(tuple(q) for q in self.queues)

    def queue_of(self, i: int) -> int:
        for n, q in enumerate(self.queue_sets):
            if i in q:
                return n
        raise IndexError(i)


@dataclass(frozen=True)
class DeflectedAggregate:
    rate: float
    scv: float
    contributions: tuple[tuple[float, float], ...]
    wait: float


def per_class_deflection(system: MultiClassSystem, i: int) -> tuple[float, float]:
    """Deflected rate and SCV of class ``i`` solved alone with its loop."""
    params = system.classes[i]
    p = float(system.probs[i])
    if params.rate <= 0 or p == 0.0:
        return 0.0, 1.0
    res = solve_canonical(CanonicalInput(params, system.service, system.deflect_service, p))
    return res.deflected_rate, res.deflected_scv


def superpose(
    contributions,
    *,
    rho_other: float = 0.0,
    t_other: float = 1.0,
    t_d: float = 1.0,
    log: Counter | None = None,
) -> DeflectedAggregate:
    """Merge per-class deflected streams and compute their common wait.

    ``rho_other``/``t_other`` describe the non-deflected load on the link.
    """
    contributions = tuple((float(r), float(c)) for r, c in contributions)
    rate = sum(r for r, _ in contributions)
    if rate <= 0:
        return DeflectedAggregate(0.0, 1.0, contributions, 0.0)
    scv = sum(r * c for r, c in contributions) / rate
    wait = float(wait_deflected(rate * t_d, t_d, rho_other, t_other, scv, rate, log))
    return DeflectedAggregate(rate, scv, contributions, wait)


def _queue_moments(system: MultiClassSystem) -> list[tuple[float, float]]:
    out = []
    for q in system.queue_sets:
        lam = np.array([system.classes[i].rate for i in q])
        scv = np.array([system.classes[i].scv_arrival for i in q])
        total = float(lam.sum())
        out.append((total, float((lam * scv).sum() / total) if total > 0 else 1.0))
    return out


def _all_queue_waits(system: MultiClassSystem, aggregate: DeflectedAggregate, log: Counter | None) -> list[float]:
    t = system.service.mean
    t_d = system.deflect_service.mean
    rho_d = aggregate.rate * t_d
    waits: list[float] = []
    higher: list[tuple[float, float, float]] = []
    for lam, scv in _queue_moments(system):
        rho = lam * t
        w = float(priority_wait(rho_d, t_d, aggregate.wait, higher, rho, t, scv, lam, log)) if lam > 0 else 0.0
        waits.append(w)
        higher.append((rho, t, w))
    return waits


def wait_multiclass(system: MultiClassSystem, aggregate: DeflectedAggregate, i: int) -> float:
    """Mean wait of priority queue ``i`` (0 is the highest)."""
    return _all_queue_waits(system, aggregate, None)[i]


def shared_queue_waits(system: MultiClassSystem, aggregate: DeflectedAggregate, n: int) -> dict[int, float]:
    """Per-class waits for FIFO queue ``n``: every member sees the queue's wait."""
    w = wait_multiclass(system, aggregate, n)
    return {i: w for i in system.queue_sets[n]}


@dataclass(frozen=True)
class SystemReport:
    aggregate: DeflectedAggregate
    queue_waits: tuple[float, ...]
    class_waits: tuple[float, ...]
    class_latency: tuple[float, ...]
    clamps: dict[str, int] = field(default_factory=dict)


def solve_system(system: MultiClassSystem) -> SystemReport:
    load = sum(c.rate for c in system.classes) * system.service.mean
    lam_d = float(np.sum([c.rate * expected_deflections(p) for c, p in zip(system.classes, system.probs)]))
    if load + lam_d * system.deflect_service.mean >= 1.0:
        raise UnstableError(f"link saturated: utilization {load + lam_d * system.deflect_service.mean:.6g} >= 1")
    log: Counter = Counter()
    contribs = [per_class_deflection(system, i) for i in range(len(system.classes))]
    agg = superpose(contribs, rho_other=load, t_other=system.service.mean, t_d=system.deflect_service.mean, log=log)
    qw = _all_queue_waits(system, agg, log)
    cw = tuple(qw[system.queue_of(i)] for i in range(len(system.classes)))
    n_defl = expected_deflections(system.probs)
    lat = tuple(
        float(w + system.service.mean + system.hops + n * (system.loop_time + agg.wait)) for w, n in zip(cw, n_defl)
    )
    return SystemReport(agg, tuple(qw), cw, lat, dict(log))


# ---------------------------------------------------------------------------
# whole network


@dataclass(frozen=True, eq=False)
class LatencyReport:
    """Per-class and average end-to-end latency of a NoC.

    Class arrays follow the class enumeration (row-major over the traffic
    matrix).  Port arrays are indexed ``port_base[lane] + router`` and
    lane arrays by lane index.
    """

    topology: NocTopology
    class_source: np.ndarray
    class_destination: np.ndarray
    class_rate: np.ndarray
    class_wait: np.ndarray
    class_source_wait: np.ndarray
    class_junction_wait: np.ndarray
    class_static_latency: np.ndarray
    class_deflection_latency: np.ndarray
    class_latency: np.ndarray
    class_converged: np.ndarray
    class_iterations: np.ndarray
    average_latency: float
    lane_deflected_rate: np.ndarray
    lane_deflected_scv: np.ndarray
    lane_deflected_wait: np.ndarray
    port_base: np.ndarray
    port_transit: np.ndarray
    port_junction: np.ndarray
    port_local: np.ndarray
    port_junction_wait: np.ndarray
    port_local_wait: np.ndarray
    clamps: dict[str, int]
    deflect: DeflectConfig

    @property
    def converged(self) -> bool:
        return bool(np.all(self.class_converged))

    @property
    def loop_ids(self) -> tuple[str, ...]:
        return tuple(loop_ids(self.topology))

    @property
    def loop_deflected_rate(self) -> dict[str, float]:
        """Deflection events per cycle for each row/column loop (both directions)."""
        per_loop = self.lane_deflected_rate.reshape(-1, 2).sum(axis=1)
        return dict(zip(self.loop_ids, per_loop.tolist()))

    @property
    def num_classes(self) -> int:
        return int(self.class_source.size)

    def probe_latency(self, source: int, destination: int) -> float:
        """Latency of a vanishingly light extra flow ``source -> destination``.

        The probe sees the waits of the queues it joins but adds no load; its
        own arrivals are taken as memoryless.
        """
        r = route_arrays(self.topology, [source], [destination])
        topo = self.topology
        two = r["lane2"][0] >= 0
        p1 = self.deflect.junction_p(int(r["junction"][0])) if two else self.deflect.sink_p(destination)
        legs = [(int(r["lane1"][0]), int(r["start1"][0]), p1)]
        if two:
            legs.append((int(r["lane2"][0]), int(r["start2"][0]), self.deflect.sink_p(destination)))
        total = float(r["static_latency"][0]) + 1.0
        for k, (lane, start, p) in enumerate(legs):
            port = self.port_base[lane] + start
            rho_d = self.lane_deflected_rate[lane]
            w_d = self.lane_deflected_wait[lane]
            higher = [(self.port_transit[port], 1.0, 0.0)]
            if k == 0:
                higher.append((self.port_junction[port], 1.0, self.port_junction_wait[port]))
            total += float(priority_wait(rho_d, 1.0, w_d, higher, 0.0, 1.0, 1.0, 0.0))
            loop_time = topo.lanes[lane].length * topo.per_hop_latency
            total += float(expected_deflections(p)) * (loop_time + w_d)
        return total


def _port_name(topo: NocTopology, lane: int, router: int) -> str:
    ln = topo.lanes[lane]
    loop = loop_ids(topo)[ln.loop]
    arrow = "+" if ln.direction == 1 else "-"
    return f"{loop}{arrow} port at node {ln.routers[router]}"


def _scatter(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    return np.bincount(index, weights=values, minlength=size)


def end_to_end_latency(
    topology: NocTopology,
    traffic: TrafficMatrix,
    deflect: DeflectConfig | float = 0.0,
    *,
    include_in_service: bool = False,
    strict: bool = False,
) -> LatencyReport:
    """Average and per-class latency of ``traffic`` on ``topology``.

    Raises :class:`UnstableError` naming the first saturated port.  With
    ``strict`` a class whose fixed point did not converge raises
    :class:`NonConvergenceError`; otherwise it is flagged in the report.
    """
    if not isinstance(deflect, DeflectConfig):
        deflect = DeflectConfig(float(deflect))
    if traffic.num_nodes != topology.num_nodes:
        raise ValueError("traffic matrix size does not match topology")
    topo = topology
    lanes = topo.lanes
    lane_len = np.array([ln.length for ln in lanes], dtype=np.int64)
    port_base = np.concatenate([[0], np.cumsum(lane_len)[:-1]]).astype(np.int64)
    n_ports = int(lane_len.sum())
    n_lanes = len(lanes)
    h = topo.per_hop_latency

    s_idx, d_idx = np.nonzero(traffic.rates)
    lam = traffic.rates[s_idx, d_idx]
    src, dst = s_idx + 1, d_idx + 1
    r = route_arrays(topo, src, dst)
    two = r["lane2"] >= 0
    sink_p = _node_probs(deflect.sink_p, topo.num_nodes)
    junc_p = _node_probs(deflect.junction_p, topo.num_nodes)
    p1 = np.where(two, junc_p[r["junction"] - 1], sink_p[dst - 1])
    p2 = np.where(two, sink_p[dst - 1], 0.0)
    n1 = p1 / (1.0 - p1)
    n2 = p2 / (1.0 - p2)

    lane1, start1, hops1 = r["lane1"], r["start1"], r["hops1"]
    lane2 = np.maximum(r["lane2"], 0)
    start2 = np.maximum(r["start2"], 0)
    hops2 = np.where(two, r["hops2"], 0)
    lam2 = np.where(two, lam, 0.0)

    # link loads by difference arrays on each lane unrolled twice
    base2 = 2 * port_base
    diff = np.zeros(2 * n_ports + 1)
    for ln, st, hp, lm in ((lane1, start1, hops1, lam), (lane2, start2, hops2, lam2)):
        np.add.at(diff, base2[ln] + st, lm)
        np.add.at(diff, base2[ln] + st + hp, -lm)
    run = np.cumsum(diff)[:-1]
    lane_of_port = np.repeat(np.arange(n_lanes), lane_len)
    pos_of_port = np.arange(n_ports) - port_base[lane_of_port]
    link_load = run[base2[lane_of_port] + pos_of_port] + run[base2[lane_of_port] + lane_len[lane_of_port] + pos_of_port]

    port1 = port_base[lane1] + start1
    port2 = port_base[lane2] + start2
    local = _scatter(port1, lam, n_ports)
    junction = _scatter(port2, lam2, n_ports)
    transit = np.maximum(link_load - local - junction, 0.0)

    lane_lam_d = _scatter(lane1, lam * n1, n_lanes) + _scatter(lane2, lam2 * n2, n_lanes)
    rho_d_port = lane_lam_d[lane_of_port]
    total = transit + junction + local + rho_d_port
    if np.any(total >= 1.0):
        k = int(np.argmax(total))
        raise UnstableError(
            f"saturated server: {_port_name(topo, int(lane_of_port[k]), int(pos_of_port[k]))} "
            f"utilization {total[k]:.4f} >= 1"
        )

    log: Counter = Counter()
    # column stage (or the only leg): each class alone with its deflections
    src_rate = traffic.source_rates
    scv_src = split_stream_scv(traffic.scv[src - 1], lam / src_rate[src - 1])
    scv_src = np.maximum(scv_src, 1.0 - lam)
    stage1 = solve_batch(lam, scv_src, p1, include_in_service=include_in_service)
    log.update(stage1["clamps"])
    conv = stage1["converged"].copy()
    iters = stage1["iterations"].copy()
    scv_defl1 = stage1["deflected_scv"]
    scv_junc = split_scv(stage1["cm"], 1.0 - p1)

    scv_defl2 = np.ones_like(lam)
    if np.any(two):
        idx = np.nonzero(two)[0]
        stage2 = solve_batch(lam[idx], np.maximum(scv_junc[idx], 1.0 - lam[idx]), p2[idx], include_in_service=include_in_service)
        log.update(stage2["clamps"])
        scv_defl2[idx] = stage2["deflected_scv"]
        conv[idx] &= stage2["converged"]
        iters[idx] = np.maximum(iters[idx], stage2["iterations"])

    # per-lane deflected aggregate and its wait
    w1 = lam * n1
    w2 = lam2 * n2
    lane_scv_num = _scatter(lane1, w1 * scv_defl1, n_lanes) + _scatter(lane2, w2 * scv_defl2, n_lanes)
    lane_scv = np.divide(lane_scv_num, lane_lam_d, out=np.ones(n_lanes), where=lane_lam_d > 0)
    lane_rho_other = _scatter(lane_of_port, transit + junction + local, n_lanes) / lane_len
    lane_wd = np.asarray(wait_deflected(lane_lam_d, 1.0, lane_rho_other, 1.0, lane_scv, lane_lam_d, log), dtype=float)
    wd_port = lane_wd[lane_of_port]

    # junction queue then local egress queue at every port
    j_scv = np.divide(
        _scatter(port2, lam2 * scv_junc, n_ports), junction, out=np.ones(n_ports), where=junction > 0
    )
    j_wait = np.where(
        junction > 0,
        priority_wait(rho_d_port, 1.0, wd_port, [(transit, 1.0, 0.0)], junction, 1.0, j_scv, junction, log),
        0.0,
    )
    src_of_port = np.zeros(n_ports, np.int64)
    src_of_port[port1] = src - 1
    l_scv = np.where(
        local > 0,
        split_stream_scv(traffic.scv[src_of_port], np.divide(local, src_rate[src_of_port], out=np.zeros(n_ports), where=local > 0)),
        1.0,
    )
    l_scv = np.maximum(l_scv, 1.0 - local)
    l_wait = np.where(
        local > 0,
        priority_wait(
            rho_d_port, 1.0, wd_port, [(transit, 1.0, 0.0), (junction, 1.0, j_wait)], local, 1.0, l_scv, local, log
        ),
        0.0,
    )

    w_src = l_wait[port1]
    w_junc = np.where(two, j_wait[port2], 0.0)
    loop1 = lane_len[lane1] * h
    loop2 = lane_len[lane2] * h
    defl_lat = n1 * (loop1 + lane_wd[lane1]) + np.where(two, n2 * (loop2 + lane_wd[lane2]), 0.0)
    static = r["static_latency"].astype(float)
    latency = w_src + w_junc + static + 1.0 + defl_lat
    avg = float((latency * lam).sum() / lam.sum()) if lam.size else float("nan")

    if strict and not np.all(conv):
        bad = int(np.nonzero(~conv)[0][0])
        raise NonConvergenceError(f"class {src[bad]}->{dst[bad]} did not converge")

    return LatencyReport(
        topology=topo,
        class_source=src,
        class_destination=dst,
        class_rate=lam,
        class_wait=w_src + w_junc,
        class_source_wait=w_src,
        class_junction_wait=w_junc,
        class_static_latency=r["static_latency"],
        class_deflection_latency=defl_lat,
        class_latency=latency,
        class_converged=conv,
        class_iterations=iters,
        average_latency=avg,
        lane_deflected_rate=lane_lam_d,
        lane_deflected_scv=lane_scv,
        lane_deflected_wait=lane_wd,
        port_base=port_base,
        port_transit=transit,
        port_junction=junction,
        port_local=local,
        port_junction_wait=j_wait,
        port_local_wait=l_wait,
        clamps=dict(log),
        deflect=deflect,
    )


def _node_probs(lookup, n: int) -> np.ndarray:
    return np.array([lookup(v) for v in range(1, n + 1)], dtype=float)
