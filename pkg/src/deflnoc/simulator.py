"""Cycle-accurate simulation of the priority-aware NoC with deflection.

Per cycle, in order:

1. new packets join the egress queue of their source for the first lane of
   their route;
2. on every lane (column lanes before row lanes) each router looks at the
   slot passing it.  A packet that reached its junction or destination is
   accepted with probability ``1 - p_d`` (always, once it has used up
   ``max_deflections``) and otherwise keeps circulating.  Accepted packets
   either turn into the junction queue of the row lane or are delivered one
   cycle later (ejection);
3. a free slot is granted to the junction queue first, then to the local
   egress queue.

Packets already on a ring therefore never wait, which gives them priority
over everything queued at a router.  Latency is counted from the arrival
cycle at the source queue to the delivery cycle.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _kernels
from .topology import DeflectConfig, NocTopology, loop_ids, route_arrays
from .traffic import GGeoParams, TrafficMatrix, moments_of_sequence, sample_arrivals, source_rng

DEFAULT_HORIZON = 200_000
DEFAULT_WARMUP = 20_000
DEFAULT_MAX_DEFLECTIONS = 16

# destination draws use streams offset from the arrival streams
_DEST_STREAM = 1 << 20


@dataclass(frozen=True)
class SimConfig:
    topology: NocTopology
    traffic: TrafficMatrix
    deflect: DeflectConfig = DeflectConfig()
    max_deflections: int = DEFAULT_MAX_DEFLECTIONS
    horizon: int = DEFAULT_HORIZON
    warmup: int = DEFAULT_WARMUP
    seed: int = 0
    debug: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.warmup < self.horizon:
            raise ValueError("need 0 <= warmup < horizon")
        if self.max_deflections < 1:
            raise ValueError("max_deflections must be >= 1")
        if self.traffic.num_nodes != self.topology.num_nodes:
            raise ValueError("traffic matrix size does not match topology")


def _frozen(a) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SimStats:
    """Measurements of one run; only packets injected after warmup count."""

    warmup: int
    horizon: int
    seed: int
    class_source: np.ndarray
    class_destination: np.ndarray
    class_count: np.ndarray
    class_latency: np.ndarray
    class_latency_p50: np.ndarray
    class_latency_p95: np.ndarray
    class_wait: np.ndarray
    class_junction_wait: np.ndarray
    class_deflections: np.ndarray
    class_static_latency: np.ndarray
    mean_latency: float
    mean_wait: float
    loop_ids: tuple[str, ...]
    loop_deflections: np.ndarray
    queue_occupancy: np.ndarray
    link_utilization: np.ndarray
    source_rate: np.ndarray
    source_scv: np.ndarray
    injected: int
    delivered: int
    in_flight: int
    violations: int
    trace: dict[str, np.ndarray] = field(repr=False)

    @property
    def window(self) -> int:
        return self.horizon - self.warmup

    @property
    def loop_deflection_rate(self) -> np.ndarray:
        return self.loop_deflections / self.window

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SimStats):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if f.name == "trace":
                if a.keys() != b.keys() or not all(np.array_equal(a[k], b[k]) for k in a):
                    return False
            elif isinstance(a, np.ndarray):
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif a != b and not (a != a and b != b):
                return False
        return True

    __hash__ = None


def _generate_packets(config: SimConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrival cycles, class indices and source ids, sorted by cycle."""
    tm = config.traffic
    classes_by_pair = {}
    for i, (s, d) in enumerate(zip(*np.nonzero(tm.rates))):
        classes_by_pair.setdefault(int(s), []).append((int(d), i))
    cycles, klass = [], []
    rates, scvs = np.zeros(tm.num_nodes), np.full(tm.num_nodes, np.nan)
    for s in range(tm.num_nodes):
        params = tm.source_params(s + 1)
        if params is None:
            continue
        counts = sample_arrivals(params, config.seed, config.horizon, stream=s)
        if counts.sum() >= 2:
            rates[s], scvs[s] = moments_of_sequence(counts)
        times = np.repeat(np.arange(config.horizon), counts)
        dests = classes_by_pair[s]
        probs = np.array([tm.rates[s, d] for d, _ in dests])
        pick = source_rng(config.seed, _DEST_STREAM + s).choice(len(dests), size=times.size, p=probs / probs.sum())
        cycles.append(times)
        klass.append(np.array([i for _, i in dests], dtype=np.int64)[pick])
    if not cycles:
        empty = np.zeros(0, np.int64)
        return empty, empty, rates, scvs
    cycles = np.concatenate(cycles)
    klass = np.concatenate(klass)
    order = np.argsort(cycles, kind="stable")
    return cycles[order].astype(np.int64), klass[order], rates, scvs


def _route_tables(config: SimConfig):
    topo = config.topology
    src, dst = np.nonzero(config.traffic.rates)
    routes = route_arrays(topo, src + 1, dst + 1)
    lane_len = np.array([ln.length for ln in topo.lanes], dtype=np.int64)
    lane_loop = np.array([ln.loop for ln in topo.lanes], dtype=np.int64)
    two = routes["lane2"] >= 0
    sink_p = np.array([config.deflect.sink_p(int(d)) for d in dst + 1])
    junc_p = np.array([config.deflect.junction_p(int(j)) for j in routes["junction"]])
    tab = {}
    for leg in ("1", "2"):
        lane = routes["lane" + leg]
        safe = np.maximum(lane, 0)
        tab["lane" + leg] = lane
        tab["start" + leg] = routes["start" + leg]
        tab["tgt" + leg] = np.where(lane >= 0, (routes["start" + leg] + routes["hops" + leg]) % lane_len[safe], -1)
        tab["loop" + leg] = np.where(lane >= 0, lane_loop[safe], -1)
    p1 = np.where(two, junc_p, sink_p)
    p2 = np.where(two, sink_p, 0.0)
    return src + 1, dst + 1, routes, tab, p1, p2


def run(config: SimConfig) -> SimStats:
    topo = config.topology
    lanes = topo.lanes
    pkt_cycle, pkt_class, src_rate, src_scv = _generate_packets(config)
    src, dst, routes, tab, p1, p2 = _route_tables(config)

    lane_len = np.array([ln.length for ln in lanes], dtype=np.int64)
    hop = topo.per_hop_latency
    port_base = np.concatenate([[0], np.cumsum(lane_len)[:-1]]).astype(np.int64)
    slot_base = port_base * hop
    # junction queues are filled by column lanes, so those run first
    lane_order = np.array(
        sorted(range(len(lanes)), key=lambda k: (lanes[k].orientation != "column", k)), dtype=np.int64
    )
    n_loops = len(loop_ids(topo))

    (grant1, junc_arr, grant2, deliver, dtot, loop_defl, _port_defl, occ, busy, injected, in_flight, queued, violations) = (
        _kernels.network_kernel(
            pkt_cycle,
            pkt_class,
            lane_order,
            lane_len,
            slot_base,
            port_base,
            hop,
            tab["lane1"],
            tab["start1"],
            tab["tgt1"],
            p1,
            tab["loop1"],
            tab["lane2"],
            tab["start2"],
            tab["tgt2"],
            p2,
            tab["loop2"],
            n_loops,
            config.max_deflections,
            config.horizon,
            config.warmup,
            config.seed,
            config.debug,
        )
    )
    delivered = int(np.count_nonzero(deliver >= 0))
    window = config.horizon - config.warmup
    n_cls = src.size

    measured = (pkt_cycle >= config.warmup) & (deliver >= 0)
    cls = pkt_class[measured]
    lat = (deliver - pkt_cycle)[measured].astype(float)
    wait = (grant1 - pkt_cycle)[measured].astype(float)
    has_junction = grant2[measured] >= 0
    jwait = np.where(has_junction, grant2[measured] - junc_arr[measured], 0).astype(float)
    count = np.bincount(cls, minlength=n_cls)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_lat = np.bincount(cls, lat, n_cls) / count
        mean_wait = np.bincount(cls, wait, n_cls) / count
        mean_jwait = np.bincount(cls, jwait, n_cls) / count
        mean_defl = np.bincount(cls, dtot[measured].astype(float), n_cls) / count
    p50 = np.full(n_cls, np.nan)
    p95 = np.full(n_cls, np.nan)
    if lat.size:
        order = np.argsort(cls, kind="stable")
        bounds = np.searchsorted(cls[order], np.arange(n_cls + 1))
        sorted_lat = lat[order]
        for k in range(n_cls):
            chunk = sorted_lat[bounds[k] : bounds[k + 1]]
            if chunk.size:
                p50[k], p95[k] = np.percentile(chunk, [50, 95])

    trace = {
        "class_id": pkt_class[measured],
        "injection_cycle": pkt_cycle[measured],
        "delivery_cycle": deliver[measured],
        "deflections": dtot[measured],
    }
    return SimStats(
        warmup=config.warmup,
        horizon=config.horizon,
        seed=config.seed,
        class_source=_frozen(src),
        class_destination=_frozen(dst),
        class_count=_frozen(count),
        class_latency=_frozen(mean_lat),
        class_latency_p50=_frozen(p50),
        class_latency_p95=_frozen(p95),
        class_wait=_frozen(mean_wait),
        class_junction_wait=_frozen(mean_jwait),
        class_deflections=_frozen(mean_defl),
        class_static_latency=_frozen(routes["static_latency"]),
        mean_latency=float(lat.mean()) if lat.size else float("nan"),
        mean_wait=float(wait.mean()) if wait.size else float("nan"),
        loop_ids=tuple(loop_ids(topo)),
        loop_deflections=_frozen(loop_defl),
        queue_occupancy=_frozen(occ / window),
        link_utilization=_frozen(busy / window),
        source_rate=_frozen(src_rate),
        source_scv=_frozen(src_scv),
        injected=int(injected),
        delivered=delivered,
        in_flight=int(in_flight + queued),
        violations=int(violations),
        trace={k: _frozen(v) for k, v in trace.items()},
    )


def measure_deflections(stats: SimStats) -> dict[str, int]:
    """Deflection events per row/column loop inside the measurement window."""
    return dict(zip(stats.loop_ids, (int(x) for x in stats.loop_deflections)))


def replay_check(config: SimConfig) -> bool:
    return run(config) == run(config)


TRACE_COLUMNS = ("class_id", "injection_cycle", "delivery_cycle", "deflections")


def export_trace(stats: SimStats, path: str | Path | None = None) -> str:
    """Write one row per measured packet; returns the CSV text.

    Columns: ``class_id`` (index into the class enumeration),
    ``injection_cycle``, ``delivery_cycle``, ``deflections`` (total over
    junction and sink).
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(zip(*(stats.trace[c].tolist() for c in TRACE_COLUMNS)))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass(frozen=True)
class LoopSimConfig:
    """A single link shared by prioritised classes and their deflections.

    ``classes`` are in priority order (first is highest).  By default every
    class has its own queue; ``queues[c]`` instead puts class ``c`` into
    FIFO queue ``queues[c]`` (lower index wins).  Each packet needs ``hops``
    cycles after its grant to reach the sink; a deflected packet is back at
    the link ``loop_time`` cycles after its grant.
    """

    classes: tuple[GGeoParams, ...]
    deflect_prob: float | tuple[float, ...] = 0.0
    queues: tuple[int, ...] | None = None
    hops: int = 3
    loop_time: int = 6
    max_deflections: int = DEFAULT_MAX_DEFLECTIONS
    horizon: int = DEFAULT_HORIZON
    warmup: int = DEFAULT_WARMUP
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.classes:
            raise ValueError("need at least one class")
        if self.loop_time <= self.hops:
            raise ValueError("loop_time must exceed hops")
        if not 0 <= self.warmup < self.horizon:
            raise ValueError("need 0 <= warmup < horizon")
        if self.queues is not None:
            q = self.queues
            if len(q) != len(self.classes) or sorted(set(q)) != list(range(max(q) + 1)):
                raise ValueError("queues must map every class onto 0..n_queues-1 without gaps")

    @property
    def queue_map(self) -> np.ndarray:
        if self.queues is None:
            return np.arange(len(self.classes), dtype=np.int64)
        return np.asarray(self.queues, dtype=np.int64)

    @property
    def probs(self) -> np.ndarray:
        p = np.broadcast_to(np.asarray(self.deflect_prob, dtype=float), (len(self.classes),))
        if np.any((p < 0) | (p >= 1)):
            raise ValueError("deflection probability outside [0, 1)")
        return p.copy()


@dataclass(frozen=True, eq=False)
class LoopSimStats:
    class_latency: np.ndarray
    class_wait: np.ndarray
    class_hol_service: np.ndarray
    class_hol_service_scv: np.ndarray
    queue_occupancy: np.ndarray
    class_count: np.ndarray
    mean_latency: float
    deflected_rate: float
    deflected_scv: float
    deflected_wait: float
    link_utilization: float
    mean_deflections: float
    deflection_histogram: np.ndarray


def run_loop(config: LoopSimConfig) -> LoopSimStats:
    n_cls = len(config.classes)
    cycles, klass = [], []
    for i, params in enumerate(config.classes):
        counts = sample_arrivals(params, config.seed, config.horizon, stream=i)
        cycles.append(np.repeat(np.arange(config.horizon), counts))
        klass.append(np.full(int(counts.sum()), i, np.int64))
    pkt_cycle = np.concatenate(cycles)
    pkt_class = np.concatenate(klass)
    # same-slot arrivals reach a shared queue in random order
    tie = source_rng(config.seed, _DEST_STREAM).random(pkt_cycle.size)
    order = np.lexsort((tie, pkt_cycle))
    pkt_cycle, pkt_class = pkt_cycle[order].astype(np.int64), pkt_class[order]

    (grant1, deliver, dseg, hol, defl_events, wd_sum, wd_n, gap_n, gap_sum, gap_sq, occ, busy, _inj) = (
        _kernels.canonical_kernel(
            pkt_cycle,
            pkt_class,
            config.queue_map,
            int(config.queue_map.max()) + 1,
            config.probs,
            config.hops,
            config.loop_time,
            config.max_deflections,
            config.horizon,
            config.warmup,
            config.seed,
        )
    )
    window = config.horizon - config.warmup
    m = (pkt_cycle >= config.warmup) & (deliver >= 0)
    cls = pkt_class[m]
    count = np.bincount(cls, minlength=n_cls)
    lat = (deliver - pkt_cycle)[m].astype(float)
    wait = (grant1 - pkt_cycle)[m].astype(float)
    svc = (grant1 - hol + 1)[m].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        svc_mean = np.bincount(cls, svc, n_cls) / count
        svc_sq = np.bincount(cls, svc**2, n_cls) / count
        gap_mean = gap_sum / gap_n if gap_n else np.nan
        gap_var = gap_sq / gap_n - gap_mean**2 if gap_n else np.nan
        return LoopSimStats(
            class_latency=np.bincount(cls, lat, n_cls) / count,
            class_wait=np.bincount(cls, wait, n_cls) / count,
            class_hol_service=svc_mean,
            class_hol_service_scv=(svc_sq - svc_mean**2) / svc_mean**2,
            queue_occupancy=occ[:-1] / window,
            class_count=count,
            mean_latency=float(lat.mean()),
            deflected_rate=defl_events / window,
            deflected_scv=float(gap_var / gap_mean**2) if gap_n else float("nan"),
            deflected_wait=wd_sum / wd_n if wd_n else 0.0,
            link_utilization=busy / window,
            mean_deflections=float(dseg[m].mean()) if m.any() else float("nan"),
            deflection_histogram=np.bincount(dseg[m], minlength=config.max_deflections + 1),
        )
