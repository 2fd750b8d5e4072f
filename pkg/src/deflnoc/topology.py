"""Mesh and ring NoC topologies with Y-X routing and deflection loops.

Nodes are numbered from 1, row-major from the top-left corner.  Every row
and every column of a mesh is a bidirectional ring; a ring topology is a
single bidirectional ring (it behaves like an ``n x 1`` mesh with only its
column loop).  Packets travel the shorter way round each ring; a deflected
packet keeps circulating in the direction it arrived until it is accepted,
so one extra circulation costs ``length * per_hop_latency`` cycles.

A *lane* is one direction of one ring.  Routers on a lane are indexed in
travel order, so the router after ``k`` is ``(k + 1) % length``.  Lanes are
the unit both the analytical model and the simulator work on.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class NocTopology:
    kind: str
    rows: int
    cols: int
    per_hop_latency: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("mesh", "ring"):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("topology dimensions must be >= 1")
        if self.kind == "ring" and self.cols != 1:
            raise ValueError("a ring is stored as n rows by 1 column")
        if self.per_hop_latency < 1:
            raise ValueError("per_hop_latency must be >= 1")

    @classmethod
    def mesh(cls, rows: int, cols: int, per_hop_latency: int = 1) -> NocTopology:
        return cls("mesh", rows, cols, per_hop_latency)

    @classmethod
    def ring(cls, n: int, per_hop_latency: int = 1) -> NocTopology:
        return cls("ring", n, 1, per_hop_latency)

    @property
    def num_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def nodes(self) -> range:
        return range(1, self.num_nodes + 1)

    def coords(self, node: int) -> tuple[int, int]:
        if not 1 <= node <= self.num_nodes:
            raise ValueError(f"node {node} not in topology with {self.num_nodes} nodes")
        return divmod(node - 1, self.cols)

    def node_at(self, row: int, col: int) -> int:
        return row * self.cols + col + 1

    def describe(self) -> str:
        if self.kind == "ring":
            return f"ring{self.rows}"
        return f"mesh{self.rows}x{self.cols}"

    @cached_property
    def lanes(self) -> tuple[Lane, ...]:
        out = []
        for loop_index, (orientation, members) in enumerate(_loop_members(self)):
            for direction in (1, -1):
                n = len(members)
                order = tuple(members[(direction * k) % n] for k in range(n))
                out.append(Lane(len(out), loop_index, orientation, direction, order))
        return tuple(out)

    def lane_index(self, loop_index: int, direction: int) -> int:
        return 2 * loop_index + (0 if direction == 1 else 1)


@dataclass(frozen=True)
class Lane:
    index: int
    loop: int
    orientation: str
    direction: int
    routers: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.routers)

    def position(self, node: int) -> int:
        return self.routers.index(node)


@dataclass(frozen=True)
class TrafficClassSpec:
    id: int
    source: int
    destination: int
    junction: int
    column_hops: int
    row_hops: int
    static_latency: int
    column_dir: int = 0
    row_dir: int = 0


@dataclass(frozen=True)
class DeflectionLoop:
    id: str
    orientation: str
    members: tuple[int, ...]
    sink_probs: tuple[float, ...]
    junction_probs: tuple[float, ...]
    loop_time: int


@dataclass(frozen=True)
class DeflectConfig:
    """Deflection probabilities at sinks and junctions.

    Each of ``sink``/``junction`` is a scalar applied everywhere or a
    mapping from node id to probability (missing nodes get 0).  ``junction``
    defaults to ``sink``.
    """

    sink: float | Mapping[int, float] = 0.0
    junction: float | Mapping[int, float] | None = None

    def __post_init__(self) -> None:
        for spec in (self.sink, self.junction):
            vals = spec.values() if isinstance(spec, Mapping) else [spec]
            for p in vals:
                if p is not None and not 0.0 <= p < 1.0:
                    raise ValueError(f"deflection probability {p} outside [0, 1)")

    @staticmethod
    def _lookup(spec, node: int) -> float:
        if isinstance(spec, Mapping):
            return float(spec.get(node, 0.0))
        return float(spec)

    def sink_p(self, node: int) -> float:
        return self._lookup(self.sink, node)

    def junction_p(self, node: int) -> float:
        return self._lookup(self.sink if self.junction is None else self.junction, node)


def _loop_members(topo: NocTopology) -> list[tuple[str, tuple[int, ...]]]:
    loops: list[tuple[str, tuple[int, ...]]] = []
    if topo.kind == "mesh":
        for r in range(topo.rows):
            loops.append(("row", tuple(topo.node_at(r, c) for c in range(topo.cols))))
    for c in range(topo.cols):
        loops.append(("column", tuple(topo.node_at(r, c) for r in range(topo.rows))))
    return loops


def loop_ids(topo: NocTopology) -> list[str]:
    if topo.kind == "ring":
        return ["ring"]
    return [f"row{r}" for r in range(topo.rows)] + [f"col{c}" for c in range(topo.cols)]


def _ring_leg(a: int, b: int, n: int) -> tuple[int, int]:
    """(direction, hops) of the shorter way from position a to b on an n-ring.

    Half-way ties go forward from even positions and backward from odd ones,
    which balances the two lanes.
    """
    fwd = (b - a) % n
    if fwd == 0:
        return 0, 0
    bwd = n - fwd
    if fwd < bwd or (fwd == bwd and a % 2 == 0):
        return 1, fwd
    return -1, bwd


def route_yx(topo: NocTopology, source: int, destination: int, class_id: int = 0) -> TrafficClassSpec:
    """Column first to the destination row, then along that row."""
    if source == destination:
        raise ValueError("source and destination must differ")
    sr, sc = topo.coords(source)
    dr, dc = topo.coords(destination)
    cdir, chops = _ring_leg(sr, dr, topo.rows)
    rdir, rhops = _ring_leg(sc, dc, topo.cols)
    junction = topo.node_at(dr, sc)
    h = topo.per_hop_latency
    return TrafficClassSpec(
        id=class_id,
        source=source,
        destination=destination,
        junction=junction,
        column_hops=chops,
        row_hops=rhops,
        static_latency=(chops + rhops) * h,
        column_dir=cdir,
        row_dir=rdir,
    )


def validate_matrix(topo: NocTopology, matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    n = topo.num_nodes
    if m.shape != (n, n):
        raise ValueError(f"traffic matrix must be {n}x{n}, got {m.shape}")
    if np.any(m < 0):
        raise ValueError("traffic matrix entries must be non-negative")
    if np.any(np.diag(m) != 0):
        raise ValueError("traffic matrix diagonal must be zero")
    return m


def enumerate_classes(topo: NocTopology, matrix) -> list[TrafficClassSpec]:
    """One class per nonzero entry, ordered by source then destination.

    ``matrix[s - 1, d - 1]`` is the rate from node ``s`` to node ``d``.
    """
    m = validate_matrix(topo, matrix)
    src, dst = np.nonzero(m)
    return [route_yx(topo, int(s) + 1, int(d) + 1, i) for i, (s, d) in enumerate(zip(src, dst))]


def loops_of(topo: NocTopology, deflect: DeflectConfig | float = 0.0) -> list[DeflectionLoop]:
    if not isinstance(deflect, DeflectConfig):
        deflect = DeflectConfig(float(deflect))
    out = []
    for lid, (orientation, members) in zip(loop_ids(topo), _loop_members(topo)):
        out.append(
            DeflectionLoop(
                id=lid,
                orientation=orientation,
                members=members,
                sink_probs=tuple(deflect.sink_p(v) for v in members),
                junction_probs=tuple(deflect.junction_p(v) for v in members),
                loop_time=len(members) * topo.per_hop_latency,
            )
        )
    return out


@dataclass(frozen=True)
class Segment:
    """One ring leg of a route, as (lane, first router, hops) in lane terms."""

    lane: int
    start: int
    hops: int

    @property
    def end(self) -> int:
        return self.start + self.hops


def segments(topo: NocTopology, spec: TrafficClassSpec) -> tuple[Segment, ...]:
    """Lane-level legs of a class route (one or two)."""
    n_row_loops = topo.rows if topo.kind == "mesh" else 0
    sr, sc = topo.coords(spec.source)
    legs = []
    if spec.column_hops:
        loop = n_row_loops + sc
        lane = topo.lanes[topo.lane_index(loop, spec.column_dir)]
        legs.append(Segment(lane.index, lane.position(spec.source), spec.column_hops))
    if spec.row_hops:
        dr, _ = topo.coords(spec.destination)
        lane = topo.lanes[topo.lane_index(dr, spec.row_dir)]
        legs.append(Segment(lane.index, lane.position(spec.junction), spec.row_hops))
    return tuple(legs)


def _ring_legs(a: np.ndarray, b: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    fwd = (b - a) % n
    bwd = (n - fwd) % n
    forward = (fwd < bwd) | ((fwd == bwd) & (a % 2 == 0))
    hops = np.where(forward, fwd, bwd)
    direction = np.where(hops == 0, 0, np.where(forward, 1, -1))
    return direction, hops


def _lane_position(member_index: np.ndarray, direction: np.ndarray, n: int) -> np.ndarray:
    return np.where(direction == 1, member_index, (-member_index) % n)


def route_arrays(topo: NocTopology, source, destination) -> dict[str, np.ndarray]:
    """Vectorised :func:`route_yx` plus :func:`segments` for many classes.

    Returns int64 arrays keyed ``junction``, ``column_hops``, ``row_hops``,
    ``static_latency`` and, per leg, ``lane1/start1/hops1`` and
    ``lane2/start2/hops2``.  Leg 1 is the first leg actually travelled (the
    row leg for same-row classes); leg 2 fields are -1 when there is no
    second leg.
    """
    src = np.asarray(source, dtype=np.int64)
    dst = np.asarray(destination, dtype=np.int64)
    if np.any(src == dst):
        raise ValueError("source and destination must differ")
    if src.size and (min(src.min(), dst.min()) < 1 or max(src.max(), dst.max()) > topo.num_nodes):
        raise ValueError("node id outside topology")
    sr, sc = np.divmod(src - 1, topo.cols)
    dr, dc = np.divmod(dst - 1, topo.cols)
    cdir, chops = _ring_legs(sr, dr, topo.rows)
    rdir, rhops = _ring_legs(sc, dc, topo.cols)
    n_row_loops = topo.rows if topo.kind == "mesh" else 0

    col_lane = 2 * (n_row_loops + sc) + (cdir == -1)
    col_start = _lane_position(sr, cdir, topo.rows)
    row_lane = 2 * dr + (rdir == -1)
    row_start = _lane_position(sc, rdir, topo.cols)

    has_col = chops > 0
    has_row = rhops > 0
    two = has_col & has_row
    neg = np.full(src.shape, -1, np.int64)
    return {
        "junction": dr * topo.cols + sc + 1,
        "column_hops": chops,
        "row_hops": rhops,
        "static_latency": (chops + rhops) * topo.per_hop_latency,
        "lane1": np.where(has_col, col_lane, row_lane),
        "start1": np.where(has_col, col_start, row_start),
        "hops1": np.where(has_col, chops, rhops),
        "lane2": np.where(two, row_lane, neg),
        "start2": np.where(two, row_start, neg),
        "hops2": np.where(two, rhops, neg),
    }
