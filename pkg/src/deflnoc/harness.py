"""Experiment runner and command-line interface.

Experiments are described by a JSON file::

    {
      "schema_version": 1,
      "topology": {"kind": "mesh", "rows": 6, "cols": 6, "per_hop_latency": 1},
      "traffic": {"kind": "uniform"},
      "sweep": {"rate": [0.1, 0.3], "burst_prob": [0.2, 0.6], "deflect_prob": [0.1, 0.3]},
      "junction_deflect_prob": null,
      "sim": {"horizon": 200000, "warmup": 20000, "seeds": [1, 2, 3, 4, 5], "max_deflections": 16},
      "bench": {"sizes": [6, 8, 16]},
      "output": "results"
    }

``traffic.kind`` is ``uniform`` (every node sends ``rate`` spread evenly over
the others), ``matrix`` (explicit ``rates`` scaled by each sweep ``rate``) or
``profile`` (a named preset from :data:`APP_PROFILES`; the rate and
burst_prob axes are then taken from the preset).  A ``deflect_prob`` entry
may be a number or an object mapping node ids to probabilities.

Every CSV has a header row, comma separators and fixed six-decimal floats,
so reading a file back and writing it again reproduces it byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .canonical import UnstableError
from .network import LatencyReport, NonConvergenceError, end_to_end_latency
from .simulator import SimConfig, export_trace, measure_deflections, run
from .topology import DeflectConfig, NocTopology
from .traffic import BurstProfile, TrafficMatrix, ggeo_from_burstiness

SCHEMA_VERSION = 1
WORKERS_ENV = "DEFLNOC_WORKERS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_NONCONVERGED = 4

FLOAT_FMT = "{:.6f}"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AppProfile:
    name: str
    rate: float
    burst_prob: float

    def __post_init__(self) -> None:
        BurstProfile(self.rate, self.burst_prob)


# Synthetic stand-ins for application traces, spread over the injection
# rates 0.02-0.1 and burst probabilities 0.25-0.55.
APP_PROFILES: dict[str, AppProfile] = {
    p.name: p
    for p in (
        AppProfile("idle-interactive", 0.02, 0.25),
        AppProfile("office-suite", 0.03, 0.45),
        AppProfile("media-playback", 0.04, 0.30),
        AppProfile("compile-job", 0.05, 0.50),
        AppProfile("browser-mixed", 0.06, 0.40),
        AppProfile("database-scan", 0.07, 0.55),
        AppProfile("render-batch", 0.09, 0.35),
        AppProfile("stream-compute", 0.10, 0.50),
    )
}


@dataclass(frozen=True)
class SweepPoint:
    rate: float
    burst_prob: float
    deflect: float | tuple[tuple[int, float], ...]

    @property
    def deflect_label(self) -> str:
        if isinstance(self.deflect, tuple):
            return "map:" + ";".join(f"{n}={FLOAT_FMT.format(p)}" for n, p in self.deflect)
        return FLOAT_FMT.format(self.deflect)

    def sort_key(self) -> tuple:
        d = (0, self.deflect, ()) if not isinstance(self.deflect, tuple) else (1, 0.0, self.deflect)
        return (self.rate, self.burst_prob, d)


@dataclass(frozen=True)
class ExperimentConfig:
    topology: NocTopology
    traffic_kind: str
    points: tuple[SweepPoint, ...]
    matrix: tuple[tuple[float, ...], ...] | None = None
    profile: str | None = None
    junction_deflect: float | None = None
    horizon: int = 200_000
    warmup: int = 20_000
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    max_deflections: int = 16
    bench_sizes: tuple[int, ...] = ()
    output: str = "results"

    def traffic_for(self, point: SweepPoint) -> TrafficMatrix:
        n = self.topology.num_nodes
        if self.traffic_kind == "matrix":
            m = np.asarray(self.matrix, dtype=float) * point.rate
            totals = m.sum(axis=1)
            scv = np.array(
                [ggeo_from_burstiness(BurstProfile(t, point.burst_prob)).scv_arrival if t > 0 else 1.0 for t in totals]
            )
            return TrafficMatrix(m, scv)
        return TrafficMatrix.uniform(n, point.rate, point.burst_prob)

    def deflect_for(self, point: SweepPoint) -> DeflectConfig:
        sink = dict(point.deflect) if isinstance(point.deflect, tuple) else point.deflect
        return DeflectConfig(sink, self.junction_deflect)


def _field(obj: dict, key: str, where: str, kind, default=None, required: bool = False):
    if key not in obj:
        if required:
            raise ConfigError(f"field '{where}{key}': missing")
        return default
    val = obj[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"field '{where}{key}': expected {getattr(kind, '__name__', kind)}, got {val!r}")
    return val


def _float_list(obj: dict, key: str, where: str) -> list:
    vals = _field(obj, key, where, list, required=True)
    if not vals:
        raise ConfigError(f"field '{where}{key}': sweep axis must not be empty")
    return vals


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    version = _field(raw, "schema_version", "", int, required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema_version': unsupported version {version}")

    t = _field(raw, "topology", "", dict, required=True)
    kind = _field(t, "kind", "topology.", str, required=True)
    hop = _field(t, "per_hop_latency", "topology.", int, 1)
    try:
        if kind == "mesh":
            topo = NocTopology.mesh(
                _field(t, "rows", "topology.", int, required=True), _field(t, "cols", "topology.", int, required=True), hop
            )
        elif kind == "ring":
            topo = NocTopology.ring(_field(t, "n", "topology.", int, required=True), hop)
        else:
            raise ConfigError(f"field 'topology.kind': unknown kind {kind!r}")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"field 'topology': {e}") from None

    tr = _field(raw, "traffic", "", dict, {"kind": "uniform"})
    tkind = _field(tr, "kind", "traffic.", str, "uniform")
    sweep = _field(raw, "sweep", "", dict, required=True)
    matrix = profile = None
    if tkind == "profile":
        profile = _field(tr, "name", "traffic.", str, required=True)
        if profile not in APP_PROFILES:
            raise ConfigError(f"field 'traffic.name': unknown profile {profile!r}")
        rates = [APP_PROFILES[profile].rate]
        bursts = [APP_PROFILES[profile].burst_prob]
    else:
        if tkind == "matrix":
            matrix = _field(tr, "rates", "traffic.", list, required=True)
            n = topo.num_nodes
            if len(matrix) != n or any(not isinstance(row, list) or len(row) != n for row in matrix):
                raise ConfigError(f"field 'traffic.rates': must be a {n}x{n} list of lists")
            matrix = tuple(tuple(float(x) for x in row) for row in matrix)
        elif tkind != "uniform":
            raise ConfigError(f"field 'traffic.kind': unknown kind {tkind!r}")
        rates = _float_list(sweep, "rate", "sweep.")
        bursts = _float_list(sweep, "burst_prob", "sweep.")
    defl_raw = _float_list(sweep, "deflect_prob", "sweep.")

    defl: list = []
    for i, d in enumerate(defl_raw):
        if isinstance(d, dict):
            try:
                items = tuple(sorted((int(k), float(v)) for k, v in d.items()))
            except ValueError:
                raise ConfigError(f"field 'sweep.deflect_prob[{i}]': keys must be node ids") from None
            defl.append(items)
        elif isinstance(d, (int, float)) and not isinstance(d, bool):
            defl.append(float(d))
        else:
            raise ConfigError(f"field 'sweep.deflect_prob[{i}]': expected number or object")
    for name, axis in (("rate", rates), ("burst_prob", bursts)):
        for i, v in enumerate(axis):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"field 'sweep.{name}[{i}]': expected number, got {v!r}")
    for r in rates:
        if not 0 < r < 1:
            raise ConfigError(f"field 'sweep.rate': {r} outside (0, 1)")
    for b in bursts:
        if not 0 <= b < 1:
            raise ConfigError(f"field 'sweep.burst_prob': {b} outside [0, 1)")

    points = tuple(
        sorted(
            (SweepPoint(float(r), float(b), d) for r, b, d in itertools.product(rates, bursts, defl)),
            key=SweepPoint.sort_key,
        )
    )
    jd = raw.get("junction_deflect_prob")
    if jd is not None and (not isinstance(jd, (int, float)) or not 0 <= jd < 1):
        raise ConfigError("field 'junction_deflect_prob': expected probability in [0, 1) or null")

    sim = _field(raw, "sim", "", dict, {})
    seeds = _field(sim, "seeds", "sim.", list, [1, 2, 3, 4, 5])
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("field 'sim.seeds': expected non-empty list of integers")
    horizon = _field(sim, "horizon", "sim.", int, 200_000)
    warmup = _field(sim, "warmup", "sim.", int, 20_000)
    if not 0 <= warmup < horizon:
        raise ConfigError("field 'sim.warmup': need 0 <= warmup < horizon")
    bench = _field(raw, "bench", "", dict, {})
    sizes = _field(bench, "sizes", "bench.", list, [])
    return ExperimentConfig(
        topology=topo,
        traffic_kind=tkind,
        points=points,
        matrix=matrix,
        profile=profile,
        junction_deflect=None if jd is None else float(jd),
        horizon=horizon,
        warmup=warmup,
        seeds=tuple(seeds),
        max_deflections=_field(sim, "max_deflections", "sim.", int, 16),
        bench_sizes=tuple(int(s) for s in sizes),
        output=_field(raw, "output", "", str, "results"),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else FLOAT_FMT.format(float(v))
    return str(v)


def write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_csv(text: str) -> tuple[list[str], list[list[str]]]:
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def _point_cols(p: SweepPoint) -> list:
    return [p.rate, p.burst_prob, p.deflect_label]


POINT_HEADER = ["rate", "burst_prob", "deflect_prob"]


# ---------------------------------------------------------------------------
# work units (module level so they pickle for worker processes)


@dataclass
class PointResult:
    point: SweepPoint
    status: str
    message: str = ""
    report: LatencyReport | None = None


def analyze_point(cfg: ExperimentConfig, point: SweepPoint) -> PointResult:
    try:
        rep = end_to_end_latency(cfg.topology, cfg.traffic_for(point), cfg.deflect_for(point))
    except UnstableError as e:
        return PointResult(point, "unstable", str(e))
    status = "ok" if rep.converged else "nonconverged"
    msg = ""
    if not rep.converged:
        bad = int(np.nonzero(~rep.class_converged)[0][0])
        msg = f"class {rep.class_source[bad]}->{rep.class_destination[bad]} did not converge"
    return PointResult(point, status, msg, rep)


def simulate_point(cfg: ExperimentConfig, point: SweepPoint, seed: int):
    return run(
        SimConfig(
            cfg.topology,
            cfg.traffic_for(point),
            cfg.deflect_for(point),
            max_deflections=cfg.max_deflections,
            horizon=cfg.horizon,
            warmup=cfg.warmup,
            seed=seed,
        )
    )


def _simulate_job(args):
    cfg, point, seed = args
    return simulate_point(cfg, point, seed)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, jobs, workers: int):
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonRow:
    point: SweepPoint
    status: str
    analytical: float = float("nan")
    simulated: float = float("nan")
    ci_half_width: float = float("nan")
    seeds: int = 0
    converged: bool = True
    clamps: int = 0
    message: str = ""

    @property
    def signed_error(self) -> float:
        """Percent error with sign: negative means the model underestimates."""
        return (self.analytical - self.simulated) / self.simulated * 100.0

    @property
    def percent_error(self) -> float:
        return abs(self.signed_error)


COMPARISON_HEADER = POINT_HEADER + [
    "status",
    "analytical",
    "simulated",
    "ci95",
    "seeds",
    "error_pct",
    "signed_error_pct",
    "converged",
    "clamps",
    "message",
]


def mean_ci(samples) -> tuple[float, float]:
    """Mean and 95% Student-t half-width (nan for a single sample)."""
    x = np.asarray(samples, dtype=float)
    m = float(x.mean())
    if x.size < 2:
        return m, float("nan")
    half = float(stats.t.ppf(0.975, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))
    return m, half


def compare(cfg: ExperimentConfig, workers: int = 1, seeds: tuple[int, ...] | None = None) -> list[ComparisonRow]:
    seeds = tuple(seeds or cfg.seeds)
    results = [analyze_point(cfg, p) for p in cfg.points]
    runnable = [r for r in results if r.status != "unstable"]
    jobs = [(cfg, r.point, s) for r in runnable for s in seeds]
    sims = iter(_map(_simulate_job, jobs, workers))
    rows = []
    sim_by_point = {}
    for r in runnable:
        sim_by_point[r.point] = [next(sims) for _ in seeds]
    for r in results:
        if r.status == "unstable":
            rows.append(ComparisonRow(r.point, "skipped-unstable", message=r.message))
            continue
        lat = [s.mean_latency for s in sim_by_point[r.point]]
        m, half = mean_ci(lat)
        rows.append(
            ComparisonRow(
                r.point,
                r.status,
                r.report.average_latency,
                m,
                half,
                len(seeds),
                r.report.converged,
                int(sum(r.report.clamps.values())),
                r.message,
            )
        )
    return rows


def comparison_csv(rows: list[ComparisonRow]) -> str:
    out = []
    for r in rows:
        valid = r.status != "skipped-unstable"
        out.append(
            _point_cols(r.point)
            + [
                r.status,
                r.analytical,
                r.simulated,
                r.ci_half_width,
                r.seeds,
                r.percent_error if valid else float("nan"),
                r.signed_error if valid else float("nan"),
                r.converged,
                r.clamps,
                r.message,
            ]
        )
    return write_csv(COMPARISON_HEADER, out)


def summarize(errors_pct, signed_pct) -> dict[str, float]:
    e = [float(x) for x in errors_pct if not math.isnan(float(x))]
    s = [float(x) for x in signed_pct if not math.isnan(float(x))]
    if not e:
        return {"points": 0, "mean": float("nan"), "median": float("nan"), "max": float("nan"), "signed_mean": float("nan")}
    return {
        "points": len(e),
        "mean": statistics.fmean(e),
        "median": statistics.median(e),
        "max": max(e),
        "signed_mean": statistics.fmean(s),
    }


def summary_from_csv(text: str) -> dict[str, float]:
    """Recompute the validation summary from a comparison CSV alone."""
    header, rows = read_csv(text)
    ei = header.index("error_pct")
    si = header.index("signed_error_pct")
    return summarize([float(r[ei]) for r in rows], [float(r[si]) for r in rows])


def summary_csv(summary: dict[str, float]) -> str:
    keys = ["points", "mean", "median", "max", "signed_mean"]
    return write_csv(keys, [[summary[k] for k in keys]])


# ---------------------------------------------------------------------------
# per-command output


CLASS_HEADER = POINT_HEADER + ["source", "destination", "class_rate", "wait", "junction_wait", "static_latency", "latency", "converged"]
AGG_HEADER = POINT_HEADER + ["status", "avg_latency", "classes", "converged", "clamps", "message"]


def analysis_tables(results: list[PointResult]) -> tuple[str, str]:
    cls_rows, agg_rows = [], []
    for r in results:
        rep = r.report
        if rep is None:
            agg_rows.append(_point_cols(r.point) + [r.status, float("nan"), 0, False, 0, r.message])
            continue
        agg_rows.append(
            _point_cols(r.point)
            + [r.status, rep.average_latency, rep.num_classes, rep.converged, int(sum(rep.clamps.values())), r.message]
        )
        for k in range(rep.num_classes):
            cls_rows.append(
                _point_cols(r.point)
                + [
                    int(rep.class_source[k]),
                    int(rep.class_destination[k]),
                    float(rep.class_rate[k]),
                    float(rep.class_wait[k]),
                    float(rep.class_junction_wait[k]),
                    int(rep.class_static_latency[k]),
                    float(rep.class_latency[k]),
                    bool(rep.class_converged[k]),
                ]
            )
    return write_csv(CLASS_HEADER, cls_rows), write_csv(AGG_HEADER, agg_rows)


SIM_HEADER = POINT_HEADER + ["seed", "avg_latency", "avg_wait", "injected", "delivered", "in_flight", "measured_packets"]


def bench(sizes, rate: float = 0.1, burst_prob: float = 0.0, deflect: float = 0.3) -> list[tuple[int, int, float]]:
    """Wall-clock seconds of the analytical model on square meshes."""
    if not sizes:
        raise ValueError("bench needs at least one mesh size")
    out = []
    for n in sizes:
        topo = NocTopology.mesh(n, n)
        tm = TrafficMatrix.uniform(topo.num_nodes, rate, burst_prob)
        t0 = time.perf_counter()
        rep = end_to_end_latency(topo, tm, deflect)
        out.append((n, rep.num_classes, time.perf_counter() - t0))
    return out


@dataclass(frozen=True)
class LoopAccuracy:
    loop: str
    model_rate: float
    sim_rate: float
    degenerate: bool

    @property
    def accuracy(self) -> float:
        if self.degenerate:
            return 100.0
        return 100.0 - abs(self.model_rate - self.sim_rate) / self.sim_rate * 100.0


def deflection_check(cfg: ExperimentConfig, point: SweepPoint, seed: int) -> list[LoopAccuracy]:
    """Model vs simulated deflection events per cycle for every loop."""
    rep = end_to_end_latency(cfg.topology, cfg.traffic_for(point), cfg.deflect_for(point))
    st = simulate_point(cfg, point, seed)
    counts = measure_deflections(st)
    out = []
    for loop, m in rep.loop_deflected_rate.items():
        s = counts[loop] / st.window
        out.append(LoopAccuracy(loop, m, s, degenerate=(m == 0 and s == 0)))
    return out


# ---------------------------------------------------------------------------
# CLI


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _cmd_analyze(cfg: ExperimentConfig, args) -> int:
    results = [analyze_point(cfg, p) for p in cfg.points]
    cls, agg = analysis_tables(results)
    out = Path(args.out or cfg.output)
    _write(out, "classes.csv", cls)
    _write(out, "aggregate.csv", agg)
    code = EXIT_OK
    for r in results:
        if r.status == "unstable":
            print(f"unstable at rate={r.point.rate} burst_prob={r.point.burst_prob} deflect_prob={r.point.deflect_label}: {r.message}", file=sys.stderr)
            code = EXIT_UNSTABLE
    if code == EXIT_OK:
        for r in results:
            if r.status == "nonconverged":
                print(f"non-convergence: {r.message}", file=sys.stderr)
                code = EXIT_NONCONVERGED
    return code


def _cmd_simulate(cfg: ExperimentConfig, args) -> int:
    seeds = _seeds(cfg, args)
    jobs = [(cfg, p, s) for p in cfg.points for s in seeds]
    sims = _map(_simulate_job, jobs, args.workers)
    out = Path(args.out or cfg.output)
    rows = []
    for (c, p, s), st in zip(jobs, sims):
        rows.append(
            _point_cols(p)
            + [s, st.mean_latency, st.mean_wait, st.injected, st.delivered, st.in_flight, int(st.class_count.sum())]
        )
        if args.trace:
            name = f"trace_r{p.rate:g}_b{p.burst_prob:g}_d{p.deflect_label.replace(':', '').replace(';', '_')}_s{s}.csv"
            out.mkdir(parents=True, exist_ok=True)
            export_trace(st, out / name)
    _write(out, "simulation.csv", write_csv(SIM_HEADER, rows))
    return EXIT_OK


def _cmd_validate(cfg: ExperimentConfig, args) -> int:
    rows = compare(cfg, args.workers, _seeds(cfg, args))
    out = Path(args.out or cfg.output)
    text = comparison_csv(rows)
    _write(out, "comparison.csv", text)
    summary = summary_from_csv(text)
    _write(out, "summary.csv", summary_csv(summary))
    print(
        f"points={summary['points']} mean_error={summary['mean']:.2f}% median_error={summary['median']:.2f}% "
        f"max_error={summary['max']:.2f}% signed_mean={summary['signed_mean']:+.2f}%"
    )
    return EXIT_OK


def _cmd_bench(cfg: ExperimentConfig | None, args) -> int:
    sizes = args.sizes or (cfg.bench_sizes if cfg else ())
    try:
        rows = bench(sizes)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = write_csv(["size", "classes", "seconds"], rows)
    out = Path(args.out or (cfg.output if cfg else "results"))
    _write(out, "bench.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_deflection_check(cfg: ExperimentConfig, args) -> int:
    seed = _seeds(cfg, args)[0]
    rows = []
    for p in cfg.points:
        try:
            acc = deflection_check(cfg, p, seed)
        except UnstableError as e:
            print(f"unstable at rate={p.rate}: {e}", file=sys.stderr)
            continue
        for a in acc:
            rows.append(_point_cols(p) + [a.loop, a.model_rate, a.sim_rate, a.accuracy, a.degenerate])
    text = write_csv(POINT_HEADER + ["loop", "model_rate", "sim_rate", "accuracy_pct", "degenerate"], rows)
    _write(Path(args.out or cfg.output), "deflections.csv", text)
    return EXIT_OK


def _seeds(cfg: ExperimentConfig, args) -> tuple[int, ...]:
    if args.seeds:
        base = cfg.seeds[0]
        return tuple(range(base, base + args.seeds))
    return cfg.seeds


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deflnoc", description="NoC latency model and simulator with deflection routing")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("analyze", "simulate", "validate", "bench", "deflection-check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "bench", help="experiment JSON file")
        sp.add_argument("--out", help="output directory (default: config 'output')")
        sp.add_argument("--seeds", type=int, help="number of seeds, counting up from the first configured one")
        sp.add_argument("--workers", type=int, default=default_workers(), help=f"worker processes (env {WORKERS_ENV})")
        sp.add_argument("--format", choices=["csv"], default="csv")
        if name == "simulate":
            sp.add_argument("--trace", action="store_true", help="also write per-packet traces")
        if name == "bench":
            sp.add_argument("--sizes", type=int, nargs="*", help="mesh side lengths")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    if args.config:
        try:
            cfg = load_config(args.config)
        except (ConfigError, OSError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
    handlers = {
        "analyze": _cmd_analyze,
        "simulate": _cmd_simulate,
        "validate": _cmd_validate,
        "bench": _cmd_bench,
        "deflection-check": _cmd_deflection_check,
    }
    try:
        return handlers[args.command](cfg, args)
    except NonConvergenceError as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
