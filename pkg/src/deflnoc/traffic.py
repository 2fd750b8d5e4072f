"""Generalized-geometric (GGeo) arrival processes in slotted time.

A GGeo source emits inter-arrival gaps drawn from

    P(gap = 0) = p_br
    P(gap = k) = (1 - p_br) * (1 - beta)**(k - 1) * beta,   k >= 1

with ``beta = rate * (1 - p_br)`` so that the mean gap is ``1 / rate``.
Zero gaps put several packets in the same slot (a batch).  The squared
coefficient of variation of the gap works out to

    scv = (1 + p_br) / (1 - p_br) - rate

which is ``1 - rate`` (Bernoulli arrivals) when ``p_br == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ArrivalSequence = np.ndarray
"""Per-slot arrival counts, ``int64`` array of length ``horizon``."""


class InsufficientDataError(ValueError):
    """Raised when a sequence has too few arrivals to estimate moments."""


@dataclass(frozen=True)
class GGeoParams:
    rate: float
    scv_arrival: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"rate must be in (0, 1), got {self.rate}")
        # small slack so values produced by ggeo_from_burstiness round-trip
        if self.scv_arrival < 1.0 - self.rate - 1e-12:
            raise ValueError(
                f"scv_arrival {self.scv_arrival} below the geometric bound {1.0 - self.rate}"
            )

    @classmethod
    def geometric(cls, rate: float) -> GGeoParams:
        return cls(rate, 1.0 - rate)

    @property
    def burst_prob(self) -> float:
        """Zero-gap probability of the gap law that realises these moments."""
        s = self.scv_arrival + self.rate
        return max(0.0, (s - 1.0) / (s + 1.0))


@dataclass(frozen=True)
class BurstProfile:
    rate: float
    burst_prob: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"rate must be in (0, 1), got {self.rate}")
        if not 0.0 <= self.burst_prob < 1.0:
            raise ValueError(f"burst_prob must be in [0, 1), got {self.burst_prob}")


def ggeo_from_burstiness(profile: BurstProfile) -> GGeoParams:
    beta = profile.rate * (1.0 - profile.burst_prob)
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"implied geometric parameter {beta} outside (0, 1]")
    p = profile.burst_prob
    return GGeoParams(profile.rate, (1.0 + p) / (1.0 - p) - profile.rate)


def source_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent PCG64 stream ``stream`` derived from ``seed``.

    Streams come from ``SeedSequence(seed).spawn``-style keys, so the
    sequence for a given (seed, stream) pair does not depend on how many
    other streams exist.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def sample_gaps(params: GGeoParams, n: int, rng: np.random.Generator) -> np.ndarray:
    p = params.burst_prob
    beta = params.rate * (1.0 - p)
    gaps = rng.geometric(beta, size=n)
    if p > 0.0:
        gaps[rng.random(n) < p] = 0
    return gaps


def sample_arrivals(
    params: GGeoParams,
    seed: int,
    horizon: int,
    *,
    stream: int = 0,
) -> ArrivalSequence:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = source_rng(seed, stream)
    chunk = max(64, int(params.rate * horizon * 1.1) + 64)
    times: list[np.ndarray] = []
    t = -1
    while t < horizon:
        arr = t + np.cumsum(sample_gaps(params, chunk, rng))
        times.append(arr)
        t = int(arr[-1])
    all_times = np.concatenate(times)
    all_times = all_times[(all_times >= 0) & (all_times < horizon)]
    return np.bincount(all_times, minlength=horizon).astype(np.int64)


def moments_of_sequence(seq: ArrivalSequence) -> tuple[float, float]:
    """Empirical ``(rate, scv)`` of a per-slot count sequence.

    Members of a batch are separated by zero gaps.
    """
    counts = np.asarray(seq, dtype=np.int64)
    total = int(counts.sum())
    if total < 2:
        raise InsufficientDataError(f"need at least 2 arrivals, got {total}")
    slots = np.repeat(np.arange(counts.size), counts)
    gaps = np.diff(slots).astype(float)
    mean = gaps.mean()
    scv = gaps.var() / mean**2 if mean > 0 else float("inf")
    return total / counts.size, float(scv)


@dataclass(frozen=True, eq=False)
class TrafficMatrix:
    """Network traffic: one GGeo process per source, split over destinations.

    ``rates[s - 1, d - 1]`` is the mean rate of class ``s -> d``.  Source
    ``s`` emits a single GGeo stream with rate ``rates[s - 1].sum()`` and
    SCV ``scv[s - 1]``; each packet picks its destination independently in
    proportion to the row, so each class is a Bernoulli thinning of its
    source.
    """

    rates: np.ndarray
    scv: np.ndarray

    def __post_init__(self) -> None:
        rates = np.array(self.rates, dtype=float)
        scv = np.broadcast_to(np.asarray(self.scv, dtype=float), (rates.shape[0],)).copy()
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValueError("traffic matrix must be square")
        if np.any(rates < 0):
            raise ValueError("traffic matrix entries must be non-negative")
        if np.any(np.diag(rates) != 0):
            raise ValueError("traffic matrix diagonal must be zero")
        totals = rates.sum(axis=1)
        if np.any(totals >= 1.0):
            raise ValueError("source injection rate must be < 1 packet/cycle")
        active = totals > 0
        if np.any(scv[active] < 1.0 - totals[active] - 1e-12):
            raise ValueError("source scv below the geometric bound 1 - rate")
        rates.setflags(write=False)
        scv.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "scv", scv)

    @property
    def num_nodes(self) -> int:
        return self.rates.shape[0]

    @property
    def source_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    def source_params(self, node: int) -> GGeoParams | None:
        lam = float(self.source_rates[node - 1])
        if lam <= 0:
            return None
        return GGeoParams(lam, max(float(self.scv[node - 1]), 1.0 - lam))

    def thinned_scv(self, node: int, rate: float) -> float:
        """SCV of the part of source ``node``'s stream with total rate ``rate``."""
        lam = float(self.source_rates[node - 1])
        return split_stream_scv(float(self.scv[node - 1]), rate / lam)

    @classmethod
    def uniform(cls, num_nodes: int, rate: float, burst_prob: float = 0.0) -> TrafficMatrix:
        """Every node sends ``rate`` packets/cycle spread evenly over the others."""
        if num_nodes < 2:
            raise ValueError("uniform traffic needs at least two nodes")
        m = np.full((num_nodes, num_nodes), rate / (num_nodes - 1))
        np.fill_diagonal(m, 0.0)
        scv = ggeo_from_burstiness(BurstProfile(rate, burst_prob)).scv_arrival
        return cls(m, np.full(num_nodes, scv))

    @classmethod
    def single(cls, num_nodes: int, source: int, destination: int, params: GGeoParams) -> TrafficMatrix:
        m = np.zeros((num_nodes, num_nodes))
        m[source - 1, destination - 1] = params.rate
        scv = np.ones(num_nodes)
        scv[source - 1] = params.scv_arrival
        return cls(m, scv)


def split_stream_scv(scv: float, fraction: float) -> float:
    """SCV of a renewal stream after independent Bernoulli thinning."""
    return 1.0 + fraction * (scv - 1.0)
