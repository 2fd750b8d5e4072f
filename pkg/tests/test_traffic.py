from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from deflnoc.traffic import (
    BurstProfile,
    GGeoParams,
    InsufficientDataError,
    TrafficMatrix,
    ggeo_from_burstiness,
    moments_of_sequence,
    sample_arrivals,
    split_stream_scv,
)

# SCV of 10^7 gaps drawn from the zero-or-geometric gap law at rate 0.1,
# burst probability 0.6, using an inverse-transform sampler independent of
# the package (seed 20240601).
ORACLE_SCV_RATE01_BURST06 = 3.897331


def test_burstiness_geometric_limit():
    assert ggeo_from_burstiness(BurstProfile(0.3, 0.0)).scv_arrival == pytest.approx(0.7)


def test_burstiness_sparse_limit():
    assert ggeo_from_burstiness(BurstProfile(1e-9, 0.0)).scv_arrival == pytest.approx(1.0)


def test_burstiness_matches_monte_carlo_oracle():
    scv = ggeo_from_burstiness(BurstProfile(0.1, 0.6)).scv_arrival
    assert abs(scv - ORACLE_SCV_RATE01_BURST06) / ORACLE_SCV_RATE01_BURST06 < 0.005


@given(
    rate=st.floats(0.01, 0.9),
    p1=st.floats(0.0, 0.95),
    p2=st.floats(0.0, 0.95),
)
def test_burstiness_monotone_in_burst_prob(rate, p1, p2):
    if abs(p1 - p2) < 1e-6:
        return
    lo, hi = sorted((p1, p2))
    a = ggeo_from_burstiness(BurstProfile(rate, lo)).scv_arrival
    b = ggeo_from_burstiness(BurstProfile(rate, hi)).scv_arrival
    assert b > a


@given(rate=st.floats(0.01, 0.9), p=st.floats(0.0, 0.9))
def test_burst_prob_round_trip(rate, p):
    params = ggeo_from_burstiness(BurstProfile(rate, p))
    assert params.burst_prob == pytest.approx(p, abs=1e-9)


def test_invalid_profiles_rejected():
    with pytest.raises(ValueError):
        BurstProfile(0.0, 0.1)
    with pytest.raises(ValueError):
        BurstProfile(0.5, 1.0)
    with pytest.raises(ValueError):
        GGeoParams(0.5, 0.3)


def test_sample_arrivals_deterministic():
    p = GGeoParams(0.5, 0.5)
    a = sample_arrivals(p, 42, 5000)
    b = sample_arrivals(p, 42, 5000)
    assert np.array_equal(a, b)
    assert a.size == 5000
    assert not np.array_equal(a, sample_arrivals(p, 43, 5000))


def test_geometric_has_no_batches():
    seq = sample_arrivals(GGeoParams.geometric(0.3), 1, 200_000)
    assert seq.max() <= 1


def test_sample_rate_law_of_large_numbers():
    p = GGeoParams(0.2, 0.8)
    seq = sample_arrivals(p, 3, 1_000_000)
    rate, _ = moments_of_sequence(seq)
    assert abs(rate - 0.2) < 0.005
    # independent sampler of the same gap law: inverse transform on uniforms
    rng = np.random.default_rng(99)
    beta = p.rate * (1 - p.burst_prob)
    n = 200_000
    geo = np.floor(np.log(rng.random(n)) / np.log1p(-beta)).astype(np.int64) + 1
    gaps = np.where(rng.random(n) < p.burst_prob, 0, geo)
    assert abs(1 / gaps.mean() - rate) < 0.005


@pytest.mark.parametrize("rate,scv", [(0.2, 0.8), (0.1, 3.9), (0.3, 0.7), (0.05, 2.0)])
def test_round_trip_moments(rate, scv):
    seq = sample_arrivals(GGeoParams(rate, scv), 5, 1_000_000)
    r, c = moments_of_sequence(seq)
    assert abs(r - rate) / rate < 0.01
    assert abs(c - scv) / scv < 0.03


def test_moments_deterministic_gaps():
    seq = np.zeros(400, dtype=np.int64)
    seq[::4] = 1
    assert moments_of_sequence(seq) == (0.25, 0.0)


def test_moments_need_two_arrivals():
    seq = np.zeros(10, dtype=np.int64)
    seq[3] = 1
    with pytest.raises(InsufficientDataError):
        moments_of_sequence(seq)


def test_bernoulli_gap_histogram_chi_square():
    lam = 0.3
    seq = sample_arrivals(GGeoParams.geometric(lam), 8, 300_000)
    assert seq.max() <= 1
    gaps = np.diff(np.nonzero(seq)[0])
    kmax = 15
    observed = np.array([np.sum(gaps == k) for k in range(1, kmax)] + [np.sum(gaps >= kmax)])
    pk = lam * (1 - lam) ** np.arange(kmax - 1)
    expected = np.append(pk, 1 - pk.sum()) * gaps.size
    _, pvalue = stats.chisquare(observed, expected)
    assert pvalue > 0.01


def test_split_stream_scv():
    assert split_stream_scv(1.8, 1.0) == pytest.approx(1.8)
    assert split_stream_scv(1.8, 0.0) == pytest.approx(1.0)


def test_traffic_matrix_validation():
    with pytest.raises(ValueError):
        TrafficMatrix(np.ones((3, 3)), 1.0)
    with pytest.raises(ValueError):
        TrafficMatrix(np.full((2, 2), 0.6) - np.eye(2) * 0.6 + np.array([[0, 0.5], [0, 0]]), 1.0)
    tm = TrafficMatrix.uniform(4, 0.3, 0.2)
    assert tm.source_rates == pytest.approx([0.3] * 4)
    assert tm.thinned_scv(1, 0.3) == pytest.approx(tm.scv[0])
    with pytest.raises(ValueError):
        tm.rates[0, 1] = 1.0
