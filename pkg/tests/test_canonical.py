from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deflnoc.canonical import (
    CanonicalInput,
    ServiceProcess,
    UnstableError,
    departure_scv,
    deflected_rate,
    empty_prob,
    expected_deflections,
    merge_scv,
    modified_service_mean,
    modified_service_scv,
    solve_batch,
    solve_canonical,
    split_scv,
    wait_class,
    wait_deflected,
)
from deflnoc.simulator import LoopSimConfig, run_loop
from deflnoc.traffic import GGeoParams


def geo(lam):
    return GGeoParams.geometric(lam)


def plain_priority_wait(rho, t, scv, lam):
    """Deflection-free single-queue wait written out independently."""
    return (rho * (t - 1.0) + t * (scv + lam - 1.0)) / (2.0 * (1.0 - rho))


class TestClosedForms:
    def test_expected_deflections(self):
        assert expected_deflections(0.0) == 0.0
        assert expected_deflections(0.5) == pytest.approx(1.0)
        assert expected_deflections(0.3) == pytest.approx(0.428571, rel=1e-5)
        with pytest.raises(ValueError):
            expected_deflections(1.0)

    def test_deflected_rate(self):
        assert deflected_rate(0.3, 0.0) == 0.0
        assert deflected_rate(0.2, 0.5) == pytest.approx(0.2)
        assert deflected_rate(0.33, 0.3) == pytest.approx(0.141428, rel=1e-5)

    def test_empty_prob(self):
        assert empty_prob(0.0, 0.0, 3.0) == 1.0
        assert empty_prob(0.5, 0.0, 1.0) == pytest.approx(0.5)
        assert empty_prob(0.3, 0.2, 1.0) == pytest.approx(0.56667, abs=1e-5)
        with pytest.raises(UnstableError):
            empty_prob(0.6, 0.4, 1.0)

    def test_modified_service_mean(self):
        lam = 0.25
        assert modified_service_mean(1 - lam, lam) == pytest.approx(1.0)
        assert modified_service_mean(0.7, 0.2) == pytest.approx(1.5)
        assert modified_service_mean(0.56667, 0.3) == pytest.approx(1.44443, abs=1e-5)

    def test_modified_service_scv(self):
        assert modified_service_scv(1.0, 0.5, 1.0) == pytest.approx(3.0)
        r, ca = 0.4, 1.0
        occ = (r * ca / (1 - r) - r) / 2  # numerator vanishes
        assert modified_service_scv(occ, r, ca) == pytest.approx(0.0, abs=1e-12)

    def test_modified_service_scv_clamps(self):
        from collections import Counter

        log = Counter()
        assert modified_service_scv(0.0, 0.5, 3.0, log) == 0.0
        assert log["mod_service_scv"] == 1

    def test_departure_scv(self):
        assert departure_scv(0.0, 0.7, 5.0) == pytest.approx(0.7)
        assert departure_scv(1.0, 0.7, 5.0) == pytest.approx(5.0)
        assert departure_scv(0.5, 1.0, 0.25) == pytest.approx(0.8125)

    def test_merge_and_split(self):
        assert merge_scv(0.0, 9.0, 0.2, 1.3) == pytest.approx(1.3)
        assert merge_scv(0.2, 1.7, 0.2, 1.7) == pytest.approx(1.7)
        assert merge_scv(0.1, 2.0, 0.3, 1.0) == pytest.approx(1.25)
        assert split_scv(1.8, 1.0) == pytest.approx(1.8)
        assert split_scv(1.8, 0.0) == pytest.approx(1.0)
        assert split_scv(1.8, 0.3) == pytest.approx(1.24)

    def test_wait_deflected(self):
        assert wait_deflected(0.0, 1.0, 0.3, 1.0, 1.0, 0.0) == 0.0
        assert wait_deflected(0.25, 1.0, 0.25, 1.0, 1.0, 0.25) == pytest.approx(0.1667, abs=1e-4)
        with pytest.raises(UnstableError):
            wait_deflected(1.0, 1.0, 0.0, 1.0, 1.0, 1.0)

    def test_wait_class(self):
        lam = 0.4
        assert wait_class(0.0, 1.0, 0.0, lam, 1.0, 1 - lam, lam) == pytest.approx(0.0, abs=1e-12)
        assert wait_class(0.0, 1.0, 0.0, 0.5, 1.0, 1.0, 0.5) == pytest.approx(0.5)
        with pytest.raises(UnstableError):
            wait_class(0.5, 1.0, 0.0, 0.5, 1.0, 1.0, 0.5)


class TestSolver:
    def test_deflection_free_reduction(self):
        for lam, scv in [(0.1, 0.9), (0.3, 2.5), (0.6, 0.4), (0.85, 4.0)]:
            r = solve_canonical(CanonicalInput(GGeoParams(lam, scv)))
            assert r.deflected_rate == 0.0
            assert r.iterations == 1
            assert r.converged
            assert abs(r.wait_class - plain_priority_wait(lam, 1.0, scv, lam)) <= 1e-12

    def test_deterministic(self):
        inp = CanonicalInput(GGeoParams(0.25, 1.4), deflect_prob=0.35)
        assert solve_canonical(inp) == solve_canonical(inp)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableError):
            solve_canonical(CanonicalInput(geo(0.5), deflect_prob=0.5))

    def test_converged_delta_below_tolerance(self):
        r = solve_batch(np.linspace(0.05, 0.6, 12), 1.0, 0.3)
        assert r["converged"].all()
        assert (r["iterations"] < 1000).all()

    def test_lambda_sweep_strictly_increasing(self):
        lams = np.linspace(0.05, 0.3, 11)
        w = [solve_canonical(CanonicalInput(geo(x), deflect_prob=0.3)).wait_class for x in lams]
        assert np.all(np.diff(w) > 0)

    @settings(max_examples=60, deadline=None)
    @given(
        lam=st.floats(0.02, 0.5),
        p=st.floats(0.0, 0.6),
        extra=st.floats(0.0, 3.0),
        bump=st.floats(0.01, 0.2),
    )
    def test_monotone_grid(self, lam, p, extra, bump):
        scv = 1 - lam + extra
        if lam * (1 + p / (1 - p)) >= 0.95:
            return
        base = solve_canonical(CanonicalInput(GGeoParams(lam, scv), deflect_prob=p)).wait_class
        scv_up = solve_canonical(CanonicalInput(GGeoParams(lam, scv + bump), deflect_prob=p)).wait_class
        assert scv_up >= base - 1e-9
        p_up = min(p + bump, 0.99)
        if lam / (1 - p_up) < 0.95:
            w = solve_canonical(CanonicalInput(GGeoParams(lam, scv), deflect_prob=p_up)).wait_class
            assert w >= base - 1e-9
        lam_up = lam + bump / 10
        if lam_up / (1 - p) < 0.95:
            w = solve_canonical(CanonicalInput(GGeoParams(lam_up, scv), deflect_prob=p)).wait_class
            assert w >= base - 1e-9

    def test_service_process_invariants(self):
        with pytest.raises(ValueError):
            ServiceProcess(0.5, 0.0)
        with pytest.raises(ValueError):
            ServiceProcess(1.0, -0.1)


@pytest.fixture(scope="module")
def sim_02_03():
    return run_loop(LoopSimConfig((geo(0.2),), 0.3, hops=3, loop_time=6, max_deflections=64, seed=11))


class TestAgainstLoopSimulation:
    """Single-class loop simulated with deflected packets back after 6 cycles."""

    def test_deflected_rate_monte_carlo(self):
        s = run_loop(LoopSimConfig((geo(0.33),), 0.3, max_deflections=64, seed=11))
        assert abs(s.deflected_rate - deflected_rate(0.33, 0.3)) / deflected_rate(0.33, 0.3) < 0.02

    def test_source_wait(self, sim_02_03):
        model = solve_canonical(CanonicalInput(geo(0.2), deflect_prob=0.3)).wait_class
        assert abs(model - sim_02_03.class_wait[0]) / sim_02_03.class_wait[0] < 0.15

    def test_source_wait_lam03_p02(self):
        s = run_loop(LoopSimConfig((geo(0.3),), 0.2, seed=11))
        model = solve_canonical(CanonicalInput(geo(0.3), deflect_prob=0.2)).wait_class
        assert abs(model - s.class_wait[0]) / s.class_wait[0] < 0.15

    def test_deflected_wait(self, sim_02_03):
        # Returning packets reach the link one cycle apart at most in the
        # slotted loop, so the measured wait is identically zero while the
        # two-moment formula gives a small positive value.
        model = solve_canonical(CanonicalInput(geo(0.2), deflect_prob=0.3)).wait_defl
        measured = sim_02_03.deflected_wait
        assert abs(model - measured) <= 0.15 * measured

    def test_effective_service_scv(self, sim_02_03):
        # head-of-line service time: from reaching the head of the queue to
        # leaving it, measured per packet
        model = solve_canonical(CanonicalInput(geo(0.2), deflect_prob=0.3)).mod_service.scv
        measured = float(sim_02_03.class_hol_service_scv[0])
        assert abs(model - measured) / measured < 0.10

    def test_queue_occupancy_little(self, sim_02_03):
        # time-average queue content (head included) equals rate x (wait + 1)
        lam = sim_02_03.class_count[0] / (200_000 - 20_000)
        expected = lam * (sim_02_03.class_wait[0] + 1.0)
        assert sim_02_03.queue_occupancy[0] == pytest.approx(expected, rel=0.03)
