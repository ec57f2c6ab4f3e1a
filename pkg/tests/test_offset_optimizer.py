import logging

import numpy as np
import pytest

from cvsignal.offset_optimizer import (
    OffsetProblem,
    OversaturationError,
    derived_quantities,
    optimize_offset,
    t1_candidates,
    triangle_delay,
)
from oracles import offset_bruteforce, random_offset_problem


def make_problem(**over):
    base = dict(
        upstream_intergreen_s=20.0,
        downstream_intergreen_s=6.0,
        side_flow_1_vph=200.0,
        side_flow_2_vph=200.0,
        upstream_flow_vph=600.0,
        segment_length_mi=0.5,
        ffs_mph=45.0,
        v_bf_mph=-6.0,
        cycle_s=90.0,
    )
    base.update(over)
    return OffsetProblem(**base)


class TestDerivedQuantities:
    def test_queue_window_hand_value(self):
        # |20 - 10| * (200+200)/1440 = 10*400/1440
        prob = make_problem()
        _, t4, _, _ = derived_quantities(prob, 10.0, 0.0)
        assert t4 == pytest.approx(10.0 * 400.0 / 1440.0, rel=1e-9)
        assert t4 == pytest.approx(2.778, abs=2e-3)

    def test_time_to_free_flow_hand_value(self):
        # (10*400 + 5*1440)/(1440-600) = 13.33 s
        prob = make_problem()
        _, _, t_req, _ = derived_quantities(prob, 10.0, 5.0)
        assert t_req == pytest.approx((4000.0 + 7200.0) / 840.0, rel=1e-9)
        assert t_req == pytest.approx(13.33, abs=0.01)

    def test_arrival_time_hand_value(self):
        # (0.5 + 6*10/3600)/51 hours = 36.47 s
        prob = make_problem()
        t3, _, _, _ = derived_quantities(prob, 10.0, 0.0)
        assert t3 == pytest.approx((0.5 + 6.0 * 10.0 / 3600.0) / 51.0 * 3600.0, rel=1e-9)
        assert t3 == pytest.approx(36.47, abs=0.02)

    def test_join_point_consistent_with_arrival(self):
        prob = make_problem()
        t3, _, _, l_w = derived_quantities(prob, 10.0, 0.0)
        assert l_w == pytest.approx(6.0 * (10.0 + t3) / 3600.0, rel=1e-9)

    def test_oversaturation_rejected(self):
        prob = make_problem(upstream_flow_vph=1500.0)
        with pytest.raises(OversaturationError):
            derived_quantities(prob, 10.0, 0.0)


class TestTriangleDelay:
    def test_platoon_missing_the_queue_is_free(self):
        # huge t3 (long link) with tiny t2/t4 -> window negative -> no delay
        prob = make_problem(side_flow_1_vph=0.0, side_flow_2_vph=0.0)
        assert triangle_delay(prob, 20.0, 2.0) == 0.0

    def test_hand_evaluated_delay(self):
        # window 4 s, t_req 13.33 s, 600 veh/h -> 4 * 13.33 * (1/6) / 2
        prob = make_problem()
        t3, t4, t_req, _ = derived_quantities(prob, 10.0, 5.0)
        window = 4.0
        t2 = window + t3 - t4  # solve for the t2 that makes the window 4 s
        _, _, t_req2, _ = derived_quantities(prob, 10.0, t2)
        got = triangle_delay(prob, 10.0, t2)
        assert got == pytest.approx(window * t_req2 * (600.0 / 3600.0) / 2.0, rel=1e-9)

    def test_no_upstream_demand_no_delay(self):
        prob = make_problem(upstream_flow_vph=0.0)
        assert triangle_delay(prob, 10.0, 5.0) == 0.0

    def test_negative_clearance_time_clamped(self):
        prob = make_problem(side_flow_1_vph=0.0, side_flow_2_vph=0.0)
        # t2 strongly negative makes t_req negative: no residual queue
        assert triangle_delay(prob, 20.0, -30.0) == 0.0


class TestOptimizeOffset:
    def test_t1_search_range_is_one_to_half_cycle(self):
        assert list(t1_candidates(90.0)) == list(range(1, 46))
        assert list(t1_candidates(60.0)) == list(range(1, 31))

    def test_zero_side_inflow_no_queue_attains_zero_delay(self):
        prob = make_problem(side_flow_1_vph=0.0, side_flow_2_vph=0.0, v_bf_mph=0.0)
        sol = optimize_offset(prob)
        assert sol is not None
        assert sol.delay == 0.0

    def test_matches_independent_enumeration(self):
        rng = np.random.default_rng(41)
        for _ in range(60):
            prob = random_offset_problem(rng)
            sol = optimize_offset(prob)
            oracle = offset_bruteforce(prob)
            assert (sol is None) == (oracle is None)
            if sol is None:
                continue
            assert sol.t1_s == oracle["t1"]
            assert sol.t2_s == oracle["t2"]
            assert sol.delay == pytest.approx(oracle["delay"], abs=1e-12)

    def test_solution_respects_constraints(self):
        rng = np.random.default_rng(43)
        for _ in range(60):
            prob = random_offset_problem(rng)
            sol = optimize_offset(prob)
            if sol is None:
                continue
            assert 1 <= sol.t1_s <= prob.cycle_s / 2
            cap = prob.segment_length_mi / (prob.ffs_mph * prob.alpha) * 3600.0
            assert abs(sol.t2_s) <= cap + 1e-6
            assert abs(sol.t2_s) <= prob.cycle_s / 2 + 1e-9
            # inter-green equality
            assert prob.downstream_intergreen_s == pytest.approx(
                abs(prob.upstream_intergreen_s - sol.t1_s) + sol.t2_s
            )
            assert sol.delay >= 0.0

    def test_empty_feasible_set_returns_none_and_warns(self, caplog):
        prob = make_problem(
            upstream_intergreen_s=6.0, downstream_intergreen_s=45.0,
            segment_length_mi=0.05, ffs_mph=60.0, v_bf_mph=-5.0,
        )
        with caplog.at_level(logging.WARNING, logger="cvsignal.offset_optimizer"):
            sol = optimize_offset(prob)
        assert sol is None
        assert any("feasible" in r.message for r in caplog.records)

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            make_problem(alpha=0.0).validate()
        with pytest.raises(ValueError):
            make_problem(v_bf_mph=2.0).validate()
        with pytest.raises(ValueError):
            make_problem(upstream_intergreen_s=6.3).validate()
