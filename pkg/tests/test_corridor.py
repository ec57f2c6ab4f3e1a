import pytest

from cvsignal import (
    CorridorValidationError,
    OffsetBoundError,
    SignalState,
    apply_offset,
    build_corridor,
)
from cvsignal.corridor import MAJOR_EAST, MAJOR_WEST, MINOR


def make_config(n=4, **over):
    cfg = {
        "corridor": {"intersections": n},
        "phase_plan": {
            "cycle_s": 90,
            "coordinated": {"max_green_s": 54, "split_green_s": 54},
            "non_coordinated": {"max_green_s": 24, "split_green_s": 24},
        },
    }
    cfg["corridor"].update(over)
    return cfg


def test_four_intersection_corridor_has_8_major_8_minor_segments():
    corr = build_corridor(make_config(4))
    majors = [s for s in corr.segments if s.direction in (MAJOR_EAST, MAJOR_WEST)]
    minors = [s for s in corr.segments if s.direction == MINOR]
    assert len(majors) == 8
    assert len(minors) == 8
    assert len(corr.intersections) == 4


def test_ten_intersection_corridor():
    corr = build_corridor(make_config(10))
    assert len(corr.intersections) == 10


def test_zero_length_segment_rejected_with_field_name():
    with pytest.raises(CorridorValidationError, match=r"length_mi"):
        build_corridor(make_config(4, entry_length_mi=0.0))


def test_segment_chain_connects():
    corr = build_corridor(make_config(4, spacing_mi=[0.4, 0.5, 0.6]))
    # eastbound route visits each intersection in order
    route = corr.routes["east"]
    assert [corr.segment(s).intersection_id for s in route] == ["I0", "I1", "I2", "I3"]
    # upstream linkage: E1 is fed by I0's signal
    assert corr.segment("E1").upstream_intersection_id == "I0"
    assert corr.segment("E0").upstream_intersection_id is None
    # westbound mirror
    route_w = corr.routes["west"]
    assert [corr.segment(s).intersection_id for s in route_w] == ["I3", "I2", "I1", "I0"]
    # positions accumulate the spacings
    assert corr.intersections[-1].position_mi == pytest.approx(1.5)


def test_every_intersection_has_one_major_approach_per_direction():
    corr = build_corridor(make_config(4))
    for i in corr.intersections:
        assert corr.segment(i.major_east_segment).direction == MAJOR_EAST
        assert corr.segment(i.major_west_segment).direction == MAJOR_WEST
        assert len(i.minor_segments) == 2


def test_coordinated_pairs():
    corr = build_corridor(make_config(4))
    pairs = corr.coordinated_pairs()
    assert len(pairs) == 3
    up, down, seg = pairs[0]
    assert (up.id, down.id) == ("I0", "I1")
    assert seg.id == "E1"  # the approach into the downstream intersection


def test_phase_plan_ring_sum_enforced():
    cfg = make_config(4)
    cfg["phase_plan"]["coordinated"]["split_green_s"] = 50  # breaks the ring sum
    with pytest.raises(CorridorValidationError, match="splits"):
        build_corridor(cfg)


def test_phase_plan_min_green_leq_max():
    cfg = make_config(4)
    cfg["phase_plan"]["non_coordinated"]["min_green_s"] = 30
    with pytest.raises(CorridorValidationError, match="min_green"):
        build_corridor(cfg)


def test_available_green():
    corr = build_corridor(make_config(4))
    plan = corr.intersections[0].phase_plan
    # C - both clearances (4+2 each)
    assert plan.available_green_s == pytest.approx(90 - 6 - 6)
    assert plan.intergreen_coordinated_s == pytest.approx(6)


def test_signal_indication_exclusive():
    st = SignalState("I0", 90.0, active="major", phase="green")
    assert st.indication("major-east") == "green"
    assert st.indication("major-west") == "green"
    assert st.indication("minor") == "red"
    st.active, st.phase = "minor", "yellow"
    assert st.indication("minor") == "yellow"
    assert st.indication("major-east") == "red"


class TestApplyOffset:
    def test_zero_is_identity(self):
        st = SignalState("I1", 90.0, next_cycle_start_s=180.0, offset_s=0.0)
        out = apply_offset(st, 0.0)
        assert out.next_cycle_start_s == 180.0
        assert out.offset_s == 0.0

    def test_plus_five_shifts_green_start_relative_to_upstream(self):
        # hand trace: upstream green starts at 180; downstream currently
        # aligned (offset 0, start 180); retargeting to +5 must schedule the
        # downstream green at 185, i.e. 5 s later than upstream
        upstream_start = 180.0
        st = SignalState("I1", 90.0, next_cycle_start_s=180.0, offset_s=0.0)
        out = apply_offset(st, 5.0)
        assert out.next_cycle_start_s - upstream_start == pytest.approx(5.0)
        assert out.offset_s == pytest.approx(5.0)
        # cycle length untouched
        assert out.cycle_s == 90.0

    def test_retarget_is_relative_to_current_offset(self):
        st = SignalState("I1", 90.0, next_cycle_start_s=183.0, offset_s=3.0)
        out = apply_offset(st, -4.0)
        assert out.next_cycle_start_s == pytest.approx(176.0)
        assert out.offset_s == pytest.approx(-4.0)

    def test_out_of_bound_rejected_state_unchanged(self):
        st = SignalState("I1", 90.0, next_cycle_start_s=180.0, offset_s=0.0)
        with pytest.raises(OffsetBoundError):
            apply_offset(st, 60.0)
        assert st.next_cycle_start_s == 180.0
        assert st.offset_s == 0.0

    def test_offset_stays_in_half_cycle_band(self):
        st = SignalState("I1", 90.0)
        for t2 in (-45.0, -10.0, 0.0, 17.0, 45.0):
            out = apply_offset(st, t2)
            assert -45.0 <= out.offset_s <= 45.0
