"""Pairwise real-time offset selection between successive coordinated
intersections.

A platoon released upstream faces the downstream standing queue if it
arrives before the queue clears; the incurred delay is the triangular area
between the arrival line and the queue-clearance line in the time-space
diagram. Integer decision variables: the lag between inter-green starts and
the lag between green starts, tied by the inter-green equality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .units import SECONDS_PER_HOUR

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.8
DEFAULT_SAT_HEADWAY_S = 2.5


class OversaturationError(ValueError):
    """Downstream discharge cannot absorb the upstream inflow."""


@dataclass
class OffsetProblem:
    upstream_intergreen_s: float     # r_n
    downstream_intergreen_s: float   # r_(n+1)
    side_flow_1_vph: float
    side_flow_2_vph: float
    upstream_flow_vph: float
    segment_length_mi: float
    ffs_mph: float
    v_bf_mph: float                  # backward forming wave downstream, <= 0
    cycle_s: float
    sat_headway_s: float = DEFAULT_SAT_HEADWAY_S
    alpha: float = DEFAULT_ALPHA

    @property
    def discharge_vph(self) -> float:
        return SECONDS_PER_HOUR / self.sat_headway_s

    def validate(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        for name in ("side_flow_1_vph", "side_flow_2_vph", "upstream_flow_vph"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.segment_length_mi <= 0 or self.ffs_mph <= 0 or self.cycle_s <= 0:
            raise ValueError("geometry and cycle must be positive")
        if self.v_bf_mph > 0:
            raise ValueError("forming wave speed must be <= 0 (upstream)")
        if self.ffs_mph <= abs(self.v_bf_mph):
            raise ValueError("free-flow speed must exceed the wave magnitude")
        for name in ("upstream_intergreen_s", "downstream_intergreen_s"):
            v = getattr(self, name)
            if abs(v - round(v)) > 1e-9:
                raise ValueError(f"{name} must be integer-valued seconds")


@dataclass
class OffsetSolution:
    t1_s: int       # lag between inter-green starts
    t2_s: int       # lag between green starts (the offset applied downstream)
    t3_s: float     # platoon travel time to the back of the queue
    t4_s: float     # side-inflow contribution to the queue window
    t_req_s: float  # time for the downstream approach to reach free flow
    l_w_mi: float   # distance from the stop line to the platoon join point
    delay: float    # vehicle-seconds of triangular delay


def t1_candidates(cycle_s: float) -> range:
    """Integer search range for the inter-green lag: 1 .. C/2."""
    return range(1, int(cycle_s // 2) + 1)


def derived_quantities(problem: OffsetProblem, t1_s: float,
                       t2_s: float) -> tuple[float, float, float, float]:
    """(t3, t4, t_req, l_w) for one decision pair.

    Times in seconds, l_w in miles; the wave speed enters in mph so the
    second-based lags convert through hours.
    """
    q_dis = problem.discharge_vph
    if q_dis <= problem.upstream_flow_vph:
        raise OversaturationError(
            f"discharge {q_dis} veh/h <= upstream inflow "
            f"{problem.upstream_flow_vph} veh/h"
        )
    wait_s = abs(problem.upstream_intergreen_s - t1_s)
    v_bf = problem.v_bf_mph
    t3_h = (problem.segment_length_mi - v_bf * wait_s / SECONDS_PER_HOUR) \
        / (problem.ffs_mph - v_bf)
    t3_s = t3_h * SECONDS_PER_HOUR
    side = problem.side_flow_1_vph + problem.side_flow_2_vph
    t4_s = wait_s * side / q_dis
    t_req_s = (wait_s * side + t2_s * q_dis) / (q_dis - problem.upstream_flow_vph)
    l_w_mi = abs(v_bf) * (wait_s + t3_s) / SECONDS_PER_HOUR
    return t3_s, t4_s, t_req_s, l_w_mi


def triangle_delay(problem: OffsetProblem, t1_s: float, t2_s: float) -> float:
    """Vehicle-seconds lost by the upstream platoon to the downstream queue.

    Zero when the platoon arrives after the queue clears (negative window)
    or when the queue never existed (non-positive clearance time).
    """
    t3_s, t4_s, t_req_s, _ = derived_quantities(problem, t1_s, t2_s)
    window = t2_s + t4_s - t3_s
    if window <= 0.0 or t_req_s <= 0.0:
        return 0.0
    return window * t_req_s * (problem.upstream_flow_vph / SECONDS_PER_HOUR) / 2.0


def optimize_offset(problem: OffsetProblem) -> OffsetSolution | None:
    """Exhaustive integer search for the minimum-delay offset pair.

    The inter-green equality pins t2 for every t1, so the search walks
    t1 = 1 .. C/2 and keeps pairs whose t2 respects both the travel-time
    band and the half-cycle cap. Ties resolve to the smaller |t2|, then the
    smaller t1. Returns None (with a warning) when nothing is feasible.
    """
    problem.validate()
    t2_cap_s = problem.segment_length_mi / (problem.ffs_mph * problem.alpha) \
        * SECONDS_PER_HOUR
    half_cycle = problem.cycle_s / 2.0
    best = None
    for t1 in t1_candidates(problem.cycle_s):
        t2 = problem.downstream_intergreen_s \
            - abs(problem.upstream_intergreen_s - t1)
        if abs(t2) > t2_cap_s + 1e-9 or abs(t2) > half_cycle + 1e-9:
            continue
        delay = triangle_delay(problem, t1, t2)
        key = (delay, abs(t2), t1)
        if best is None or key < best[0]:
            best = (key, t1, t2)
    if best is None:
        log.warning("offset search found no feasible pair; holding previous offset")
        return None
    _, t1, t2 = best
    t3_s, t4_s, t_req_s, l_w_mi = derived_quantities(problem, t1, t2)
    return OffsetSolution(
        t1_s=int(t1),
        t2_s=int(round(t2)),
        t3_s=t3_s,
        t4_s=t4_s,
        t_req_s=t_req_s,
        l_w_mi=l_w_mi,
        delay=best[0][0],
    )
