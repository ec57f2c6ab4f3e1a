"""Actuated-coordinated baseline controller (loop-detector driven).

Coordinated greens recur on a fixed cycle and fixed offset. The side street
is served only when its stop-line detector is occupied during the minor
window; its green extends per actuation until gap-out, max green, or the
force-off that protects the next coordinated green start. Unused minor time
returns to the major street.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corridor import GREEN, Intersection, RED, SignalState, YELLOW

COORD_GREEN = "coord_green"
COORD_YELLOW = "coord_yellow"
COORD_ALLRED = "coord_allred"
MINOR_GREEN = "minor_green"
MINOR_YELLOW = "minor_yellow"
MINOR_ALLRED = "minor_allred"
EARLY_COORD = "early_coord"


@dataclass
class BaselinePlan:
    """Fixed plan: per-intersection offsets plus detector behavior."""

    offsets_s: dict[str, float]
    passage_time_s: float = 3.0
    detector_zone_m: float = 15.0


class BaselineController:
    def __init__(self, intersection: Intersection, plan: BaselinePlan):
        self.intersection = intersection
        self.phase_plan = intersection.phase_plan
        self.plan = plan
        c = self.phase_plan.cycle_s
        offset = plan.offsets_s.get(intersection.id, 0.0) % c
        start = offset - c
        self.state = SignalState(
            intersection.id, c, active="major", phase=GREEN,
            phase_start_s=start, phase_end_s=offset,
            cycle_start_s=start, next_cycle_start_s=offset, offset_s=0.0,
        )
        self.stage = COORD_GREEN
        self.stage_end_s = offset
        self.minor_served = False
        self._minor_end_s = 0.0
        self._minor_cap_s = 0.0
        self.cycle_index = 0

    def _roll(self) -> None:
        st = self.state
        st.cycle_start_s = st.next_cycle_start_s
        st.next_cycle_start_s = st.cycle_start_s + self.phase_plan.cycle_s
        st.active, st.phase = "major", GREEN
        st.phase_start_s = st.cycle_start_s
        st.phase_end_s = st.cycle_start_s + self.phase_plan.coordinated.split_green_s
        self.stage = COORD_GREEN
        self.minor_served = False
        self.cycle_index += 1

    def _enter(self, stage: str, now_s: float, duration_s: float,
               active: str, phase: str) -> None:
        self.stage = stage
        self.stage_end_s = now_s + duration_s
        st = self.state
        st.active, st.phase = active, phase
        st.phase_start_s = now_s
        st.phase_end_s = self.stage_end_s

    def control_step(self, now_s: float, actuations: dict[str, bool]) -> None:
        """One-second actuated update; `actuations` maps the minor approach
        segment ids to stop-line detector occupancy."""
        st = self.state
        plan = self.phase_plan
        if now_s >= st.next_cycle_start_s:
            self._roll()

        if self.stage in (COORD_GREEN, EARLY_COORD):
            if self.stage == EARLY_COORD or self.minor_served:
                return
            yield_point = st.cycle_start_s + plan.coordinated.split_green_s
            if now_s < yield_point:
                return
            latest_start = st.next_cycle_start_s \
                - plan.non_coordinated.clearance_s \
                - plan.non_coordinated.min_green_s \
                - plan.coordinated.clearance_s
            if now_s > latest_start:
                return  # too late to serve the side street this cycle
            if any(actuations.get(seg, False)
                   for seg in self.intersection.minor_segments):
                self._enter(COORD_YELLOW, now_s, plan.coordinated.yellow_s,
                            "major", YELLOW)
        elif self.stage == COORD_YELLOW:
            if now_s >= self.stage_end_s:
                self._enter(COORD_ALLRED, now_s, plan.coordinated.all_red_s,
                            "major", RED)
        elif self.stage == COORD_ALLRED:
            if now_s >= self.stage_end_s:
                force_off = st.next_cycle_start_s - plan.non_coordinated.clearance_s
                cap = min(now_s + plan.non_coordinated.max_green_s, force_off)
                self._minor_cap_s = cap
                self._minor_end_s = min(now_s + plan.non_coordinated.min_green_s, cap)
                self._enter(MINOR_GREEN, now_s, cap - now_s, "minor", GREEN)
                st.phase_end_s = self._minor_end_s
        elif self.stage == MINOR_GREEN:
            actuated = any(actuations.get(seg, False)
                           for seg in self.intersection.minor_segments)
            if actuated:
                self._minor_end_s = min(
                    max(self._minor_end_s, now_s + self.plan.passage_time_s),
                    self._minor_cap_s,
                )
                st.phase_end_s = self._minor_end_s
            if now_s >= self._minor_end_s:
                self.minor_served = True
                self._enter(MINOR_YELLOW, now_s, plan.non_coordinated.yellow_s,
                            "minor", YELLOW)
        elif self.stage == MINOR_YELLOW:
            if now_s >= self.stage_end_s:
                self._enter(MINOR_ALLRED, now_s, plan.non_coordinated.all_red_s,
                            "minor", RED)
        elif self.stage == MINOR_ALLRED:
            if now_s >= self.stage_end_s:
                # green resumes in the major direction
                self.stage = EARLY_COORD
                st.active, st.phase = "major", GREEN
                st.phase_start_s = now_s
                st.phase_end_s = st.next_cycle_start_s
