"""Adaptive per-intersection signal controller driven by CV data only.

Each cycle anchors at the coordinated green start. The controller holds an
initial grace green while waiting for a platoon; when one is sensed it
sizes the green by the timing optimizer, re-scans shortly before the
computed green ends (extending for late platoons), and otherwise yields to
the side street, whose green is demand-terminated so unused time returns to
the coordinated phases early. Offset retargets arrive between cycles and
shift only the next cycle anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corridor import (
    GREEN,
    Intersection,
    MINOR,
    PhasePlan,
    RED,
    Segment,
    SignalState,
    YELLOW,
)
from .green_optimizer import (
    PlatoonInput,
    TimingProblem,
    TimingSolution,
    max_green_noncoordinated,
    minor_green_activation,
    optimize_intersection,
)
from .sensing import Bsm, Platoon, estimate_queue_length
from .shockwave import ShockwaveInput, ShockwaveResult, analyze
from .units import METERS_PER_MILE, STOP_SPEED_MPH


@dataclass
class AdaptiveConfig:
    grace_period_s: float = 8.0
    recheck_window_s: float = 10.0
    fr_step: float = 0.05
    w_delay: float = 0.5
    w_progression: float = 0.5
    sat_headway_s: float = 2.5
    minor_passage_s: float = 3.0
    minor_demand_count: float = 2.0
    speed_ema_alpha: float = 0.3
    jam_spacing_m: float = 9.0
    avg_spacing_m: float = 9.0


@dataclass
class ApproachSense:
    """One approach's per-second snapshot handed in by the harness."""

    segment: Segment
    bsms: list[Bsm] = field(default_factory=list)
    platoons: list[Platoon] = field(default_factory=list)
    predicted_count: float = 0.0
    flow_vph: float = 0.0


COORD_GREEN = "coord_green"
COORD_YELLOW = "coord_yellow"
COORD_ALLRED = "coord_allred"
MINOR_GREEN = "minor_green"
MINOR_YELLOW = "minor_yellow"
MINOR_ALLRED = "minor_allred"
EARLY_COORD = "early_coord"


class AdaptiveController:
    def __init__(self, intersection: Intersection, coordinated_segment: Segment,
                 opposite_segment: Segment, minor_segments: list[Segment],
                 config: AdaptiveConfig | None = None,
                 initial_offset_s: float = 0.0):
        self.intersection = intersection
        self.plan: PhasePlan = intersection.phase_plan
        self.coord_segment = coordinated_segment
        self.opp_segment = opposite_segment
        self.minor_segments = minor_segments
        self.cfg = config or AdaptiveConfig()
        c = self.plan.cycle_s
        offset = initial_offset_s % c
        self.state = SignalState(
            intersection.id, c, active="major", phase=GREEN,
            phase_start_s=offset - c, phase_end_s=offset,
            cycle_start_s=offset - c, next_cycle_start_s=offset, offset_s=0.0,
        )
        self.stage = COORD_GREEN
        self.stage_end_s = math.inf
        self.planned_green_end_s: float | None = None
        self.minor_called = False
        self.cycle_index = 0
        self.pending_shift_s = 0.0
        self.pending_offset_s: float | None = None
        self.uncongested_speed_mph = coordinated_segment.free_flow_speed_mph
        self.last_shockwave: ShockwaveResult | None = None
        self.queue_len_mi = coordinated_segment.historical_queue_mi
        # red interval between successive coordinated greens, measured live
        self.last_red_duration_s = c - self.plan.coordinated.split_green_s
        self._red_started_s: float | None = None
        self.g_max_eff_s = self._g_max_for(cycle_len_s=c)
        self.minor_green_cap_s = self.plan.non_coordinated.max_green_s
        self._minor_green_end_s = 0.0
        self._minor_green_start_s = 0.0
        self._minor_green_cap_abs = 0.0
        self.decisions: list[dict] = []

    # -- schedule helpers ---------------------------------------------------

    def _g_max_for(self, cycle_len_s: float) -> float:
        plan = self.plan
        return (cycle_len_s - plan.coordinated.clearance_s
                - plan.non_coordinated.min_green_s
                - plan.non_coordinated.clearance_s)

    def schedule_offset(self, t2_s: float, shift_s: float) -> None:
        """Queue an offset retarget; it lands at the next cycle roll."""
        self.pending_offset_s = t2_s
        self.pending_shift_s = shift_s

    def effective_next_start_s(self) -> float:
        return self.state.next_cycle_start_s + self.pending_shift_s

    # -- measurement helpers --------------------------------------------------

    def _update_flow_estimates(self, sense: dict[str, ApproachSense]) -> None:
        a = self.cfg.speed_ema_alpha
        moving = [b.speed_mph for b in sense["coord"].bsms
                  if b.speed_mph >= STOP_SPEED_MPH]
        if moving:
            mean = sum(moving) / len(moving)
            self.uncongested_speed_mph = (1 - a) * self.uncongested_speed_mph + a * mean

    def _cycle_start_measurements(self, sense: dict[str, ApproachSense]) -> None:
        """Queue state and demand-driven bounds, measured at green start."""
        seg = self.coord_segment
        ap = sense["coord"]
        self.queue_len_mi = estimate_queue_length(ap.platoons, seg)
        queued = [p for p in ap.platoons if p.is_queued]
        if queued:
            n_queued = max(1, int(round(sum(p.est_total_count for p in queued))))
        else:
            n_queued = max(1, int(round(
                self.queue_len_mi * METERS_PER_MILE / self.cfg.jam_spacing_m)))
        uncongested_len = max(seg.length_mi - self.queue_len_mi, 1e-6)
        k_a = max(0.0, ap.predicted_count - n_queued) / uncongested_len
        q_a = k_a * self.uncongested_speed_mph
        self.last_shockwave = analyze(ShockwaveInput(
            k_a_vpm=k_a,
            q_a_vph=q_a,
            inter_green_s=self.last_red_duration_s,
            queue_len_mi=self.queue_len_mi,
            n_queued=n_queued,
            cycle_s=self.plan.cycle_s,
        ))

        vc_minor = max(sense["minor0"].flow_vph, sense["minor1"].flow_vph)
        vc_major = max(sense["coord"].flow_vph, sense["opp"].flow_vph)
        vc_total = vc_minor + vc_major
        self.minor_green_cap_s = max_green_noncoordinated(
            self.plan.non_coordinated.max_green_s, self.plan.cycle_s,
            self.plan.lost_time_s, vc_minor, vc_total,
            g_min_s=self.plan.non_coordinated.min_green_s,
        )
        cycle_len = self.state.next_cycle_start_s - self.state.cycle_start_s
        self.g_max_eff_s = self._g_max_for(cycle_len)

    def _build_problem(self, sense: dict[str, ApproachSense], now_s: float,
                       g_floor_s: float) -> TimingProblem:
        seg = self.coord_segment
        ap = sense["coord"]
        q_d = self.last_shockwave.t_q_s if self.last_shockwave else 0.0
        green_elapsed = now_s - self.state.cycle_start_s
        q_d = max(0.0, q_d - green_elapsed)  # already-served queue time
        platoons = []
        for p in ap.platoons:
            if p.is_queued:
                continue  # standing queue is represented by the clearance term
            head_dist = max(0.0, seg.length_mi - p.head_position_m / METERS_PER_MILE)
            speed = max(p.avg_speed_mph, 1.0)
            reach_queue_s = max(0.0, head_dist - self.queue_len_mi) / speed * 3600.0
            affected = q_d > 0 and reach_queue_s <= q_d
            platoons.append(PlatoonInput(
                length_mi=p.length_mi,
                avg_speed_mph=p.avg_speed_mph,
                dist_to_stopline_mi=head_dist,
                cv_count=p.cv_count,
                est_total_count=p.est_total_count,
                affected_by_queue=affected,
                dist_ahead_mi=self.queue_len_mi if affected else 0.0,
            ))
        cycle_len = self.state.next_cycle_start_s - self.state.cycle_start_s
        avail = cycle_len - self.plan.coordinated.clearance_s \
            - self.plan.non_coordinated.clearance_s
        return TimingProblem(
            platoons=platoons,
            predicted_count=ap.predicted_count,
            segment_length_mi=seg.length_mi,
            sat_headway_s=self.cfg.sat_headway_s,
            intergreen_s=self.plan.intergreen_coordinated_s,
            queue_clear_s=min(q_d, self.g_max_eff_s),
            cycle_s=self.plan.cycle_s,
            g_min_s=max(self.plan.coordinated.min_green_s, g_floor_s),
            g_max_s=self.g_max_eff_s,
            available_green_s=avail,
            w_delay=self.cfg.w_delay,
            w_progression=self.cfg.w_progression,
        )

    def _minor_demand(self, sense: dict[str, ApproachSense]) -> bool:
        for key in ("minor0", "minor1"):
            ap = sense[key]
            if ap.platoons:
                return True
            if ap.predicted_count >= self.cfg.minor_demand_count:
                return True
        return False

    def _minor_activation(self, sense: dict[str, ApproachSense]) -> bool:
        for key in ("minor0", "minor1"):
            ap = sense[key]
            if minor_green_activation(
                    ap.platoons, ap.predicted_count, ap.segment.length_mi,
                    ap.segment.max_allowable_queue_mi,
                    avg_spacing_m=self.cfg.avg_spacing_m):
                return True
        return False

    # -- optimization events ---------------------------------------------------

    def _optimize(self, sense: dict[str, ApproachSense], now_s: float) -> TimingSolution:
        elapsed = now_s - self.state.cycle_start_s
        problem = self._build_problem(sense, now_s, g_floor_s=min(
            max(self.plan.coordinated.min_green_s, elapsed + 1.0),
            self.g_max_eff_s))
        solution = optimize_intersection(problem, fr_step=self.cfg.fr_step)
        required = max(problem.g_min_s, math.ceil(solution.required_green_s))
        # cutting below the nominal split needs an actual side-street call,
        # and is off the table while most demand is invisible to the CVs
        covered = sum(p.est_total_count for p in problem.platoons) \
            + self.queue_len_mi * METERS_PER_MILE / self.cfg.jam_spacing_m
        unseen = sense["coord"].predicted_count - covered > 3.0
        if not self.minor_called or unseen:
            required = max(required, self.plan.coordinated.split_green_s)
        required = min(required, self.g_max_eff_s)
        self.planned_green_end_s = self.state.cycle_start_s + required
        self.decisions.append({
            "intersection": self.intersection.id,
            "cycle": self.cycle_index,
            "t": now_s,
            "g_cor": solution.g_coordinated_s,
            "g_noncor": solution.g_non_coordinated_s,
            "required_green_s": required,
            "fractions": solution.fractions,
            "wait_blocked_s": solution.wait_blocked_s,
            "wait_queue_s": solution.wait_queue_s,
            "wait_rejected_s": solution.wait_rejected_s,
            "progression": solution.progression,
            "objective": solution.objective,
            "oversaturated": solution.oversaturated,
        })
        return solution

    # -- stage machine -----------------------------------------------------------

    def _roll_cycle(self, now_s: float) -> None:
        st = self.state
        st.cycle_start_s = st.next_cycle_start_s
        st.next_cycle_start_s = st.cycle_start_s + self.plan.cycle_s
        if self.pending_offset_s is not None:
            st.next_cycle_start_s += self.pending_shift_s
            st.offset_s = self.pending_offset_s
            self.pending_offset_s = None
            self.pending_shift_s = 0.0
        st.active, st.phase = "major", GREEN
        st.phase_start_s = st.cycle_start_s
        st.phase_end_s = st.next_cycle_start_s
        if self._red_started_s is not None:
            self.last_red_duration_s = st.cycle_start_s - self._red_started_s
            self._red_started_s = None
        self.stage = COORD_GREEN
        self.planned_green_end_s = None
        self.minor_called = False
        self.cycle_index += 1

    def control_step(self, now_s: float, sense: dict[str, ApproachSense]) -> None:
        """Advance the signal one second based on the sensed CV state."""
        st = self.state
        self._update_flow_estimates(sense)
        if now_s >= st.next_cycle_start_s:
            self._roll_cycle(now_s)
        if self.stage == COORD_GREEN and now_s == st.cycle_start_s:
            self._cycle_start_measurements(sense)

        if self.stage in (COORD_GREEN, EARLY_COORD):
            if self.stage == EARLY_COORD:
                return
            self._coord_green_step(now_s, sense)
        elif self.stage == COORD_YELLOW:
            if now_s >= self.stage_end_s:
                self._enter(COORD_ALLRED, now_s,
                            self.plan.coordinated.all_red_s, "major", RED)
        elif self.stage == COORD_ALLRED:
            if now_s >= self.stage_end_s:
                self._enter_minor_green(now_s, sense)
        elif self.stage == MINOR_GREEN:
            self._minor_green_step(now_s, sense)
        elif self.stage == MINOR_YELLOW:
            if now_s >= self.stage_end_s:
                self._enter(MINOR_ALLRED, now_s,
                            self.plan.non_coordinated.all_red_s, "minor", RED)
        elif self.stage == MINOR_ALLRED:
            if now_s >= self.stage_end_s:
                # unused side-street time returns to the coordinated phases
                self.stage = EARLY_COORD
                st.active, st.phase = "major", GREEN
                st.phase_start_s = now_s
                st.phase_end_s = st.next_cycle_start_s
                if self._red_started_s is not None:
                    self.last_red_duration_s = now_s - self._red_started_s
                    self._red_started_s = None

    def _enter(self, stage: str, now_s: float, duration_s: float,
               active: str, phase: str) -> None:
        self.stage = stage
        self.stage_end_s = now_s + duration_s
        st = self.state
        st.active, st.phase = active, phase
        st.phase_start_s = now_s
        st.phase_end_s = self.stage_end_s

    def _coord_green_step(self, now_s: float, sense: dict[str, ApproachSense]) -> None:
        st = self.state
        elapsed = now_s - st.cycle_start_s
        platoons_present = any(
            not p.is_queued for p in sense["coord"].platoons
        ) or (elapsed == 0 and bool(sense["coord"].platoons))
        if not self.minor_called and self._minor_activation(sense):
            self.minor_called = True

        if self.planned_green_end_s is None:
            if platoons_present:
                self._optimize(sense, now_s)
            elif self.minor_called and elapsed >= self.cfg.grace_period_s:
                # no platoon sensed: fall back to the nominal split as the
                # yield point rather than cutting the unobserved major demand
                end = st.cycle_start_s + max(self.plan.coordinated.split_green_s,
                                             elapsed + 1.0)
                self.planned_green_end_s = min(
                    end, st.cycle_start_s + self.g_max_eff_s)
            elif elapsed >= self.g_max_eff_s:
                self.planned_green_end_s = st.cycle_start_s + self.g_max_eff_s
        else:
            in_recheck = (self.planned_green_end_s - self.cfg.recheck_window_s
                          <= now_s < self.planned_green_end_s)
            if in_recheck and platoons_present and not self.minor_called \
                    and self.planned_green_end_s - st.cycle_start_s < self.g_max_eff_s:
                self._optimize(sense, now_s)

        if self.planned_green_end_s is not None \
                and now_s >= self.planned_green_end_s:
            self._red_started_s = now_s
            self._enter(COORD_YELLOW, now_s, self.plan.coordinated.yellow_s,
                        "major", YELLOW)

    def _enter_minor_green(self, now_s: float, sense: dict[str, ApproachSense]) -> None:
        st = self.state
        remaining = st.next_cycle_start_s \
            - self.plan.non_coordinated.clearance_s - now_s
        cap = min(remaining, max(self.plan.non_coordinated.min_green_s,
                                 self.minor_green_cap_s))
        self._minor_green_start_s = now_s
        self._minor_green_end_s = now_s + min(
            self.plan.non_coordinated.min_green_s, cap)
        self._minor_green_cap_abs = now_s + cap
        self._enter(MINOR_GREEN, now_s, cap, "minor", GREEN)
        st.phase_end_s = self._minor_green_end_s

    def _minor_green_step(self, now_s: float, sense: dict[str, ApproachSense]) -> None:
        if now_s < self._minor_green_end_s:
            if self._minor_demand(sense):
                self._minor_green_end_s = min(
                    max(self._minor_green_end_s, now_s + self.cfg.minor_passage_s),
                    self._minor_green_cap_abs,
                )
                self.state.phase_end_s = self._minor_green_end_s
            return
        if now_s >= self._minor_green_end_s:
            if self._minor_demand(sense) \
                    and now_s + 1.0 <= self._minor_green_cap_abs:
                self._minor_green_end_s = min(
                    now_s + self.cfg.minor_passage_s, self._minor_green_cap_abs)
                self.state.phase_end_s = self._minor_green_end_s
                return
            self._enter(MINOR_YELLOW, now_s, self.plan.non_coordinated.yellow_s,
                        "minor", YELLOW)
