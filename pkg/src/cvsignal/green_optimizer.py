"""Per-intersection green split optimization from CV platoons.

The program trades off three waiting-time terms (inter-green blockage of
partially admitted platoons, queue-clearance time, full-cycle waits of
rejected platoons) against the count of progressing vehicles. Decision
variables are the integer coordinated green and one admitted fraction per
platoon. The bounded domain is searched exhaustively on a fraction grid, so
the optimum is exact by construction; both objectives are min-max
normalized over the feasible candidates and combined with configurable
weights.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .sensing import Platoon
from .units import METERS_PER_MILE, miles_to_meters

# platoons slower than this creep floor are treated as crawling through
CREEP_SPEED_MPH = 1.0
DEFAULT_FR_STEP = 0.05
AVG_VEHICLE_SPACING_M = 9.0


class GreenInfeasibleError(ValueError):
    """Signal timing bounds cannot be satisfied."""


@dataclass
class GreenBounds:
    g_min_s: float
    g_coord_max_s: float
    g_noncoord_max_s: float

    def validate(self) -> None:
        if self.g_min_s > self.g_coord_max_s:
            raise GreenInfeasibleError(
                f"g_min {self.g_min_s} exceeds coordinated max {self.g_coord_max_s}"
            )


def max_green_coordinated(cycle_s: float, clearance_coord_s: float,
                          noncoord_min_and_clearance: list[tuple[float, float]],
                          g_min_s: float = 4.0) -> float:
    """Upper green bound for the coordinated phases: the cycle minus its own
    clearance and every non-coordinated phase's minimum green + clearance."""
    g = cycle_s - clearance_coord_s
    for g_min_nc, clearance_nc in noncoord_min_and_clearance:
        g -= g_min_nc + clearance_nc
    if g < g_min_s:
        raise GreenInfeasibleError(
            f"cycle {cycle_s}s cannot host minimum greens and clearances "
            f"(coordinated max would be {g}s)"
        )
    return g


def max_green_noncoordinated(g_fixed_max_s: float, cycle_s: float,
                             lost_time_s: float, vc_noncoord_vph: float,
                             vc_total_vph: float, g_min_s: float = 4.0) -> float:
    """Upper green bound for the non-coordinated phases: the fixed plan value
    capped by the critical-lane-volume share of the effective cycle."""
    if vc_total_vph <= 0:
        return g_min_s
    volume_share = (cycle_s - lost_time_s) * vc_noncoord_vph / vc_total_vph
    return min(g_fixed_max_s, volume_share)


@dataclass
class PlatoonInput:
    """Optimizer view of one approaching platoon."""

    length_mi: float
    avg_speed_mph: float
    dist_to_stopline_mi: float
    cv_count: int
    est_total_count: float
    affected_by_queue: bool = False
    dist_ahead_mi: float = 0.0  # standing queue between platoon head and line

    @classmethod
    def from_platoon(cls, p: Platoon, segment_length_mi: float,
                     affected: bool = False, dist_ahead_mi: float = 0.0):
        head_dist = segment_length_mi - p.head_position_m / METERS_PER_MILE
        return cls(
            length_mi=p.length_mi,
            avg_speed_mph=p.avg_speed_mph,
            dist_to_stopline_mi=max(0.0, head_dist),
            cv_count=p.cv_count,
            est_total_count=p.est_total_count,
            affected_by_queue=affected,
            dist_ahead_mi=dist_ahead_mi,
        )


@dataclass
class TimingProblem:
    platoons: list[PlatoonInput]
    predicted_count: float       # total vehicles on the approach segment
    segment_length_mi: float
    sat_headway_s: float
    intergreen_s: float
    queue_clear_s: float         # pre-existing queue clearance (shockwave)
    cycle_s: float
    g_min_s: float
    g_max_s: float
    available_green_s: float     # green shared by both barrier groups
    w_delay: float = 0.5
    w_progression: float = 0.5

    def validate(self) -> None:
        if self.g_min_s > self.g_max_s:
            raise GreenInfeasibleError(
                f"green bounds empty: [{self.g_min_s}, {self.g_max_s}]"
            )
        if self.queue_clear_s > self.cycle_s:
            raise GreenInfeasibleError("queue clearance exceeds the cycle")


@dataclass
class TimingSolution:
    g_coordinated_s: int
    g_non_coordinated_s: int
    fractions: tuple[float, ...]
    wait_blocked_s: float        # inter-green blockage term
    wait_queue_s: float          # queue clearance term (the required green)
    wait_rejected_s: float       # full-cycle waits of rejected platoons
    progression: float
    objective: float
    oversaturated: bool = False

    @property
    def required_green_s(self) -> float:
        return self.wait_queue_s


# -- objective terms ----------------------------------------------------------


def blocked_wait_time(platoons: list[PlatoonInput], fractions, intergreen_s: float,
                      predicted_count: float, segment_length_mi: float,
                      sat_headway_s: float) -> float:
    """Wait caused by holding back the non-admitted platoon portions."""
    total = intergreen_s
    for p, f in zip(platoons, fractions):
        total += (p.length_mi * (1.0 - f) * predicted_count * sat_headway_s
                  / segment_length_mi)
    return total


def queue_clear_time(problem: TimingProblem, fractions) -> float:
    """Green time needed to flush the pre-existing queue and every admitted
    platoon portion. Rejected platoons (fraction 0) do not hold the green."""
    total = problem.queue_clear_s
    for p, f in zip(problem.platoons, fractions):
        if f <= 0.0:
            continue
        speed = max(p.avg_speed_mph, CREEP_SPEED_MPH)
        if p.affected_by_queue:
            total += (p.length_mi * f + p.dist_ahead_mi) / speed * 3600.0
        else:
            arrive = p.dist_to_stopline_mi / speed * 3600.0
            tail = p.length_mi * f / speed * 3600.0
            total += arrive + tail
    return total


def nonselected_wait(platoons: list[PlatoonInput], fractions,
                     cycle_s: float) -> float:
    """Full-cycle wait charged to every fully rejected platoon."""
    total = 0.0
    for p, f in zip(platoons, fractions):
        if f == 0.0:
            total += cycle_s * p.est_total_count
    return total


def progression_score(platoons: list[PlatoonInput], fractions) -> float:
    """Vehicles that make it through: all bounding CVs plus the admitted
    share of the estimated non-CV interior."""
    total = 0.0
    for p, f in zip(platoons, fractions):
        hidden = max(0.0, p.est_total_count - p.cv_count)
        total += p.cv_count + hidden * f
    return total


# -- solver --------------------------------------------------------------------


def fraction_grid(step: float) -> list[float]:
    values = []
    k = 0
    while True:
        v = k * step
        if v > 1.0 + 1e-12:
            break
        values.append(min(v, 1.0))
        k += 1
    return values


def optimize_intersection(problem: TimingProblem,
                          fr_step: float = DEFAULT_FR_STEP) -> TimingSolution:
    """Exact search over integer greens and the admitted-fraction grid.

    Every candidate keeps the ring-barrier equality (the non-coordinated
    green takes the remainder of the shared green). Ties resolve to the
    larger coordinated green, then the lexicographically larger fraction
    vector. When even rejecting every platoon cannot clear the standing
    queue within bounds, the best-effort maximum green is returned with the
    oversaturated flag set.
    """
    problem.validate()
    g_lo = int(np.ceil(problem.g_min_s))
    g_hi = int(np.floor(problem.g_max_s))
    if g_lo > g_hi:
        raise GreenInfeasibleError(
            f"no integer green in [{problem.g_min_s}, {problem.g_max_s}]"
        )
    n = len(problem.platoons)

    if n == 0:
        g = g_hi
        t_q = queue_clear_time(problem, ())
        oversat = t_q > g + 1e-9
        return TimingSolution(
            g_coordinated_s=g,
            g_non_coordinated_s=int(round(problem.available_green_s)) - g,
            fractions=(),
            wait_blocked_s=problem.intergreen_s,
            wait_queue_s=t_q,
            wait_rejected_s=0.0,
            progression=0.0,
            objective=0.0,
            oversaturated=oversat,
        )

    grid = fraction_grid(fr_step)
    combos = np.array(list(itertools.product(grid, repeat=n)))

    speeds = np.array([max(p.avg_speed_mph, CREEP_SPEED_MPH) for p in problem.platoons])
    lengths = np.array([p.length_mi for p in problem.platoons])
    cvs = np.array([float(p.cv_count) for p in problem.platoons])
    ests = np.array([p.est_total_count for p in problem.platoons])
    affected = np.array([p.affected_by_queue for p in problem.platoons])

    # queue-clear coefficients: per-mile travel plus a fixed arrival term
    per_frac = lengths / speeds * 3600.0
    fixed = np.where(
        affected,
        np.array([p.dist_ahead_mi for p in problem.platoons]) / speeds * 3600.0,
        np.array([p.dist_to_stopline_mi for p in problem.platoons]) / speeds * 3600.0,
    )
    admitted = combos > 0.0
    t_q = problem.queue_clear_s + combos @ per_frac + admitted @ fixed

    blocked_coef = lengths * problem.predicted_count * problem.sat_headway_s \
        / problem.segment_length_mi
    t_s = problem.intergreen_s + (1.0 - combos) @ blocked_coef
    t_p = (~admitted) @ (problem.cycle_s * ests)
    hidden = np.maximum(0.0, ests - cvs)
    progression = cvs.sum() + combos @ hidden

    feasible = t_q <= g_hi + 1e-9
    if not feasible.any():
        # even full rejection cannot clear the queue inside the bounds
        fractions = tuple(0.0 for _ in range(n))
        return TimingSolution(
            g_coordinated_s=g_hi,
            g_non_coordinated_s=int(round(problem.available_green_s)) - g_hi,
            fractions=fractions,
            wait_blocked_s=blocked_wait_time(
                problem.platoons, fractions, problem.intergreen_s,
                problem.predicted_count, problem.segment_length_mi,
                problem.sat_headway_s),
            wait_queue_s=queue_clear_time(problem, fractions),
            wait_rejected_s=nonselected_wait(problem.platoons, fractions,
                                             problem.cycle_s),
            progression=progression_score(problem.platoons, fractions),
            objective=float("nan"),
            oversaturated=True,
        )

    j1 = (t_q + t_s + t_p)[feasible]
    j2 = progression[feasible]
    j1_lo, j1_hi = j1.min(), j1.max()
    j2_lo, j2_hi = j2.min(), j2.max()
    n1 = np.zeros_like(j1) if j1_hi == j1_lo else (j1 - j1_lo) / (j1_hi - j1_lo)
    n2 = np.zeros_like(j2) if j2_hi == j2_lo else (j2 - j2_lo) / (j2_hi - j2_lo)
    values = problem.w_delay * n1 - problem.w_progression * n2

    feas_idx = np.flatnonzero(feasible)
    best_val = values.min()
    tied = np.flatnonzero(values == best_val)
    # ties: larger coordinated green (identical here), then lexicographically
    # larger fraction vector
    best_row = max(tied, key=lambda i: tuple(combos[feas_idx[i]]))
    idx = feas_idx[best_row]
    fractions = tuple(float(v) for v in combos[idx])

    g = g_hi  # objective is green-invariant; prefer the larger green
    return TimingSolution(
        g_coordinated_s=g,
        g_non_coordinated_s=int(round(problem.available_green_s)) - g,
        fractions=fractions,
        wait_blocked_s=float(t_s[idx]),
        wait_queue_s=float(t_q[idx]),
        wait_rejected_s=float(t_p[idx]),
        progression=float(progression[idx]),
        objective=float(best_val),
    )


# -- minor street activation ---------------------------------------------------


def minor_green_activation(minor_platoons: list[Platoon], predicted_count: float,
                           segment_length_mi: float, max_allowable_queue_mi: float,
                           avg_spacing_m: float = AVG_VEHICLE_SPACING_M) -> bool:
    """Should the side street get green now?

    With CV platoons present the queued ones decide: activation when a
    queued platoon reaches beyond the maximum allowable queue length.
    Without CVs the accumulated predicted count stands in, converted to a
    queue length at average vehicle spacing.
    """
    if minor_platoons:
        len_m = miles_to_meters(segment_length_mi)
        for p in minor_platoons:
            if not p.is_queued:
                continue
            rear_mi = (len_m - p.tail_position_m) / METERS_PER_MILE
            if rear_mi > max_allowable_queue_mi:
                return True
        return False
    est_queue_mi = predicted_count * avg_spacing_m / METERS_PER_MILE
    return est_queue_mi > max_allowable_queue_mi
