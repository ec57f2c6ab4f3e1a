"""Deterministic discrete-time microscopic corridor simulator.

Car following is the Intelligent Driver Model; integration is semi-implicit
Euler at a fixed timestep with speeds clamped at zero. Vehicles obey the
signal state at their segment's stop line, are injected by precomputed
Poisson arrival schedules, and are retired when their route ends. Given the
same corridor, schedules, and controller decisions, a run is bit-identical.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .corridor import Corridor, GREEN, MINOR, RED, Segment, SignalState, YELLOW
from .units import METERS_PER_MILE, STOP_SPEED_MPS, meters_to_miles, mph_to_mps, mps_to_mph

log = logging.getLogger(__name__)

NO_LEADER_GAP = math.inf


class SimulationFault(RuntimeError):
    """Integrity violation (collision or conservation failure) inside a run."""


@dataclass
class IdmParams:
    """Intelligent Driver Model parameters (urban-arterial calibration)."""

    min_gap_m: float = 2.0
    accel_max: float = 1.0
    decel_comfort: float = 1.7
    time_headway_s: float = 0.5
    exponent: float = 4.0
    desired_speed_mps: float = mph_to_mps(45.0)
    decel_emergency: float = 6.0

    def __post_init__(self) -> None:
        for name in ("min_gap_m", "accel_max", "decel_comfort", "time_headway_s",
                     "exponent", "desired_speed_mps", "decel_emergency"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be > 0")
        self.two_sqrt_ab = 2.0 * math.sqrt(self.accel_max * self.decel_comfort)


def idm_acceleration(speed: float, leader_speed: float, gap: float,
                     params: IdmParams) -> float:
    """IDM acceleration in m/s^2, clamped to [-decel_emergency, accel_max].

    `gap` is the bumper-to-bumper distance to the leader; pass math.inf when
    there is no leader. A non-positive gap is a dynamics violation and maps
    to full emergency braking.
    """
    if gap <= 0.0:
        log.warning("non-positive gap %.3f m at speed %.2f m/s", gap, speed)
        return -params.decel_emergency
    ratio = speed / params.desired_speed_mps
    if params.exponent == 4.0:
        r2 = ratio * ratio
        free_term = r2 * r2
    else:
        free_term = ratio ** params.exponent
    if gap is NO_LEADER_GAP or math.isinf(gap):
        interact = 0.0
    else:
        s_star = params.min_gap_m + max(
            0.0,
            speed * params.time_headway_s
            + speed * (speed - leader_speed) / params.two_sqrt_ab,
        )
        ss = s_star / gap
        interact = ss * ss
    acc = params.accel_max * (1.0 - free_term - interact)
    if acc > params.accel_max:
        return params.accel_max
    if acc < -params.decel_emergency:
        return -params.decel_emergency
    return acc


class Vehicle:
    __slots__ = ("id", "pos", "speed", "is_cv", "route", "route_idx",
                 "spawn_time_s", "stopped_s", "committed")

    def __init__(self, vid: int, route: tuple[str, ...], spawn_time_s: float,
                 is_cv: bool, speed: float = 0.0):
        self.id = vid
        self.pos = 0.0              # front-bumper distance from segment start, m
        self.speed = speed          # m/s
        self.is_cv = is_cv
        self.route = route
        self.route_idx = 0
        self.spawn_time_s = spawn_time_s
        self.stopped_s = 0.0        # cumulative time below the stop threshold
        self.committed = False      # committed through a yellow, ignores red

    @property
    def segment_id(self) -> str:
        return self.route[self.route_idx]


def spawn_demand(rates_vph: dict[str, float], duration_s: float,
                 rng_seed: int) -> dict[str, np.ndarray]:
    """Poisson arrival schedule per entry: sorted arrival times in seconds.

    Each entry gets an independent substream keyed by its position in sorted
    entry order, so the same seed always reproduces the same schedule.
    """
    schedule: dict[str, np.ndarray] = {}
    for idx, entry in enumerate(sorted(rates_vph)):
        rate = rates_vph[entry]
        if rate < 0:
            raise ValueError(f"negative demand rate for entry {entry}")
        if rate == 0:
            schedule[entry] = np.empty(0)
            continue
        rng = np.random.default_rng([rng_seed, 1000 + idx])
        mean_headway = 3600.0 / rate
        # draw in blocks until past the horizon
        times: list[np.ndarray] = []
        total = 0.0
        while total < duration_s:
            block = rng.exponential(mean_headway, size=max(16, int(rate * 0.25) + 1))
            times.append(block)
            total += float(block.sum())
        arr = np.cumsum(np.concatenate(times))
        schedule[entry] = arr[arr < duration_s]
    return schedule


@dataclass
class EntrySchedule:
    entry: str
    times: np.ndarray
    is_cv: np.ndarray
    routes: list[tuple[str, ...]]


def build_entry_schedules(corridor: Corridor, rates_vph: dict[str, float],
                          duration_s: float, penetration: float, seed: int,
                          minor_turn_fraction: float = 0.0) -> list[EntrySchedule]:
    """Arrival times, CV flags, and routes for every entry of the corridor.

    CV membership and minor-street turns are drawn from substreams separate
    from the arrival-time stream, so changing penetration or turn fraction
    never perturbs arrival times (paired-seed discipline).
    """
    times = spawn_demand(rates_vph, duration_s, seed)
    schedules = []
    n_int = len(corridor.intersections)
    for idx, entry in enumerate(sorted(rates_vph)):
        arr = times[entry]
        cv_rng = np.random.default_rng([seed, 2000 + idx])
        is_cv = cv_rng.random(len(arr)) < penetration
        base_route = corridor.routes[entry]
        routes = [base_route] * len(arr)
        if minor_turn_fraction > 0 and len(base_route) == 1 \
                and corridor.segment(base_route[0]).direction == MINOR:
            turn_rng = np.random.default_rng([seed, 3000 + idx])
            draws = turn_rng.random(len(arr))
            k = corridor.segment(base_route[0]).intersection_id
            k_idx = corridor.intersection(k).index
            east_cont = tuple(f"E{j}" for j in range(k_idx + 1, n_int))
            west_cont = tuple(f"W{j}" for j in range(k_idx - 1, -1, -1))
            routes = []
            for d in draws:
                if d < minor_turn_fraction / 2 and east_cont:
                    routes.append(base_route + east_cont)
                elif d < minor_turn_fraction and west_cont:
                    routes.append(base_route + west_cont)
                else:
                    routes.append(base_route)
        schedules.append(EntrySchedule(entry, arr, is_cv, routes))
    return schedules


@dataclass
class DetectorReading:
    """Aggregated per-segment measurements for one detector interval."""

    segment_id: str
    t_start_s: float
    t_end_s: float
    mean_speed_mph: float        # NaN when no vehicle was observed
    max_queue_len_mi: float      # longest contiguous stopped section seen
    stopped_delay_s: float       # vehicle-seconds below the stop threshold
    vehicle_samples: int


class _SegmentAccumulator:
    __slots__ = ("speed_sum", "samples", "stopped", "max_queue_m")

    def __init__(self):
        self.reset()

    def reset(self):
        self.speed_sum = 0.0
        self.samples = 0
        self.stopped = 0.0
        self.max_queue_m = 0.0


class World:
    """Mutable simulation state: vehicles, signals, detectors, counters."""

    QUEUE_CHAIN_GAP_M = 10.0
    SPAWN_MIN_GAP_M = 7.0
    GAP_EPS_M = 0.1

    def __init__(self, corridor: Corridor, schedules: list[EntrySchedule], *,
                 dt_s: float = 0.5, idm: IdmParams | None = None,
                 vehicle_length_m: float = 7.0):
        if dt_s <= 0:
            raise ValueError("dt_s must be > 0")
        self.corridor = corridor
        self.dt_s = dt_s
        self.time_s = 0.0
        self.vehicle_length_m = vehicle_length_m
        base = idm or IdmParams()
        self.idm_by_segment = {
            s.id: replace(base, desired_speed_mps=mph_to_mps(s.free_flow_speed_mph))
            for s in corridor.segments
        }
        self.seg_len_m = {s.id: s.length_mi * METERS_PER_MILE for s in corridor.segments}
        self.vehicles: dict[str, list[Vehicle]] = {s.id: [] for s in corridor.segments}
        self.signals: dict[str, SignalState] = {}
        self.schedules = schedules
        self._sched_idx = {sch.entry: 0 for sch in schedules}
        self._backlog: dict[str, list[tuple[float, bool, tuple[str, ...]]]] = {
            sch.entry: [] for sch in schedules
        }
        self.spawned = 0
        self.retired = 0
        self._next_vid = 0
        self.completed_trips: list[tuple[str, float, float]] = []  # entry, spawn, retire
        self.crossings: dict[str, list[float]] = {s.id: [] for s in corridor.segments}
        self._acc = {s.id: _SegmentAccumulator() for s in corridor.segments}
        self._interval_start = 0.0
        self._entry_of_route: dict[tuple[str, ...], str] = {}
        for sch in schedules:
            for r in sch.routes:
                self._entry_of_route.setdefault(r, sch.entry)

    # -- signal helpers -------------------------------------------------

    def indication(self, seg: Segment) -> str:
        state = self.signals.get(seg.intersection_id)
        if state is None:
            return GREEN
        approach = MINOR if seg.direction == MINOR else "major"
        return state.indication(approach)

    def minor_presence(self, seg_id: str, zone_m: float) -> bool:
        """Stop-line presence detector: any vehicle within zone_m of the line."""
        vehs = self.vehicles[seg_id]
        return bool(vehs) and vehs[0].pos >= self.seg_len_m[seg_id] - zone_m

    # -- main update ----------------------------------------------------

    def step(self) -> None:
        dt = self.dt_s
        t_new = self.time_s + dt
        corridor = self.corridor

        # snapshot of each segment's tail (rear bumper pos, speed) before moving
        veh_len = self.vehicle_length_m
        tails: dict[str, tuple[float, float]] = {}
        for seg_id, vehs in self.vehicles.items():
            if vehs:
                last = vehs[-1]
                tails[seg_id] = (last.pos - veh_len, last.speed)

        transfers: list[tuple[Vehicle, float]] = []
        stop_thresh = STOP_SPEED_MPS

        for seg in corridor.segments:
            seg_id = seg.id
            vehs = self.vehicles[seg_id]
            if not vehs:
                continue
            params = self.idm_by_segment[seg_id]
            len_m = self.seg_len_m[seg_id]
            ind = self.indication(seg)
            acc_rec = self._acc[seg_id]
            b_comf2 = 2.0 * params.decel_comfort

            leader_rear = math.inf
            leader_speed = 0.0
            for i, v in enumerate(vehs):
                pos = v.pos
                speed = v.speed
                # signal wall decision
                if ind == GREEN:
                    v.committed = False
                    blocked = False
                elif v.committed:
                    blocked = False
                elif ind == RED:
                    blocked = True
                else:  # yellow: stop only if comfortable braking can hold the line
                    if speed * speed <= b_comf2 * (len_m - pos):
                        blocked = True
                    else:
                        v.committed = True
                        blocked = False

                # binding constraint: same-segment leader, stop line, or the
                # tail of the next segment on this vehicle's route
                if i > 0:
                    eff_rear = leader_rear
                    eff_speed = leader_speed
                else:
                    eff_rear = math.inf
                    eff_speed = 0.0
                if blocked and len_m < eff_rear:
                    # stop line behaves as a standing wall; offset by min gap
                    # so the front bumper settles at the line, not behind it
                    eff_rear = len_m + params.min_gap_m
                    eff_speed = 0.0
                elif not blocked and i == 0 and v.route_idx + 1 < len(v.route):
                    nxt = self.vehicles[v.route[v.route_idx + 1]]
                    if nxt:
                        tail = tails.get(v.route[v.route_idx + 1])
                        if tail is not None:
                            eff_rear = len_m + tail[0]
                            eff_speed = tail[1]

                gap = eff_rear - pos
                if gap <= self.GAP_EPS_M:
                    # yielding to a vehicle still clearing the intersection
                    # box ahead (merges put it at pos <= 0 on the next
                    # segment); hold until the box opens
                    new_speed = 0.0
                else:
                    acc = idm_acceleration(speed, eff_speed, gap, params)
                    new_speed = speed + acc * dt
                    if new_speed < 0.0:
                        new_speed = 0.0
                # hard no-overlap cap against the constraint's old position
                if eff_rear is not math.inf and not math.isinf(eff_rear):
                    max_speed = (eff_rear - self.GAP_EPS_M - pos) / dt
                    if blocked:
                        # never cross the stop line itself while blocked
                        wall_cap = (len_m - 0.01 - pos) / dt
                        if wall_cap < max_speed:
                            max_speed = wall_cap
                    if new_speed > max_speed:
                        new_speed = max_speed if max_speed > 0.0 else 0.0
                elif blocked:
                    max_speed = (len_m - 0.01 - pos) / dt
                    if new_speed > max_speed:
                        new_speed = max_speed if max_speed > 0.0 else 0.0

                v.speed = new_speed
                v.pos = pos + new_speed * dt

                acc_rec.speed_sum += new_speed
                acc_rec.samples += 1
                if new_speed < stop_thresh:
                    v.stopped_s += dt
                    acc_rec.stopped += dt

                leader_rear = v.pos - veh_len
                leader_speed = new_speed

                if v.pos >= len_m and not blocked:
                    transfers.append((v, v.pos - len_m))

            q = self._queue_extent_m(seg_id, vehs, len_m)
            if q > acc_rec.max_queue_m:
                acc_rec.max_queue_m = q

        self._apply_transfers(transfers, t_new)
        self._spawn(t_new)
        self._check_integrity()
        self.time_s = t_new

    def _apply_transfers(self, transfers, t_new: float) -> None:
        veh_len = self.vehicle_length_m
        transfers.sort(key=lambda item: (item[0].segment_id, -item[1], item[0].id))
        for v, carry in transfers:
            src = v.route[v.route_idx]
            self.vehicles[src].remove(v)
            # interpolated stop-line crossing instant
            self.crossings[src].append(t_new - carry / v.speed if v.speed > 0 else t_new)
            if v.route_idx + 1 >= len(v.route):
                self.retired += 1
                entry = self._entry_of_route.get(v.route, v.route[0])
                self.completed_trips.append((entry, v.spawn_time_s, t_new))
                continue
            v.route_idx += 1
            dst = v.route[v.route_idx]
            dst_vehs = self.vehicles[dst]
            new_pos = carry
            if dst_vehs:
                # merging entrants queue up inside the intersection box:
                # positions <= 0 are upstream of the segment start
                limit = dst_vehs[-1].pos - veh_len - self.GAP_EPS_M
                if new_pos > limit:
                    new_pos = limit
                    v.speed = dst_vehs[-1].speed
            v.pos = new_pos
            v.committed = False
            dst_vehs.append(v)

    def _spawn(self, t_new: float) -> None:
        veh_len = self.vehicle_length_m
        for sch in self.schedules:
            idx = self._sched_idx[sch.entry]
            times = sch.times
            backlog = self._backlog[sch.entry]
            while idx < len(times) and times[idx] <= t_new:
                backlog.append((float(times[idx]), bool(sch.is_cv[idx]), sch.routes[idx]))
                idx += 1
            self._sched_idx[sch.entry] = idx
            while backlog:
                _, is_cv, route = backlog[0]
                seg_id = route[0]
                vehs = self.vehicles[seg_id]
                params = self.idm_by_segment[seg_id]
                if vehs:
                    tail_rear = vehs[-1].pos - veh_len
                    if tail_rear < self.SPAWN_MIN_GAP_M:
                        break
                    speed = min(
                        params.desired_speed_mps,
                        math.sqrt(2.0 * params.decel_comfort
                                  * max(0.0, tail_rear - params.min_gap_m)),
                    )
                else:
                    speed = params.desired_speed_mps
                backlog.pop(0)
                v = Vehicle(self._next_vid, route, t_new, is_cv, speed=speed)
                self._next_vid += 1
                self.spawned += 1
                vehs.append(v)

    def _queue_extent_m(self, seg_id: str, vehs: list[Vehicle], len_m: float) -> float:
        """Longest contiguous stopped section, measured from the stop line
        when the leading stopped vehicle sits against it."""
        veh_len = self.vehicle_length_m
        chain_gap = self.QUEUE_CHAIN_GAP_M
        best = 0.0
        front = None
        prev_rear = 0.0
        for i, v in enumerate(vehs):
            stopped = v.speed < STOP_SPEED_MPS
            if stopped:
                if front is None:
                    if i == 0 and len_m - v.pos <= chain_gap:
                        front = len_m
                    else:
                        front = v.pos
                elif prev_rear - v.pos > chain_gap:
                    if front - prev_rear > best:
                        best = front - prev_rear
                    front = v.pos
                prev_rear = v.pos - veh_len
            else:
                if front is not None and front - prev_rear > best:
                    best = front - prev_rear
                front = None
        if front is not None and front - prev_rear > best:
            best = front - prev_rear
        return best

    def _check_integrity(self) -> None:
        in_network = 0
        veh_len = self.vehicle_length_m
        for seg_id, vehs in self.vehicles.items():
            in_network += len(vehs)
            for lead, follow in zip(vehs, vehs[1:]):
                if lead.pos - veh_len - follow.pos <= 0.0:
                    raise SimulationFault(
                        f"overlap on {seg_id}: vehicle {follow.id} at {follow.pos:.2f} "
                        f"behind {lead.id} at {lead.pos:.2f} (t={self.time_s:.1f})"
                    )
        if self.spawned != in_network + self.retired:
            raise SimulationFault(
                f"conservation violated: spawned={self.spawned} "
                f"in_network={in_network} retired={self.retired}"
            )

    # -- detectors --------------------------------------------------------

    def read_detectors(self, interval_s: float) -> list[DetectorReading]:
        """Aggregate and reset per-segment detector accumulators."""
        out = []
        t0, t1 = self._interval_start, self.time_s
        for seg in self.corridor.segments:
            a = self._acc[seg.id]
            mean_speed = (
                mps_to_mph(a.speed_sum / a.samples) if a.samples else float("nan")
            )
            out.append(DetectorReading(
                segment_id=seg.id,
                t_start_s=t0,
                t_end_s=t1,
                mean_speed_mph=mean_speed,
                max_queue_len_mi=meters_to_miles(a.max_queue_m),
                stopped_delay_s=a.stopped,
                vehicle_samples=a.samples,
            ))
            a.reset()
        self._interval_start = t1
        return out
