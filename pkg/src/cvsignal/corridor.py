"""Static corridor geometry, phase plans, and per-intersection signal state.

The corridor is a chain of signalized intersections on one major arterial.
Segments are directed approach links: each one ends at the stop line of the
intersection it feeds. Major segments chain west-to-east and east-to-west;
every intersection also has two minor (side street) approaches.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

MAJOR_EAST = "major-east"
MAJOR_WEST = "major-west"
MINOR = "minor"

GREEN = "green"
YELLOW = "yellow"
RED = "red"


class CorridorValidationError(ValueError):
    """Raised when a scenario config describes an invalid corridor."""


class OffsetBoundError(ValueError):
    """Requested offset shift exceeds half the cycle."""


@dataclass
class Segment:
    """One directed approach link ending at an intersection stop line."""

    id: str
    length_mi: float
    free_flow_speed_mph: float
    direction: str
    lane_count: int
    historical_queue_mi: float
    max_allowable_queue_mi: float
    intersection_id: str = ""
    upstream_intersection_id: str | None = None  # signal feeding this segment, if any

    def validate(self) -> None:
        name = f"segments[{self.id}]"
        if self.length_mi <= 0:
            raise CorridorValidationError(f"{name}.length_mi must be > 0")
        if self.free_flow_speed_mph <= 0:
            raise CorridorValidationError(f"{name}.free_flow_speed_mph must be > 0")
        if self.lane_count < 1:
            raise CorridorValidationError(f"{name}.lane_count must be >= 1")
        if not 0 < self.historical_queue_mi <= self.length_mi:
            raise CorridorValidationError(
                f"{name}.historical_queue_mi must be in (0, length_mi]"
            )
        if not 0 < self.max_allowable_queue_mi <= self.length_mi:
            raise CorridorValidationError(
                f"{name}.max_allowable_queue_mi must be in (0, length_mi]"
            )


@dataclass
class PhaseTiming:
    """Timing bounds for one phase of the ring-barrier plan."""

    min_green_s: float
    max_green_s: float
    yellow_s: float
    all_red_s: float
    split_green_s: float  # nominal green used by fixed/baseline plans

    @property
    def clearance_s(self) -> float:
        """Phase clearance (yellow + all-red), the inter-green interval."""
        return self.yellow_s + self.all_red_s


@dataclass
class PhasePlan:
    """Two-phase ring-barrier plan: phases {2,6} coordinated, {4,8} minor.

    Kept as a four-slot phase map so more phases can be added without a
    schema change; with two-phase control slots 2/6 and 4/8 are twins.
    """

    cycle_s: float
    phases: dict[int, PhaseTiming]
    lost_time_s: float

    @property
    def coordinated(self) -> PhaseTiming:
        return self.phases[2]

    @property
    def non_coordinated(self) -> PhaseTiming:
        return self.phases[4]

    @property
    def intergreen_coordinated_s(self) -> float:
        return self.coordinated.clearance_s

    @property
    def intergreen_non_coordinated_s(self) -> float:
        return self.non_coordinated.clearance_s

    @property
    def available_green_s(self) -> float:
        """Green time shared by the two barrier groups within one cycle."""
        return self.cycle_s - self.coordinated.clearance_s - self.non_coordinated.clearance_s

    def validate(self) -> None:
        if self.cycle_s <= 0:
            raise CorridorValidationError("phase_plan.cycle_s must be > 0")
        for idx, timing in self.phases.items():
            name = f"phase_plan.phases[{idx}]"
            for attr in ("min_green_s", "max_green_s", "yellow_s", "all_red_s", "split_green_s"):
                if getattr(timing, attr) < 0:
                    raise CorridorValidationError(f"{name}.{attr} must be >= 0")
            if timing.min_green_s > timing.max_green_s:
                raise CorridorValidationError(f"{name}.min_green_s exceeds max_green_s")
            if timing.max_green_s > self.cycle_s:
                raise CorridorValidationError(f"{name}.max_green_s exceeds cycle_s")
        # ring sum with nominal splits: g + y + r of both barrier groups == C
        total = (
            self.coordinated.split_green_s
            + self.coordinated.clearance_s
            + self.non_coordinated.split_green_s
            + self.non_coordinated.clearance_s
        )
        if abs(total - self.cycle_s) > 1e-9:
            raise CorridorValidationError(
                f"phase_plan splits+clearances sum to {total}, expected cycle_s={self.cycle_s}"
            )


@dataclass
class Intersection:
    id: str
    index: int
    position_mi: float  # cumulative distance from west end of the corridor
    major_east_segment: str
    major_west_segment: str
    minor_segments: tuple[str, str]
    phase_plan: PhasePlan


@dataclass
class SignalState:
    """Dynamic signal state of one intersection.

    `active` names the barrier group currently being served ("major" or
    "minor"); `phase` is its stage within the group. Exactly one group is
    ever non-red. `next_cycle_start_s` anchors the next coordinated green
    start; offsets shift this anchor only.
    """

    intersection_id: str
    cycle_s: float
    active: str = "major"
    phase: str = GREEN
    phase_start_s: float = 0.0
    phase_end_s: float = 0.0
    cycle_start_s: float = 0.0
    next_cycle_start_s: float = 0.0
    offset_s: float = 0.0

    def indication(self, approach: str) -> str:
        """Signal indication ("green"/"yellow"/"red") for an approach group."""
        group = "minor" if approach == MINOR else "major"
        if group != self.active:
            return RED
        if self.phase == GREEN:
            return GREEN
        if self.phase == YELLOW:
            return YELLOW
        return RED

    def countdown_s(self, now_s: float) -> float:
        """Seconds until the currently scheduled phase change."""
        return self.phase_end_s - now_s


def apply_offset(state: SignalState, t2_s: float) -> SignalState:
    """Retarget the offset between this signal's green start and upstream's.

    `t2_s` is the desired time lapse between the upstream coordinated green
    start and this intersection's. The next cycle anchor is shifted by the
    difference from the currently applied offset; cycle length and phase
    order are untouched.
    """
    if abs(t2_s) > state.cycle_s / 2:
        raise OffsetBoundError(
            f"offset {t2_s} s exceeds +/- C/2 = {state.cycle_s / 2} s"
        )
    shift = t2_s - state.offset_s
    return dataclasses.replace(
        state,
        next_cycle_start_s=state.next_cycle_start_s + shift,
        offset_s=t2_s,
    )


@dataclass
class Corridor:
    segments: list[Segment]
    intersections: list[Intersection]
    coordinated_direction: str
    routes: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._seg_by_id = {s.id: s for s in self.segments}
        self._int_by_id = {i.id: i for i in self.intersections}

    def segment(self, seg_id: str) -> Segment:
        return self._seg_by_id[seg_id]

    def intersection(self, int_id: str) -> Intersection:
        return self._int_by_id[int_id]

    def segments_in_direction(self, direction: str) -> list[Segment]:
        return [s for s in self.segments if s.direction == direction]

    def coordinated_pairs(self) -> list[tuple[Intersection, Intersection, Segment]]:
        """(upstream, downstream, connecting approach segment) tuples along
        the coordinated direction."""
        pairs = []
        order = self.intersections
        if self.coordinated_direction == MAJOR_WEST:
            order = list(reversed(order))
        for up, down in zip(order, order[1:]):
            seg_id = (
                down.major_east_segment
                if self.coordinated_direction == MAJOR_EAST
                else down.major_west_segment
            )
            pairs.append((up, down, self.segment(seg_id)))
        return pairs


def _phase_timing(node: dict, cycle_s: float, name: str) -> PhaseTiming:
    try:
        return PhaseTiming(
            min_green_s=float(node.get("min_green_s", 4.0)),
            max_green_s=float(node["max_green_s"]),
            yellow_s=float(node.get("yellow_s", 4.0)),
            all_red_s=float(node.get("all_red_s", 2.0)),
            split_green_s=float(node.get("split_green_s", node["max_green_s"])),
        )
    except KeyError as exc:
        raise CorridorValidationError(f"{name} missing key {exc.args[0]}") from None


def build_phase_plan(config: dict) -> PhasePlan:
    cycle_s = float(config.get("cycle_s", 90.0))
    coord = _phase_timing(config.get("coordinated", {}), cycle_s, "phase_plan.coordinated")
    non_coord = _phase_timing(
        config.get("non_coordinated", {}), cycle_s, "phase_plan.non_coordinated"
    )
    default_lost = coord.clearance_s + non_coord.clearance_s
    plan = PhasePlan(
        cycle_s=cycle_s,
        phases={2: coord, 6: coord, 4: non_coord, 8: non_coord},
        lost_time_s=float(config.get("lost_time_s", default_lost)),
    )
    plan.validate()
    return plan


def build_corridor(config: dict) -> Corridor:
    """Construct and validate a corridor from a scenario config tree.

    The config's `corridor` node gives intersection count, spacings, lengths
    and speeds; `phase_plan` gives the shared two-phase ring-barrier plan.
    """
    corr = config.get("corridor", {})
    n = int(corr.get("intersections", 4))
    if n < 1:
        raise CorridorValidationError("corridor.intersections must be >= 1")

    spacing = corr.get("spacing_mi", 0.5)
    if isinstance(spacing, (int, float)):
        spacings = [float(spacing)] * (n - 1)
    else:
        spacings = [float(s) for s in spacing]
    if len(spacings) != n - 1:
        raise CorridorValidationError(
            f"corridor.spacing_mi needs {n - 1} entries, got {len(spacings)}"
        )

    entry_mi = float(corr.get("entry_length_mi", 0.5))
    major_ffs = float(corr.get("major_ffs_mph", 45.0))
    minor_mi = float(corr.get("minor_length_mi", 0.25))
    minor_ffs = float(corr.get("minor_ffs_mph", 30.0))
    lanes = int(corr.get("lane_count", 1))
    hist_q = float(corr.get("historical_queue_mi", 0.05))
    minor_hist_q = float(corr.get("minor_historical_queue_mi", min(hist_q, minor_mi / 2)))
    max_q = float(corr.get("max_allowable_queue_mi", 0.12))
    minor_max_q = float(corr.get("minor_max_allowable_queue_mi", min(max_q, minor_mi * 0.6)))
    coordinated = corr.get("coordinated_direction", MAJOR_EAST)
    if coordinated not in (MAJOR_EAST, MAJOR_WEST):
        raise CorridorValidationError(
            "corridor.coordinated_direction must be major-east or major-west"
        )

    plan = build_phase_plan(config.get("phase_plan", {}))

    segments: list[Segment] = []
    intersections: list[Intersection] = []

    def major_seg(seg_id, length, direction, int_id, upstream):
        seg = Segment(
            id=seg_id,
            length_mi=length,
            free_flow_speed_mph=major_ffs,
            direction=direction,
            lane_count=lanes,
            historical_queue_mi=min(hist_q, length),
            max_allowable_queue_mi=min(max_q, length),
            intersection_id=int_id,
            upstream_intersection_id=upstream,
        )
        seg.validate()
        return seg

    def minor_seg(seg_id, int_id):
        seg = Segment(
            id=seg_id,
            length_mi=minor_mi,
            free_flow_speed_mph=minor_ffs,
            direction=MINOR,
            lane_count=lanes,
            historical_queue_mi=min(minor_hist_q, minor_mi),
            max_allowable_queue_mi=min(minor_max_q, minor_mi),
            intersection_id=int_id,
            upstream_intersection_id=None,
        )
        seg.validate()
        return seg

    int_ids = [f"I{k}" for k in range(n)]
    positions = [0.0]
    for s in spacings:
        if s <= 0:
            raise CorridorValidationError("corridor.spacing_mi entries must be > 0")
        positions.append(positions[-1] + s)

    east_ids, west_ids = [], []
    for k in range(n):
        east_len = entry_mi if k == 0 else spacings[k - 1]
        east_up = None if k == 0 else int_ids[k - 1]
        east_ids.append(f"E{k}")
        segments.append(major_seg(f"E{k}", east_len, MAJOR_EAST, int_ids[k], east_up))
    for k in range(n):
        west_len = entry_mi if k == n - 1 else spacings[k]
        west_up = None if k == n - 1 else int_ids[k + 1]
        west_ids.append(f"W{k}")
        segments.append(major_seg(f"W{k}", west_len, MAJOR_WEST, int_ids[k], west_up))
    for k in range(n):
        segments.append(minor_seg(f"N{k}", int_ids[k]))
        segments.append(minor_seg(f"S{k}", int_ids[k]))

    for k in range(n):
        intersections.append(
            Intersection(
                id=int_ids[k],
                index=k,
                position_mi=positions[k],
                major_east_segment=east_ids[k],
                major_west_segment=west_ids[k],
                minor_segments=(f"N{k}", f"S{k}"),
                phase_plan=plan,
            )
        )

    routes = {
        "east": tuple(east_ids),
        "west": tuple(reversed(west_ids)),
    }
    for k in range(n):
        routes[f"N{k}"] = (f"N{k}",)
        routes[f"S{k}"] = (f"S{k}",)

    return Corridor(
        segments=segments,
        intersections=intersections,
        coordinated_direction=coordinated,
        routes=routes,
    )
