"""Connected-vehicle sensing: BSM emission, platoon identification, and
queue estimation from CV data only.

Platoons are bounded by successive CVs on one segment. Each segment is split
at the expected queue zone boundary; CVs inside the zone and CVs beyond it
chain into separate platoons that are never merged. Non-CVs between the
bounding CVs belong to the platoon and surface through the predicted
segment count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .corridor import Segment
from .microsim import World
from .units import (
    METERS_PER_MILE,
    STOP_SPEED_MPH,
    meters_to_miles,
    miles_to_meters,
    mps_to_mph,
)

INSIDE_ZONE = "inside-queue-zone"
BEYOND_ZONE = "beyond-queue-zone"

# a queued platoon counts as "at the stop line" when its head is this close
NEAR_STOP_LINE_M = 15.0
# bounding-CV footprint removed from the platoon span when estimating totals
HEAD_OFFSET_M = 10.0


@dataclass
class Bsm:
    """One basic safety message: the CV broadcast consumed by the controller."""

    time_s: float
    vehicle_id: int
    segment_id: str
    position_m: float  # distance of the front bumper from segment start
    speed_mph: float
    direction: str


@dataclass
class QueueZone:
    segment_id: str
    extent_mi: float  # measured upstream from the stop line


@dataclass
class Platoon:
    segment_id: str
    zone: str
    head_position_m: float
    tail_position_m: float
    length_mi: float          # head-to-tail span
    avg_speed_mph: float
    cv_count: int
    est_total_count: float = 0.0
    is_queued: bool = False
    member_ids: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.est_total_count:
            self.est_total_count = float(self.cv_count)
        self.is_queued = self.avg_speed_mph < STOP_SPEED_MPH


def emit_bsms(world: World, t_s: float) -> list[Bsm]:
    """Collect one record per CV currently in the network.

    CV membership was decided at spawn; positions of vehicles still clearing
    an intersection box are clamped to the segment start.
    """
    out = []
    for seg in world.corridor.segments:
        len_m = world.seg_len_m[seg.id]
        for v in world.vehicles[seg.id]:
            if not v.is_cv:
                continue
            pos = min(max(v.pos, 0.0), len_m)
            out.append(Bsm(
                time_s=t_s,
                vehicle_id=v.id,
                segment_id=seg.id,
                position_m=pos,
                speed_mph=mps_to_mph(v.speed),
                direction=seg.direction,
            ))
    return out


def identify_platoons(bsms: list[Bsm], zone: QueueZone,
                      segment: Segment) -> list[Platoon]:
    """Chain the CVs of one segment snapshot into per-zone platoons.

    Successive CVs in the same zone form a single platoon; a lone CV is a
    singleton. Platoons never span the zone boundary.
    """
    if not bsms:
        return []
    len_m = miles_to_meters(segment.length_mi)
    boundary_m = len_m - miles_to_meters(zone.extent_mi)
    inside, beyond = [], []
    for b in sorted(bsms, key=lambda b: -b.position_m):
        (inside if b.position_m >= boundary_m else beyond).append(b)

    platoons = []
    for group, label in ((inside, INSIDE_ZONE), (beyond, BEYOND_ZONE)):
        if not group:
            continue
        head = group[0].position_m
        tail = group[-1].position_m
        platoons.append(Platoon(
            segment_id=segment.id,
            zone=label,
            head_position_m=head,
            tail_position_m=tail,
            length_mi=meters_to_miles(head - tail),
            avg_speed_mph=sum(b.speed_mph for b in group) / len(group),
            cv_count=len(group),
            member_ids=tuple(b.vehicle_id for b in group),
        ))
    return platoons


def estimate_queue_length(platoons: list[Platoon], segment: Segment,
                          near_stop_line_m: float = NEAR_STOP_LINE_M) -> float:
    """Queue length in miles for one approach.

    The rear point of a queued platoon sitting at the stop line gives the
    queue extent; with no such platoon the historical value stands in.
    """
    len_m = miles_to_meters(segment.length_mi)
    best = None
    for p in platoons:
        if p.segment_id != segment.id or not p.is_queued:
            continue
        if len_m - p.head_position_m > near_stop_line_m:
            continue
        rear_mi = meters_to_miles(len_m - p.tail_position_m)
        if best is None or rear_mi > best:
            best = rear_mi
    if best is None:
        return segment.historical_queue_mi
    return min(best, segment.length_mi)


def expected_queue_zone(segment: Segment, bsms: list[Bsm],
                        historical_queue_mi: float | None = None) -> QueueZone:
    """Zone near the signal where a queue is expected this cycle."""
    hist = segment.historical_queue_mi if historical_queue_mi is None else historical_queue_mi
    len_m = miles_to_meters(segment.length_mi)
    extent = hist
    queued_pos = [b.position_m for b in bsms
                  if b.segment_id == segment.id and b.speed_mph < STOP_SPEED_MPH]
    if queued_pos:
        rear_mi = meters_to_miles(len_m - min(queued_pos))
        extent = max(extent, rear_mi)
    return QueueZone(segment_id=segment.id, extent_mi=min(extent, segment.length_mi))


def estimate_platoon_total(platoon: Platoon, predicted_segment_count: float,
                           segment_length_mi: float,
                           head_offset_m: float = HEAD_OFFSET_M) -> float:
    """Estimated vehicles (CV + non-CV) in the platoon.

    Non-CVs hidden between the bounding CVs are filled in from the predicted
    segment density; the bounding CV's own footprint is removed from the
    span, clamped at zero, so a singleton stays at its CV count.
    """
    if predicted_segment_count < 0:
        raise ValueError("predicted segment count must be >= 0")
    if segment_length_mi <= 0:
        raise ValueError("segment length must be > 0")
    span_m = miles_to_meters(platoon.length_mi)
    len_m = miles_to_meters(segment_length_mi)
    est = platoon.cv_count + max(0.0, span_m - head_offset_m) * predicted_segment_count / len_m
    est = max(est, float(platoon.cv_count))
    platoon.est_total_count = est
    return est


# -- optional trace export/import so the controller can run open loop -----

BSM_FIELDS = ["time_s", "vehicle_id", "segment_id", "position_m", "speed_mph", "direction"]


def write_bsm_trace(path, bsms: list[Bsm]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BSM_FIELDS)
        for b in bsms:
            w.writerow([f"{b.time_s:.1f}", b.vehicle_id, b.segment_id,
                        f"{b.position_m:.3f}", f"{b.speed_mph:.4f}", b.direction])


def read_bsm_trace(path) -> list[Bsm]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(Bsm(
                time_s=float(row["time_s"]),
                vehicle_id=int(row["vehicle_id"]),
                segment_id=row["segment_id"],
                position_m=float(row["position_m"]),
                speed_mph=float(row["speed_mph"]),
                direction=row["direction"],
            ))
    return out
