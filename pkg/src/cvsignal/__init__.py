"""Connected-vehicle adaptive arterial signal control laboratory."""

from .corridor import (
    Corridor,
    CorridorValidationError,
    Intersection,
    OffsetBoundError,
    PhasePlan,
    PhaseTiming,
    Segment,
    SignalState,
    apply_offset,
    build_corridor,
    build_phase_plan,
)
from .microsim import (
    DetectorReading,
    IdmParams,
    SimulationFault,
    Vehicle,
    World,
    build_entry_schedules,
    idm_acceleration,
    spawn_demand,
)

__all__ = [
    "Corridor", "CorridorValidationError", "Intersection", "OffsetBoundError",
    "PhasePlan", "PhaseTiming", "Segment", "SignalState", "apply_offset",
    "build_corridor", "build_phase_plan",
    "DetectorReading", "IdmParams", "SimulationFault", "Vehicle", "World",
    "build_entry_schedules", "idm_acceleration", "spawn_demand",
]
