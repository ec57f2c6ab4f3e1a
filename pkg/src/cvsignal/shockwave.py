"""Shockwave-based queue dissipation analysis for one signalized approach.

The red interval grows a standing queue whose upstream edge moves at the
backward forming wave speed; at green the discharge edge chases it at the
backward recovery speed. Both waves point upstream and carry negative sign;
the catch-up instant bounds the queue dissipation time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .units import seconds_to_hours

# measured start-up response: each successive queued vehicle starts moving
# this many seconds after the one ahead
STARTUP_PER_VEHICLE_S = 1.5


class ShockwaveError(ValueError):
    pass


@dataclass
class ShockwaveInput:
    k_a_vpm: float      # uncongested density, veh/mile
    q_a_vph: float      # uncongested flow, veh/hour
    inter_green_s: float
    queue_len_mi: float
    n_queued: int
    cycle_s: float

    def validate(self) -> None:
        for name in ("k_a_vpm", "q_a_vph", "inter_green_s", "queue_len_mi", "cycle_s"):
            if getattr(self, name) < 0:
                raise ShockwaveError(f"{name} must be >= 0")
        if self.n_queued < 0:
            raise ShockwaveError("n_queued must be >= 0")


@dataclass
class ShockwaveResult:
    k_j_vpm: float
    v_bf_mph: float      # backward forming wave, <= 0
    v_br_mph: float      # backward recovery wave, <= 0
    t_q_s: float         # queue dissipation time, clamped to the cycle
    oversaturated: bool = False


def jam_density(inp: ShockwaveInput) -> float:
    """Density inside the standing queue, from wave conservation across the
    forming front: the queue edge sweeps queue_len in inter_green seconds."""
    if inp.queue_len_mi <= 0:
        raise ShockwaveError("queue_len_mi must be > 0 to derive jam density")
    growth = seconds_to_hours(inp.inter_green_s) * inp.q_a_vph / inp.queue_len_mi
    return inp.k_a_vpm + growth


def shockwave_speeds(inp: ShockwaveInput, k_j_vpm: float) -> tuple[float, float]:
    """(forming, recovery) wave speeds in mph, both oriented upstream (< 0)."""
    if k_j_vpm <= inp.k_a_vpm:
        raise ShockwaveError("jam density must exceed uncongested density")
    v_bf = (0.0 - inp.q_a_vph) / (k_j_vpm - inp.k_a_vpm)
    if inp.n_queued <= 0:
        raise ShockwaveError("n_queued must be > 0 for a recovery wave")
    t_startup_s = STARTUP_PER_VEHICLE_S * inp.n_queued
    v_br = -inp.queue_len_mi / seconds_to_hours(t_startup_s)
    return v_bf, v_br


def queue_dissipation_time(inter_green_s: float, v_bf_mph: float, v_br_mph: float,
                           cycle_s: float) -> tuple[float, bool]:
    """Seconds after green start until the standing queue fully clears.

    Returns (t_q, oversaturated). When the recovery wave is no faster than
    the forming wave the queue never clears under this model; the cycle time
    caps the answer and the flag is set (the corridor is assumed to never
    spill over a full cycle).
    """
    if v_bf_mph >= 0 or v_br_mph >= 0:
        raise ShockwaveError("wave speeds must be negative (upstream)")
    if abs(v_br_mph) <= abs(v_bf_mph):
        return cycle_s, True
    t_q = abs(inter_green_s * v_bf_mph / (v_bf_mph - v_br_mph))
    if t_q > cycle_s:
        return cycle_s, True
    return t_q, False


def analyze(inp: ShockwaveInput) -> ShockwaveResult:
    """Full pipeline with the degenerate cases resolved.

    No queue, no arrivals, or an empty discharge all collapse to an
    immediately-clear result rather than an error.
    """
    inp.validate()
    if inp.queue_len_mi <= 0 or inp.n_queued <= 0:
        return ShockwaveResult(inp.k_a_vpm, 0.0, 0.0, 0.0)
    if inp.q_a_vph <= 0 or inp.inter_green_s <= 0:
        # standing queue but no measurable formation: nothing keeps forming,
        # recovery is immediate
        t_startup_s = STARTUP_PER_VEHICLE_S * inp.n_queued
        v_br = -inp.queue_len_mi / seconds_to_hours(t_startup_s)
        return ShockwaveResult(inp.k_a_vpm, 0.0, v_br, 0.0)
    k_j = jam_density(inp)
    v_bf, v_br = shockwave_speeds(inp, k_j)
    t_q, flag = queue_dissipation_time(inp.inter_green_s, v_bf, v_br, inp.cycle_s)
    return ShockwaveResult(k_j, v_bf, v_br, t_q, flag)
