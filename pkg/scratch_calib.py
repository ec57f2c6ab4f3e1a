"""Scratch: measure discharge headway and queue geometry."""
import math
from cvsignal import build_corridor, World, SignalState
from cvsignal.corridor import GREEN, RED
from cvsignal.microsim import EntrySchedule, Vehicle
import numpy as np

cfg = {
    "corridor": {"intersections": 1, "entry_length_mi": 0.5},
    "phase_plan": {
        "cycle_s": 90,
        "coordinated": {"max_green_s": 54, "split_green_s": 54},
        "non_coordinated": {"max_green_s": 24, "split_green_s": 24},
    },
}
corr = build_corridor(cfg)
world = World(corr, schedules=[])
state = SignalState("I0", 90.0, active="major", phase=RED)
world.signals["I0"] = state

# place 12 standing vehicles behind the E0 stop line at jam spacing
len_m = world.seg_len_m["E0"]
spacing = world.vehicle_length_m + 2.0
vehs = []
for i in range(12):
    v = Vehicle(i, ("E0",), 0.0, is_cv=False, speed=0.0)
    v.pos = len_m - 2.0 - i * spacing
    vehs.append(v)
world.vehicles["E0"] = vehs
world.spawned = 12

# hold red 5 s then green
for _ in range(10):
    world.step()
q0 = world._queue_extent_m("E0", world.vehicles["E0"], len_m)
print("queue extent with 12 standing vehicles:", q0, "expect", 2.0 + 12 * spacing - 2.0)
state.phase = GREEN
for _ in range(200):
    world.step()
cross = world.crossings["E0"]
print("crossing times:", [f"{t:.1f}" for t in cross])
hw = np.diff(cross)
print("headways:", [f"{h:.2f}" for h in hw])
print("mean headway veh 4-6:", np.mean(hw[3:6]))
print("mean headway veh 4-10:", np.mean(hw[3:10]))

# free-flow: single vehicle entering at FFS
world2 = World(corr, schedules=[])
v = Vehicle(0, ("E0", ), 0.0, is_cv=False, speed=world2.idm_by_segment["E0"].desired_speed_mps)
world2.vehicles["E0"] = [v]
world2.spawned = 1
for _ in range(30):
    world2.step()
expect = world2.idm_by_segment["E0"].desired_speed_mps * world2.time_s
print("free flow pos:", v.pos, "closed form:", expect, "rel err:", abs(v.pos - expect) / expect)

# accel from standstill, no leader
world3 = World(corr, schedules=[])
v3 = Vehicle(0, ("E0",), 0.0, is_cv=False, speed=0.0)
world3.vehicles["E0"] = [v3]
world3.spawned = 1
traj = []
for _ in range(100):
    world3.step()
    traj.append((world3.time_s, v3.pos, v3.speed))
v0 = world3.idm_by_segment["E0"].desired_speed_mps
t = world3.time_s
x_ca = v0 * t - v0 * v0 / 2.0  # const-accel-then-cruise at a=1
print(f"standstill: t={t} x={v3.pos:.1f} vs const-accel {x_ca:.1f} v={v3.speed:.2f}/{v0:.2f}")
