"""Unit conversions shared by every module.

Internal convention: distances in miles, speeds in mph, times in seconds.
The microsimulator integrates in meters and m/s; everything crossing the
simulator boundary goes through these helpers so no formula does an ad-hoc
conversion.
"""

METERS_PER_MILE = 1609.344
SECONDS_PER_HOUR = 3600.0

# Speed below which a vehicle counts as stopped/queued (mph).
STOP_SPEED_MPH = 5.0


def mph_to_mps(v_mph: float) -> float:
    return v_mph * METERS_PER_MILE / SECONDS_PER_HOUR


def mps_to_mph(v_mps: float) -> float:
    return v_mps * SECONDS_PER_HOUR / METERS_PER_MILE


def miles_to_meters(d_mi: float) -> float:
    return d_mi * METERS_PER_MILE


def meters_to_miles(d_m: float) -> float:
    return d_m / METERS_PER_MILE


def seconds_to_hours(t_s: float) -> float:
    return t_s / SECONDS_PER_HOUR


def hours_to_seconds(t_h: float) -> float:
    return t_h * SECONDS_PER_HOUR


def vph_to_vps(q_vph: float) -> float:
    return q_vph / SECONDS_PER_HOUR


STOP_SPEED_MPS = mph_to_mps(STOP_SPEED_MPH)
