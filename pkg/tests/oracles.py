"""Independent reference implementations used only by the test suite.

These are deliberately written as plain loops, separate from the package
code paths they check.
"""

from __future__ import annotations

import itertools
import math


def kinematic_queue_sim(q_a_vph: float, red_s: float,
                        startup_s: float = 1.5) -> tuple[float, int]:
    """Discrete kinematic queue: vehicles arrive at uniform headways, queue
    during red, and start moving one-by-one at `startup_s` spacing after
    green. Returns (time after green until the last queued vehicle starts,
    vehicles in queue at green start)."""
    h_a = 3600.0 / q_a_vph
    j = 0
    last_start = None
    n_at_green = 0
    while True:
        t_arr = (j + 1) * h_a
        rank = j + 1
        if t_arr <= red_s:
            last_start = red_s + startup_s * rank
            n_at_green += 1
            j += 1
            continue
        if last_start is not None and t_arr < last_start:
            last_start = red_s + startup_s * rank
            j += 1
        else:
            break
    if last_start is None:
        return 0.0, 0
    return last_start - red_s, n_at_green


def green_split_bruteforce(problem, fr_step: float = 0.05):
    """Exhaustive reference for the per-intersection timing optimizer.

    Evaluates every integer green within bounds against every admitted
    fraction combination on the grid, normalizes both objectives by their
    min-max over the feasible set, and returns the best scalarized value
    plus the winning candidate.
    """
    n = len(problem.platoons)
    fr_values = []
    k = 0
    while True:
        v = k * fr_step
        if v > 1.0 + 1e-12:
            break
        fr_values.append(min(v, 1.0))
        k += 1
    g_lo = int(math.ceil(problem.g_min_s))
    g_hi = int(math.floor(problem.g_max_s))
    feasible = []
    for g in range(g_lo, g_hi + 1):
        for fr in itertools.product(fr_values, repeat=n):
            t_q = _oracle_queue_clear(problem, fr)
            if t_q > g + 1e-9:
                continue
            t_s = _oracle_blocked_wait(problem, fr)
            t_p = _oracle_nonselected(problem, fr)
            prog = _oracle_progression(problem, fr)
            feasible.append((g, fr, t_q + t_s + t_p, prog))
    if not feasible:
        return None
    j1 = [f[2] for f in feasible]
    j2 = [f[3] for f in feasible]
    j1_lo, j1_hi = min(j1), max(j1)
    j2_lo, j2_hi = min(j2), max(j2)
    best = None
    for (g, fr, a, b) in feasible:
        n1 = 0.0 if j1_hi == j1_lo else (a - j1_lo) / (j1_hi - j1_lo)
        n2 = 0.0 if j2_hi == j2_lo else (b - j2_lo) / (j2_hi - j2_lo)
        val = problem.w_delay * n1 - problem.w_progression * n2
        key = (val, -g, tuple(-f for f in fr))
        if best is None or key < best[0]:
            best = (key, g, fr, val)
    return {"objective": best[3], "g": best[1], "fr": best[2]}


def _oracle_blocked_wait(problem, fr):
    total = problem.intergreen_s
    for p, f in zip(problem.platoons, fr):
        total += p.length_mi * (1.0 - f) * problem.predicted_count \
            * problem.sat_headway_s / problem.segment_length_mi
    return total


def _oracle_queue_clear(problem, fr):
    total = problem.queue_clear_s
    for p, f in zip(problem.platoons, fr):
        if f <= 0.0:
            continue
        speed = max(p.avg_speed_mph, 1.0)
        if p.affected_by_queue:
            total += (p.length_mi * f + p.dist_ahead_mi) / speed * 3600.0
        else:
            t_h = p.dist_to_stopline_mi / speed * 3600.0
            t_l = p.length_mi * f / speed * 3600.0
            total += t_h + t_l
    return total


def _oracle_nonselected(problem, fr):
    total = 0.0
    for p, f in zip(problem.platoons, fr):
        if f == 0.0:
            total += problem.cycle_s * p.est_total_count
    return total


def _oracle_progression(problem, fr):
    total = 0.0
    for p, f in zip(problem.platoons, fr):
        hidden = max(0.0, p.est_total_count - p.cv_count)
        total += p.cv_count + hidden * f
    return total


def offset_bruteforce(problem):
    """Independent enumeration of the pairwise offset program."""
    best = None
    t1_max = int(problem.cycle_s // 2)
    t2_cap_s = problem.segment_length_mi / (problem.ffs_mph * problem.alpha) * 3600.0
    for t1 in range(1, t1_max + 1):
        t2 = problem.downstream_intergreen_s - abs(problem.upstream_intergreen_s - t1)
        if abs(t2) > t2_cap_s + 1e-9 or abs(t2) > problem.cycle_s / 2 + 1e-9:
            continue
        wait = abs(problem.upstream_intergreen_s - t1)
        t3 = (problem.segment_length_mi - problem.v_bf_mph * wait / 3600.0) \
            / (problem.ffs_mph - problem.v_bf_mph) * 3600.0
        t4 = wait * (problem.side_flow_1_vph + problem.side_flow_2_vph) / problem.discharge_vph
        t_req = (wait * (problem.side_flow_1_vph + problem.side_flow_2_vph)
                 + t2 * problem.discharge_vph) / (problem.discharge_vph - problem.upstream_flow_vph)
        delay = max(0.0, t2 + t4 - t3) * max(0.0, t_req) * (problem.upstream_flow_vph / 3600.0) / 2.0
        key = (delay, abs(t2), t1)
        if best is None or key < best[0]:
            best = (key, t1, t2, delay)
    if best is None:
        return None
    return {"t1": best[1], "t2": best[2], "delay": best[3]}


def random_timing_problem(rng, max_platoons=3):
    """Randomized small instance for the green-split exactness checks."""
    from cvsignal.green_optimizer import PlatoonInput, TimingProblem

    n = int(rng.choice([1, 1, 2, 2, 2, max_platoons]))
    platoons = []
    for _ in range(n):
        affected = bool(rng.random() < 0.3)
        speed = float(rng.uniform(2.0, 12.0) if affected else rng.uniform(8.0, 40.0))
        cv = int(rng.integers(1, 5))
        platoons.append(PlatoonInput(
            length_mi=float(rng.uniform(0.02, 0.15)),
            avg_speed_mph=speed,
            dist_to_stopline_mi=float(rng.uniform(0.03, 0.35)),
            cv_count=cv,
            est_total_count=cv + float(rng.uniform(0.0, 15.0)),
            affected_by_queue=affected,
            dist_ahead_mi=float(rng.uniform(0.01, 0.08)) if affected else 0.0,
        ))
    g_min = int(rng.integers(4, 10))
    g_max = g_min + int(rng.integers(2, 20))  # at most 20 integer greens
    return TimingProblem(
        platoons=platoons,
        predicted_count=float(rng.uniform(5.0, 40.0)),
        segment_length_mi=float(rng.uniform(0.4, 0.8)),
        sat_headway_s=2.5,
        intergreen_s=6.0,
        queue_clear_s=float(rng.uniform(0.0, g_min)),
        cycle_s=90.0,
        g_min_s=float(g_min),
        g_max_s=float(g_max),
        available_green_s=78.0,
    )


def random_offset_problem(rng):
    """Randomized pairwise offset instance."""
    from cvsignal.offset_optimizer import OffsetProblem

    return OffsetProblem(
        upstream_intergreen_s=float(rng.integers(4, 11)),
        downstream_intergreen_s=float(rng.integers(4, 11)),
        side_flow_1_vph=float(rng.uniform(0.0, 500.0)),
        side_flow_2_vph=float(rng.uniform(0.0, 500.0)),
        upstream_flow_vph=float(rng.uniform(200.0, 1200.0)),
        segment_length_mi=float(rng.uniform(0.3, 0.8)),
        ffs_mph=float(rng.uniform(35.0, 55.0)),
        v_bf_mph=-float(rng.uniform(0.0, 12.0)),
        cycle_s=90.0,
    )
