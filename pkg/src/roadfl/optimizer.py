"""Joint search for the best (iteration count, round length) pair.

For each feasible h the objective g(h, .) is unimodal on
(t_min(h), t_max(h)], so the per-h optimum is located by bisection on
the sign of dg/dt until the bracket is narrower than gamma. The outer
loop takes the argmax over h = 1 .. h_max. A dense-grid brute-force
scan over the same domain serves as an independent oracle.

Ties are broken toward the smaller h and then the smaller t; this is a
determinism choice, both searches apply it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analytic
from .types import (
    InfeasibleEnvironmentError,
    InfeasibleScheduleError,
    InvalidParameterError,
    Schedule,
    SystemParams,
)

__all__ = [
    "OptimizerConfig", "OptimizationResult", "h_max",
    "optimize_round_length", "optimize_schedule", "brute_force_argmax",
    "scan_round_lengths",
]


@dataclass(frozen=True)
class OptimizerConfig:
    """gamma: bisection bracket width threshold, seconds.
    grid_step: spacing of the brute-force oracle grid, seconds."""

    gamma: float = 1e-3
    grid_step: float = 0.01

    def __post_init__(self) -> None:
        if not (isinstance(self.gamma, (int, float)) and self.gamma > 0
                and math.isfinite(self.gamma)):
            raise InvalidParameterError("gamma must be a positive finite number")
        if not (isinstance(self.grid_step, (int, float)) and self.grid_step > 0
                and math.isfinite(self.grid_step)):
            raise InvalidParameterError("grid step must be a positive finite number")


@dataclass(frozen=True)
class OptimizationResult:
    """Winning schedule plus the full per-h table that produced it.

    per_h_table rows are (h, best t for that h, g at that point);
    search_steps counts objective/derivative evaluations.
    """

    h_star: int
    t_star: float
    g_star: float
    per_h_table: tuple[tuple[int, float, float], ...]
    search_steps: int

    def __post_init__(self) -> None:
        best = _argmax_table(self.per_h_table)
        if best != (self.h_star, self.t_star, self.g_star):
            raise InvalidParameterError("result does not attain the table maximum")


def _argmax_table(entries) -> tuple[int, float, float]:
    """Pick the best (h, t, g) entry; ties go to smaller h, then smaller t."""
    if not entries:
        raise InvalidParameterError("empty search table")
    best = entries[0]
    for entry in entries[1:]:
        if entry[2] > best[2]:
            best = entry
    return best


def h_max(params: SystemParams) -> int:
    """Largest iteration count whose fastest pipeline fits the dwell time.

    floor((t0 - tau_down - tau_up) / alpha), trimmed down while
    t_min(h) >= t0 so feasibility stays strict. 0 means no vehicle can
    ever succeed, whatever the schedule.
    """
    budget = params.dwell_time - params.tau_down - params.tau_up
    if budget <= 0:
        return 0
    h = int(math.floor(budget / params.alpha))
    while h > 0 and analytic.t_min(params, h) >= params.dwell_time:
        h -= 1
    return h


def optimize_round_length(params: SystemParams, h: int,
                          cfg: OptimizerConfig) -> tuple[float, float, int]:
    """Bisection on the sign of dg/dt over (t_min(h), t_max(h)].

    Returns (round length, g value, evaluation count). The result is
    within gamma of the true per-h optimum because g is unimodal in t.
    """
    lo = analytic.t_min(params, h)
    hi = analytic.t_max(params, h)
    if not hi > lo:
        raise InfeasibleScheduleError(
            f"empty search interval for h={h}: t_max <= t_min")
    # The left endpoint itself has xi = 0; probes stay this far inside.
    eps = max(cfg.gamma / 10.0, 1e-9)
    floor = lo + eps
    t = 0.5 * (lo + hi)
    steps = 0
    while hi - lo > cfg.gamma and lo < t < hi:
        steps += 1
        if analytic.dg_dt(params, Schedule(h, max(t, floor))) > 0:
            lo = t
        else:
            hi = t
        t = 0.5 * (lo + hi)
    g_val = analytic.g(params, Schedule(h, t))
    return t, g_val, steps + 1


def optimize_schedule(params: SystemParams,
                      cfg: OptimizerConfig) -> OptimizationResult:
    """Per-h bisection plus argmax over h = 1 .. h_max."""
    _check_environment(params)
    table = []
    steps = 0
    for h in range(1, h_max(params) + 1):
        t_h, g_h, used = optimize_round_length(params, h, cfg)
        table.append((h, t_h, g_h))
        steps += used
    h_star, t_star, g_star = _argmax_table(table)
    return OptimizationResult(h_star, t_star, g_star, tuple(table), steps)


def scan_round_lengths(params: SystemParams, h: int,
                       cfg: OptimizerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Dense grid of round lengths for one h and g evaluated on it.

    Grid points are t_min + k*grid_step for k >= 1, up to t_max. May be
    empty when the interval is narrower than the step.
    """
    lo = analytic.t_min(params, h)
    hi = analytic.t_max(params, h)
    n = int(math.floor((hi - lo) / cfg.grid_step + 1e-12))
    ts = lo + cfg.grid_step * np.arange(1, n + 1)
    ts = ts[ts <= hi]
    if ts.size == 0:
        return ts, ts
    return ts, analytic.g_curve(params, h, ts)


def brute_force_argmax(params: SystemParams,
                       cfg: OptimizerConfig) -> OptimizationResult:
    """Exhaustive scan over h and a dense t grid; oracle for the bisection
    search. Deterministic; first grid maximum wins within each h."""
    _check_environment(params)
    table = []
    steps = 0
    for h in range(1, h_max(params) + 1):
        ts, gs = scan_round_lengths(params, h, cfg)
        if ts.size == 0:
            continue
        steps += ts.size
        i = int(np.argmax(gs))
        table.append((h, float(ts[i]), float(gs[i])))
    if not table:
        raise InfeasibleEnvironmentError(
            "grid step larger than every feasible search interval")
    h_star, t_star, g_star = _argmax_table(table)
    return OptimizationResult(h_star, t_star, g_star, tuple(table), steps)


def _check_environment(params: SystemParams) -> None:
    if params.arrival_rate == 0:
        raise InfeasibleEnvironmentError("no arrivals")
    if h_max(params) == 0:
        raise InfeasibleEnvironmentError(
            "communication delays exceed the dwell time; no vehicle can finish")
