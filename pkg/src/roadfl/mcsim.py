"""Monte Carlo simulation of the per-round upload pipeline.

Replays the exact event timeline the closed-form model describes:
Poisson arrivals over the road section, per-round participant sets,
fresh shifted-exponential computing delays for every (vehicle, round)
attempt, and the success rule completion <= deadline. The per-round
success counts feed a goodness-of-fit report against the analytic
Poisson law.

A vehicle that fails in one round keeps attempting in later rounds
while it is still inside the section; each attempt restarts from the
newly distributed global model, so its computing delay is redrawn.

Sampling is inverse-CDF from Philox uniforms throughout (see rng.py),
which keeps every run reproducible from (seed, purpose tag) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .rng import substream
from .types import (
    InvalidParameterError,
    RoundRecord,
    Schedule,
    SystemParams,
    UploadAttempt,
    VehicleTrace,
)

__all__ = [
    "SimConfig", "SimSummary", "PoissonFit",
    "sample_computing_delay", "generate_arrivals", "simulate_rounds",
    "compare_to_poisson", "subinterval_success_counts",
]


@dataclass(frozen=True)
class SimConfig:
    seed: int = 12345
    num_rounds: int = 100_000
    warmup_rounds: int = 1

    def __post_init__(self) -> None:
        if not (isinstance(self.num_rounds, int) and self.num_rounds >= 1):
            raise InvalidParameterError("number of rounds must be a positive integer")
        if not (isinstance(self.warmup_rounds, int) and self.warmup_rounds >= 0):
            raise InvalidParameterError("warmup rounds must be non-negative")
        if not isinstance(self.seed, int):
            raise InvalidParameterError("seed must be an integer")


@dataclass(frozen=True)
class SimSummary:
    """Aggregated outcome of one simulation run.

    histogram[k] is the number of recorded rounds with exactly k
    successes; participants/successes hold the per-round counts.
    rounds carries full RoundRecord detail only when requested.
    """

    num_rounds: int
    histogram: np.ndarray
    participants: np.ndarray
    successes: np.ndarray
    empirical_mean_msuc: float
    empirical_p_positive: float
    rounds: tuple[RoundRecord, ...] = ()

    def frequencies(self) -> np.ndarray:
        return self.histogram / self.num_rounds


@dataclass(frozen=True)
class PoissonFit:
    """Fit of an empirical success-count histogram to a Poisson law."""

    lambda_analytic: float
    mean_empirical: float
    mean_rel_error: float
    tv_distance: float
    p_pos_analytic: float
    p_pos_empirical: float
    p_pos_error: float
    support: np.ndarray
    empirical_freq: np.ndarray
    pmf: np.ndarray


def sample_computing_delay(params: SystemParams, h: int, rng: np.random.Generator,
                           size: int | None = None):
    """Draw computing delays alpha*h - beta*h*ln(1 - U), U uniform [0,1).

    Support is [alpha*h, inf) with mean alpha*h + beta*h. Returns a
    float when size is None, else an array.
    """
    u = rng.random() if size is None else rng.random(size)
    return params.alpha * h + params.beta * h * (-np.log1p(-u))


def _arrival_times(params: SystemParams, horizon: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Poisson arrival instants on (-t0, horizon), strictly increasing.

    Starting a dwell time before zero populates round 0's participant
    window correctly.
    """
    rate = params.arrival_rate
    if rate == 0:
        return np.empty(0)
    start = -params.dwell_time
    span = horizon - start
    chunk = max(256, int(rate * span * 1.1) + 64)
    pieces = []
    current = start
    while True:
        gaps = -np.log1p(-rng.random(chunk)) / rate
        times = current + np.cumsum(gaps)
        inside = times[times < horizon]
        pieces.append(inside)
        if inside.size < times.size:
            break
        current = times[-1]
    return np.concatenate(pieces)


def generate_arrivals(params: SystemParams, horizon: float,
                      rng: np.random.Generator) -> list[VehicleTrace]:
    """Vehicle traces for every arrival in (-t0, horizon)."""
    if horizon <= 0:
        raise InvalidParameterError("horizon must be positive")
    times = _arrival_times(params, horizon, rng)
    dwell = params.dwell_time
    return [VehicleTrace.from_arrival(i, float(z), dwell)
            for i, z in enumerate(times)]


LinkDelaySampler = Callable[[np.random.Generator, int],
                            tuple[np.ndarray, np.ndarray]]


def _attempt_table(params: SystemParams, sched: Schedule, arrivals: np.ndarray,
                   k_total: int, delay_rng: np.random.Generator,
                   link_rng: np.random.Generator | None = None,
                   link_delays: LinkDelaySampler | None = None):
    """Expand arrivals into one row per (vehicle, round) attempt.

    A vehicle arriving at z participates in every round k with
    k*t - t0 < z < (k+1)*t, i.e. k in the open interval
    (z/t - 1, (z + t0)/t), clipped to the simulated range.

    Returns (vehicle index, round index, arrival, computing delay,
    completion, deadline, success) arrays.
    """
    h, t = sched.h, sched.t
    t0 = params.dwell_time
    k_lo = np.floor(arrivals / t - 1.0).astype(np.int64) + 1
    k_hi = np.ceil((arrivals + t0) / t).astype(np.int64) - 1
    np.clip(k_lo, 0, None, out=k_lo)
    np.clip(k_hi, None, k_total - 1, out=k_hi)
    counts = k_hi - k_lo + 1
    live = counts > 0
    z = arrivals[live]
    vehicle_ids = np.nonzero(live)[0]
    counts = counts[live]
    k_lo = k_lo[live]

    total = int(counts.sum())
    rows = np.repeat(np.arange(z.size), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    k = k_lo[rows] + offsets

    tau_cp = sample_computing_delay(params, h, delay_rng, size=total)
    if link_delays is None:
        tau_down = params.tau_down
        tau_up = params.tau_up
    else:
        tau_down, tau_up = link_delays(link_rng, total)
    zr = z[rows]
    start = np.maximum(k * t, zr)
    completion = start + tau_down + tau_cp + tau_up
    deadline = np.minimum(zr + t0, (k + 1) * t)
    success = completion <= deadline
    return (vehicle_ids[rows], k, zr, start, tau_cp, completion, deadline, success)


def simulate_rounds(params: SystemParams, sched: Schedule, cfg: SimConfig,
                    keep_attempts: bool = False,
                    link_delays: LinkDelaySampler | None = None) -> SimSummary:
    """Simulate warmup + num_rounds rounds and aggregate success counts.

    Per round k: participants are the vehicles with arrival in
    (k*t - t0, (k+1)*t); each draws a fresh computing delay, finishes at
    max(k*t, arrival) + tau_down + tau_cp + tau_up and succeeds iff that
    is no later than min(arrival + t0, (k+1)*t). Only rounds after the
    warmup are recorded.

    link_delays optionally replaces the constant download/upload delays
    with per-attempt draws: a callable (rng, n) -> (down, up). Off by
    default; the analytic model assumes constants.
    """
    k_total = cfg.warmup_rounds + cfg.num_rounds
    horizon = k_total * sched.t
    arrivals = _arrival_times(params, horizon, substream(cfg.seed, "arrivals"))

    if arrivals.size == 0:
        hist = np.zeros(1, dtype=np.int64)
        hist[0] = cfg.num_rounds
        zero = np.zeros(cfg.num_rounds, dtype=np.int64)
        rounds = tuple(RoundRecord(k, 0, 0) for k in range(cfg.num_rounds)) \
            if keep_attempts else ()
        return SimSummary(cfg.num_rounds, hist, zero, zero.copy(), 0.0, 0.0, rounds)

    vids, k, zr, start, tau_cp, completion, deadline, success = _attempt_table(
        params, sched, arrivals, k_total, substream(cfg.seed, "delays"),
        substream(cfg.seed, "links"), link_delays)

    recorded = k >= cfg.warmup_rounds
    k_rec = k[recorded] - cfg.warmup_rounds
    m_k = np.bincount(k_rec, minlength=cfg.num_rounds)
    m_suc = np.bincount(k_rec[success[recorded]], minlength=cfg.num_rounds)
    hist = np.bincount(m_suc)

    rounds: tuple[RoundRecord, ...] = ()
    if keep_attempts:
        per_round: dict[int, list[UploadAttempt]] = {}
        for i in np.nonzero(recorded)[0]:
            idx = int(k[i]) - cfg.warmup_rounds
            per_round.setdefault(idx, []).append(UploadAttempt(
                round_index=idx,
                vehicle_id=int(vids[i]),
                start_time=float(start[i]),
                computing_delay=float(tau_cp[i]),
                completion=float(completion[i]),
                deadline=float(deadline[i]),
                success=bool(success[i]),
            ))
        rounds = tuple(
            RoundRecord(idx, int(m_k[idx]), int(m_suc[idx]),
                        tuple(per_round.get(idx, ())))
            for idx in range(cfg.num_rounds))

    return SimSummary(
        num_rounds=cfg.num_rounds,
        histogram=hist,
        participants=m_k,
        successes=m_suc,
        empirical_mean_msuc=float(m_suc.mean()),
        empirical_p_positive=float((m_suc > 0).mean()),
        rounds=rounds,
    )


def compare_to_poisson(summary: SimSummary, lambda_analytic: float) -> PoissonFit:
    """Goodness of fit between the empirical histogram and Poisson(lam).

    tv_distance is the total-variation distance 0.5 * sum |freq - pmf|
    over the support where either side exceeds 1e-9.
    """
    if summary.num_rounds < 1:
        raise InvalidParameterError("summary holds no rounds")
    n_emp = summary.histogram.size - 1
    if lambda_analytic > 0:
        tail = int(stats.poisson.ppf(1.0 - 1e-12, lambda_analytic)) + 2
    else:
        tail = 0
    top = max(n_emp, tail)
    support = np.arange(top + 1)
    pmf = stats.poisson.pmf(support, lambda_analytic) if lambda_analytic > 0 \
        else (support == 0).astype(float)
    mask = pmf >= 1e-9
    mask[:n_emp + 1] = True
    support = support[mask]
    pmf = pmf[mask]
    freq = np.zeros_like(pmf)
    freq[:n_emp + 1] = summary.frequencies()

    tv = 0.5 * float(np.abs(freq - pmf).sum())
    mean_emp = summary.empirical_mean_msuc
    if lambda_analytic > 0:
        mean_rel = abs(mean_emp - lambda_analytic) / lambda_analytic
    else:
        mean_rel = 0.0 if mean_emp == 0 else math.inf
    p_pos = -math.expm1(-lambda_analytic)
    return PoissonFit(
        lambda_analytic=lambda_analytic,
        mean_empirical=mean_emp,
        mean_rel_error=mean_rel,
        tv_distance=tv,
        p_pos_analytic=p_pos,
        p_pos_empirical=summary.empirical_p_positive,
        p_pos_error=abs(summary.empirical_p_positive - p_pos),
        support=support,
        empirical_freq=freq,
        pmf=pmf,
    )


def subinterval_success_counts(params: SystemParams, sched: Schedule,
                               n_per_interval: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Empirical success counts for arrivals pinned to each sub-interval.

    Draws n_per_interval round-0 arrivals uniformly inside each of the
    three sub-intervals of the participant window (-t0, t) and plays the
    success rule. Conditioning a Poisson process on a sub-interval makes
    arrivals uniform there, so counts/n estimates the per-sub-interval
    success probabilities.
    """
    t, h = sched.t, sched.h
    t0 = params.dwell_time
    if t >= t0:
        bounds = [(-t0, 0.0), (0.0, t - t0), (t - t0, t)]
    else:
        bounds = [(-t0, t - t0), (t - t0, 0.0), (0.0, t)]
    out = np.zeros(3, dtype=np.int64)
    for i, (a, b) in enumerate(bounds):
        z = a + (b - a) * rng.random(n_per_interval)
        tau_cp = sample_computing_delay(params, h, rng, size=n_per_interval)
        completion = np.maximum(0.0, z) + params.tau_down + tau_cp + params.tau_up
        deadline = np.minimum(z + t0, t)
        out[i] = int((completion <= deadline).sum())
    return out
