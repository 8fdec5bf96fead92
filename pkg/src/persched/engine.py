"""Pattern construction and the period search.

Two implementations of the greedy builder live here.  ``build_pattern`` runs
the compiled kernel and is what ``persched`` uses.  The pure-Python
``insert_first_instance`` / ``insert_in_schedule`` work on immutable
``Pattern`` values and back ``build_pattern_heap_py`` and
``build_pattern_naive``, which exist to cross-check the kernel.
"""
from __future__ import annotations

import heapq
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernel import build_kernel
from .model import Scenario, app_bandwidth, min_io_time, optimal_efficiency
from .pattern import (
    InstanceSchedule,
    Pattern,
    ScheduleMetrics,
    first_instance_windows,
    insertion_window,
    is_schedulable,
    metrics,
    metrics_of,
    work,
)
from .profile import Segment, greedy_fill, time_eps

log = logging.getLogger(__name__)

OBJECTIVES = ("syseff", "dilation")
TIEBREAKS = ("desc", "asc")


@dataclass(frozen=True)
class EngineConfig:
    kprime: float = 10.0
    epsilon: float = 0.01
    objective: str = "syseff"
    tiebreak: str = "desc"
    threads: int | None = None

    def __post_init__(self):
        if not self.kprime >= 1:
            raise ValueError(f"kprime must be >= 1, got {self.kprime}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.tiebreak not in TIEBREAKS:
            raise ValueError(f"tiebreak must be one of {TIEBREAKS}, got {self.tiebreak!r}")


def candidate_key(scenario: Scenario, k: int, count: int, T: float, tiebreak: str = "desc") -> tuple:
    """Priority of application ``k``: smaller tuples are served first.

    Worst dilation first (infinite while the application has no instance),
    then ``w/tio`` in the requested direction, then position in the scenario.
    """
    app = scenario.apps[k]
    pf = scenario.platform
    rho = optimal_efficiency(app, pf)
    d = math.inf if count == 0 else rho * T / (count * app.w)
    tio = min_io_time(app, pf)
    tb = math.inf if tio == 0 else app.w / tio
    return (-d, -tb if tiebreak == "desc" else tb, k)


# -- pure-Python insertion --------------------------------------------------

def _span(segs: Sequence[Segment], T: float) -> float:
    first = segs[0].start
    last = segs[-1]
    return (last.start - first) % T + last.duration


def insert_first_instance(pattern: Pattern, k: int) -> Pattern:
    """Place the first instance where its transfer is shortest.

    An earliest-first fill is tried from every event of the usage profile; the
    shortest transfer wins, ties going to the earliest start.  Returns
    ``pattern`` unchanged when nothing fits.
    """
    sch = pattern.schedules[k]
    app = sch.app
    T = pattern.T
    teps = time_eps(T)
    if sch.count:
        raise ValueError(f"{app.id} already has instances")
    if app.vol <= 0:
        return pattern.with_instance(k, InstanceSchedule(0.0, 0.0)) if T - app.w >= -teps else pattern
    cap = app_bandwidth(app, pattern.scenario.platform)
    best = None
    for win in first_instance_windows(pattern, k):
        segs = greedy_fill(pattern.usage, win, cap, app.vol)
        if not segs:
            continue
        span = _span(segs, T)
        start = segs[0].start
        if best is None or span < best[0] - teps or (span <= best[0] + teps and start < best[1]):
            best = (span, start, segs)
    if best is None:
        return pattern
    span, start, segs = best
    return pattern.with_instance(k, InstanceSchedule(start, span, tuple(segs)))


def insert_in_schedule(pattern: Pattern, k: int) -> Pattern:
    """Insert one more instance right after the last one (or the first instance if there is none).

    Returns ``pattern`` itself when the application is not schedulable.
    """
    sch = pattern.schedules[k]
    app = sch.app
    T = pattern.T
    if sch.count == 0:
        return insert_first_instance(pattern, k)
    if app.vol <= 0:
        if T - sch.occupied(T) - 2.0 * app.w < -time_eps(T):
            return pattern
        last = sch.instances[-1]
        e = (last.io_start + last.span) % T + app.w
        if e >= T:
            e -= T
        return pattern.with_instance(k, InstanceSchedule(e, 0.0))
    win = insertion_window(pattern, k)
    if win is None:
        return pattern
    segs = greedy_fill(pattern.usage, win, app_bandwidth(app, pattern.scenario.platform), app.vol)
    if not segs:
        return pattern
    return pattern.with_instance(k, InstanceSchedule(segs[0].start, _span(segs, T), tuple(segs)))


def build_pattern_heap_py(scenario: Scenario, T: float, tiebreak: str = "desc") -> Pattern:
    """Priority-queue builder on immutable patterns.

    An application that fails to insert is dropped for good: adding load never
    makes an unschedulable application schedulable again.
    """
    pattern = Pattern.empty(scenario, T)
    heap = [candidate_key(scenario, k, 0, T, tiebreak) for k in range(len(scenario.apps))]
    heapq.heapify(heap)
    while heap:
        k = heapq.heappop(heap)[2]
        new = insert_in_schedule(pattern, k)
        if new is pattern:
            continue
        pattern = new
        heapq.heappush(heap, candidate_key(scenario, k, pattern.schedules[k].count, T, tiebreak))
    return pattern


def build_pattern_naive(scenario: Scenario, T: float, tiebreak: str = "desc") -> Pattern:
    """Re-test every application each round and insert the best-ranked schedulable one."""
    pattern = Pattern.empty(scenario, T)
    while True:
        ready = [k for k in range(len(scenario.apps)) if is_schedulable(pattern, k)]
        if not ready:
            return pattern
        k = min(ready, key=lambda j: candidate_key(scenario, j, pattern.schedules[j].count, T, tiebreak))
        new = insert_in_schedule(pattern, k)
        if new is pattern:
            raise AssertionError(f"{scenario.apps[k].id} reported schedulable but insertion failed at T={T}")
        pattern = new


# -- compiled builder -------------------------------------------------------

def _kernel_inputs(scenario: Scenario):
    pf = scenario.platform
    w = np.array([a.w for a in scenario.apps], dtype=float)
    vol = np.array([a.vol for a in scenario.apps], dtype=float)
    cap = np.array([app_bandwidth(a, pf) for a in scenario.apps], dtype=float)
    rho = np.array([optimal_efficiency(a, pf) for a in scenario.apps], dtype=float)
    tio = np.array([min_io_time(a, pf) for a in scenario.apps], dtype=float)
    with np.errstate(divide="ignore"):
        tb = np.where(tio > 0, w / np.where(tio > 0, tio, 1.0), np.inf)
    return float(pf.B), w, vol, cap, rho, tb


def build_counts(scenario: Scenario, T: float, tiebreak: str = "desc") -> tuple[int, ...]:
    """Instance counts of the pattern ``build_pattern`` would return, without materialising it."""
    B, w, vol, cap, rho, tb = _kernel_inputs(scenario)
    counts = build_kernel(float(T), B, w, vol, cap, rho, tb, tiebreak == "desc", False)[0]
    return tuple(int(c) for c in counts)


def build_pattern(scenario: Scenario, T: float, tiebreak: str = "desc") -> Pattern:
    """Greedy pattern of period ``T``: worst-dilation application first, until nothing fits."""
    if not T > 0:
        raise ValueError(f"period must be > 0, got {T}")
    B, w, vol, cap, rho, tb = _kernel_inputs(scenario)
    counts, i_app, i_start, i_span, i_seg0, s_s, s_d, s_r = build_kernel(
        float(T), B, w, vol, cap, rho, tb, tiebreak == "desc", True)
    per_app: list[list[InstanceSchedule]] = [[] for _ in scenario.apps]
    ends = list(i_seg0[1:]) + [len(s_s)]
    for j in range(len(i_app)):
        segs = tuple(Segment(float(s_s[m]), float(s_d[m]), float(s_r[m])) for m in range(i_seg0[j], ends[j]))
        per_app[i_app[j]].append(InstanceSchedule(float(i_start[j]), float(i_span[j]), segs))
    return Pattern.from_instances(scenario, float(T), per_app)


# -- period search ----------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    T: float
    syseff: float
    dilation: float
    counts: tuple[int, ...]


@dataclass
class PerschedResult:
    pattern: Pattern
    metrics: ScheduleMetrics
    config: EngineConfig
    t_opt: float
    sweep_best: SweepRow
    sweep: list[SweepRow] = field(repr=False)
    refinements: int = 0


def period_grid(t_min: float, kprime: float, epsilon: float) -> list[float]:
    """Periods tried by the main loop: ``t_min * (1+eps)^i`` up to ``kprime * t_min``."""
    t_max = kprime * t_min
    out = []
    T = t_min
    while T <= t_max * (1 + 1e-12):
        out.append(T)
        T = T * (1 + epsilon)
    return out


def _better(objective: str, row: SweepRow, best: SweepRow | None) -> bool:
    if best is None:
        return True
    if objective == "syseff":
        return best.syseff < row.syseff
    return (row.dilation, -row.syseff) < (best.dilation, -best.syseff)


def _threads(config: EngineConfig) -> int:
    if config.threads is not None:
        return max(1, config.threads)
    env = os.environ.get("PERSCHED_THREADS")
    return max(1, int(env)) if env else 1


def _row(scenario: Scenario, T: float, tiebreak: str) -> SweepRow:
    counts = build_counts(scenario, T, tiebreak)
    m = metrics_of(scenario, counts, T)
    return SweepRow(T, m.syseff, m.dilation, counts)


def sweep_report(scenario: Scenario, config: EngineConfig = EngineConfig()) -> list[SweepRow]:
    """One row per period of the main loop, in increasing ``T``."""
    grid = period_grid(scenario.t_min(), config.kprime, config.epsilon)
    nthreads = _threads(config)
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            return list(pool.map(lambda T: _row(scenario, T, config.tiebreak), grid))
    return [_row(scenario, T, config.tiebreak) for T in grid]


def persched(scenario: Scenario, config: EngineConfig = EngineConfig()) -> PerschedResult:
    """Search the period, then shrink the best one while the work per period is unchanged."""
    rows = sweep_report(scenario, config)
    best = None
    for row in rows:
        if _better(config.objective, row, best):
            best = row
    t_opt = best.T
    target = work(scenario, best.counts)
    step = (t_opt - t_opt / (1 + config.epsilon)) / math.floor(1 / config.epsilon)
    final = best
    T = t_opt
    refinements = 0
    # the loop stops within about 1/epsilon steps; the bound only guards against float drift
    for _ in range(4 * math.ceil(1 / config.epsilon) + 4):
        row = _row(scenario, T, config.tiebreak)
        if not math.isclose(work(scenario, row.counts), target, rel_tol=1e-12, abs_tol=0.0):
            break
        final = row
        refinements += 1
        T = T - step
        if T <= 0:
            break
    pattern = build_pattern(scenario, final.T, config.tiebreak)
    if tuple(pattern.counts()) != final.counts:
        raise AssertionError("materialised pattern differs from the counting run")
    log.debug("persched %s: T_opt=%g -> %g after %d refinements", scenario.name, t_opt, final.T, refinements)
    return PerschedResult(pattern, metrics(pattern), config, final.T, best, rows, refinements)
