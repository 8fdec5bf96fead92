"""Finite execution traces: unrolled periodic patterns and the fair-share baseline.

A trace keeps, for every application, one row per executed instance
(``compute_start``, ``io_start``, ``io_end``) and the transfer segments of all
instances in flat arrays indexed by ``seg_ptr``.  Segment rates are aggregate
(GB/s for the whole application).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .model import ApplicationSpec, Scenario, app_bandwidth, optimal_efficiency
from .pattern import Pattern
from .profile import CAP_EPS, RATE_EPS, VOL_RTOL, time_eps


@dataclass(frozen=True, eq=False)
class AppTrace:
    app: ApplicationSpec
    release: float
    compute_start: np.ndarray
    io_start: np.ndarray
    io_end: np.ndarray
    seg_ptr: np.ndarray
    seg_start: np.ndarray
    seg_end: np.ndarray
    seg_rate: np.ndarray

    @property
    def count(self) -> int:
        return len(self.io_start)

    @property
    def completion(self) -> float:
        """``d_k``: end of the last transfer (the release time when nothing ran)."""
        return float(self.io_end[-1]) if self.count else self.release

    def volumes(self) -> np.ndarray:
        v = (self.seg_end - self.seg_start) * self.seg_rate
        return np.add.reduceat(v, self.seg_ptr[:-1]) if self.count else np.zeros(0)


@dataclass(frozen=True, eq=False)
class Trace:
    scenario: Scenario
    apps: tuple[AppTrace, ...]
    horizon: float


@dataclass(frozen=True)
class BaselineMetrics:
    slowdown: tuple[float, ...]
    efficiency: tuple[float, ...]
    syseff: float


# -- periodic patterns --------------------------------------------------------

def unroll(pattern: Pattern, n_periods: int, releases: Iterable[float] | None = None) -> Trace:
    """Repeat ``pattern`` ``n_periods`` times starting at time 0.

    Instance order inside a period follows the cyclic chain of the pattern.
    An instance whose transfer starts before ``release + w`` cannot have
    computed yet and is skipped; each compute phase starts when the previous
    transfer of the same application ends.
    """
    if int(n_periods) != n_periods or n_periods < 1:
        raise ValueError(f"n_periods must be an integer >= 1, got {n_periods}")
    T = pattern.T
    teps = time_eps(T)
    rel = list(releases) if releases is not None else [0.0] * len(pattern.schedules)
    if len(rel) != len(pattern.schedules):
        raise ValueError("one release time per application is required")
    out = []
    for sch, r in zip(pattern.schedules, rel):
        app = sch.app
        if not sch.instances:
            z = np.zeros(0)
            out.append(AppTrace(app, r, z, z, z, np.zeros(1, np.int64), z, z, z))
            continue
        base = sch.instances[0].io_start
        off, span, nseg = [], [], []
        s_off, s_dur, s_rate = [], [], []
        for inst in sch.instances:
            o = (inst.io_start - base) % T
            if o > T - teps:
                o = 0.0
            off.append(o)
            span.append(inst.span)
            nseg.append(len(inst.segments))
            for s in inst.segments:
                d = (s.start - inst.io_start) % T
                if d > T - teps:
                    d = 0.0
                s_off.append(o + d)
                s_dur.append(s.duration)
                s_rate.append(s.rate)
        shift = r + base + T * np.arange(n_periods)[:, None]
        io_start = (shift + np.array(off)[None, :]).ravel()
        io_end = (shift + np.array(off)[None, :] + np.array(span)[None, :]).ravel()
        seg_start = (shift + np.array(s_off)[None, :]).ravel()
        seg_end = seg_start + np.tile(np.array(s_dur), n_periods)
        seg_rate = np.tile(np.array(s_rate), n_periods)
        counts = np.tile(np.array(nseg, dtype=np.int64), n_periods)
        ptr = np.concatenate(([0], np.cumsum(counts)))

        # the first period may hold transfers that start before any compute could finish
        first = int(np.searchsorted(io_start, r + app.w - teps))
        io_start, io_end = io_start[first:], io_end[first:]
        seg_start, seg_end, seg_rate = seg_start[ptr[first]:], seg_end[ptr[first]:], seg_rate[ptr[first]:]
        ptr = ptr[first:] - ptr[first]
        compute_start = np.concatenate(([r], io_end[:-1])) if len(io_start) else np.zeros(0)
        out.append(AppTrace(app, r, compute_start, io_start, io_end, ptr, seg_start, seg_end, seg_rate))
    return Trace(pattern.scenario, tuple(out), horizon=n_periods * T)


def actual_efficiency(trace: Trace, k: int, t: float) -> float:
    """Efficiency of application ``k`` at time ``t``: completed instances times ``w`` over elapsed time."""
    at = trace.apps[k]
    if not t > at.release:
        raise ValueError(f"efficiency undefined at t={t} <= release {at.release}")
    done = int(np.searchsorted(at.io_end, t, side="right"))
    return done * at.app.w / (t - at.release)


def completion_efficiency(trace: Trace, k: int) -> float:
    """``actual_efficiency`` at the application's own completion time ``d_k``."""
    at = trace.apps[k]
    if at.count == 0:
        return 0.0
    return actual_efficiency(trace, k, at.completion)


def check_trace(trace: Trace) -> list[str]:
    """Feasibility problems of a trace; an empty list means it is feasible."""
    pf = trace.scenario.platform
    problems = []
    bounds, deltas = [], []
    for at in trace.apps:
        app = at.app
        if at.count == 0:
            continue
        eps = time_eps(max(1.0, float(at.io_end[-1])))
        cap = app_bandwidth(app, pf)
        if np.any(at.seg_rate > cap + RATE_EPS) or np.any(at.seg_rate < 0):
            problems.append(f"{app.id}: transfer rate outside [0, {cap:.9g}] GB/s")
        vols = at.volumes()
        bad = np.nonzero(np.abs(vols - app.vol) > VOL_RTOL * app.vol + 1e-9)[0]
        if len(bad):
            problems.append(f"{app.id}: instance {int(bad[0])} transfers {vols[bad[0]]:.9g} GB instead of {app.vol:.9g}")
        if at.compute_start[0] < at.release - eps:
            problems.append(f"{app.id}: computes before its release")
        late = np.nonzero(at.compute_start + app.w > at.io_start + eps)[0]
        if len(late):
            problems.append(f"{app.id}: instance {int(late[0])} starts its transfer before computing for {app.w:.9g} s")
        back = np.nonzero(at.compute_start[1:] < at.io_end[:-1] - eps)[0]
        if len(back):
            problems.append(f"{app.id}: instance {int(back[0]) + 1} overlaps the previous one")
        idx = np.repeat(np.arange(at.count), np.diff(at.seg_ptr))
        if np.any(at.seg_start < at.io_start[idx] - eps) or np.any(at.seg_end > at.io_end[idx] + eps):
            problems.append(f"{app.id}: segment outside its instance")
        bounds.extend((at.seg_start, at.seg_end))
        deltas.extend((at.seg_rate, -at.seg_rate))
    if bounds:
        times = np.concatenate(bounds)
        d = np.concatenate(deltas)
        order = np.lexsort((d, times))
        ts = times[order]
        level = np.cumsum(d[order])
        # level[i] holds on [ts[i], ts[i+1]); unrolled boundaries that should coincide may
        # differ by rounding, so intervals shorter than the time tolerance are ignored
        width = np.diff(ts, append=ts[-1])
        eps = time_eps(float(ts[-1]))
        over = np.nonzero((level > pf.B + CAP_EPS) & (width > eps))[0]
        if len(over):
            i = int(over[np.argmax(level[over])])
            problems.append(f"aggregate rate {level[i]:.12g} GB/s exceeds B at t={ts[i]:.9g}")
    return problems


# -- no scheduler ---------------------------------------------------------------

def fair_share_baseline(scenario: Scenario, horizon: float) -> tuple[Trace, BaselineMetrics]:
    """Every application starts at 0 and alternates compute and transfer without coordination.

    While ``P`` processors are transferring, each gets ``min(b, B/P)``.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    pf = scenario.platform
    apps = scenario.apps
    K = len(apps)
    computing = [True] * K
    left = [a.w for a in apps]  # compute seconds or GB still to go
    phase_start = [0.0] * K
    rows: list[list[tuple[float, float, float]]] = [[] for _ in apps]
    segs: list[list[tuple[float, float, float]]] = [[] for _ in apps]
    cur_segs: list[list[tuple[float, float, float]]] = [[] for _ in apps]
    t = 0.0
    while t < horizon:
        active = sum(a.p for a, c in zip(apps, computing) if not c)
        per_proc = min(pf.b, pf.B / active) if active else 0.0
        rate = [0.0 if c else a.p * per_proc for a, c in zip(apps, computing)]
        dt = math.inf
        for k in range(K):
            step = left[k] if computing[k] else left[k] / rate[k]
            dt = min(dt, step)
        t_next = t + dt
        for k in range(K):
            if computing[k]:
                left[k] -= dt
                if left[k] <= time_eps(t_next):
                    computing[k] = False
                    left[k] = apps[k].vol
                    io_start = t_next
                    rows[k].append((phase_start[k], io_start, math.nan))
                    phase_start[k] = io_start
                    if apps[k].vol == 0:
                        computing[k] = True
                        left[k] = apps[k].w
                        rows[k][-1] = (rows[k][-1][0], io_start, io_start)
            else:
                if dt > 0:
                    cur_segs[k].append((t, t_next, rate[k]))
                left[k] -= dt * rate[k]
                if left[k] <= VOL_RTOL * apps[k].vol:
                    c0, s0, _ = rows[k][-1]
                    rows[k][-1] = (c0, s0, t_next)
                    segs[k].append(_merge(cur_segs[k]))
                    cur_segs[k] = []
                    computing[k] = True
                    left[k] = apps[k].w
                    phase_start[k] = t_next
        t = t_next

    traces = []
    slow, eff = [], []
    for k, a in enumerate(apps):
        done = [r for r in rows[k] if not math.isnan(r[2])]
        s_list = segs[k][:len(done)]
        ptr = np.concatenate(([0], np.cumsum([len(s) for s in s_list]))).astype(np.int64)
        flat = [x for s in s_list for x in s]
        arr = np.array(flat, dtype=float).reshape(-1, 3)
        at = AppTrace(a, 0.0,
                      np.array([r[0] for r in done]), np.array([r[1] for r in done]), np.array([r[2] for r in done]),
                      ptr, arr[:, 0], arr[:, 1], arr[:, 2])
        traces.append(at)
        busy = float(np.sum(at.io_end - at.io_start))
        cap = app_bandwidth(a, pf)
        slow.append(0.0 if busy == 0 or a.vol == 0 else max(0.0, 1.0 - (at.count * a.vol / busy) / cap))
        eff.append(at.count * a.w / at.completion if at.count else 0.0)
    syseff = math.fsum(a.p * e for a, e in zip(apps, eff)) / pf.N
    trace = Trace(scenario, tuple(traces), horizon)
    return trace, BaselineMetrics(tuple(slow), tuple(eff), syseff)


def _merge(segs):
    out = []
    for s in segs:
        if out and out[-1][2] == s[2] and out[-1][1] == s[0]:
            out[-1] = (out[-1][0], s[1], s[2])
        else:
            out.append(s)
    return out


def default_horizon(scenario: Scenario) -> float:
    """Long enough for the slowest application to run about 100 uncongested instances."""
    return 100.0 * max(a.w / optimal_efficiency(a, scenario.platform) for a in scenario.apps)


# -- export -----------------------------------------------------------------------

def write_trace_csv(trace: Trace, fh: TextIO) -> None:
    """One row per executed instance; ``bytes`` holds the transferred volume in GB."""
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(["app", "instance", "compute_start", "io_start", "io_end", "bytes"])
    for at in trace.apps:
        vols = at.volumes()
        for i in range(at.count):
            wr.writerow([at.app.id, i, f"{at.compute_start[i]:.9g}", f"{at.io_start[i]:.9g}",
                         f"{at.io_end[i]:.9g}", f"{vols[i]:.9g}"])
