"""Periodic patterns: per-application instance schedules inside one period ``T``.

Compute phases are implicit.  Instance ``i`` of an application computes right
after the transfer of instance ``i - 1`` ends (cyclically) and a pattern is
feasible when that cyclic gap is at least ``w``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .model import ApplicationSpec, Scenario, app_bandwidth, optimal_efficiency
from .profile import (
    CAP_EPS,
    RATE_EPS,
    VOL_RTOL,
    CyclicWindow,
    Segment,
    StepProfile,
    add_usage,
    integrate_capped,
    time_eps,
)


@dataclass(frozen=True)
class InstanceSchedule:
    """I/O of one instance: segments in traversal order starting at ``io_start``.

    ``span`` is the unrolled distance from ``io_start`` to the end of the last
    segment, so ``io_end`` may exceed ``T``.
    """

    io_start: float
    span: float
    segments: tuple[Segment, ...] = ()

    @property
    def io_end(self) -> float:
        return self.io_start + self.span

    @property
    def volume(self) -> float:
        return math.fsum(s.volume for s in self.segments)


@dataclass(frozen=True)
class AppSchedule:
    app: ApplicationSpec
    instances: tuple[InstanceSchedule, ...] = ()

    @property
    def count(self) -> int:
        return len(self.instances)

    def occupied(self, period: float) -> float:
        """Unrolled time from the first instance's I/O start to the last instance's I/O end."""
        if not self.instances:
            return 0.0
        first, last = self.instances[0], self.instances[-1]
        if len(self.instances) == 1:
            return last.span
        return (last.io_start - first.io_start) % period + last.span


@dataclass(frozen=True)
class Pattern:
    scenario: Scenario
    T: float
    schedules: tuple[AppSchedule, ...]
    usage: StepProfile = field(compare=False, repr=False)

    @classmethod
    def empty(cls, scenario: Scenario, T: float) -> "Pattern":
        if not T > 0:
            raise ValueError(f"period must be > 0, got {T}")
        return cls(scenario, T, tuple(AppSchedule(a) for a in scenario.apps),
                   StepProfile.empty(T, scenario.platform.B))

    @classmethod
    def from_instances(cls, scenario: Scenario, T: float,
                       instances: Sequence[Sequence[InstanceSchedule]]) -> "Pattern":
        """Assemble a pattern and recompute its usage profile from scratch."""
        schedules = tuple(AppSchedule(a, tuple(insts)) for a, insts in zip(scenario.apps, instances))
        segs = [s for sch in schedules for inst in sch.instances for s in inst.segments]
        usage = StepProfile.from_segments(T, scenario.platform.B, segs)
        return cls(scenario, T, schedules, usage)

    def with_instance(self, k: int, inst: InstanceSchedule) -> "Pattern":
        sch = self.schedules[k]
        new = AppSchedule(sch.app, sch.instances + (inst,))
        schedules = self.schedules[:k] + (new,) + self.schedules[k + 1:]
        return Pattern(self.scenario, self.T, schedules, add_usage(self.usage, inst.segments))

    def counts(self) -> list[int]:
        return [s.count for s in self.schedules]

    def rotated(self, offset: float) -> "Pattern":
        """The same pattern with every time shifted by ``offset`` (mod ``T``)."""
        T = self.T

        def mv(t):
            return (t + offset) % T

        insts = []
        for sch in self.schedules:
            moved = []
            for inst in sch.instances:
                segs = []
                for s in inst.segments:
                    a = mv(s.start)
                    if a + s.duration > T + time_eps(T):
                        segs.append(Segment(a, T - a, s.rate))
                        segs.append(Segment(0.0, s.duration - (T - a), s.rate))
                    else:
                        segs.append(Segment(a, s.duration, s.rate))
                moved.append(InstanceSchedule(mv(inst.io_start), inst.span, tuple(segs)))
            insts.append(moved)
        return Pattern.from_instances(self.scenario, T, insts)


@dataclass(frozen=True)
class ScheduleMetrics:
    T: float
    counts: tuple[int, ...]
    rho_tilde: tuple[float, ...]
    syseff: float
    dilation: float


@dataclass(frozen=True)
class Violation:
    kind: str  # capacity | rate | volume | gap | overlap | usage
    app: str | None
    instance: int | None
    time: float | None
    detail: str

    def __str__(self):
        where = []
        if self.app is not None:
            where.append(f"app {self.app}")
        if self.instance is not None:
            where.append(f"instance {self.instance}")
        if self.time is not None:
            where.append(f"t={self.time:.9g}")
        return f"{self.kind}: {self.detail} ({', '.join(where)})"


# -- metrics ----------------------------------------------------------------

def periodic_efficiency(pattern: Pattern, k: int) -> float:
    sch = pattern.schedules[k]
    return sch.count * sch.app.w / pattern.T


def work(scenario: Scenario, counts: Sequence[int]) -> float:
    """Weighted work ``sum p*l*w`` done in one period."""
    return math.fsum(a.p * l * a.w for a, l in zip(scenario.apps, counts))


def syseff_of(scenario: Scenario, counts: Sequence[int], T: float) -> float:
    return work(scenario, counts) / (scenario.platform.N * T)


def dilation_of(scenario: Scenario, counts: Sequence[int], T: float) -> float:
    worst = 1.0
    for a, l in zip(scenario.apps, counts):
        if l == 0:
            return math.inf
        worst = max(worst, optimal_efficiency(a, scenario.platform) * T / (l * a.w))
    return worst


def syseff(pattern: Pattern) -> float:
    return syseff_of(pattern.scenario, pattern.counts(), pattern.T)


def dilation(pattern: Pattern) -> float:
    """Worst ratio between optimal and periodic efficiency; ``inf`` if an application is missing."""
    return dilation_of(pattern.scenario, pattern.counts(), pattern.T)


def metrics_of(scenario: Scenario, counts: Sequence[int], T: float) -> ScheduleMetrics:
    return ScheduleMetrics(
        T=T,
        counts=tuple(int(c) for c in counts),
        rho_tilde=tuple(l * a.w / T for a, l in zip(scenario.apps, counts)),
        syseff=syseff_of(scenario, counts, T),
        dilation=dilation_of(scenario, counts, T),
    )


def metrics(pattern: Pattern) -> ScheduleMetrics:
    return metrics_of(pattern.scenario, pattern.counts(), pattern.T)


# -- feasibility ------------------------------------------------------------

def validate(pattern: Pattern) -> list[Violation]:
    """All feasibility violations of a pattern; an empty list means the pattern is valid."""
    T = pattern.T
    pf = pattern.scenario.platform
    teps = time_eps(T)
    out: list[Violation] = []

    all_segs = []
    for sch in pattern.schedules:
        app = sch.app
        cap = app_bandwidth(app, pf)
        for i, inst in enumerate(sch.instances):
            for s in inst.segments:
                all_segs.append(s)
                if s.rate < 0 or s.rate > cap + RATE_EPS:
                    out.append(Violation("rate", app.id, i, s.start, f"rate {s.rate:.9g} outside [0, {cap:.9g}]"))
                if s.duration < 0:
                    out.append(Violation("overlap", app.id, i, s.start, "negative duration"))
            vol = inst.volume
            if abs(vol - app.vol) > VOL_RTOL * app.vol + 1e-9:
                out.append(Violation("volume", app.id, i, inst.io_start, f"transfers {vol:.9g} GB, needs {app.vol:.9g}"))
            # segments must sit inside [io_start, io_end] in traversal order, without overlap
            pos = 0.0
            for s in inst.segments:
                off = (s.start - inst.io_start) % T
                if off > T - teps:
                    off = 0.0
                if off < pos - teps:
                    out.append(Violation("overlap", app.id, i, s.start, "segments out of order or overlapping"))
                pos = off + s.duration
            if pos > inst.span + teps:
                out.append(Violation("overlap", app.id, i, inst.io_start, "segment beyond instance end"))
        # cyclic chain of instances with room for the compute phase in every gap
        l = sch.count
        if l:
            base = sch.instances[0].io_start
            starts = [(inst.io_start - base) % T for inst in sch.instances]
            for i, inst in enumerate(sch.instances):
                end = starts[i] + inst.span
                nxt = starts[i + 1] if i + 1 < l else T
                gap = nxt - end
                if gap < app.w - teps:
                    kind = "gap" if gap >= -teps else "overlap"
                    out.append(Violation(kind, app.id, i, (base + end) % T,
                                         f"cyclic gap {gap:.9g} s shorter than compute time {app.w:.9g} s"))

    recomputed = StepProfile.from_segments(T, pf.B, all_segs)
    for a, b, v in recomputed.pieces():
        if b - a <= teps:
            # rounding slivers where two transfers meet
            continue
        if v > pf.B + CAP_EPS:
            out.append(Violation("capacity", None, None, a, f"used {v:.12g} GB/s exceeds B={pf.B:.12g}"))
        elif v < -CAP_EPS:
            out.append(Violation("capacity", None, None, a, f"negative usage {v:.12g}"))
    probe = sorted(set(recomputed.breakpoints) | set(pattern.usage.breakpoints))
    for t in probe:
        if abs(recomputed.used(t) - pattern.usage.used(t)) > 1e-7:
            out.append(Violation("usage", None, None, t, "stored usage profile disagrees with segments"))
            break
    return out


# -- schedulability ---------------------------------------------------------

def insertion_window(pattern: Pattern, k: int) -> CyclicWindow | None:
    """Window left for one more instance of an application that already has one.

    Runs from the last instance's I/O end plus ``w`` to the first instance's
    I/O start minus ``w``; ``None`` when that window is empty.
    """
    sch = pattern.schedules[k]
    T = pattern.T
    last = sch.instances[-1]
    occ = sch.occupied(T)
    length = T - occ - 2.0 * sch.app.w
    if length <= 0.0:
        return None
    ws = (last.io_start + last.span) % T + sch.app.w
    if ws >= T:
        ws -= T
    return CyclicWindow(ws, length)


def first_instance_windows(pattern: Pattern, k: int) -> list[CyclicWindow]:
    """Candidate windows for a first instance: one starting at every event, each ``T - w`` long."""
    length = pattern.T - pattern.schedules[k].app.w
    if length <= 0:
        return []
    return [CyclicWindow(e, length) for e in pattern.usage.breakpoints]


def is_schedulable(pattern: Pattern, k: int) -> bool:
    """Whether one more instance of application ``k`` fits without moving anything."""
    sch = pattern.schedules[k]
    app = sch.app
    T = pattern.T
    cap = app_bandwidth(app, pattern.scenario.platform)
    if app.vol <= 0:
        if sch.count == 0:
            return T - app.w >= -time_eps(T)
        return T - sch.occupied(T) - 2.0 * app.w >= -time_eps(T)
    need = app.vol * (1.0 - VOL_RTOL)
    if sch.count == 0:
        return any(integrate_capped(pattern.usage, win, cap) >= need
                   for win in first_instance_windows(pattern, k))
    win = insertion_window(pattern, k)
    return win is not None and integrate_capped(pattern.usage, win, cap) >= need


# -- serialisation ----------------------------------------------------------

def pattern_to_dict(pattern: Pattern) -> dict:
    return {
        "T": pattern.T,
        "scenario": pattern.scenario.to_dict(),
        "apps": [
            {
                "id": sch.app.id,
                "instances": [
                    {
                        "io_start": inst.io_start,
                        "span": inst.span,
                        "segments": [{"start": s.start, "duration": s.duration, "rate": s.rate}
                                     for s in inst.segments],
                    }
                    for inst in sch.instances
                ],
            }
            for sch in pattern.schedules
        ],
    }


def pattern_from_dict(doc: dict, scenario: Scenario | None = None) -> Pattern:
    from .model import parse_scenario

    if scenario is None:
        scenario = parse_scenario(json.dumps(doc["scenario"]))
    by_id = {a["id"]: a for a in doc["apps"]}
    insts = []
    for app in scenario.apps:
        entry = by_id.get(app.id, {"instances": []})
        insts.append([
            InstanceSchedule(
                i.get("io_start", i["segments"][0]["start"] if i["segments"] else 0.0),
                i.get("span", 0.0),
                tuple(Segment(s["start"], s["duration"], s["rate"]) for s in i["segments"]),
            )
            for i in entry["instances"]
        ])
    return Pattern.from_instances(scenario, float(doc["T"]), insts)
