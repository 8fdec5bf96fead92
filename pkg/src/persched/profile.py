"""Cyclic piecewise-constant bandwidth profiles over a period ``[0, T)``.

A profile stores the aggregate bandwidth used by all scheduled transfers.
Every operation is exact over the pieces (no time discretisation) and returns
a new profile; profiles are never mutated.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

# Rates below this are treated as no bandwidth at all.
RATE_EPS = 1e-9
# Slack allowed on the global capacity.
CAP_EPS = 1e-9
# Relative slack on a transferred volume.
VOL_RTOL = 1e-6
# Values closer than this are merged when canonicalising.
VALUE_EPS = 1e-12


def time_eps(period: float) -> float:
    """Absolute time tolerance for a given period (1e-9 s, scaled up for long periods)."""
    return 1e-9 * max(1.0, period)


class CapacityExceeded(ValueError):
    def __init__(self, time: float, used: float, capacity: float):
        super().__init__(f"bandwidth {used:.12g} exceeds capacity {capacity:.12g} at t={time:.12g}")
        self.time = time
        self.used = used
        self.capacity = capacity


@dataclass(frozen=True)
class Segment:
    """A transfer at constant aggregate ``rate`` during ``[start, start + duration)``.

    ``start`` lies in ``[0, T)``; a segment may run past ``T`` and then wraps.
    """

    start: float
    duration: float
    rate: float

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def volume(self) -> float:
        return self.duration * self.rate


@dataclass(frozen=True)
class CyclicWindow:
    start: float
    length: float

    def __post_init__(self):
        if self.length < 0:
            raise ValueError(f"window length must be >= 0, got {self.length}")


def _linear_parts(start: float, length: float, period: float) -> list[tuple[float, float]]:
    """Unroll a cyclic interval into at most two linear intervals inside ``[0, period]``."""
    start = math.fmod(start, period)
    if start < 0:
        start += period
    length = min(length, period)
    end = start + length
    if end <= period:
        return [(start, end)] if length > 0 else []
    return [(start, period), (0.0, end - period)]


@dataclass(frozen=True)
class StepProfile:
    period: float
    capacity: float
    breakpoints: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be > 0")
        if len(self.breakpoints) != len(self.values) or not self.breakpoints or self.breakpoints[0] != 0.0:
            raise ValueError("breakpoints must start at 0 and match values")

    @classmethod
    def empty(cls, period: float, capacity: float) -> "StepProfile":
        return cls(period, capacity)

    # -- queries ---------------------------------------------------------

    def _index(self, t: float) -> int:
        return bisect_right(self.breakpoints, t) - 1

    def used(self, t: float) -> float:
        t = math.fmod(t, self.period)
        if t < 0:
            t += self.period
        return self.values[self._index(t)]

    def piece_end(self, i: int) -> float:
        return self.breakpoints[i + 1] if i + 1 < len(self.breakpoints) else self.period

    def pieces(self) -> Iterator[tuple[float, float, float]]:
        """Yield ``(start, end, used)`` for every piece, in time order."""
        for i, v in enumerate(self.values):
            yield self.breakpoints[i], self.piece_end(i), v

    def pieces_in(self, window: CyclicWindow) -> Iterator[tuple[float, float, float, float]]:
        """Yield ``(local_start, local_end, offset, used)`` over the window, in traversal order.

        ``offset`` is the distance from the window start to ``local_start``.
        """
        offset = 0.0
        for lo, hi in _linear_parts(window.start, window.length, self.period):
            i = self._index(lo)
            a = lo
            while a < hi:
                b = min(self.piece_end(i), hi)
                if b > a:
                    yield a, b, offset, self.values[i]
                    offset += b - a
                a = b
                i += 1
                if i >= len(self.values):
                    break

    def max_used(self) -> float:
        return max(self.values)

    def isclose(self, other: "StepProfile", tol: float = 1e-9) -> bool:
        if self.period != other.period or len(self.values) != len(other.values):
            return False
        return all(abs(a - b) <= tol for a, b in zip(self.breakpoints, other.breakpoints)) and all(
            abs(a - b) <= tol for a, b in zip(self.values, other.values))

    # -- construction ----------------------------------------------------

    def overlay(self, segments: Iterable[Segment], sign: float = 1.0) -> "StepProfile":
        """Superpose (or with ``sign=-1`` remove) segment rates, without any capacity check."""
        deltas: dict[float, float] = {}
        for seg in segments:
            if seg.duration <= 0 or seg.rate == 0:
                continue
            for lo, hi in _linear_parts(seg.start, seg.duration, self.period):
                deltas[lo] = deltas.get(lo, 0.0) + sign * seg.rate
                if hi < self.period:
                    deltas[hi] = deltas.get(hi, 0.0) - sign * seg.rate
        if not deltas:
            return self
        times = sorted(set(self.breakpoints).union(deltas))
        bps: list[float] = []
        vals: list[float] = []
        extra = 0.0
        for t in times:
            extra += deltas.get(t, 0.0)
            v = self.values[self._index(t)] + extra
            if abs(v) < VALUE_EPS:
                v = 0.0
            if vals and abs(vals[-1] - v) <= VALUE_EPS:
                continue
            bps.append(t)
            vals.append(v)
        return StepProfile(self.period, self.capacity, tuple(bps), tuple(vals))

    @classmethod
    def from_segments(cls, period: float, capacity: float, segments: Iterable[Segment]) -> "StepProfile":
        return cls.empty(period, capacity).overlay(segments)


def residual(profile: StepProfile, t: float) -> float:
    return max(0.0, profile.capacity - profile.used(t))


def integrate_capped(profile: StepProfile, window: CyclicWindow, cap: float) -> float:
    """Integral of ``min(cap, residual)`` over the window.

    Pieces no wider than the time tolerance are rounding slivers and count as unusable.
    """
    teps = time_eps(profile.period)
    total = 0.0
    for a, b, _, v in profile.pieces_in(window):
        avail = min(cap, profile.capacity - v)
        if avail > RATE_EPS and b - a > teps:
            total += (b - a) * avail
    return total


def greedy_fill(profile: StepProfile, window: CyclicWindow, cap: float, vol: float) -> list[Segment] | None:
    """Place ``vol`` earliest-first at rate ``min(cap, residual)``; ``None`` when it does not fit.

    Intervals without bandwidth (or narrower than the time tolerance) are
    skipped, so the result may be non-contiguous.  Contiguous pieces with equal
    rates are merged (never across ``T``).
    """
    if vol <= 0:
        return []
    teps = time_eps(profile.period)
    left = vol
    segs: list[Segment] = []
    for a, b, _, v in profile.pieces_in(window):
        avail = min(cap, profile.capacity - v)
        if avail <= RATE_EPS or b - a <= teps:
            continue
        need = left / avail
        if need <= b - a:
            segs.append(Segment(a, min(a + need, b) - a, avail))
            left = 0.0
            break
        segs.append(Segment(a, b - a, avail))
        left -= (b - a) * avail
    if left > VOL_RTOL * vol:
        return None
    return merge_segments(segs)


def merge_segments(segs: Sequence[Segment]) -> list[Segment]:
    out: list[Segment] = []
    for s in segs:
        if out and out[-1].rate == s.rate and out[-1].end == s.start:
            out[-1] = Segment(out[-1].start, s.end - out[-1].start, s.rate)
        else:
            out.append(s)
    return out


def add_usage(profile: StepProfile, segments: Sequence[Segment]) -> StepProfile:
    out = profile.overlay(segments)
    for a, _, v in out.pieces():
        if v > out.capacity + CAP_EPS:
            raise CapacityExceeded(a, v, out.capacity)
    return out


def remove_usage(profile: StepProfile, segments: Sequence[Segment]) -> StepProfile:
    return profile.overlay(segments, sign=-1.0)


def events_in(profile: StepProfile, window: CyclicWindow) -> list[float]:
    """Breakpoints met while traversing the window, including both ends.

    Times are unrolled: they start at ``window.start`` and increase up to
    ``window.start + window.length``, so a window crossing ``T`` reports
    values beyond ``T``.
    """
    base = window.start
    out = [base]
    prev = None
    for a, _, off, v in profile.pieces_in(window):
        if prev is not None and v != prev and off > 0:
            out.append(base + off)
        prev = v
    if window.length > 0:
        out.append(base + window.length)
    return out
