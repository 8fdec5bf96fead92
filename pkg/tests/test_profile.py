import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from persched.profile import (
    CapacityExceeded,
    CyclicWindow,
    Segment,
    StepProfile,
    add_usage,
    events_in,
    greedy_fill,
    integrate_capped,
    remove_usage,
    residual,
)

B = 3.0


def prof(T, *segs):
    return StepProfile.from_segments(T, B, [Segment(*s) for s in segs])


def test_residual_examples():
    assert residual(StepProfile.empty(100, B), 42.0) == 3.0
    assert residual(prof(100, (0, 10, 3)), 5) == 0.0
    assert residual(prof(100, (0, 10, 0.64), (5, 10, 1.28)), 7) == pytest.approx(1.08)


def test_integrate_capped_examples():
    assert integrate_capped(StepProfile.empty(1000, B), CyclicWindow(0, 100), 0.64) == pytest.approx(64)
    assert integrate_capped(prof(1000, (0, 50, 3)), CyclicWindow(0, 100), 0.64) == pytest.approx(32)
    assert integrate_capped(prof(1000, (0, 50, 3)), CyclicWindow(10, 0), 0.64) == 0.0


def test_greedy_fill_examples():
    segs = greedy_fill(StepProfile.empty(1000, B), CyclicWindow(0, 400), 0.64, 235.8)
    assert len(segs) == 1
    assert segs[0].start == 0 and segs[0].duration == pytest.approx(368.4375) and segs[0].rate == 0.64
    segs = greedy_fill(prof(1000, (0, 50, 3)), CyclicWindow(0, 100), 3.0, 75.0)
    assert [(s.start, s.duration, s.rate) for s in segs] == [(50, pytest.approx(25), 3.0)]
    assert greedy_fill(StepProfile.empty(10, B), CyclicWindow(0, 5), 1.0, 0.0) == []
    assert greedy_fill(StepProfile.empty(10, B), CyclicWindow(0, 5), 1.0, 6.0) is None


def test_add_usage_examples():
    p = add_usage(StepProfile.empty(100, B), [Segment(0, 10, 3)])
    assert p.used(0) == 3 and p.used(9.99) == 3 and p.used(10) == 0
    p = add_usage(prof(100, (0, 10, 2)), [Segment(5, 10, 1)])
    assert (p.used(2), p.used(7), p.used(12), p.used(16)) == (2, 3, 1, 0)
    with pytest.raises(CapacityExceeded) as err:
        add_usage(prof(100, (0, 10, 3)), [Segment(0, 1, 0.1)])
    assert err.value.time == 0


def test_segment_wrapping_the_period():
    p = prof(100, (90, 20, 1.5))
    assert p.used(95) == 1.5 and p.used(5) == 1.5 and p.used(10) == 0 and p.used(50) == 0


def test_events_in_examples():
    assert events_in(StepProfile.empty(30, B), CyclicWindow(0, 30)) == [0, 30]
    assert events_in(prof(30, (10, 10, 1)), CyclicWindow(0, 30)) == [0, 10, 20, 30]
    # wrapping window over a segment crossing T: times are unrolled in traversal order
    got = events_in(prof(100, (95, 10, 1)), CyclicWindow(90, 20))
    assert got == [90, 95, 105, 110]


# -- properties ----------------------------------------------------------------

@st.composite
def profiles(draw):
    T = draw(st.floats(10, 1000))
    n = draw(st.integers(0, 6))
    segs = []
    p = StepProfile.empty(T, B)
    for _ in range(n):
        s = Segment(draw(st.floats(0, T, exclude_max=True)), draw(st.floats(0.01, T)), draw(st.floats(0.05, 1.5)))
        try:
            p = add_usage(p, [s])
            segs.append(s)
        except CapacityExceeded:
            pass
    return p, segs


windows = st.tuples(st.floats(0, 1, exclude_max=True), st.floats(0, 1))


@given(profiles(), windows, st.floats(0.05, 3.0))
def test_integral_matches_riemann_sum(pw, win, cap):
    p, _ = pw
    T = p.period
    w = CyclicWindow(win[0] * T, win[1] * T)
    exact = integrate_capped(p, w, cap)
    step = 1e-3 * T
    n = int(math.floor(w.length / step))
    ts = w.start + (np.arange(n) + 0.5) * step
    approx = sum(max(0.0, min(cap, B - p.used(t))) for t in ts) * step
    rest = w.length - n * step
    if rest > 0:
        approx += max(0.0, min(cap, B - p.used(w.start + n * step + rest / 2))) * rest
    # each breakpoint can misplace at most one Riemann cell
    slack = (2 * len(p.breakpoints) + 2) * step * min(cap, B)
    assert abs(exact - approx) <= max(1e-4 * exact, slack)


@given(profiles(), windows, st.floats(0.05, 3.0), st.floats(0.01, 1.0))
def test_greedy_fill_consistent_with_integral(pw, win, cap, frac):
    p, _ = pw
    T = p.period
    w = CyclicWindow(win[0] * T, win[1] * T)
    avail = integrate_capped(p, w, cap)
    assume(avail > 1e-6)
    vol = frac * avail
    segs = greedy_fill(p, w, cap, vol)
    assert segs is not None
    assert math.fsum(s.volume for s in segs) == pytest.approx(vol, rel=1e-6, abs=1e-9 * vol)
    assert all(s.rate <= cap + 1e-12 for s in segs)
    after = add_usage(p, segs)  # raises if the placement overflows B
    assert after.max_used() <= B + 1e-9
    full = greedy_fill(p, w, cap, avail)
    assert full is not None and math.fsum(s.volume for s in full) == pytest.approx(avail, rel=1e-9, abs=1e-12)
    assert greedy_fill(p, w, cap, avail * 1.01 + 1e-3) is None


@given(profiles(), st.floats(0, 1, exclude_max=True), st.floats(0.01, 1), st.floats(0.01, 1.0))
def test_add_then_remove_is_identity(pw, a, d, r):
    p, _ = pw
    T = p.period
    s = Segment(a * T, d * T, r)
    try:
        q = add_usage(p, [s])
    except CapacityExceeded:
        return
    back = remove_usage(q, [s])
    assert back.isclose(p, tol=1e-9)


@given(profiles())
def test_profile_is_canonical(pw):
    p, _ = pw
    assert all(abs(a - b) > 1e-12 for a, b in zip(p.values, p.values[1:]))
    assert list(p.breakpoints) == sorted(p.breakpoints)
