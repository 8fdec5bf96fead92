import io

import numpy as np
import pytest

from persched.engine import build_pattern, persched
from persched.model import ApplicationSpec, Platform, Scenario, catalog_scenario, optimal_efficiency
from persched.pattern import Pattern, InstanceSchedule, metrics
from persched.profile import Segment
from persched.simulate import (
    actual_efficiency,
    check_trace,
    completion_efficiency,
    fair_share_baseline,
    unroll,
    write_trace_csv,
)

T2 = ApplicationSpec("T2", 64, 76.8, 235.8)
TIO = 368.4375
ONE = Scenario(Platform(64, 0.01, 3.0), (T2,))


def tight():
    T = 76.8 + TIO
    return build_pattern(ONE, T).rotated(76.8)


def test_single_tight_instance_one_period():
    tr = unroll(tight(), 1)
    assert tr.apps[0].count == 1
    assert completion_efficiency(tr, 0) == pytest.approx(optimal_efficiency(T2, ONE.platform), rel=1e-12)
    assert check_trace(tr) == []


def test_actual_efficiency_hand_count():
    # w=10, 10 GB at 1 GB/s: transfers on [10,20), [30,40), [50,60)
    app = ApplicationSpec("a", 1, 10.0, 10.0)
    sc = Scenario(Platform(1, 1.0, 1.0), (app,))
    p = Pattern.from_instances(sc, 20.0, [[InstanceSchedule(10.0, 10.0, (Segment(10.0, 10.0, 1.0),))]])
    tr = unroll(p, 3)
    assert list(tr.apps[0].io_end) == [20, 40, 60]
    assert actual_efficiency(tr, 0, 20.0) == pytest.approx(0.5)
    assert actual_efficiency(tr, 0, 35.0) == pytest.approx(10 / 35)
    assert actual_efficiency(tr, 0, 60.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        actual_efficiency(tr, 0, 0.0)


def test_unroll_rejects_zero_periods():
    with pytest.raises(ValueError):
        unroll(tight(), 0)


@pytest.mark.parametrize("name", ["set1", "set3", "set7", "set10"])
def test_unroll_converges(name):
    res = persched(catalog_scenario(name))
    rt = metrics(res.pattern).rho_tilde
    prev = None
    for n in (10, 100, 1000):
        tr = unroll(res.pattern, n)
        assert check_trace(tr) == []
        err = max(abs(completion_efficiency(tr, k) - r) / r for k, r in enumerate(rt))
        assert err <= 2.0 / n
        if prev is not None:
            assert err <= prev
        prev = err


def test_conservation_in_unrolled_trace():
    tr = unroll(build_pattern(catalog_scenario("set4"), 50000.0), 5)
    for at in tr.apps:
        assert np.allclose(at.volumes(), at.app.vol, rtol=1e-6)


def test_baseline_alone_has_no_slowdown():
    tr, m = fair_share_baseline(ONE, 50000.0)
    assert m.slowdown[0] == pytest.approx(0.0, abs=1e-12)
    assert m.efficiency[0] == pytest.approx(optimal_efficiency(T2, ONE.platform), rel=1e-9)
    assert check_trace(tr) == []


def test_baseline_without_congestion():
    a = ApplicationSpec("a", 100, 50.0, 20.0)
    b = ApplicationSpec("b", 100, 80.0, 30.0)
    sc = Scenario(Platform(200, 0.01, 3.0), (a, b))  # 1 + 1 GB/s <= 3
    tr, m = fair_share_baseline(sc, 10000.0)
    assert m.slowdown == pytest.approx((0.0, 0.0), abs=1e-12)
    assert check_trace(tr) == []


def test_baseline_set1_closed_form():
    sc = catalog_scenario("set1")
    tr, m = fair_share_baseline(sc, 100000.0)
    # ten synchronised copies share 3 GB/s: 0.3 GB/s each, 786 s per transfer
    assert m.syseff == pytest.approx(76.8 / (76.8 + 235.8 / 0.3), abs=1e-9)
    assert m.syseff == pytest.approx(0.0890, abs=5e-4)
    assert m.slowdown[0] == pytest.approx(1 - 0.3 / 0.64)
    assert check_trace(tr) == []


def test_check_trace_detects_overload():
    sc = catalog_scenario("set9")
    p = build_pattern(sc, sc.t_min())
    # pile every transfer onto the same instant
    stacked = Pattern.from_instances(sc, p.T, [[InstanceSchedule(0.0, i.span, tuple(Segment(0.0, s.duration, s.rate) for s in i.segments))
                                                for i in sch.instances] for sch in p.schedules])
    assert any("exceeds B" in msg for msg in check_trace(unroll(stacked.rotated(20000.0 % p.T), 2)))


def test_trace_csv():
    tr = unroll(tight(), 2)
    buf = io.StringIO()
    write_trace_csv(tr, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "app,instance,compute_start,io_start,io_end,bytes"
    assert lines[1] == "T2,0,0,76.8,445.2375,235.8"
    assert len(lines) == 3
