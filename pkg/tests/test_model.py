import json

import pytest
from hypothesis import given, strategies as st

from persched.model import (
    CATALOG_PLATFORM,
    ApplicationSpec,
    Platform,
    Scenario,
    ScenarioNotFound,
    ScenarioParseError,
    app_bandwidth,
    catalog_names,
    catalog_scenario,
    load_scenario,
    min_io_time,
    optimal_efficiency,
    parse_scenario,
    upper_bound_syseff,
)

T1 = ApplicationSpec("T1", 512, 4480.0, 128.2)
T2 = ApplicationSpec("T2", 64, 76.8, 235.8)
AP = ApplicationSpec("AP", 128, 15360.0, 423.4)


def test_min_io_time_hand_values():
    assert min_io_time(T2, CATALOG_PLATFORM) == pytest.approx(235.8 / 0.64, rel=1e-12)
    assert min_io_time(T2, CATALOG_PLATFORM) == pytest.approx(368.4375, rel=1e-12)
    # 512 cores could push 5.12 GB/s, the shared link caps at 3
    assert min_io_time(T1, CATALOG_PLATFORM) == pytest.approx(128.2 / 3.0, rel=1e-12)
    assert min_io_time(ApplicationSpec("z", 8, 1.0, 0.0), CATALOG_PLATFORM) == 0.0


def test_optimal_efficiency_hand_values():
    assert optimal_efficiency(T2, CATALOG_PLATFORM) == pytest.approx(76.8 / (76.8 + 368.4375), rel=1e-12)
    assert optimal_efficiency(T2, CATALOG_PLATFORM) == pytest.approx(0.172492, abs=1e-6)
    assert optimal_efficiency(AP, CATALOG_PLATFORM) == pytest.approx(15360 / (15360 + 330.78125), rel=1e-12)
    assert optimal_efficiency(AP, CATALOG_PLATFORM) == pytest.approx(0.978919, abs=1e-6)
    assert optimal_efficiency(ApplicationSpec("z", 8, 1.0, 0.0), CATALOG_PLATFORM) == 1.0


def test_catalog_contents():
    s1 = catalog_scenario("set1")
    assert len(s1.apps) == 10 and all((a.p, a.w, a.vol) == (64, 76.8, 235.8) for a in s1.apps)
    s5 = catalog_scenario("set5")
    assert sorted(a.id for a in s5.apps) == ["PP", "T2-1", "T2-2"]
    pp = next(a for a in s5.apps if a.id == "PP")
    assert (pp.p, pp.w, pp.vol) == (512, 7554.0 * 64, 34304.0)
    with pytest.raises(ScenarioNotFound):
        catalog_scenario("setX")


@pytest.mark.parametrize("name", [f"set{i}" for i in range(1, 11)])
def test_catalog_sets_fill_the_machine(name):
    assert sum(a.p for a in catalog_scenario(name).apps) == 640


@pytest.mark.parametrize("name,expected", [("set1", 0.172), ("set9", 0.979), ("set10", 0.988)])
def test_upper_bound_examples(name, expected):
    assert upper_bound_syseff(catalog_scenario(name)) == pytest.approx(expected, abs=1e-3)


def test_binding_constraint_exact():
    for name in catalog_names():
        for a in catalog_scenario(name).apps:
            pf = catalog_scenario(name).platform
            assert min_io_time(a, pf) * app_bandwidth(a, pf) == pytest.approx(a.vol, rel=1e-9)


def test_raw_catalog_entries_load():
    sc = load_scenario("raw:T1")
    assert sc.apps[0].p == 32768 and sc.apps[0].w == 70.0
    assert sc.platform.N == 32768


apps_st = st.builds(
    ApplicationSpec,
    id=st.just("x"),
    p=st.integers(1, 64),
    w=st.floats(1e-3, 1e6),
    vol=st.one_of(st.just(0.0), st.floats(1e-3, 1e5)),
)


@given(apps_st)
def test_efficiency_range(app):
    r = optimal_efficiency(app, CATALOG_PLATFORM)
    assert 0 < r <= 1
    assert (r == 1.0) == (app.vol == 0)


@given(st.lists(apps_st, min_size=1, max_size=5), st.randoms())
def test_upper_bound_permutation_invariant(apps, rnd):
    apps = [ApplicationSpec(f"a{i}", a.p, a.w, a.vol) for i, a in enumerate(apps)]
    pf = Platform(sum(a.p for a in apps), 0.01, 3.0)
    shuffled = list(apps)
    rnd.shuffle(shuffled)
    assert upper_bound_syseff(Scenario(pf, apps)) == pytest.approx(upper_bound_syseff(Scenario(pf, shuffled)), rel=1e-12)


def test_scenario_rejects_bad_input():
    with pytest.raises(ValueError):
        Scenario(Platform(10, 0.01, 3), (ApplicationSpec("a", 8, 1, 1), ApplicationSpec("b", 8, 1, 1)))
    with pytest.raises(ValueError):
        Scenario(CATALOG_PLATFORM, (ApplicationSpec("a", 8, 1, 1), ApplicationSpec("a", 8, 1, 1)))
    with pytest.raises(ValueError):
        ApplicationSpec("a", 0, 1, 1)
    with pytest.raises(ValueError):
        Platform(10, 0.0, 3)


def test_parse_scenario_roundtrip(tmp_path):
    sc = catalog_scenario("set7")
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sc.to_dict(), indent=2))
    back = load_scenario(path)
    assert back == sc


def test_parse_errors_carry_field_and_line():
    text = '{\n  "platform": {"N": 640, "b": 0.01, "B": 3},\n  "apps": [\n    {"id": "a", "p": 8, "w": "x", "vol": 1}\n  ]\n}'
    with pytest.raises(ScenarioParseError) as err:
        parse_scenario(text)
    assert err.value.field == "apps[0].w" and err.value.line == 4
    with pytest.raises(ScenarioParseError) as err:
        parse_scenario("{not json")
    assert err.value.line == 1
    with pytest.raises(ScenarioParseError) as err:
        parse_scenario('{"platform": {"N": 640, "b": 0.01, "B": 3}, "apps": []}')
    assert err.value.field == "apps"


def test_missing_file_is_not_found(tmp_path):
    with pytest.raises(ScenarioNotFound):
        load_scenario(tmp_path / "nope.json")
