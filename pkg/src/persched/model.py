"""Platform and application model, scenario catalog and the analytic upper bound.

Units are fixed throughout the package: seconds, GB and GB/s.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class ScenarioNotFound(KeyError):
    """Raised when a catalog name does not exist."""


class ScenarioParseError(ValueError):
    """Raised for malformed scenario files; carries the offending field and line."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class Platform:
    N: int
    b: float
    B: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not self.B > 0:
            raise ValueError(f"B must be > 0, got {self.B}")


@dataclass(frozen=True)
class ApplicationSpec:
    id: str
    p: int
    w: float
    vol: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"{self.id}: p must be an integer >= 1, got {self.p}")
        if not self.w > 0:
            raise ValueError(f"{self.id}: w must be > 0, got {self.w}")
        if not self.vol >= 0:
            raise ValueError(f"{self.id}: vol must be >= 0, got {self.vol}")


def app_bandwidth(app: ApplicationSpec, platform: Platform) -> float:
    """Largest aggregate rate the application can ever use, ``min(p*b, B)``."""
    return min(app.p * platform.b, platform.B)


def min_io_time(app: ApplicationSpec, platform: Platform) -> float:
    if app.vol == 0:
        return 0.0
    return app.vol / app_bandwidth(app, platform)


def optimal_efficiency(app: ApplicationSpec, platform: Platform) -> float:
    """Efficiency of the application when it runs alone on the platform."""
    return app.w / (app.w + min_io_time(app, platform))


@dataclass(frozen=True)
class DerivedApp:
    tio: float
    rho: float

    @classmethod
    def of(cls, app: ApplicationSpec, platform: Platform) -> "DerivedApp":
        return cls(min_io_time(app, platform), optimal_efficiency(app, platform))


@dataclass(frozen=True)
class Scenario:
    platform: Platform
    apps: tuple[ApplicationSpec, ...]
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))
        if not self.apps:
            raise ValueError("a scenario needs at least one application")
        ids = [a.id for a in self.apps]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate application ids in {ids}")
        used = sum(a.p for a in self.apps)
        if used > self.platform.N:
            raise ValueError(f"applications use {used} processors, platform has {self.platform.N}")

    def derived(self) -> list[DerivedApp]:
        return [DerivedApp.of(a, self.platform) for a in self.apps]

    def t_min(self) -> float:
        """Smallest period holding one instance of every application."""
        return max(a.w + min_io_time(a, self.platform) for a in self.apps)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "platform": {"N": self.platform.N, "b": self.platform.b, "B": self.platform.B},
            "apps": [{"id": a.id, "p": a.p, "w": a.w, "vol": a.vol} for a in self.apps],
        }


def upper_bound_syseff(scenario: Scenario) -> float:
    """System efficiency reached if every application ran at its optimal efficiency."""
    pf = scenario.platform
    return math.fsum(a.p * optimal_efficiency(a, pf) for a in scenario.apps) / pf.N


# Experimental platform: 640 cores, 0.01 GB/s per core, 3 GB/s to storage.
CATALOG_PLATFORM = Platform(N=640, b=0.01, B=3.0)

# Unscaled application profiles: (name, w, vol, p).
RAW_APPS = {
    "T1": ("Turbulence1", 70.0, 128.2, 32768),
    "T2": ("Turbulence2", 1.2, 235.8, 4096),
    "AP": ("AstroPhysics", 240.0, 423.4, 8192),
    "PP": ("PlasmaPhysics", 7554.0, 34304.0, 32768),
}

# Processor counts are divided by this factor to fit 640 cores, compute time multiplied by it.
SCALE = 64

# Number of (T1, T2, AP, PP) launched together in each set; each set uses exactly 640 cores.
CATALOG_SETS = {
    "set1": (0, 10, 0, 0),
    "set2": (0, 8, 1, 0),
    "set3": (0, 6, 2, 0),
    "set4": (0, 4, 3, 0),
    "set5": (0, 2, 0, 1),
    "set6": (0, 2, 4, 0),
    "set7": (1, 2, 0, 0),
    "set8": (0, 0, 1, 1),
    "set9": (0, 0, 5, 0),
    "set10": (1, 0, 1, 0),
}


def scaled_app(kind: str, app_id: str | None = None) -> ApplicationSpec:
    _, w, vol, p = RAW_APPS[kind]
    return ApplicationSpec(id=app_id or kind, p=p // SCALE, w=w * SCALE, vol=vol)


def raw_app(kind: str, app_id: str | None = None) -> ApplicationSpec:
    _, w, vol, p = RAW_APPS[kind]
    return ApplicationSpec(id=app_id or kind, p=p, w=w, vol=vol)


def catalog_names() -> list[str]:
    return list(CATALOG_SETS) + [f"raw:{k}" for k in RAW_APPS]


def catalog_scenario(name: str) -> Scenario:
    if name in CATALOG_SETS:
        apps = []
        for kind, count in zip(("T1", "T2", "AP", "PP"), CATALOG_SETS[name]):
            for i in range(count):
                apps.append(scaled_app(kind, f"{kind}-{i + 1}" if count > 1 else kind))
        return Scenario(CATALOG_PLATFORM, tuple(apps), name=name)
    if name.startswith("raw:") and name[4:] in RAW_APPS:
        # a single unscaled application, on a platform big enough to host it
        app = raw_app(name[4:])
        return Scenario(Platform(N=app.p, b=CATALOG_PLATFORM.b, B=CATALOG_PLATFORM.B), (app,), name=name)
    raise ScenarioNotFound(f"unknown scenario {name!r}; known: {', '.join(catalog_names())}")


def _line_of(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def parse_scenario(text: str, name: str = "custom") -> Scenario:
    """Parse the JSON scenario format ``{platform: {N, b, B}, apps: [{id, p, w, vol}, ...]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError("top level must be an object", line=1)

    def get(obj, key, where, kind):
        if not isinstance(obj, dict) or key not in obj:
            raise ScenarioParseError(f"missing {where}.{key}", field=f"{where}.{key}", line=_line_of(text, f'"{where.split(".")[-1].split("[")[0]}"'))
        val = obj[key]
        if kind is str:
            return str(val)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ScenarioParseError(f"{where}.{key} must be a number", field=f"{where}.{key}", line=_line_of(text, f'"{key}"'))
        if kind is int and int(val) != val:
            raise ScenarioParseError(f"{where}.{key} must be an integer", field=f"{where}.{key}", line=_line_of(text, f'"{key}"'))
        return kind(val)

    pf = doc.get("platform")
    try:
        platform = Platform(get(pf, "N", "platform", int), get(pf, "b", "platform", float), get(pf, "B", "platform", float))
    except ScenarioParseError:
        raise
    except ValueError as exc:
        raise ScenarioParseError(str(exc), field="platform", line=_line_of(text, '"platform"')) from exc

    raw_apps = doc.get("apps")
    if not isinstance(raw_apps, list) or not raw_apps:
        raise ScenarioParseError("apps must be a non-empty list", field="apps", line=_line_of(text, '"apps"'))
    apps = []
    for i, entry in enumerate(raw_apps):
        where = f"apps[{i}]"
        try:
            apps.append(ApplicationSpec(
                id=get(entry, "id", where, str),
                p=get(entry, "p", where, int),
                w=get(entry, "w", where, float),
                vol=get(entry, "vol", where, float),
            ))
        except ScenarioParseError:
            raise
        except ValueError as exc:
            raise ScenarioParseError(str(exc), field=where, line=_line_of(text, f'"{entry.get("id")}"') if isinstance(entry, dict) else None) from exc
    try:
        return Scenario(platform, tuple(apps), name=str(doc.get("name", name)))
    except ValueError as exc:
        raise ScenarioParseError(str(exc), field="apps") from exc


def load_scenario(source: str | Path) -> Scenario:
    """Load a catalog scenario by name (``set1``..``set10``, ``raw:T1``...) or a JSON file."""
    src = str(source)
    if src in CATALOG_SETS or src.startswith("raw:"):
        return catalog_scenario(src)
    path = Path(src)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ScenarioNotFound(f"unknown scenario {src!r}: no such file")
        return parse_scenario(path.read_text(), name=path.stem)
    return catalog_scenario(src)


def make_scenario(platform: Platform, apps: Iterable[ApplicationSpec] | Sequence[tuple], name: str = "custom") -> Scenario:
    built = []
    for i, a in enumerate(apps):
        if isinstance(a, ApplicationSpec):
            built.append(a)
        else:
            p, w, vol = a
            built.append(ApplicationSpec(id=f"A{i}", p=p, w=w, vol=vol))
    return Scenario(platform, tuple(built), name=name)
