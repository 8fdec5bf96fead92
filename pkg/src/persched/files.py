"""Run reports, per-application schedule files and CSV writers."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence, TextIO

from .engine import PerschedResult, SweepRow
from .model import Scenario, parse_scenario, upper_bound_syseff
from .pattern import InstanceSchedule, Pattern, validate
from .profile import Segment


class ScheduleFileError(ValueError):
    """Malformed or inconsistent schedule files; the message names file and line."""


@dataclass(frozen=True)
class RunReport:
    scenario: str
    config: dict
    T_opt: float
    apps: list
    syseff: float
    dilation: float
    upper_bound: float
    wall_clock_s: float

    @classmethod
    def from_result(cls, scenario: Scenario, result: PerschedResult, wall: float) -> "RunReport":
        m = result.metrics
        apps = [{"id": a.id, "instances": l, "rho_tilde": rt}
                for a, l, rt in zip(scenario.apps, m.counts, m.rho_tilde)]
        cfg = asdict(result.config)
        cfg.pop("threads", None)
        return cls(scenario.name, cfg, m.T, apps, m.syseff, m.dilation, upper_bound_syseff(scenario), wall)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["dilation"] == float("inf"):
            d["dilation"] = "inf"
        return d


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _exact(x: float) -> str:
    return repr(float(x))


def _safe_name(app_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", app_id)


# -- schedule directories -----------------------------------------------------

def write_schedule_dir(out: Path, pattern: Pattern, report: RunReport) -> list[Path]:
    """Write ``report.json`` and one ``<app>.sched`` file per application.

    Each data line is ``io_start io_end bandwidth_per_processor``; times count
    from the start of the period and run past ``T`` when a transfer wraps.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    doc = report.to_dict()
    doc["scenario_spec"] = pattern.scenario.to_dict()
    doc["T"] = pattern.T
    written = [out / "report.json"]
    _write_text(written[0], json.dumps(doc, indent=2, sort_keys=True) + "\n")
    T = pattern.T
    for sch in pattern.schedules:
        app = sch.app
        lines = [f"# app {app.id}", f"# p {app.p}", f"# w {_exact(app.w)}", f"# vol {_exact(app.vol)}",
                 f"# T {_exact(T)}", "# columns: io_start io_end bandwidth_per_processor (s, s, GB/s)"]
        for i, inst in enumerate(sch.instances):
            lines.append(f"# instance {i}")
            for s in inst.segments:
                a = inst.io_start + (s.start - inst.io_start) % T
                lines.append(f"{_exact(a)} {_exact(a + s.duration)} {_exact(s.rate / app.p)}")
            if not inst.segments:
                lines.append(f"{_exact(inst.io_start)} {_exact(inst.io_start)} 0.0")
        path = out / f"{_safe_name(app.id)}.sched"
        _write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_schedule_dir(directory: Path) -> Pattern:
    """Rebuild the pattern saved by ``write_schedule_dir`` and check it."""
    directory = Path(directory)
    rep = directory / "report.json"
    if not rep.exists():
        raise ScheduleFileError(f"{rep}: missing report.json")
    try:
        doc = json.loads(rep.read_text())
        scenario = parse_scenario(json.dumps(doc["scenario_spec"]), name=doc.get("scenario", "custom"))
        T = float(doc["T"])
    except (KeyError, ValueError) as exc:
        raise ScheduleFileError(f"{rep}: {exc}") from exc

    per_app = []
    markers: dict[tuple[str, int], str] = {}
    for app in scenario.apps:
        path = directory / f"{_safe_name(app.id)}.sched"
        if not path.exists():
            raise ScheduleFileError(f"{path}: missing schedule file for {app.id}")
        insts: list[list[tuple[float, float, float]]] = []
        for no, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.strip()
            where = f"{path}:{no}"
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["instance"]:
                    insts.append([])
                    markers[app.id, len(insts) - 1] = where
                elif parts[:1] == ["p"] and int(parts[1]) != app.p:
                    raise ScheduleFileError(f"{where}: p={parts[1]} disagrees with report ({app.p})")
                elif parts[:1] == ["T"] and abs(float(parts[1]) - T) > 1e-9 * T:
                    raise ScheduleFileError(f"{where}: T={parts[1]} disagrees with report ({T!r})")
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ScheduleFileError(f"{where}: expected 'io_start io_end bandwidth', got {raw!r}")
            try:
                a, b, bw = (float(x) for x in fields)
            except ValueError:
                raise ScheduleFileError(f"{where}: non-numeric value in {raw!r}") from None
            if not insts:
                raise ScheduleFileError(f"{where}: data before the first '# instance' marker")
            if b < a:
                raise ScheduleFileError(f"{where}: io_end {b} before io_start {a}")
            insts[-1].append((a, b, bw))
        built = []
        for i, rows in enumerate(insts):
            if not rows:
                raise ScheduleFileError(f"{markers[app.id, i]}: instance without transfer lines")
            start = rows[0][0]
            segs = tuple(Segment(a % T, b - a, bw * app.p) for a, b, bw in rows if b > a)
            built.append(InstanceSchedule(start % T, rows[-1][1] - start, segs))
        per_app.append(built)
    pattern = Pattern.from_instances(scenario, T, per_app)
    problems = validate(pattern)
    if problems:
        v = problems[0]
        loc = markers.get((v.app, v.instance), str(directory))
        raise ScheduleFileError(f"{loc}: {v}")
    return pattern


# -- CSV ------------------------------------------------------------------------

def write_sweep_csv(rows: Sequence[SweepRow], fh: TextIO) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(["T", "syseff", "dilation"])
    for r in rows:
        wr.writerow([_fmt(r.T), _fmt(r.syseff), _fmt(r.dilation)])


def write_kprime_csv(rows: Sequence[dict], fh: TextIO) -> None:
    cols = ["scenario", "kprime", "syseff", "dilation", "norm_syseff", "norm_dilation"]
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([r["scenario"], _fmt(r["kprime"])] + [_fmt(r[c]) for c in cols[2:]])
