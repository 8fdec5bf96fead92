ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _merged(segments, tol):
    out = []
    for s in segments:
        if out and abs(out[-1][2] - s.rate) <= 1e-9 and abs(out[-1][1] - s.start) <= tol:
            out[-1] = (out[-1][0], s.start + s.duration, s.rate)
        else:
            out.append((s.start, s.start + s.duration, s.rate))
    return out


def pattern_diff(p, q, tol=1e-6):
    """First difference between two patterns, or None when they match within ``tol`` seconds.

    Equal-rate segments separated by less than ``tol`` are compared as one transfer.
    """
    if p.counts() != q.counts():
        return f"counts {p.counts()} != {q.counts()}"
    for a, b in zip(p.schedules, q.schedules):
        for i, (x, y) in enumerate(zip(a.instances, b.instances)):
            where = f"{a.app.id} instance {i}"
            if abs(x.io_start - y.io_start) > tol or abs(x.span - y.span) > tol:
                return f"{where}: start/span {x.io_start}/{x.span} vs {y.io_start}/{y.span}"
            sx, sy = _merged(x.segments, tol), _merged(y.segments, tol)
            if len(sx) != len(sy):
                return f"{where}: {len(sx)} vs {len(sy)} transfer pieces"
            for u, v in zip(sx, sy):
                if abs(u[0] - v[0]) > tol or abs(u[1] - v[1]) > tol or abs(u[2] - v[2]) > 1e-9:
                    return f"{where}: piece {u} vs {v}"
    return None
