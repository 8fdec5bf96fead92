"""Compiled pattern builder.

The bandwidth profile is kept as a circular doubly linked list of pieces
(``ps`` start, ``pu`` used bandwidth, ``nx``/``pv`` links, piece 0 always
starts at 0).  Pieces are only ever split, never merged, so an index that
marks the end of an application's last transfer stays valid for the whole
build.  Every insertion therefore only walks the pieces it actually touches.
"""
import numpy as np
from numba import njit

RATE_EPS = 1e-9
VOL_RTOL = 1e-6
VALUE_EPS = 1e-12


@njit(cache=True, nogil=True)
def _grow_f(a, n):
    out = np.zeros(n)
    out[: a.shape[0]] = a
    return out


@njit(cache=True, nogil=True)
def _grow_i(a, n):
    out = np.zeros(n, np.int64)
    out[: a.shape[0]] = a
    return out


@njit(cache=True, nogil=True)
def _piece_end(ps, nx, i, T):
    j = nx[i]
    return ps[j] if j != 0 else T


@njit(cache=True, nogil=True)
def _fill_forward(ps, pu, nx, n, T, B, piece, start, length, cap, vol, sc_p, sc_s, sc_e, sc_r):
    """Earliest-first fill of ``vol`` from ``start`` (inside ``piece``) over ``length`` seconds.

    Returns (ok, nseg, first_off, end_off, scratch...), offsets measured from ``start``.
    """
    left = vol
    remaining = length
    cur = piece
    a = start
    trav = 0.0
    nseg = 0
    first_off = -1.0
    end_off = 0.0
    steps = 0
    teps = 1e-9 * max(1.0, T)
    while remaining > 0.0 and steps <= n + 1:
        steps += 1
        b = _piece_end(ps, nx, cur, T)
        plen = b - a
        if plen >= remaining:
            plen = remaining
            b = a + plen
        # pieces this narrow are rounding slivers between two transfers
        if plen > teps:
            avail = min(cap, B - pu[cur])
            if avail > RATE_EPS:
                if nseg == sc_s.shape[0]:
                    sz = 2 * nseg
                    sc_p = _grow_i(sc_p, sz)
                    sc_s = _grow_f(sc_s, sz)
                    sc_e = _grow_f(sc_e, sz)
                    sc_r = _grow_f(sc_r, sz)
                if first_off < 0.0:
                    first_off = trav
                need = left / avail
                if need <= plen:
                    e = a + need
                    if e > b:
                        e = b
                    sc_p[nseg] = cur
                    sc_s[nseg] = a
                    sc_e[nseg] = e
                    sc_r[nseg] = avail
                    nseg += 1
                    end_off = trav + (e - a)
                    left = 0.0
                    break
                sc_p[nseg] = cur
                sc_s[nseg] = a
                sc_e[nseg] = b
                sc_r[nseg] = avail
                nseg += 1
                end_off = trav + plen
                left -= plen * avail
        trav += plen
        remaining -= plen
        cur = nx[cur]
        a = ps[cur]
    ok = nseg > 0 and left <= VOL_RTOL * vol
    return ok, nseg, first_off, end_off, sc_p, sc_s, sc_e, sc_r


@njit(cache=True, nogil=True)
def _split_after(ps, pu, nx, pv, n, i, t):
    m = n
    ps[m] = t
    pu[m] = pu[i]
    nx[m] = nx[i]
    pv[m] = i
    pv[nx[i]] = m
    nx[i] = m
    return m


@njit(cache=True, nogil=True)
def _apply(ps, pu, nx, pv, n, T, sc_p, sc_s, sc_e, sc_r, nseg, end_idx):
    """Add the filled segments to the profile; returns the piece starting where segment ``end_idx`` ends."""
    if n + 2 * nseg + 2 > ps.shape[0]:
        sz = 2 * (n + 2 * nseg + 2)
        ps = _grow_f(ps, sz)
        pu = _grow_f(pu, sz)
        nx = _grow_i(nx, sz)
        pv = _grow_i(pv, sz)
    end_piece = 0
    for j in range(nseg):
        i = sc_p[j]
        if sc_s[j] > ps[i]:
            i = _split_after(ps, pu, nx, pv, n, i, sc_s[j])
            n += 1
        if sc_e[j] < _piece_end(ps, nx, i, T):
            _split_after(ps, pu, nx, pv, n, i, sc_e[j])
            n += 1
        pu[i] += sc_r[j]
        if j == end_idx:
            end_piece = nx[i]
    return ps, pu, nx, pv, n, end_piece


@njit(cache=True, nogil=True)
def build_kernel(T, B, w, vol, cap, rho, tb, desc, record):
    """Greedy insertion of instances into a pattern of period ``T``.

    Repeatedly takes the active application with the largest dilation (ties:
    larger ``tb`` when ``desc`` else smaller, then lower index), inserts one
    instance and drops the application for good when it no longer fits.
    """
    K = w.shape[0]
    teps = 1e-9 * max(1.0, T)

    size = 256
    ps = np.zeros(size)
    pu = np.zeros(size)
    nx = np.zeros(size, np.int64)
    pv = np.zeros(size, np.int64)
    n = 1

    count = np.zeros(K, np.int64)
    first_start = np.zeros(K)
    last_end = np.zeros(K)
    occ = np.zeros(K)
    last_piece = np.zeros(K, np.int64)
    active = np.ones(K, np.bool_)

    sc_p = np.zeros(64, np.int64)
    sc_s = np.zeros(64)
    sc_e = np.zeros(64)
    sc_r = np.zeros(64)

    osz = 64 if record else 1
    oi_app = np.zeros(osz, np.int64)
    oi_start = np.zeros(osz)
    oi_span = np.zeros(osz)
    oi_seg0 = np.zeros(osz, np.int64)
    os_s = np.zeros(osz)
    os_d = np.zeros(osz)
    os_r = np.zeros(osz)
    ni = 0
    nsg = 0

    while True:
        k = -1
        bd = 0.0
        btb = 0.0
        for j in range(K):
            if not active[j]:
                continue
            d = np.inf if count[j] == 0 else rho[j] * T / (count[j] * w[j])
            take = False
            if k < 0 or d > bd:
                take = True
            elif d == bd:
                if desc and tb[j] > btb:
                    take = True
                elif (not desc) and tb[j] < btb:
                    take = True
            if take:
                k = j
                bd = d
                btb = tb[j]
        if k < 0:
            break

        ok = False
        nseg = 0
        inst_start = 0.0
        inst_span = 0.0
        if vol[k] <= 0.0:
            # no transfer: an instance is a bare compute phase
            if count[k] == 0:
                if T - w[k] >= -teps:
                    ok = True
                    first_start[k] = 0.0
                    last_end[k] = 0.0
                    occ[k] = 0.0
                    inst_start = 0.0
            elif T - occ[k] - 2.0 * w[k] >= -teps:
                ok = True
                e = last_end[k] + w[k]
                if e >= T:
                    e -= T
                occ[k] += w[k]
                last_end[k] = e
                inst_start = e
        elif count[k] == 0:
            length = T - w[k]
            if length > 0.0:
                best_span = np.inf
                best_start = np.inf
                best_piece = -1
                c = 0
                for _ in range(n):
                    # pieces whose value equals the previous one are split points, not events
                    if c == 0 or abs(pu[c] - pu[pv[c]]) > VALUE_EPS:
                        okf, nf, f0, f1, sc_p, sc_s, sc_e, sc_r = _fill_forward(
                            ps, pu, nx, n, T, B, c, ps[c], length, cap[k], vol[k], sc_p, sc_s, sc_e, sc_r)
                        if okf:
                            span = f1 - f0
                            st = sc_s[0]
                            if span < best_span - teps or (span <= best_span + teps and st < best_start):
                                best_span = span
                                best_start = st
                                best_piece = c
                    c = nx[c]
                if best_piece >= 0:
                    ok = True
                    okf, nseg, f0, f1, sc_p, sc_s, sc_e, sc_r = _fill_forward(
                        ps, pu, nx, n, T, B, best_piece, ps[best_piece], length, cap[k], vol[k],
                        sc_p, sc_s, sc_e, sc_r)
                    inst_start = sc_s[0]
                    inst_span = f1 - f0
                    end_local = sc_e[nseg - 1]
                    ps, pu, nx, pv, n, endp = _apply(ps, pu, nx, pv, n, T, sc_p, sc_s, sc_e, sc_r, nseg, nseg - 1)
                    first_start[k] = inst_start
                    occ[k] = inst_span
                    last_end[k] = end_local if end_local < T else 0.0
                    last_piece[k] = endp
        else:
            length = T - occ[k] - 2.0 * w[k]
            if length > 0.0:
                ws = last_end[k] + w[k]
                if ws >= T:
                    ws -= T
                i = last_piece[k]
                for _ in range(n):
                    if ps[i] <= ws and ws < _piece_end(ps, nx, i, T):
                        break
                    i = nx[i]
                okf, nseg, f0, f1, sc_p, sc_s, sc_e, sc_r = _fill_forward(
                    ps, pu, nx, n, T, B, i, ws, length, cap[k], vol[k], sc_p, sc_s, sc_e, sc_r)
                if okf:
                    ok = True
                    inst_start = sc_s[0]
                    inst_span = f1 - f0
                    end_local = sc_e[nseg - 1]
                    ps, pu, nx, pv, n, endp = _apply(ps, pu, nx, pv, n, T, sc_p, sc_s, sc_e, sc_r, nseg, nseg - 1)
                    occ[k] += w[k] + f1
                    last_end[k] = end_local if end_local < T else 0.0
                    last_piece[k] = endp

        if not ok:
            active[k] = False
            continue
        count[k] += 1
        if record:
            if ni == oi_app.shape[0]:
                sz = 2 * ni
                oi_app = _grow_i(oi_app, sz)
                oi_start = _grow_f(oi_start, sz)
                oi_span = _grow_f(oi_span, sz)
                oi_seg0 = _grow_i(oi_seg0, sz)
            oi_app[ni] = k
            oi_start[ni] = inst_start
            oi_span[ni] = inst_span
            oi_seg0[ni] = nsg
            ni += 1
            if nsg + nseg > os_s.shape[0]:
                sz = 2 * (nsg + nseg)
                os_s = _grow_f(os_s, sz)
                os_d = _grow_f(os_d, sz)
                os_r = _grow_f(os_r, sz)
            for jj in range(nseg):
                s = sc_s[jj]
                e = sc_e[jj]
                r = sc_r[jj]
                if jj > 0 and os_r[nsg - 1] == r and os_s[nsg - 1] + os_d[nsg - 1] == s:
                    os_d[nsg - 1] = e - os_s[nsg - 1]
                else:
                    os_s[nsg] = s
                    os_d[nsg] = e - s
                    os_r[nsg] = r
                    nsg += 1

    return (count, oi_app[:ni], oi_start[:ni], oi_span[:ni], oi_seg0[:ni],
            os_s[:nsg], os_d[:nsg], os_r[:nsg])
