"""Compiled event loops (numba). They replay pre-drawn arrival arrays and
mirror the pure-Python loops in :mod:`symq.engine` operation for operation,
so both backends give bit-identical results.

Discipline encoding: ``kind`` 0 = PS, 1 = LCFS, 2 = table. For tables,
``table[n-1, i]`` is the normalised rate and ``cum[n-1, i]`` its running
sum; ``ext`` 0 repeats the last row padded with zeros, 1 falls back to 1/n.

Status codes: 0 done, 1 arrivals exhausted, 2 residual buffer full,
3 level-time buffer full, 4 event cap reached.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ZERO_TOL = 1e-12
INF = np.inf


@njit(cache=True)
def _rate(kind, table, ext, n, i):
    if kind == 0:
        return 1.0 / n
    if kind == 1:
        return 1.0 if i == 0 else 0.0
    nmax = table.shape[0]
    if n <= nmax:
        return table[n - 1, i]
    if ext == 1:
        return 1.0 / n
    return table[nmax - 1, i] if i < nmax else 0.0


@njit(cache=True)
def _race(kind, table, ext, w, n):
    if kind == 0:
        best = 0
        wmin = w[0]
        for i in range(1, n):
            if w[i] < wmin:
                wmin = w[i]
                best = i
        if wmin <= ZERO_TOL:
            return best, 0.0
        return best, wmin * n
    if kind == 1:
        if w[0] <= ZERO_TOL:
            return 0, 0.0
        return 0, w[0]
    best = 0
    best_dt = INF
    for i in range(n):
        g = _rate(kind, table, ext, n, i)
        if g > 0:
            dt = 0.0 if w[i] <= ZERO_TOL else w[i] / g
            if dt < best_dt:
                best = i
                best_dt = dt
    return best, best_dt


@njit(cache=True)
def _serve(kind, table, ext, w, n, dt):
    if kind == 0:
        x = dt / n
        for i in range(n):
            w[i] = w[i] - x
    elif kind == 1:
        w[0] -= dt
    else:
        for i in range(n):
            w[i] = w[i] - _rate(kind, table, ext, n, i) * dt


@njit(cache=True)
def _position(kind, table, cum, ext, n_before, u):
    if kind == 1:
        return 0
    n = n_before + 1
    if kind == 0:
        p = int(u * n)
        return p if p < n_before else n_before
    nmax = table.shape[0]
    if n > nmax and ext == 1:
        c = 0.0
        g = 1.0 / n
        for i in range(n):
            c += g
            if u < c:
                return i
        return n - 1
    row = n - 1 if n <= nmax else nmax - 1
    width = n if n <= nmax else nmax
    for i in range(width):
        if u < cum[row, i]:
            return i
    for i in range(n - 1, -1, -1):
        if _rate(kind, table, ext, n, i) > 0:
            return i
    return 0


@njit(cache=True)
def _remove(w, n, pos):
    for i in range(pos, n - 1):
        w[i] = w[i + 1]


@njit(cache=True)
def _insert(w, n, pos, work):
    for i in range(n, pos, -1):
        w[i] = w[i - 1]
    w[pos] = work


@njit(cache=True)
def path_kernel(kind, table, cum, ext, at, works, us, horizon, grid, outq, outw, w, max_events):
    """Run from empty to ``horizon``; returns (status, events, n, t)."""
    n = 0
    t = 0.0
    gi = 0
    ng = grid.shape[0]
    na = at.shape[0]
    ai = 0
    ta = at[0] if na > 0 else INF
    events = 0
    pos = 0
    dt_dep = INF
    v = 0.0  # arrived work minus elapsed busy time, tracked against the clock
    while True:
        if n > 0:
            pos, dt_dep = _race(kind, table, ext, w, n)
            t_dep = t + dt_dep
        else:
            t_dep = INF
        t_next = t_dep if t_dep <= ta else ta
        if t_next > horizon:
            t_next = horizon
        while gi < ng and grid[gi] < t_next:
            outq[gi] = n
            outw[gi] = (v - (grid[gi] - t)) if n > 0 else 0.0
            gi += 1
        if t_dep > horizon and ta > horizon:
            while gi < ng:
                outq[gi] = n
                outw[gi] = (v - (grid[gi] - t)) if n > 0 else 0.0
                gi += 1
            if n > 0:
                _serve(kind, table, ext, w, n, horizon - t)
            t = horizon
            break
        events += 1
        if events > max_events:
            return 4, events, n, t
        if t_dep <= ta:
            _serve(kind, table, ext, w, n, dt_dep)
            v = v - (t_dep - t) if n > 1 else 0.0
            t = t_dep
            _remove(w, n, pos)
            n -= 1
        else:
            if n > 0:
                _serve(kind, table, ext, w, n, ta - t)
                v -= ta - t
            t = ta
            if n >= w.shape[0]:
                return 2, events, n, t
            p = _position(kind, table, cum, ext, n, us[ai])
            _insert(w, n, p, works[ai])
            v += works[ai]
            n += 1
            ai += 1
            ta = at[ai] if ai < na else INF
    return 0, events, n, t


@njit(cache=True)
def cycle_kernel(kind, table, cum, ext, at, works, us, a0, n_wanted, c0, f0,
                 w, occ, out_len, out_area, out_maxq, out_served, occ_flat, occ_off,
                 max_events):
    """Simulate regeneration cycles, each starting at an arrival to an empty system.

    Resumes at arrival index ``a0`` with ``c0`` cycles and ``f0`` level-time
    slots already written. On any early exit the unfinished cycle is
    discarded; the caller fixes the cause and re-enters at the returned
    arrival index. Returns (status, cycles_done, next_arrival, slots_used, events).
    """
    na = at.shape[0]
    c = c0
    f = f0
    ai = a0
    events = 0
    while c < n_wanted:
        if ai + 1 >= na:
            return 1, c, ai, f, events
        a_start = ai
        start = at[ai]
        t = start
        w[0] = works[ai]
        n = 1
        occ[0] = 0.0
        occ[1] = 0.0
        area = 0.0
        maxq = 1
        served = 0
        ai += 1
        ta = at[ai]
        events += 1
        while True:
            if n > 0:
                pos, dt_dep = _race(kind, table, ext, w, n)
                if t + dt_dep <= ta:
                    _serve(kind, table, ext, w, n, dt_dep)
                    occ[n] += dt_dep
                    area += n * dt_dep
                    t += dt_dep
                    _remove(w, n, pos)
                    n -= 1
                    served += 1
                    events += 1
                    if events > max_events:
                        return 4, c, a_start, f, events
                    continue
                dt = ta - t
                _serve(kind, table, ext, w, n, dt)
                occ[n] += dt
                area += n * dt
            else:
                occ[0] += ta - t
                if f + maxq + 1 > occ_flat.shape[0]:
                    return 3, c, a_start, f, events
                out_len[c] = ta - start
                out_area[c] = area
                out_maxq[c] = maxq
                out_served[c] = served
                for k in range(maxq + 1):
                    occ_flat[f + k] = occ[k]
                f += maxq + 1
                occ_off[c + 1] = f
                c += 1
                break
            t = ta
            if n + 1 >= w.shape[0] or n + 2 >= occ.shape[0]:
                return 2, c, a_start, f, events
            p = _position(kind, table, cum, ext, n, us[ai])
            _insert(w, n, p, works[ai])
            n += 1
            if n > maxq:
                maxq = n
                occ[n] = 0.0
            events += 1
            if events > max_events:
                return 4, c, a_start, f, events
            ai += 1
            if ai >= na:
                return 1, c, a_start, f, events
            ta = at[ai]
    return 0, c, ai, f, events
