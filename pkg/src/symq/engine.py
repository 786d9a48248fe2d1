"""Exact discrete-event simulation of the M/G/1 symmetric queue.

The state is the ordered vector of residual works, position 1 first. Between
events every rate ``gamma(n, i)`` is constant, so the next departure is an
exact race ``min_i w_i / gamma(n, i)``; it is recomputed from scratch after
each event (O(n) per event).

Conventions:

* a departure and an arrival at the same instant: the departure is processed
  first;
* the recorded queue length at an event time is the post-event value
  (right-continuous paths);
* a served residual at or below ``ZERO_TOL`` departs immediately.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field, replace
from collections.abc import Sequence as SequenceABC
from typing import Iterator, Sequence

import numpy as np

from . import disciplines as dsc
from .disciplines import Discipline
from .service import ServiceDistribution

ZERO_TOL = 1e-12
DEFAULT_MAX_EVENTS = 10 ** 10

_INF = math.inf


class EmptyQueueError(ValueError):
    pass


class NegativeResidualError(ValueError):
    pass


class UnstableConfigError(ValueError):
    pass


class EventCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class QueueState:
    residuals: tuple[float, ...] = ()
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "residuals", tuple(float(w) for w in self.residuals))

    @property
    def n(self) -> int:
        return len(self.residuals)

    @property
    def workload(self) -> float:
        return math.fsum(self.residuals)


def next_departure(s: QueueState, d: Discipline) -> tuple[int, float]:
    """Return ``(position, delta_t)`` of the next departure; lowest position wins ties."""
    n = s.n
    if n == 0:
        raise EmptyQueueError("no customer to depart")
    g = dsc._rates_tuple(d, n)
    best_i, best_dt = 0, _INF
    for i in range(n):
        if g[i] > 0:
            dt = 0.0 if s.residuals[i] <= ZERO_TOL else s.residuals[i] / g[i]
            if dt < best_dt:
                best_i, best_dt = i, dt
    return best_i + 1, best_dt


def advance(s: QueueState, delta_t: float, d: Discipline) -> QueueState:
    """Serve every position at its rate for ``delta_t`` time units."""
    if delta_t < 0:
        raise ValueError("delta_t must be nonnegative")
    if s.n == 0 or delta_t == 0:
        return replace(s, t=s.t + delta_t)
    g = dsc._rates_tuple(d, s.n)
    new = []
    for w, gi in zip(s.residuals, g):
        v = w - gi * delta_t
        if v < 0:
            if v < -ZERO_TOL * max(1.0, w):
                raise NegativeResidualError(
                    f"delta_t={delta_t} exceeds the departure race bound (residual {w}, rate {gi})"
                )
            v = 0.0
        new.append(v)
    return QueueState(tuple(new), s.t + delta_t)


def arrive(s: QueueState, work: float, pos: int) -> QueueState:
    """Insert ``work`` at position ``pos``; occupants of positions >= pos shift up."""
    if not 1 <= pos <= s.n + 1:
        raise IndexError(f"insertion position {pos} outside 1..{s.n + 1}")
    if not work > 0:
        raise ValueError(f"work must be positive, got {work}")
    r = s.residuals
    return QueueState(r[: pos - 1] + (float(work),) + r[pos - 1:], s.t)


def depart(s: QueueState, pos: int) -> QueueState:
    """Remove position ``pos``; higher positions shift down."""
    if not 1 <= pos <= s.n:
        raise IndexError(f"departure position {pos} outside 1..{s.n}")
    r = s.residuals
    return QueueState(r[: pos - 1] + r[pos:], s.t)


# ---------------------------------------------------------------------------
# arrival streams


class ArrivalStream:
    """Poisson arrivals drawn in batches: gaps, then works, then insertion uniforms.

    Batch sizes start at ``first_batch`` and double (capped), so a given seed
    yields the same stream no matter how far, or by which backend, it is read.
    """

    MAX_BATCH = 1 << 16

    def __init__(self, lam: float, sd: ServiceDistribution, rng: np.random.Generator,
                 first_batch: float = 1024):
        if lam < 0:
            raise ValueError("arrival rate must be nonnegative")
        self.lam = lam
        self.sd = sd
        self.rng = rng
        self.batch = int(min(max(16, first_batch), self.MAX_BATCH))
        self.t = 0.0

    def next_batch(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.lam == 0:
            return np.empty(0), np.empty(0), np.empty(0)
        rng = self.rng
        gaps = rng.exponential(1.0 / self.lam, self.batch)
        works = np.asarray(self.sd.sample(rng, self.batch), dtype=float)
        us = rng.random(self.batch)
        times = np.cumsum(np.concatenate(([self.t], gaps)))[1:]
        self.t = float(times[-1])
        self.batch = min(self.batch * 2, self.MAX_BATCH)
        return times, works, us

    def __iter__(self) -> Iterator[tuple[float, float, float]]:
        while True:
            times, works, us = self.next_batch()
            if times.size == 0:
                return
            yield from zip(times.tolist(), works.tolist(), us.tolist())

    def until(self, horizon: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All arrivals up to ``horizon`` plus the first one beyond it."""
        parts = []
        while True:
            b = self.next_batch()
            if b[0].size == 0:
                break
            parts.append(b)
            if b[0][-1] > horizon:
                break
        if not parts:
            return np.empty(0), np.empty(0), np.empty(0)
        times, works, us = (np.concatenate(c) for c in zip(*parts))
        k = int(np.searchsorted(times, horizon, side="right")) + 1
        return times[:k], works[:k], us[:k]


def fixed_arrivals(times: Sequence[float], works: Sequence[float],
                   us: Sequence[float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Explicit input sequence, e.g. to feed several disciplines identical arrivals."""
    times = np.asarray(times, dtype=float)
    works = np.asarray(works, dtype=float)
    us = np.asarray(us, dtype=float)
    if not (times.shape == works.shape == us.shape) or times.ndim != 1:
        raise ValueError("times, works and us must be 1-d and of equal length")
    if np.any(np.diff(times) < 0):
        raise ValueError("arrival times must be nondecreasing")
    if np.any(works <= 0):
        raise ValueError("works must be positive")
    if np.any((us < 0) | (us >= 1)):
        raise ValueError("insertion uniforms must lie in [0, 1)")
    return times, works, us


# ---------------------------------------------------------------------------
# recorded output


@dataclass
class EventLog:
    """Columnar event log. ``work`` is the summed residual vector after the
    event; ``expected_work`` is arrived work minus busy time."""

    time: array = field(default_factory=lambda: array("d"))
    kind: array = field(default_factory=lambda: array("b"))  # 1 arrival, -1 departure
    position: array = field(default_factory=lambda: array("l"))
    queue_length: array = field(default_factory=lambda: array("l"))
    work: array = field(default_factory=lambda: array("d"))
    expected_work: array = field(default_factory=lambda: array("d"))

    def __len__(self):
        return len(self.time)

    def append(self, t, k, p, q, work, expected):
        self.time.append(t)
        self.kind.append(k)
        self.position.append(p)
        self.queue_length.append(q)
        self.work.append(work)
        self.expected_work.append(expected)

    def to_csv(self, path_or_file, header: str = "") -> None:
        """Write ``time,event,position,queue_length`` rows (event is A or D)."""
        close = not hasattr(path_or_file, "write")
        f = open(path_or_file, "w", newline="") if close else path_or_file
        try:
            if header:
                f.write(header)
            f.write("time,event,position,queue_length\n")
            for t, k, p, q in zip(self.time, self.kind, self.position, self.queue_length):
                f.write(f"{t!r},{'A' if k > 0 else 'D'},{p},{q}\n")
        finally:
            if close:
                f.close()


@dataclass
class SamplePath:
    times: np.ndarray
    queue: np.ndarray
    workload: np.ndarray
    event_count: int
    final_state: QueueState
    events: EventLog | None = None


@dataclass
class CycleStats:
    """One regeneration cycle: from an arrival to an empty system to the next one.

    ``level_time[k]`` is the time spent with ``k`` customers present (index 0
    is the idle period closing the cycle).
    """

    cycle_length: float
    area: float
    max_q: int
    customers_served: int
    level_time: np.ndarray

    @property
    def busy_length(self) -> float:
        return self.cycle_length - float(self.level_time[0])


class CycleBatch(SequenceABC):
    """Columnar storage for many cycles; indexing yields :class:`CycleStats`."""

    def __init__(self, cycle_length, area, max_q, customers_served, level_flat, level_offsets):
        self.cycle_length = np.asarray(cycle_length, dtype=float)
        self.area = np.asarray(area, dtype=float)
        self.max_q = np.asarray(max_q, dtype=np.int64)
        self.customers_served = np.asarray(customers_served, dtype=np.int64)
        self.level_flat = np.asarray(level_flat, dtype=float)
        self.level_offsets = np.asarray(level_offsets, dtype=np.int64)
        self._level_index = None
        self._cycle_index = None

    @classmethod
    def from_cycles(cls, cycles: Sequence[CycleStats]) -> "CycleBatch":
        if isinstance(cycles, CycleBatch):
            return cycles
        sizes = [c.level_time.size for c in cycles]
        flat = np.concatenate([c.level_time for c in cycles]) if cycles else np.empty(0)
        return cls([c.cycle_length for c in cycles], [c.area for c in cycles],
                   [c.max_q for c in cycles], [c.customers_served for c in cycles],
                   flat, np.concatenate([[0], np.cumsum(sizes)]))

    @classmethod
    def concat(cls, batches: Sequence["CycleBatch"]) -> "CycleBatch":
        offs = [np.zeros(1, dtype=np.int64)]
        base = 0
        for b in batches:
            offs.append(b.level_offsets[1:] + base)
            base += b.level_flat.size
        return cls(np.concatenate([b.cycle_length for b in batches]),
                   np.concatenate([b.area for b in batches]),
                   np.concatenate([b.max_q for b in batches]),
                   np.concatenate([b.customers_served for b in batches]),
                   np.concatenate([b.level_flat for b in batches]),
                   np.concatenate(offs))

    def __len__(self):
        return self.cycle_length.size

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[i] for i in range(*j.indices(len(self)))]
        if j < 0:
            j += len(self)
        lo, hi = self.level_offsets[j], self.level_offsets[j + 1]
        return CycleStats(float(self.cycle_length[j]), float(self.area[j]), int(self.max_q[j]),
                          int(self.customers_served[j]), self.level_flat[lo:hi].copy())

    def _indices(self):
        if self._level_index is None:
            sizes = np.diff(self.level_offsets)
            self._cycle_index = np.repeat(np.arange(len(self)), sizes)
            self._level_index = np.arange(self.level_flat.size) - np.repeat(self.level_offsets[:-1], sizes)
        return self._cycle_index, self._level_index

    def time_at_least(self, k: int) -> np.ndarray:
        """Per-cycle time spent with at least ``k`` customers."""
        ci, li = self._indices()
        m = li >= k
        return np.bincount(ci[m], weights=self.level_flat[m], minlength=len(self))

    def time_at_most(self, k: int) -> np.ndarray:
        ci, li = self._indices()
        m = li <= k
        return np.bincount(ci[m], weights=self.level_flat[m], minlength=len(self))

    def level_totals(self) -> np.ndarray:
        """Total time at each level, summed over cycles."""
        _, li = self._indices()
        return np.bincount(li, weights=self.level_flat)

    def level_matrix(self, kmax: int) -> np.ndarray:
        """Per-cycle time at levels 0..kmax-1; column kmax holds time at >= kmax."""
        ci, li = self._indices()
        out = np.zeros((len(self), kmax + 1))
        np.add.at(out, (ci, np.minimum(li, kmax)), self.level_flat)
        return out


# ---------------------------------------------------------------------------
# event loops

try:
    from . import _kernels
except ImportError:  # numba missing: pure-Python loops only
    _kernels = None


def _backend(backend: str) -> str:
    if backend == "auto":
        return "jit" if _kernels is not None else "python"
    if backend == "jit" and _kernels is None:
        raise RuntimeError("numba is not available")
    if backend not in ("jit", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


_KIND_CODE = {dsc.PS: 0, dsc.LCFS: 1, dsc.TABLE: 2}


def _encode(d: Discipline):
    if d.kind != dsc.TABLE:
        return _KIND_CODE[d.kind], np.zeros((1, 1)), np.zeros((1, 1)), 0
    nmax = d.n_max
    table = np.zeros((nmax, nmax))
    cum = np.zeros((nmax, nmax))
    for n in range(1, nmax + 1):
        table[n - 1, :n] = dsc._rates_tuple(d, n)
        cum[n - 1, :n] = dsc._cumulative(d, n)
    # fail early on a bad extension row
    dsc._rates_tuple(d, nmax + 1)
    return 2, table, cum, (0 if d.extension == "repeat" else 1)


def _race(kind, w, n, d):
    if kind == dsc.PS:
        wmin = min(w)
        return w.index(wmin), (0.0 if wmin <= ZERO_TOL else wmin * n)
    if kind == dsc.LCFS:
        w0 = w[0]
        return 0, (0.0 if w0 <= ZERO_TOL else w0)
    g = dsc._rates_tuple(d, n)
    best_i, best_dt = 0, _INF
    for i in range(n):
        gi = g[i]
        if gi > 0:
            wi = w[i]
            dt = 0.0 if wi <= ZERO_TOL else wi / gi
            if dt < best_dt:
                best_i, best_dt = i, dt
    return best_i, best_dt


def _serve(kind, w, n, dt, d):
    if kind == dsc.PS:
        x = dt / n
        return [v - x for v in w]
    if kind == dsc.LCFS:
        w[0] -= dt
        return w
    g = dsc._rates_tuple(d, n)
    return [v - gi * dt for v, gi in zip(w, g)]


def _position(kind, d, n_before, u):
    if kind == dsc.LCFS:
        return 0
    if kind == dsc.PS:
        return min(int(u * (n_before + 1)), n_before)
    return dsc.insertion_position(d, n_before, u) - 1


def _path_python(d, arrivals, horizon, gl, log, max_events):
    kind = d.kind
    ng = len(gl)
    out_q = np.zeros(ng, dtype=np.int64)
    out_w = np.zeros(ng)
    gi = 0
    it = iter(arrivals)
    ta, work, u = next(it, (_INF, 0.0, 0.0))
    w: list[float] = []
    t = 0.0
    W = 0.0  # arrived work minus busy time
    events = 0
    while True:
        n = len(w)
        if n:
            pos, dt_dep = _race(kind, w, n, d)
            t_dep = t + dt_dep
        else:
            t_dep = _INF
        t_next = t_dep if t_dep <= ta else ta
        if t_next > horizon:
            t_next = horizon
        while gi < ng and gl[gi] < t_next:
            out_q[gi] = n
            out_w[gi] = (W - (gl[gi] - t)) if n else 0.0
            gi += 1
        if t_dep > horizon and ta > horizon:
            while gi < ng:
                out_q[gi] = n
                out_w[gi] = (W - (gl[gi] - t)) if n else 0.0
                gi += 1
            if n:
                w = _serve(kind, w, n, horizon - t, d)
            t = horizon
            break
        events += 1
        if events > max_events:
            raise EventCapError(f"event cap {max_events} reached at t={t}, n={n}")
        if t_dep <= ta:
            w = _serve(kind, w, n, dt_dep, d)
            W = W - (t_dep - t) if n > 1 else 0.0
            t = t_dep
            del w[pos]
            if log is not None:
                log.append(t, -1, pos + 1, n - 1, math.fsum(w), W)
        else:
            if n:
                w = _serve(kind, w, n, ta - t, d)
                W -= ta - t
            t = ta
            p = _position(kind, d, n, u)
            w.insert(p, work)
            W += work
            if log is not None:
                log.append(t, 1, p + 1, n + 1, math.fsum(w), W)
            ta, work, u = next(it, (_INF, 0.0, 0.0))
    return out_q, out_w, events, w, t


def _path_jit(d, arrays, horizon, grid, max_events):
    kind, table, cum, ext = _encode(d)
    at, works, us = arrays
    cap = 256
    while True:
        out_q = np.zeros(grid.size, dtype=np.int64)
        out_w = np.zeros(grid.size)
        w = np.empty(cap)
        status, events, n, t = _kernels.path_kernel(kind, table, cum, ext, at, works, us, float(horizon),
                                                    grid, out_q, out_w, w, max_events)
        if status == 0:
            return out_q, out_w, events, w[:n].tolist(), t
        if status == 4:
            raise EventCapError(f"event cap {max_events} reached at t={t}, n={n}")
        cap *= 4


def simulate(d: Discipline, sd: ServiceDistribution | None, lam: float, horizon: float,
             grid: Sequence[float] | np.ndarray, rng: np.random.Generator | None = None, *,
             arrivals: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
             log_events: bool = False, max_events: int = DEFAULT_MAX_EVENTS,
             backend: str = "auto") -> SamplePath:
    """Run the queue from empty on ``[0, horizon]`` and record it on ``grid``.

    Arrivals are Poisson(``lam``) with works drawn from ``sd`` using ``rng``,
    unless explicit ``arrivals`` arrays ``(times, works, us)`` are given (see
    :func:`fixed_arrivals`). ``log_events`` forces the pure-Python loop.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("observation grid must be strictly increasing")
    if grid.size and (grid[0] < 0 or grid[-1] > horizon):
        raise ValueError("observation grid must lie in [0, horizon]")
    if arrivals is None:
        arrivals = ArrivalStream(lam, sd, rng, first_batch=lam * horizon * 1.1 + 64).until(horizon)
    else:
        arrivals = fixed_arrivals(*arrivals)
    log = EventLog() if log_events else None
    if log_events or _backend(backend) == "python":
        items = zip(arrivals[0].tolist(), arrivals[1].tolist(), arrivals[2].tolist())
        q, wl, events, w, t = _path_python(d, items, horizon, grid.tolist(), log, max_events)
    else:
        q, wl, events, w, t = _path_jit(d, arrivals, horizon, grid, max_events)
    final = QueueState(tuple(max(v, 0.0) for v in w), t)
    return SamplePath(grid, q, wl, events, final, log)


def simulate_reference(d: Discipline, arrivals: tuple[np.ndarray, np.ndarray, np.ndarray],
                       horizon: float) -> list[tuple[float, int, float]]:
    """Slow event loop written only with the public state operations.

    Returns ``(time, queue_length, workload)`` after every event. Used to
    cross-check :func:`simulate`.
    """
    times, works, us = fixed_arrivals(*arrivals)
    s = QueueState()
    out = []
    k = 0
    while True:
        ta = times[k] if k < times.size else _INF
        if s.n:
            pos, dt = next_departure(s, d)
            t_dep = s.t + dt
        else:
            t_dep = _INF
        if min(t_dep, ta) > horizon:
            break
        if t_dep <= ta:
            s = depart(advance(s, dt, d), pos)
        else:
            s = advance(s, ta - s.t, d)
            s = QueueState(s.residuals, float(ta))
            s = arrive(s, works[k], dsc.insertion_position(d, s.n, float(us[k])))
            k += 1
        out.append((s.t, s.n, s.workload))
    return out


def _cycles_python(d, it, n_cycles, max_events):
    kind = d.kind
    ta, work, u = next(it)
    lengths, areas, maxqs, serveds, occs = [], [], [], [], []
    w: list[float] = [work]
    t = ta
    start = t
    occ = [0.0, 0.0]
    area = 0.0
    max_q = 1
    served = 0
    events = 1
    ta, work, u = next(it)
    while True:
        n = len(w)
        if n:
            pos, dt_dep = _race(kind, w, n, d)
            if t + dt_dep <= ta:
                w = _serve(kind, w, n, dt_dep, d)
                occ[n] += dt_dep
                area += n * dt_dep
                t += dt_dep
                del w[pos]
                served += 1
                events += 1
                continue
            dt = ta - t
            w = _serve(kind, w, n, dt, d)
            occ[n] += dt
            area += n * dt
        else:
            occ[0] += ta - t
            lengths.append(ta - start)
            areas.append(area)
            maxqs.append(max_q)
            serveds.append(served)
            occs.append(occ)
            if len(lengths) == n_cycles:
                break
            start = ta
            occ = [0.0, 0.0]
            area = 0.0
            max_q = 1
            served = 0
        t = ta
        p = _position(kind, d, n, u)
        w.insert(p, work)
        if n + 1 > max_q:
            max_q = n + 1
            occ.append(0.0)
        events += 1
        if events > max_events:
            raise EventCapError(f"event cap {max_events} reached at t={t}, n={n + 1}")
        ta, work, u = next(it)
    sizes = [len(o) for o in occs]
    return CycleBatch(lengths, areas, maxqs, serveds, np.fromiter((x for o in occs for x in o), float),
                      np.concatenate([[0], np.cumsum(sizes)]))


def _cycles_jit(d, stream, n_cycles, max_events):
    kind, table, cum, ext = _encode(d)
    at, works, us = stream.next_batch()
    out_len = np.empty(n_cycles)
    out_area = np.empty(n_cycles)
    out_maxq = np.empty(n_cycles, dtype=np.int64)
    out_served = np.empty(n_cycles, dtype=np.int64)
    occ_off = np.zeros(n_cycles + 1, dtype=np.int64)
    occ_flat = np.empty(max(64, 8 * n_cycles))
    w = np.empty(256)
    occ = np.empty(258)
    a0, c, f, used = 0, 0, 0, 0
    while True:
        status, c, a0, f, ev = _kernels.cycle_kernel(kind, table, cum, ext, at, works, us, a0, n_cycles,
                                                     c, f, w, occ, out_len, out_area, out_maxq,
                                                     out_served, occ_flat, occ_off, max_events - used)
        used += ev
        if status == 0:
            break
        if status == 1:
            b = stream.next_batch()
            at, works, us = (np.concatenate((x[a0:], y)) for x, y in zip((at, works, us), b))
            a0 = 0
        elif status == 2:
            w = np.empty(4 * w.size)
            occ = np.empty(w.size + 2)
        elif status == 3:
            occ_flat = np.concatenate((occ_flat, np.empty(occ_flat.size)))
        else:
            raise EventCapError(f"event cap {max_events} reached after {c} cycles")
    return CycleBatch(out_len, out_area, out_maxq, out_served, occ_flat[:f], occ_off)


def busy_cycles(d: Discipline, sd: ServiceDistribution, lam: float, n_cycles: int,
                rng: np.random.Generator, *, max_events: int = DEFAULT_MAX_EVENTS,
                backend: str = "auto") -> CycleBatch:
    """Simulate exactly ``n_cycles`` regeneration cycles.

    Each cycle starts with an arrival to an empty system and ends at the next
    such arrival, so it holds one busy period followed by one idle period.
    """
    if lam <= 0:
        raise ValueError("busy cycles need a positive arrival rate")
    rho = lam * sd.mean
    if rho >= 1:
        raise UnstableConfigError(f"rho = {rho:.6g} >= 1: the queue does not regenerate")
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    stream = ArrivalStream(lam, sd, rng, first_batch=n_cycles / (1 - rho) * 1.1 + 64)
    if _backend(backend) == "python":
        return _cycles_python(d, iter(stream), n_cycles, max_events)
    return _cycles_jit(d, stream, n_cycles, max_events)


def rescaled_grid(T: float = 2.0, step: float = 0.01, scale: float = 1.0) -> np.ndarray:
    """Raw-time grid ``scale * (0, step, ..., T)`` built in rescaled coordinates."""
    k = int(round(T / step))
    return scale * (np.arange(k + 1) * step)
