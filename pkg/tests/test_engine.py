import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symq import engine
from symq.disciplines import Discipline
from symq.engine import (CycleBatch, EmptyQueueError, EventCapError, NegativeResidualError, QueueState,
                         UnstableConfigError, advance, arrive, busy_cycles, depart, fixed_arrivals,
                         next_departure, simulate, simulate_reference)
from symq.service import Deterministic, Exponential, HyperExp, Pareto

from conftest import TABLE3, any_discipline

PS, LCFS = Discipline.ps(), Discipline.lcfs()
needs_jit = pytest.mark.skipif(engine._kernels is None, reason="numba not installed")


# --- state operations --------------------------------------------------------

def test_next_departure_examples():
    s = QueueState((2.0, 1.0))
    assert next_departure(s, PS) == (2, 2.0)
    assert next_departure(s, LCFS) == (1, 2.0)
    assert next_departure(QueueState((3.0, 3.0)), PS) == (1, 6.0)
    with pytest.raises(EmptyQueueError):
        next_departure(QueueState(), PS)


def test_next_departure_table_skips_zero_rates():
    d = Discipline.table([[1], [0.0, 1.0]])
    assert next_departure(QueueState((0.1, 5.0)), d) == (2, 5.0)


def test_advance_examples():
    s = QueueState((2.0, 1.0))
    assert advance(s, 1.0, PS).residuals == (1.5, 0.5)
    assert advance(s, 1.0, LCFS).residuals == (1.0, 1.0)
    assert advance(s, 0.0, PS).residuals == s.residuals
    assert advance(s, 1.0, PS).t == 1.0
    with pytest.raises(NegativeResidualError):
        advance(s, 2.5, PS)


def test_arrive_and_depart_examples():
    assert arrive(QueueState((5.0,)), 3.0, 1).residuals == (3.0, 5.0)
    assert arrive(QueueState(), 2.0, 1).residuals == (2.0,)
    assert arrive(QueueState((1.0, 2.0)), 9.0, 3).residuals == (1.0, 2.0, 9.0)
    assert depart(QueueState((3.0, 5.0)), 1).residuals == (5.0,)
    assert depart(QueueState((7.0,)), 1).residuals == ()
    assert depart(QueueState((1.0, 2.0, 3.0)), 2).residuals == (1.0, 3.0)
    for bad in (0, 3):
        with pytest.raises(IndexError):
            arrive(QueueState((1.0,)), 1.0, bad)
    with pytest.raises(IndexError):
        depart(QueueState((1.0,)), 2)


@given(any_discipline(), st.lists(st.floats(0.01, 10.0), min_size=1, max_size=8), st.floats(0.0, 1.0))
def test_advance_conserves_work(d, ws, frac):
    s = QueueState(tuple(ws))
    _, dt = next_departure(s, d)
    s2 = advance(s, frac * dt, d)
    assert s.workload - s2.workload == pytest.approx(frac * dt, abs=1e-12)
    assert all(w >= 0 for w in s2.residuals)


# --- sample paths --------------------------------------------------------------

def test_no_arrivals_gives_empty_path(rng):
    p = simulate(PS, Exponential(1.0), 0.0, 5.0, np.linspace(0, 5, 11), rng)
    assert np.all(p.queue == 0) and p.event_count == 0


def test_simultaneous_departure_and_arrival_departure_first():
    arr = fixed_arrivals([0.0, 1.0, 1.5], [1.0, 1.0, 0.25], [0.0, 0.0, 0.0])  # 0.25 leaves at t=2
    for backend in ("python", "jit") if engine._kernels else ("python",):
        p = simulate(PS, None, 0.0, 3.0, [0.5, 1.0, 1.6, 1.9, 3.0], arrivals=arr, backend=backend)
        # departure at 1 then arrival at 1: right-continuous value is 1
        assert p.queue.tolist() == [1, 1, 2, 2, 0]
    p = simulate(PS, None, 0.0, 3.0, [3.0], arrivals=arr, log_events=True)
    assert list(p.events.kind)[:3] == [1, -1, 1]


def test_event_log_csv():
    arr = fixed_arrivals([0.0, 0.5], [1.0, 1.0], [0.0, 0.9])
    p = simulate(PS, None, 0.0, 5.0, [5.0], arrivals=arr, log_events=True)
    buf = io.StringIO()
    p.events.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time,event,position,queue_length"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["A", "A", "D", "D"]
    assert [int(ln.split(",")[3]) for ln in lines[1:]] == [1, 2, 1, 0]


def test_grid_validation(rng):
    with pytest.raises(ValueError):
        simulate(PS, Exponential(1.0), 0.5, 1.0, [0.5, 0.2], rng)
    with pytest.raises(ValueError):
        simulate(PS, Exponential(1.0), 0.5, 1.0, [0.5, 2.0], rng)
    with pytest.raises(ValueError):
        fixed_arrivals([0.0], [1.0], [1.0])


def test_determinism():
    a = simulate(TABLE3, Exponential(1.0), 0.8, 200.0, np.linspace(0, 200, 101), np.random.default_rng(4))
    b = simulate(TABLE3, Exponential(1.0), 0.8, 200.0, np.linspace(0, 200, 101), np.random.default_rng(4))
    assert np.array_equal(a.queue, b.queue) and np.array_equal(a.workload, b.workload)
    assert a.final_state == b.final_state


def test_event_cap(rng):
    for backend in ("python", "jit") if engine._kernels else ("python",):
        with pytest.raises(EventCapError):
            simulate(PS, Exponential(1.0), 0.9, 1e4, [1e4], np.random.default_rng(0),
                     max_events=50, backend=backend)


def test_busy_fraction_half_load():
    """Time-average of 1{Q >= 1} at rho = 0.5 is 0.5."""
    horizon = 2e5
    grid = np.linspace(0, horizon, 200001)
    p = simulate(PS, Exponential(1.0), 0.5, horizon, grid, np.random.default_rng(5))
    busy = (p.queue >= 1).astype(float)
    # batch means for a standard error
    bm = busy[1:].reshape(100, -1).mean(axis=1)
    se = bm.std(ddof=1) / math.sqrt(bm.size)
    assert abs(busy.mean() - 0.5) < 4 * se


def _random_arrivals(seed, n, sd=Exponential(1.0), lam=0.9):
    rng = np.random.default_rng(seed)
    return fixed_arrivals(np.cumsum(rng.exponential(1 / lam, n)), sd.sample(rng, n), rng.random(n))


@given(any_discipline(), st.integers(0, 2 ** 32 - 1), st.integers(1, 60))
def test_simulate_matches_reference(d, seed, n):
    arr = _random_arrivals(seed, n)
    horizon = float(arr[0][-1]) + 50.0
    ref = simulate_reference(d, arr, horizon)
    p = simulate(d, None, 0.0, horizon, [], arrivals=arr, log_events=True)
    assert len(p.events) == len(ref)
    assert list(p.events.queue_length) == [n for _, n, _ in ref]
    np.testing.assert_allclose(list(p.events.time), [t for t, _, _ in ref], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(list(p.events.work), [w for _, _, w in ref], atol=1e-9)


@needs_jit
@given(any_discipline(), st.integers(0, 2 ** 32 - 1), st.integers(1, 200),
       st.sampled_from([Exponential(1.0), Deterministic(1.0), Pareto(1.5, 1 / 3)]))
def test_jit_matches_python(d, seed, n, sd):
    arr = _random_arrivals(seed, n, sd)
    horizon = float(arr[0][-1]) + 20.0
    grid = np.linspace(0, horizon, 257)
    a = simulate(d, None, 0.0, horizon, grid, arrivals=arr, backend="python")
    b = simulate(d, None, 0.0, horizon, grid, arrivals=arr, backend="jit")
    assert np.array_equal(a.queue, b.queue)
    assert np.array_equal(a.workload, b.workload)
    assert a.event_count == b.event_count
    assert a.final_state == b.final_state


@needs_jit
@given(any_discipline(), st.integers(0, 2 ** 32 - 1))
def test_cycles_jit_matches_python(d, seed):
    sd = HyperExp.balanced(1.0, 4.0)
    a = busy_cycles(d, sd, 0.8, 300, np.random.default_rng(seed), backend="python")
    b = busy_cycles(d, sd, 0.8, 300, np.random.default_rng(seed), backend="jit")
    for col in ("cycle_length", "area", "max_q", "customers_served", "level_flat", "level_offsets"):
        assert np.array_equal(getattr(a, col), getattr(b, col)), col


@given(st.lists(any_discipline(), min_size=2, max_size=3), st.integers(0, 2 ** 32 - 1))
def test_workload_independent_of_discipline(ds, seed):
    arr = _random_arrivals(seed, 300, HyperExp.balanced(1.0, 4.0))
    horizon = float(arr[0][-1]) + 5.0
    grid = np.linspace(0, horizon, 1001)
    ws = [simulate(d, None, 0.0, horizon, grid, arrivals=arr).workload for d in ds]
    for w in ws[1:]:
        np.testing.assert_allclose(w, ws[0], rtol=0, atol=1e-9)


@given(any_discipline(), st.integers(0, 2 ** 32 - 1))
def test_queue_moves_by_one(d, seed):
    arr = _random_arrivals(seed, 100)
    p = simulate(d, None, 0.0, float(arr[0][-1]) + 30, [], arrivals=arr, log_events=True)
    q = np.array(p.events.queue_length)
    assert np.all(np.abs(np.diff(np.concatenate([[0], q]))) == 1)
    assert q.min() >= 0
    kinds = np.array(p.events.kind)
    assert np.array_equal(np.diff(np.concatenate([[0], q])), kinds)


# --- busy cycles ---------------------------------------------------------------

def test_busy_cycles_mm1_oracles():
    c = busy_cycles(PS, Exponential(1.0), 0.5, 200000, np.random.default_rng(6))
    served = c.customers_served
    assert abs(served.mean() - 2.0) < 4 * served.std() / math.sqrt(served.size)
    # E[Q] = rho / (1 - rho) = 1 via the ratio estimator
    num, den = c.area, c.cycle_length
    est = num.sum() / den.sum()
    z = num - est * den
    se = math.sqrt(np.mean(z ** 2) / len(c)) / den.mean()
    assert abs(est - 1.0) < 4 * se


def test_cycle_invariants():
    c = busy_cycles(TABLE3, Pareto.with_mean(1.5, 1.0), 0.7, 2000, np.random.default_rng(8))
    assert len(c) == 2000
    assert np.all(c.max_q >= 1) and np.all(c.cycle_length > 0)
    busy = c.cycle_length - c.time_at_most(0)
    assert np.all(c.area >= busy - 1e-9)
    np.testing.assert_allclose(c.time_at_least(0), c.cycle_length, rtol=0, atol=1e-9)
    np.testing.assert_allclose([x.level_time.sum() for x in c[:50]], c.cycle_length[:50], rtol=0, atol=1e-9)
    levels = np.arange(c.level_matrix(200).shape[1])
    np.testing.assert_allclose(c.level_matrix(200) @ levels, c.area, rtol=1e-9)


def test_cycle_batch_round_trip():
    c = busy_cycles(PS, Exponential(1.0), 0.6, 100, np.random.default_rng(9))
    again = CycleBatch.from_cycles(list(c))
    for col in ("cycle_length", "area", "max_q", "level_flat", "level_offsets"):
        assert np.array_equal(getattr(c, col), getattr(again, col))
    both = CycleBatch.concat([c, again])
    assert len(both) == 200
    assert np.array_equal(both[150].level_time, c[50].level_time)
    assert c[-1].max_q == c.max_q[-1]


def test_busy_cycles_rejects_unstable():
    with pytest.raises(UnstableConfigError, match="rho"):
        busy_cycles(PS, Exponential(1.0), 1.0, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        busy_cycles(PS, Exponential(1.0), 0.5, 0, np.random.default_rng(0))


def test_rescaled_grid():
    g = engine.rescaled_grid(2.0, 0.01, 100.0)
    assert g.size == 201 and g[0] == 0.0 and g[-1] == pytest.approx(200.0)
