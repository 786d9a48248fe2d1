import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symq import scaling, stats
from symq.disciplines import Discipline
from symq.engine import QueueState, SamplePath
from symq.scaling import ScalingParams, diffusion_scale, heavy_tail_scale, lambda_r
from symq.service import Exponential, Pareto, UnsupportedRegimeError

from conftest import TABLE3

PS, LCFS = Discipline.ps(), Discipline.lcfs()


def _path(times, queue):
    times = np.asarray(times, dtype=float)
    q = np.asarray(queue)
    return SamplePath(times, q, q.astype(float), 0, QueueState())


def test_lambda_r_examples():
    assert lambda_r(10, 1, 1) == pytest.approx(0.9)
    assert lambda_r(100, 1, 1) == pytest.approx(0.99)
    assert 100 * (1 - lambda_r(100, 1, 1) * 1) == pytest.approx(1.0, rel=1e-12)


def test_lambda_r_critical_is_flagged(caplog):
    with caplog.at_level(logging.WARNING, logger="symq.scaling"):
        assert lambda_r(10, 0, 2) == 0.5
    assert "critical" in caplog.text


def test_lambda_r_errors():
    with pytest.raises(ValueError):
        lambda_r(0, 1, 1)
    with pytest.raises(ValueError):
        lambda_r(1, 2, 1)


@given(st.floats(1.0, 1e4), st.floats(0.0, 1.0), st.floats(1e-3, 1e3))
def test_lambda_r_identity(r, frac, m):
    beta = frac * r
    lam = lambda_r(r, beta, m)
    assert r * (1 - lam * m) == pytest.approx(beta, abs=1e-12 * r)


def test_diffusion_scale_examples():
    r = 30
    p = _path([0.0, r * r * 0.5, r * r * 1.0], [0, 12, 30])
    s = diffusion_scale(p, r, horizon=1.0)
    assert s.times.tolist() == [0.0, 0.5, 1.0]
    assert s.queue[0] == 0.0 and s.queue[-1] == 1.0
    const = diffusion_scale(_path([0.0, 100.0, 200.0], [10, 10, 10]), 10)
    assert np.all(const.queue == 1.0)
    with pytest.raises(ValueError, match="reach"):
        diffusion_scale(p, r, horizon=2.0)


def test_heavy_tail_scale_examples():
    c = ScalingParams.build(100, 1.0, Pareto(1.5, 1.0), heavy_tail=True).c_r
    assert c == pytest.approx(1e4, rel=1e-9)
    p = _path([0.0, c, 2 * c], [0, 100, 100])
    s = heavy_tail_scale(p, 100, c, horizon=2.0)
    assert s.times == pytest.approx([0.0, 1.0, 2.0])
    assert s.queue.tolist() == [0.0, 1.0, 1.0]


@given(st.lists(st.integers(0, 100), min_size=1, max_size=30), st.lists(st.integers(0, 100), min_size=1,
                                                                       max_size=30),
       st.floats(1.0, 100.0))
def test_rescaling_is_linear(a, b, r):
    n = min(len(a), len(b))
    t = np.arange(n, dtype=float)
    pa, pb, psum = _path(t, a[:n]), _path(t, b[:n]), _path(t, np.add(a[:n], b[:n]))
    lhs = diffusion_scale(psum, r).queue
    np.testing.assert_allclose(lhs, diffusion_scale(pa, r).queue + diffusion_scale(pb, r).queue,
                               rtol=1e-12)


def test_time_factor():
    p = ScalingParams.build(10, 1.0, Exponential(1.0))
    assert p.time_factor("diffusion") == 100
    with pytest.raises(ValueError):
        p.time_factor("heavy")
    assert p.rho == pytest.approx(0.9)


def test_single_replication_is_flagged_insufficient():
    res = scaling.transient_marginal_experiment([PS, LCFS], Exponential(1.0), 3, 1.0, 0.5, 1, seed=1)
    assert res.insufficient_data
    assert all(tr.degenerate for tr in res.tests.values())


def test_transient_marginal_rows_and_labels():
    res = scaling.transient_marginal_experiment([PS, PS, TABLE3], Exponential(1.0), 3, 1.0, 0.5, 200,
                                                seed=2)
    assert list(res.samples) == ["ps", "ps#2", "table"]
    rows = list(res.rows())
    assert {r[2] for r in rows} == {"ps", "ps#2", "table"}
    for label in res.samples:
        assert res.pmf(label).sum() == pytest.approx(1.0)
    assert len(res.tests) == 3


def test_same_discipline_twice_calibration():
    """PS vs PS with independent streams: at most 4 rejections at 1% over 100 repeats."""
    rejections = 0
    for rep in range(100):
        res = scaling.transient_marginal_experiment([PS, PS], Exponential(1.0), 3, 1.0, 0.5, 300,
                                                    seed=1000 + rep)
        rejections += res.tests[("ps", "ps#2")].rejected_at[0.01]
    assert rejections <= 4


def test_replications_do_not_depend_on_chunking(monkeypatch):
    a, wa = scaling.sample_at_times(TABLE3, Exponential(1.0), 0.8, [5.0, 10.0], 37, seed=5)
    monkeypatch.setattr(scaling, "CHUNK", 4)
    b, wb = scaling.sample_at_times(TABLE3, Exponential(1.0), 0.8, [5.0, 10.0], 37, seed=5)
    assert np.array_equal(a, b) and np.array_equal(wa, wb)
    c, _ = scaling.sample_at_times(TABLE3, Exponential(1.0), 0.8, [5.0, 10.0], 37, seed=5, threads=2)
    assert np.array_equal(a, c)


def test_stationary_limit_edge_rho_zero():
    rows = scaling.stationary_limit_experiment(PS, Exponential(1.0), [2.0], 2.0, 100, seed=1)
    assert rows[0].rho == 0.0 and rows[0].ks == 1.0
    assert rows[0].cdf.tolist() == [1.0]
    with pytest.raises(ValueError):
        scaling.stationary_limit_experiment(PS, Exponential(1.0), [5.0], 0.0, 100, seed=1)


def test_stationary_limit_rows_sorted_and_near_oracle():
    rows = scaling.stationary_limit_experiment(PS, Exponential(1.0), [10, 5], 1.0, 20000, seed=3,
                                               k_tails=(1, 2))
    assert [r.r for r in rows] == [5, 10]
    for row in rows:
        assert abs(row.ks - row.ks_oracle) < 4 * row.ks_se
        for k, est, exact in row.tails:
            assert abs(est.estimate - exact) < 4 * est.se
        assert list(row.rows())[0][0] == row.r


def test_collapse_exponential():
    res = scaling.collapse_check(PS, Exponential(1.0), 5, 1.0, 1.0, 200, seed=4)
    assert res.q_hat.shape == res.w_scaled.shape == (200,)
    assert 0 < res.correlation <= 1
    assert res.mean_abs_deviation >= 0
    with pytest.raises(UnsupportedRegimeError):
        scaling.collapse_check(PS, Pareto(1.5, 1.0), 5, 1.0, 1.0, 10, seed=4)


def test_rbm_compare_shapes():
    res = scaling.rbm_compare(PS, Exponential(1.0), 5, 1.0, 1.0, 200, seed=6)
    assert res.params.mu == -1.0 and res.params.sigma2 == 2.0
    assert res.q_hat.size == 200 and 0 <= res.test.statistic <= 1


def test_two_time_experiment():
    sd = Pareto.with_mean(1.5, 1.0)
    res = scaling.two_time_experiment([PS, LCFS], sd, 5, 1.0, 0.5, 1.0, 200, seed=7)
    assert res.samples["ps"].shape == (200, 2)
    rows = list(res.rows("lcfs"))
    assert len(rows) == 200 and rows[0][:3] == (5, 0.5, 1.0)
    s = res.summary("ps")
    assert 0 <= s["p_q2_gt_q1"] <= 1
    assert set(res.marginal_tests) == {("ps", "lcfs")}
    assert set(res.joint_tests) == {("ps", "lcfs")}
    assert 0 <= res.joint_tests[("ps", "lcfs")].p_value <= 1
    with pytest.raises(ValueError):
        scaling.two_time_experiment([PS, LCFS], sd, 5, 1.0, 1.0, 0.5, 10, seed=7)


def test_scaled_paths_start_empty():
    t, q = scaling.scaled_paths(PS, Exponential(1.0), 5, 1.0, 3, seed=8, T=1.0, step=0.1)
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0)
    assert np.all(q[:, 0] == 0)
