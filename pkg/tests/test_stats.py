import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from symq import stats
from symq.disciplines import Discipline
from symq.engine import CycleStats, busy_cycles
from symq.service import Exponential
from symq.stats import (Ecdf, InsufficientDataError, chi_square_pmf, ks_one_sample, ks_two_sample,
                        regenerative_ci, tail_curve)

PS = Discipline.ps()
samples = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60)


def exp_cdf(x):
    return -np.expm1(-np.maximum(np.asarray(x, dtype=float), 0.0))


@pytest.fixture(scope="module")
def mm1_half():
    return busy_cycles(PS, Exponential(1.0), 0.5, 100000, np.random.default_rng(21))


# --- ECDF and KS -----------------------------------------------------------------

@given(samples, st.floats(-2e3, 2e3), st.floats(-2e3, 2e3))
def test_ecdf_is_a_cdf(xs, a, b):
    e = Ecdf(xs)
    assert e(-np.inf) == 0.0 and e(np.inf) == 1.0
    lo, hi = sorted((a, b))
    assert e(lo) <= e(hi)
    # right-continuous: value at a support point includes its mass
    assert e(max(xs)) == 1.0


def test_ecdf_weights_and_ties():
    e = Ecdf([1.0, 1.0, 2.0], weights=[1.0, 1.0, 2.0])
    assert e.x.tolist() == [1.0, 2.0]
    assert e(1.5) == pytest.approx(0.5)
    with pytest.raises(InsufficientDataError):
        Ecdf([])


def test_ks_two_sample_examples():
    assert ks_two_sample([1, 2, 3], [1, 2, 3]).statistic == 0.0
    assert ks_two_sample([1, 2], [3, 4]).statistic == 1.0
    assert ks_two_sample([1, 3], [2, 4]).statistic == 0.5
    with pytest.raises(InsufficientDataError):
        ks_two_sample([], [1.0])


def test_ks_one_sample_examples():
    assert ks_one_sample([0.0], exp_cdf).statistic == 1.0
    with pytest.raises(InsufficientDataError):
        ks_one_sample([], exp_cdf)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # scipy internals at tiny n
@given(samples, samples)
def test_ks_two_sample_matches_scipy(a, b):
    ours = ks_two_sample(a, b)
    ref = sps.ks_2samp(a, b, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
    n = len(a) * len(b) / (len(a) + len(b))
    assert ours.p_value == pytest.approx(sps.kstwobign.sf(math.sqrt(n) * ours.statistic), abs=1e-12)
    assert 0 <= ours.p_value <= 1


@given(st.lists(st.floats(0, 50), min_size=1, max_size=60))
def test_ks_one_sample_matches_scipy(a):
    ours = ks_one_sample(a, exp_cdf)
    ref = sps.kstest(a, exp_cdf)
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)


@given(samples, samples, st.randoms(use_true_random=False))
def test_tests_are_permutation_invariant(a, b, rnd):
    a2, b2 = a[:], b[:]
    rnd.shuffle(a2)
    rnd.shuffle(b2)
    assert ks_two_sample(a, b).statistic == ks_two_sample(a2, b2).statistic
    assert ks_one_sample(a, exp_cdf).statistic == ks_one_sample(a2, exp_cdf).statistic
    ia = np.abs(np.round(a)).astype(int) % 7
    ib = np.abs(np.round(b)).astype(int) % 7
    ca, cb = stats.counts_by_k(ia), stats.counts_by_k(ib)
    ca2 = stats.counts_by_k(np.abs(np.round(a2)).astype(int) % 7)
    assert np.array_equal(ca, ca2)
    assert chi_square_pmf(ca, cb).statistic == chi_square_pmf(ca2, cb).statistic


def test_geometric_exp_ks_closed_form():
    for rho in (0.3, 0.8, 0.9, 29 / 30):
        h = 1 - rho
        x = np.linspace(0, 60 / h, 400001)
        geo = 1 - rho ** (np.floor(x / h) + 1)
        brute = np.max(np.abs(geo - exp_cdf(x)))
        assert stats.geometric_exp_ks(rho) == pytest.approx(brute, abs=1e-4)
        assert stats.geometric_exp_ks(rho) >= brute - 1e-12
    for r in (5, 10, 30):
        assert stats.geometric_exp_ks(1 - 1 / r) == pytest.approx(1 / r, rel=1e-12)


# --- chi-square -----------------------------------------------------------------

def test_chi_square_examples():
    assert chi_square_pmf([5, 7, 9], [5, 7, 9]).statistic == 0.0
    r = chi_square_pmf([10, 0], [0, 10])
    assert r.statistic == pytest.approx(20.0)
    assert r.rejected_at[0.01]
    deg = chi_square_pmf([50], [40])
    assert deg.degenerate and not deg.rejected_at[0.05]
    with pytest.raises(InsufficientDataError):
        chi_square_pmf([0, 0], [1, 2])


@given(st.lists(st.integers(0, 60), min_size=2, max_size=12),
       st.lists(st.integers(0, 60), min_size=2, max_size=12))
def test_chi_square_matches_contingency(a, b):
    if sum(a) == 0 or sum(b) == 0:
        return
    pa, pb = stats.pool_tail(a, b)
    assert pa.sum() == sum(a) and pb.sum() == sum(b)
    r = chi_square_pmf(a, b)
    if r.degenerate:
        return
    tot = pa + pb
    assert np.all(tot * sum(a) / (sum(a) + sum(b)) >= 5)
    stat, p, dof, _ = sps.chi2_contingency(np.vstack([pa, pb]), correction=False)
    assert r.statistic == pytest.approx(stat, rel=1e-9, abs=1e-9)
    assert r.df == dof


def test_json_shape():
    r = chi_square_pmf([30, 20, 10], [28, 22, 10])
    assert set(r.to_json()) == {"stat", "p", "reject01", "reject05"}
    assert '"reject01": false' in r.dumps()


@pytest.mark.parametrize("which", ["ks_one", "ks_two", "chi_square"])
def test_calibration_500_null_repeats(which):
    """False-rejection rate at 1% and 5% within 2 percentage points of nominal."""
    rng = np.random.default_rng({"ks_one": 101, "ks_two": 102, "chi_square": 103}[which])
    rej = np.zeros(2)
    for _ in range(500):
        if which == "ks_one":
            r = ks_one_sample(rng.exponential(1.0, 1000), exp_cdf)
        elif which == "ks_two":
            r = ks_two_sample(rng.normal(size=800), rng.normal(size=1200))
        else:
            a = rng.geometric(0.3, 1000) - 1
            b = rng.geometric(0.3, 1000) - 1
            r = chi_square_pmf(stats.counts_by_k(a), stats.counts_by_k(b))
        rej += [r.rejected_at[0.01], r.rejected_at[0.05]]
    rate = rej / 500
    assert abs(rate[0] - 0.01) <= 0.02
    assert abs(rate[1] - 0.05) <= 0.02


# --- regenerative estimation ---------------------------------------------------------

def test_regenerative_mean_queue_mm1(mm1_half):
    est = regenerative_ci(mm1_half, lambda c: c.area)
    assert abs(est.estimate - 1.0) < 4 * est.se
    assert est.n_cycles == len(mm1_half)
    vec = regenerative_ci(mm1_half, mm1_half.area)
    assert vec.estimate == est.estimate and vec.se == pytest.approx(est.se, rel=1e-9)


def test_regenerative_tail_probabilities(mm1_half):
    for k in range(1, 6):
        est = stats.stationary_tail_ci(mm1_half, k)
        assert abs(est.estimate - 0.5 ** k) < 4 * est.se


def test_jackknife_matches_delta_method(mm1_half):
    num, den = mm1_half.area, mm1_half.cycle_length
    est = stats.jackknife_ratio(num, den)
    z = num - est.estimate * den
    delta_se = math.sqrt(np.sum(z ** 2)) / den.sum()
    assert est.se == pytest.approx(delta_se, rel=0.02)


def test_regenerative_identical_cycles_zero_width():
    c = [CycleStats(2.0, 1.0, 1, 1, np.array([1.0, 1.0]))] * 40
    est = regenerative_ci(c, lambda x: x.area)
    assert est.estimate == 0.5 and est.upper - est.lower == 0.0


def test_regenerative_needs_30_cycles():
    c = [CycleStats(2.0, 1.0, 1, 1, np.array([1.0, 1.0]))] * 29
    with pytest.raises(InsufficientDataError):
        regenerative_ci(c, lambda x: x.area)
    with pytest.raises(ValueError):
        regenerative_ci(c * 2, lambda x: x.area, per="bogus")


@given(st.integers(0, 2 ** 32 - 1), st.randoms(use_true_random=False))
def test_regenerative_ci_permutation_invariant(seed, rnd):
    c = list(busy_cycles(PS, Exponential(1.0), 0.6, 60, np.random.default_rng(seed)))
    a = regenerative_ci(c, lambda x: x.area)
    rnd.shuffle(c)
    b = regenerative_ci(c, lambda x: x.area)
    assert a.estimate == pytest.approx(b.estimate, rel=1e-12)
    assert a.se == pytest.approx(b.se, rel=1e-9)


def test_per_cycle_max_tail(mm1_half):
    est = regenerative_ci(mm1_half, (mm1_half.max_q >= 3).astype(float), per="cycle")
    exact = stats.mm1_cycle_max_tail(0.5, 3)
    assert abs(est.estimate - exact) < 4 * est.se


def test_regenerative_pmf_sums_to_one(mm1_half):
    rp = stats.regenerative_pmf(mm1_half, 6)
    assert rp.pmf.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(rp.pmf[:6], 0.5 * 0.5 ** np.arange(6), atol=4 * np.sqrt(np.diag(rp.cov))[:6].max())
    # Zᵀ1 = 0 for each cycle, so the covariance rows sum to zero
    np.testing.assert_allclose(rp.cov.sum(axis=1), 0.0, atol=1e-12)


def test_chi_square_regenerative_power_and_size():
    rng = np.random.default_rng(33)
    a = busy_cycles(PS, Exponential(1.0), 0.7, 30000, rng)
    b = busy_cycles(PS, Exponential(1.0), 0.7, 30000, rng)
    c = busy_cycles(PS, Exponential(1.0), 0.75, 30000, rng)
    assert not stats.chi_square_regenerative(a, b).rejected_at[0.01]
    assert stats.chi_square_regenerative(a, c).rejected_at[0.01]


# --- busy-cycle maximum tails ----------------------------------------------------------

def _absorption_oracle(rho, k):
    """P(hit k before 0 from 1) for the embedded M/M/1 walk, by a linear solve."""
    if k <= 1:
        return 1.0
    p = rho / (1 + rho)     # up-step probability
    m = k - 1               # unknowns h(1)..h(k-1)
    A = np.eye(m)
    rhs = np.zeros(m)
    for j in range(m):
        if j + 1 < m:
            A[j, j + 1] -= p
        else:
            rhs[j] += p     # h(k) = 1
        if j - 1 >= 0:
            A[j, j - 1] -= 1 - p
    return float(np.linalg.solve(A, rhs)[0])


@pytest.mark.parametrize("rho", [0.3, 0.5, 0.9])
def test_mm1_cycle_max_closed_form(rho):
    for k in range(1, 25):
        assert stats.mm1_cycle_max_tail(rho, k) == pytest.approx(_absorption_oracle(rho, k), rel=1e-9)


def test_tail_curve(mm1_half):
    pts = tail_curve(mm1_half, [0, 1, 2, 4, 8, 1e6])
    assert pts[0].prob == 1.0
    assert pts[-1].prob == 0.0 and pts[-1].lower == 0.0
    assert pts[-1].upper == pytest.approx(1 - 0.05 ** (1 / len(mm1_half)))
    for tp in pts[1:-1]:
        exact = stats.mm1_cycle_max_tail(0.5, int(tp.x) + 1)
        assert abs(tp.prob - exact) < 4 * math.sqrt(exact * (1 - exact) / len(mm1_half))
        assert tp.lower < tp.prob < tp.upper
    assert pts[1].log_x == 0.0 and pts[-1].log_prob == -np.inf


def _pairs(rng, n, c):
    x = rng.poisson(3.0, n)
    y = np.where(rng.random(n) < c, x, rng.poisson(3.0, n))
    return np.column_stack([x, y])


def test_chi_square_joint_null_calibration():
    rng = np.random.default_rng(11)
    ps = [stats.chi_square_joint(_pairs(rng, 2000, 0.3), _pairs(rng, 2000, 0.3)).p_value for _ in range(200)]
    # same marginals and same dependence: rejections at 5% near nominal
    assert np.mean(np.array(ps) < 0.05) < 0.1
    assert sps.kstest(ps, "uniform").pvalue > 1e-3


def test_chi_square_joint_sees_dependence_not_marginals():
    rng = np.random.default_rng(12)
    a, b = _pairs(rng, 20000, 0.2), _pairs(rng, 20000, 0.4)
    for j in (0, 1):
        assert stats.chi_square_pmf(stats.counts_by_k(a[:, j]), stats.counts_by_k(b[:, j])).p_value > 1e-3
    assert stats.chi_square_joint(a, b).p_value < 1e-6


def test_chi_square_joint_shape_check():
    with pytest.raises(ValueError):
        stats.chi_square_joint(np.zeros(5), np.zeros(5))
