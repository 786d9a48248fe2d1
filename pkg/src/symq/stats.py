"""ECDFs, KS and chi-square tests, regenerative ratio estimators and
busy-cycle maximum tails."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

from .engine import CycleBatch, CycleStats

LEVELS = (0.01, 0.05)
POOL_MIN_EXPECTED = 5.0


class InsufficientDataError(ValueError):
    pass


@dataclass
class TestResult:
    statistic: float
    p_value: float
    n1: int
    n2: int | None = None
    df: int | None = None
    degenerate: bool = False

    __test__ = False  # not a pytest class

    @property
    def rejected_at(self) -> dict[float, bool]:
        return {a: (not self.degenerate) and self.p_value < a for a in LEVELS}

    def to_json(self) -> dict:
        return {
            "stat": self.statistic,
            "p": self.p_value,
            "reject01": self.rejected_at[0.01],
            "reject05": self.rejected_at[0.05],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


class Ecdf:
    """Right-continuous empirical CDF, optionally weighted."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float).ravel()
        if weights is None:
            weights = np.ones_like(values)
        weights = np.asarray(weights, dtype=float).ravel()
        if values.size == 0:
            raise InsufficientDataError("empty sample")
        order = np.argsort(values, kind="stable")
        v, wt = values[order], weights[order]
        # collapse ties so each support point appears once
        self.x, idx = np.unique(v, return_index=True)
        mass = np.add.reduceat(wt, idx)
        self.total = float(wt.sum())
        self.cum = np.cumsum(mass) / self.total
        self.cum[-1] = 1.0
        self.n = values.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(self.x, x, side="right")
        out = np.where(i > 0, self.cum[np.maximum(i - 1, 0)], 0.0)
        return out

    def left_limits(self) -> np.ndarray:
        return np.concatenate([[0.0], self.cum[:-1]])


def ks_distance(ecdf: Ecdf, cdf: Callable) -> float:
    """sup_x |ECDF(x) - F(x)| for a continuous F, including left limits at jumps."""
    f = np.asarray(cdf(ecdf.x), dtype=float)
    return float(max(np.max(ecdf.cum - f), np.max(f - ecdf.left_limits()), 0.0))


def _kolmogorov_p(d: float, n_eff: float) -> float:
    return float(min(1.0, max(0.0, special.kolmogorov(math.sqrt(n_eff) * d))))


def ks_one_sample(a, cdf: Callable) -> TestResult:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise InsufficientDataError("empty sample")
    d = ks_distance(Ecdf(a), cdf)
    return TestResult(d, _kolmogorov_p(d, a.size), int(a.size))


def ks_two_sample(a, b) -> TestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("empty sample")
    pts = np.union1d(a, b)
    fa = np.searchsorted(np.sort(a), pts, side="right") / a.size
    fb = np.searchsorted(np.sort(b), pts, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    n_eff = a.size * b.size / (a.size + b.size)
    return TestResult(d, _kolmogorov_p(d, n_eff), int(a.size), int(b.size))


def counts_by_k(samples) -> np.ndarray:
    """Integer samples -> counts indexed by value (0..max)."""
    s = np.asarray(samples)
    if s.size == 0:
        return np.zeros(1, dtype=np.int64)
    return np.bincount(s.astype(np.int64))


def pool_tail(a, b, min_expected: float = POOL_MIN_EXPECTED) -> tuple[np.ndarray, np.ndarray]:
    """Merge cells from the largest k downward until every expected count is >= ``min_expected``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = max(a.size, b.size)
    a = np.pad(a, (0, k - a.size))
    b = np.pad(b, (0, k - b.size))
    na, nb = a.sum(), b.sum()
    share_a, share_b = na / (na + nb), nb / (na + nb)

    def expected_ok(ca, cb):
        tot = ca + cb
        return tot * share_a >= min_expected and tot * share_b >= min_expected

    cells_a, cells_b = list(a), list(b)
    while len(cells_a) > 1 and not expected_ok(cells_a[-1], cells_b[-1]):
        ca, cb = cells_a.pop(), cells_b.pop()
        cells_a[-1] += ca
        cells_b[-1] += cb
    # sparse interior cells are merged into their upper neighbour
    i = len(cells_a) - 2
    while i >= 0 and len(cells_a) > 1:
        if not expected_ok(cells_a[i], cells_b[i]):
            ca, cb = cells_a.pop(i), cells_b.pop(i)
            cells_a[i] += ca
            cells_b[i] += cb
        i -= 1
    return np.array(cells_a), np.array(cells_b)


def chi_square_pmf(a, b) -> TestResult:
    """Two-sample chi-square homogeneity test on count vectors indexed by k."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = int(round(a.sum())), int(round(b.sum()))
    if n1 == 0 or n2 == 0:
        raise InsufficientDataError("both samples need at least one observation")
    pa, pb = pool_tail(a, b)
    if pa.size < 2:
        return TestResult(0.0, 1.0, n1, n2, 0, degenerate=True)
    obs = np.vstack([pa, pb])
    tot = obs.sum(axis=0)
    expected = np.outer(obs.sum(axis=1), tot) / obs.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(expected > 0, (obs - expected) ** 2 / expected, 0.0)
    stat = float(terms.sum())
    df = pa.size - 1
    return TestResult(stat, float(sps.chi2.sf(stat, df)), n1, n2, df)


def chi_square_joint(a, b, bins: int = 6) -> TestResult:
    """Two-sample chi-square test on the joint law of paired samples.

    ``a`` and ``b`` have shape (n, 2). Each coordinate is cut at the pooled
    quantiles into at most ``bins`` classes; sparse cells are merged as in
    :func:`chi_square_pmf`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 2 or b.shape[1] != 2:
        raise ValueError("need paired samples of shape (n, 2)")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InsufficientDataError("empty sample")
    both = np.vstack([a, b])
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    edges = [np.unique(np.quantile(both[:, j], qs)) for j in (0, 1)]
    width = edges[1].size + 1

    def cells(x):
        return np.digitize(x[:, 0], edges[0], right=True) * width + np.digitize(x[:, 1], edges[1], right=True)

    size = (edges[0].size + 1) * width
    return chi_square_pmf(np.bincount(cells(a), minlength=size), np.bincount(cells(b), minlength=size))


# ---------------------------------------------------------------------------
# regenerative estimation


@dataclass
class RatioEstimate:
    estimate: float
    se: float
    lower: float
    upper: float
    n_cycles: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


def _as_array(cycles, f) -> np.ndarray:
    if callable(f):
        return np.array([f(c) for c in cycles], dtype=float)
    return np.asarray(f, dtype=float)


def jackknife_ratio(num: np.ndarray, den: np.ndarray, z: float = 1.959963984540054) -> RatioEstimate:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    S, L = num.sum(), den.sum()
    est = S / L
    loo = (S - num) / (L - den)
    var = (n - 1) / n * np.sum((loo - loo.mean()) ** 2)
    se = math.sqrt(max(var, 0.0))
    return RatioEstimate(float(est), se, float(est - z * se), float(est + z * se), n)


def regenerative_ci(cycles: Sequence[CycleStats], f, *, per: str = "time",
                    min_cycles: int = 30) -> RatioEstimate:
    """Ratio estimator sum(f) / sum(cycle length) with a 95% jackknife interval.

    ``f`` is a callable on :class:`CycleStats` or a per-cycle array. With
    ``per="cycle"`` the denominator is the cycle count instead, which
    estimates per-cycle expectations such as P(max_q >= x).
    """
    if len(cycles) < min_cycles:
        raise InsufficientDataError(f"need >= {min_cycles} cycles, got {len(cycles)}")
    num = _as_array(cycles, f)
    if per == "time":
        den = CycleBatch.from_cycles(cycles).cycle_length
    elif per == "cycle":
        den = np.ones(len(cycles))
    else:
        raise ValueError(f"per must be 'time' or 'cycle', got {per!r}")
    return jackknife_ratio(num, den)


def level_time_matrix(cycles: Sequence[CycleStats], kmax: int) -> np.ndarray:
    """Per-cycle time at levels 0..kmax-1, with column kmax holding time at >= kmax."""
    return CycleBatch.from_cycles(cycles).level_matrix(kmax)


def stationary_pmf(cycles: Sequence[CycleStats]) -> np.ndarray:
    """Time-average pmf of the queue length from regeneration cycles."""
    tot = CycleBatch.from_cycles(cycles).level_totals()
    return tot / tot.sum()


def stationary_tail_ci(cycles: Sequence[CycleStats], k: int) -> RatioEstimate:
    """P(Q >= k) in stationarity with a regenerative jackknife interval."""
    return regenerative_ci(cycles, CycleBatch.from_cycles(cycles).time_at_least(k))


@dataclass
class RegenerativePmf:
    pmf: np.ndarray        # pooled cells; the last one is a tail cell
    cov: np.ndarray        # asymptotic covariance of the estimate
    n_cycles: int
    n_eff: float           # Kish effective sample size of the cycle weights

    def expected_counts(self) -> np.ndarray:
        return self.pmf * self.n_eff


def regenerative_pmf(cycles: Sequence[CycleStats], kmax: int) -> RegenerativePmf:
    """Stationary pmf on cells 0..kmax-1 and ``>= kmax`` with its ratio-estimator covariance."""
    if len(cycles) < 30:
        raise InsufficientDataError("need >= 30 cycles")
    X = level_time_matrix(cycles, kmax)
    L = X.sum(axis=1)
    p = X.sum(axis=0) / L.sum()
    Z = X - np.outer(L, p)
    cov = Z.T @ Z / L.sum() ** 2
    n_eff = L.sum() ** 2 / np.sum(L ** 2)
    return RegenerativePmf(p, cov, len(cycles), float(n_eff))


def chi_square_regenerative(a: Sequence[CycleStats], b: Sequence[CycleStats],
                            min_expected: float = POOL_MIN_EXPECTED) -> TestResult:
    """Homogeneity test for two stationary pmfs estimated from independent cycle sets.

    Cells are pooled from the top until each sample has an expected count of
    at least ``min_expected`` (counts measured in effective sample size). The
    statistic is the Wald form ``d' (Ca + Cb)^-1 d`` over all cells but the
    last, asymptotically chi-square with ``cells - 1`` degrees of freedom.
    """
    a = CycleBatch.from_cycles(a)
    b = CycleBatch.from_cycles(b)
    kmax = int(max(a.max_q.max(), b.max_q.max())) + 1
    ra = regenerative_pmf(a, kmax)
    rb = regenerative_pmf(b, kmax)
    k = kmax
    while k > 1:
        tail_a = ra.pmf[k:].sum() * ra.n_eff
        tail_b = rb.pmf[k:].sum() * rb.n_eff
        if min(tail_a, tail_b) >= min_expected:
            break
        k -= 1
    ra = regenerative_pmf(a, k)
    rb = regenerative_pmf(b, k)
    d = (ra.pmf - rb.pmf)[:-1]
    C = (ra.cov + rb.cov)[:-1, :-1]
    if d.size == 0:
        return TestResult(0.0, 1.0, len(a), len(b), 0, degenerate=True)
    stat = float(d @ np.linalg.pinv(C) @ d)
    df = d.size
    return TestResult(stat, float(sps.chi2.sf(stat, df)), len(a), len(b), df)


# ---------------------------------------------------------------------------
# busy-cycle maxima


@dataclass
class TailPoint:
    x: float
    prob: float
    lower: float
    upper: float

    @property
    def log_x(self) -> float:
        return math.log(self.x) if self.x > 0 else -math.inf

    @property
    def log_prob(self) -> float:
        return math.log(self.prob) if self.prob > 0 else -math.inf


def tail_curve(cycles: Sequence[CycleStats], x_grid, conf: float = 0.95) -> list[TailPoint]:
    """P(max_q > x) per busy cycle with Clopper-Pearson intervals (one-sided at 0 and 1)."""
    m = CycleBatch.from_cycles(cycles).max_q
    n = m.size
    alpha = 1.0 - conf
    out = []
    for x in np.asarray(x_grid, dtype=float):
        k = int(np.sum(m > x))
        if k == 0:
            lo, hi = 0.0, 1.0 - alpha ** (1.0 / n)
        elif k == n:
            lo, hi = alpha ** (1.0 / n), 1.0
        else:
            lo = float(sps.beta.ppf(alpha / 2, k, n - k + 1))
            hi = float(sps.beta.ppf(1 - alpha / 2, k + 1, n - k))
        out.append(TailPoint(float(x), k / n, lo, hi))
    return out


def mm1_cycle_max_tail(rho: float, k: int) -> float:
    """P(max_q >= k) for one M/M/1 busy period: gambler's ruin from level 1."""
    if k <= 1:
        return 1.0
    a = 1.0 / rho
    if a == 1.0:
        return 1.0 / k
    return (a - 1.0) / (a ** k - 1.0)


def geometric_exp_ks(rho: float, kmax: int | None = None) -> float:
    """sup_x |P((1-rho)Q <= x) - (1 - e^-x)| for Q geometric with P(Q >= k) = rho^k."""
    h = 1.0 - rho
    if h <= 0:
        raise ValueError("rho must be < 1")
    if kmax is None:
        kmax = int(50.0 / h) + 10
    k = np.arange(kmax + 1)
    at_jump = np.exp(-k * h) - rho ** (k + 1)          # G(kh) - F(kh)
    before_next = np.exp(-(k + 1) * h) - rho ** (k + 1)  # G - F just below (k+1)h
    return float(max(np.max(np.abs(at_jump)), np.max(np.abs(before_next))))
