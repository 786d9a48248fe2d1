"""Heavy-traffic harnesses.

Arrival rates follow ``lambda_r = (1 - beta / r) / m`` so that
``r (1 - rho_r) = beta``. Two rescalings are provided: diffusion scaling
``Q(r^2 t) / r`` and heavy-tail scaling ``Q(c_r t) / r`` where ``c_r`` solves
``c_r P(S > c_r) = 1 / r``. Every experiment draws each replication from its
own stream ``(seed, discipline index, replication index)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import engine, stats
from ._parallel import chunks, pmap, stream
from .disciplines import Discipline
from .rbm import RBMParams, rbm_params_from_queue, rbm_transition_cdf
from .service import ServiceDistribution, UnsupportedRegimeError, solve_cr

log = logging.getLogger(__name__)

CHUNK = 500


@dataclass(frozen=True)
class ScalingParams:
    r: float
    beta: float
    m: float
    lambda_r: float
    c_r: float | None = None

    @property
    def rho(self) -> float:
        return self.lambda_r * self.m

    @classmethod
    def build(cls, r: float, beta: float, sd: ServiceDistribution,
              heavy_tail: bool = False) -> "ScalingParams":
        c = solve_cr(sd, r).c_r if heavy_tail else None
        return cls(r, beta, sd.mean, lambda_r(r, beta, sd.mean), c)

    def time_factor(self, regime: str) -> float:
        if regime == "diffusion":
            return self.r ** 2
        if regime == "heavy":
            if self.c_r is None:
                raise ValueError("heavy-tail scaling needs c_r")
            return self.c_r
        raise ValueError(f"unknown regime {regime!r}")


def lambda_r(r: float, beta: float, m: float) -> float:
    """Arrival rate with ``r (1 - lambda_r m) = beta``."""
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if beta > r:
        raise ValueError(f"beta={beta} > r={r} gives a negative arrival rate")
    if beta <= 0:
        log.warning("beta=%g: rho_r >= 1, the system is critical or overloaded", beta)
    return (1.0 - beta / r) / m


@dataclass
class ScaledPath:
    times: np.ndarray
    queue: np.ndarray
    workload: np.ndarray


def _rescale(path: engine.SamplePath, space: float, time: float,
             horizon: float | None) -> ScaledPath:
    if horizon is not None:
        need = horizon * time
        if path.times.size == 0 or path.times[-1] < need * (1 - 1e-12):
            raise ValueError(f"observation grid ends at {path.times[-1] if path.times.size else None}, "
                             f"needs to reach {need}")
    return ScaledPath(path.times / time, path.queue / space, path.workload / space)


def diffusion_scale(path: engine.SamplePath, r: float, horizon: float | None = None) -> ScaledPath:
    """``(t_k / r^2, Q(t_k) / r)`` at every grid point."""
    return _rescale(path, r, r * r, horizon)


def heavy_tail_scale(path: engine.SamplePath, r: float, c_r: float,
                     horizon: float | None = None) -> ScaledPath:
    """``(t_k / c_r, Q(t_k) / r)`` at every grid point."""
    return _rescale(path, r, c_r, horizon)


def _labels(disciplines: Sequence[Discipline]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for d in disciplines:
        seen[d.name] = seen.get(d.name, 0) + 1
        out.append(d.name if seen[d.name] == 1 else f"{d.name}#{seen[d.name]}")
    return out


def _sample_times(d, sd, lam, times, seed, key, lo, hi):
    """Queue length and workload at ``times`` for replications lo..hi-1 (each from empty)."""
    horizon = times[-1]
    q = np.empty((hi - lo, len(times)), dtype=np.int64)
    w = np.empty((hi - lo, len(times)))
    for j, i in enumerate(range(lo, hi)):
        p = engine.simulate(d, sd, lam, horizon, times, stream(seed, *key, i))
        q[j] = p.queue
        w[j] = p.workload
    return q, w


def sample_at_times(d: Discipline, sd: ServiceDistribution, lam: float, times: Sequence[float],
                    replications: int, seed: int, key: tuple[int, ...] = (0,),
                    threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Independent replications from empty; returns (queue, workload) arrays of shape (reps, len(times))."""
    times = [float(t) for t in times]
    parts = pmap(_sample_times,
                 [(d, sd, lam, times, seed, key, lo, hi) for lo, hi in chunks(replications, CHUNK)],
                 threads)
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


@dataclass
class MarginalResult:
    params: ScalingParams
    t: float
    regime: str
    samples: dict[str, np.ndarray]            # raw queue lengths Q(scale * t)
    tests: dict[tuple[str, str], stats.TestResult]
    insufficient_data: bool = False

    def pmf(self, label: str) -> np.ndarray:
        c = stats.counts_by_k(self.samples[label])
        return c / c.sum()

    def rows(self):
        """CSV rows ``r,t,discipline,k,pmf``."""
        for label in self.samples:
            for k, p in enumerate(self.pmf(label)):
                yield (self.params.r, self.t, label, k, p)


def transient_marginal_experiment(disciplines: Sequence[Discipline], sd: ServiceDistribution,
                                  r: float, beta: float, t: float, replications: int, seed: int,
                                  *, regime: str = "diffusion", threads: int = 1) -> MarginalResult:
    """Law of the rescaled queue length at one fixed time for several disciplines.

    Every discipline gets its own independent replications started from
    empty; all pairs are compared with a chi-square homogeneity test.
    """
    params = ScalingParams.build(r, beta, sd, heavy_tail=(regime == "heavy"))
    raw_t = params.time_factor(regime) * t
    labels = _labels(disciplines)
    samples = {}
    for idx, (label, d) in enumerate(zip(labels, disciplines)):
        q, _ = sample_at_times(d, sd, params.lambda_r, [raw_t], replications, seed, (idx,), threads)
        samples[label] = q[:, 0]
    tests = {}
    for a, b in combinations(labels, 2):
        tests[(a, b)] = stats.chi_square_pmf(stats.counts_by_k(samples[a]), stats.counts_by_k(samples[b]))
    insufficient = replications < 2 or any(tr.degenerate for tr in tests.values())
    return MarginalResult(params, t, regime, samples, tests, insufficient)


@dataclass
class StationaryRow:
    r: float
    rho: float
    x: np.ndarray              # support points (1 - rho) k
    cdf: np.ndarray            # regenerative estimate of P((1-rho) Q <= x)
    ks: float                  # distance of the estimate to Exp(1)
    ks_se: float               # jackknife standard error of the CDF at the maximising point
    ks_oracle: float           # exact geometric-vs-exponential distance
    tails: list[tuple[int, stats.RatioEstimate, float]] = field(default_factory=list)
    n_cycles: int = 0

    def rows(self):
        """CSV rows ``r,x,ecdf``."""
        for x, c in zip(self.x, self.cdf):
            yield (self.r, x, c)


def _cycles_chunk(d, sd, lam, n, seed, key):
    return engine.busy_cycles(d, sd, lam, n, stream(seed, *key))


def collect_cycles(d: Discipline, sd: ServiceDistribution, lam: float, n_cycles: int, seed: int,
                   key: tuple[int, ...] = (0,), threads: int = 1,
                   chunk: int = 100000) -> engine.CycleBatch:
    """``n_cycles`` regeneration cycles, generated in independently seeded chunks."""
    parts = pmap(_cycles_chunk,
                 [(d, sd, lam, hi - lo, seed, key + (c,))
                  for c, (lo, hi) in enumerate(chunks(n_cycles, chunk))],
                 threads)
    return engine.CycleBatch.concat(parts)


def _exp_cdf(x):
    return -np.expm1(-np.maximum(np.asarray(x, dtype=float), 0.0))


def stationary_row(cycles: Sequence[engine.CycleStats], r: float, rho: float,
                   k_tails: Sequence[int] = ()) -> StationaryRow:
    pmf = stats.stationary_pmf(cycles)
    h = 1.0 - rho
    x = h * np.arange(pmf.size)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    f = _exp_cdf(x)
    left = np.concatenate([[0.0], cdf[:-1]])
    d_at = np.abs(cdf - f)
    d_left = np.abs(f - left)
    if d_at.max() >= d_left.max():
        k_star, ks = int(np.argmax(d_at)), float(d_at.max())
    else:
        k_star, ks = int(np.argmax(d_left)) - 1, float(d_left.max())
    if k_star >= 0:
        num = engine.CycleBatch.from_cycles(cycles).time_at_most(k_star)
        se = stats.regenerative_ci(cycles, num, min_cycles=2).se
    else:
        se = 0.0
    tails = [(k, stats.stationary_tail_ci(cycles, k), rho ** k) for k in k_tails]
    return StationaryRow(r, rho, x, cdf, ks, se, stats.geometric_exp_ks(rho), tails, len(cycles))


def stationary_limit_experiment(d: Discipline, sd: ServiceDistribution, r_list: Sequence[float],
                                beta: float, n_cycles: int, seed: int, *,
                                k_tails: Sequence[int] = (1, 2, 3), threads: int = 1) -> list[StationaryRow]:
    """Scaled stationary queue length ``(1 - rho_r) Q`` for each r, via regeneration cycles.

    Rows come back in increasing r with the KS distance of the estimated
    CDF to Exp(1) and the exact distance for a geometric queue length.
    """
    if beta <= 0:
        raise ValueError("beta must be positive for a stationary regime")
    rows = []
    for idx, r in enumerate(sorted(r_list)):
        lam = lambda_r(r, beta, sd.mean)
        rho = lam * sd.mean
        if lam == 0:
            # no arrivals: Q is identically zero
            ks = stats.ks_distance(stats.Ecdf([0.0]), _exp_cdf)
            rows.append(StationaryRow(r, 0.0, np.array([0.0]), np.array([1.0]), ks, 0.0,
                                      stats.geometric_exp_ks(0.0)))
            continue
        cycles = collect_cycles(d, sd, lam, n_cycles, seed, (idx,), threads)
        rows.append(stationary_row(cycles, r, rho, k_tails))
    return rows


@dataclass
class CollapseResult:
    r: float
    t: float
    q_hat: np.ndarray
    w_scaled: np.ndarray
    correlation: float
    mean_abs_deviation: float


def collapse_check(d: Discipline, sd: ServiceDistribution, r: float, beta: float, t: float,
                   replications: int, seed: int, threads: int = 1) -> CollapseResult:
    """Pairs ``(Q(r^2 t)/r, W(r^2 t)/r * 2m/E[S^2])`` from independent replications."""
    if not sd.has_finite_variance:
        raise UnsupportedRegimeError("state-space collapse check needs a finite second moment")
    params = ScalingParams.build(r, beta, sd)
    raw_t = params.time_factor("diffusion") * t
    q, w = sample_at_times(d, sd, params.lambda_r, [raw_t], replications, seed, (0,), threads)
    q_hat = q[:, 0] / r
    w_scaled = w[:, 0] / r * (2.0 * sd.mean / sd.second_moment)
    if np.std(q_hat) > 0 and np.std(w_scaled) > 0:
        corr = float(np.corrcoef(q_hat, w_scaled)[0, 1])
    else:
        corr = float("nan")
    return CollapseResult(r, t, q_hat, w_scaled, corr, float(np.mean(np.abs(q_hat - w_scaled))))


@dataclass
class RBMComparison:
    r: float
    t: float
    params: RBMParams
    q_hat: np.ndarray
    test: stats.TestResult


def rbm_compare(d: Discipline, sd: ServiceDistribution, r: float, beta: float, t: float,
                replications: int, seed: int, threads: int = 1) -> RBMComparison:
    """KS distance between ``Q(r^2 t)/r`` samples and the RBM marginal with queue-derived parameters."""
    p = rbm_params_from_queue(sd.mean, sd.second_moment, beta)
    params = ScalingParams.build(r, beta, sd)
    raw_t = params.time_factor("diffusion") * t
    q, _ = sample_at_times(d, sd, params.lambda_r, [raw_t], replications, seed, (0,), threads)
    q_hat = q[:, 0] / r
    test = stats.ks_one_sample(q_hat, lambda x: rbm_transition_cdf(x, t, p))
    return RBMComparison(r, t, p, q_hat, test)


@dataclass
class TwoTimeResult:
    params: ScalingParams
    t1: float
    t2: float
    regime: str
    samples: dict[str, np.ndarray]            # raw (Q(t1'), Q(t2')) pairs, shape (reps, 2)
    marginal_tests: dict[tuple[str, str], tuple[stats.TestResult, stats.TestResult]]
    increment_tests: dict[tuple[str, str], stats.TestResult]
    joint_tests: dict[tuple[str, str], stats.TestResult]

    def scaled(self, label: str) -> np.ndarray:
        return self.samples[label] / self.params.r

    def summary(self, label: str) -> dict:
        s = self.scaled(label)
        q1, q2 = s[:, 0], s[:, 1]
        corr = float(np.corrcoef(q1, q2)[0, 1]) if q1.std() > 0 and q2.std() > 0 else float("nan")
        return {
            "mean_q1": float(q1.mean()), "mean_q2": float(q2.mean()),
            "corr": corr,
            "p_q2_gt_q1": float(np.mean(q2 > q1)),
            "p_q2_eq_q1": float(np.mean(q2 == q1)),
            "mean_abs_increment": float(np.mean(np.abs(q2 - q1))),
            "cov": float(np.mean((q1 - q1.mean()) * (q2 - q2.mean()))),
        }

    def rows(self, label: str):
        """CSV rows ``r,t1,t2,q1,q2`` (rescaled values)."""
        for q1, q2 in self.scaled(label):
            yield (self.params.r, self.t1, self.t2, q1, q2)


def two_time_experiment(disciplines: Sequence[Discipline], sd: ServiceDistribution, r: float,
                        beta: float, t1: float, t2: float, replications: int, seed: int, *,
                        regime: str = "heavy", threads: int = 1) -> TwoTimeResult:
    """Joint samples of the rescaled queue length at two times, per discipline.

    Single-time marginals are compared pairwise (chi-square at t1 and at t2);
    the joint laws are compared through the increment ``Q(t2) - Q(t1)`` and
    through a binned two-dimensional chi-square test.
    """
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    params = ScalingParams.build(r, beta, sd, heavy_tail=(regime == "heavy"))
    f = params.time_factor(regime)
    labels = _labels(disciplines)
    samples = {}
    for idx, (label, d) in enumerate(zip(labels, disciplines)):
        q, _ = sample_at_times(d, sd, params.lambda_r, [f * t1, f * t2], replications, seed, (idx,), threads)
        samples[label] = q
    marg, inc, joint = {}, {}, {}
    for a, b in combinations(labels, 2):
        marg[(a, b)] = tuple(
            stats.chi_square_pmf(stats.counts_by_k(samples[a][:, j]), stats.counts_by_k(samples[b][:, j]))
            for j in (0, 1)
        )
        da = samples[a][:, 1] - samples[a][:, 0]
        db = samples[b][:, 1] - samples[b][:, 0]
        lo = min(da.min(), db.min())
        inc[(a, b)] = stats.chi_square_pmf(stats.counts_by_k(da - lo), stats.counts_by_k(db - lo))
        joint[(a, b)] = stats.chi_square_joint(samples[a], samples[b])
    return TwoTimeResult(params, t1, t2, regime, samples, marg, inc, joint)


def scaled_paths(d: Discipline, sd: ServiceDistribution, r: float, beta: float, replications: int,
                 seed: int, *, regime: str = "diffusion", T: float = 2.0, step: float = 0.01,
                 key: tuple[int, ...] = (0,), threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled queue-length paths on the grid ``0, step, ..., T`` (rescaled time)."""
    params = ScalingParams.build(r, beta, sd, heavy_tail=(regime == "heavy"))
    f = params.time_factor(regime)
    grid = engine.rescaled_grid(T, step, f)
    q, _ = sample_at_times(d, sd, params.lambda_r, grid, replications, seed, key, threads)
    return grid / f, q / r
