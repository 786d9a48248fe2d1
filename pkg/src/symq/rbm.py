"""Reflected Brownian motion started at zero: transition law, Monte Carlo
paths, and the parameters induced by a queue in diffusion scaling.

Parameter derivation (queue -> RBM), for service mean ``m`` and second
moment ``s2``:

* the workload in diffusion scaling is approximately an RBM with drift
  ``-beta`` and variance ``s2 / m`` (Poisson arrivals at rate ~ 1/m with
  works of second moment ``s2``);
* under state-space collapse the queue length is the workload times
  ``2m / s2`` (each customer carries, on average, an equilibrium residual
  of mean ``s2 / 2m``).

Scaling an RBM by ``c`` multiplies the drift by ``c`` and the variance by
``c**2``, hence ``mu = -2 m beta / s2`` and ``sigma2 = 4 m / s2``. The
stationary mean ``sigma2 / (2|mu|) = 1 / beta`` agrees with the unit-mean
exponential limit of the scaled stationary queue length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .service import INFINITE, UnsupportedRegimeError


@dataclass(frozen=True)
class RBMParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def stationary_mean(self) -> float:
        if self.mu >= 0:
            raise ValueError("stationary law needs mu < 0")
        return self.sigma2 / (2.0 * abs(self.mu))

    def stationary_cdf(self, x):
        x = np.asarray(x, dtype=float)
        rate = 2.0 * abs(self.mu) / self.sigma2
        return np.where(x < 0, 0.0, -np.expm1(-rate * np.maximum(x, 0.0)))


def rbm_transition_cdf(x, t: float, p: RBMParams):
    """P(R(t) <= x) for an RBM from 0 with drift ``mu`` and variance ``sigma2``."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    x = np.asarray(x, dtype=float)
    if p.sigma2 == 0:
        return np.where(x >= max(0.0, p.mu * t), 1.0, 0.0)
    xs = np.maximum(x, 0.0)
    s = p.sigma * math.sqrt(t)
    a = ndtr((xs - p.mu * t) / s)
    b = ndtr((-xs - p.mu * t) / s)
    # exp(2 mu x / s2) * Phi(...) can be inf * 0 for large positive mu*x
    with np.errstate(over="ignore", invalid="ignore"):
        corr = np.exp(2.0 * p.mu * xs / p.sigma2) * b
    corr = np.where(np.isfinite(corr), corr, 0.0)
    out = np.clip(a - corr, 0.0, 1.0)
    return np.where(x < 0, 0.0, out)


def simulate_rbm(p: RBMParams, grid, rng: np.random.Generator, n_paths: int = 1,
                 substeps: int = 100, method: str = "refine") -> np.ndarray:
    """Sample RBM paths at ``grid`` times, shape ``(n_paths, len(grid))``.

    Each grid interval is split into ``substeps`` Gaussian increments and the
    reflection map ``R = X - min(0, min_{s<=t} X(s))`` is applied.

    ``method="refine"`` monitors the running minimum only at substep points,
    which biases R low by about ``0.58 sigma sqrt(h)`` and leaves an atom at
    zero (mass about ``1 / sqrt(pi * steps)`` at zero drift). ``method="bridge"`` draws the
    minimum of the Brownian bridge over each substep, so values at grid times
    carry no discretisation error.
    """
    if method not in ("refine", "bridge"):
        raise ValueError(f"unknown method {method!r}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing and start after 0")
    out = np.empty((n_paths, grid.size))
    x = np.zeros(n_paths)
    run_min = np.zeros(n_paths)
    step = np.empty(n_paths)
    t_prev = 0.0
    for j, tg in enumerate(grid):
        h = (tg - t_prev) / substeps
        sd = p.sigma * math.sqrt(h)
        for _ in range(substeps):
            if sd > 0:
                rng.standard_normal(n_paths, out=step)
                step *= sd
                step += p.mu * h
            else:
                step.fill(p.mu * h)
            if method == "bridge" and sd > 0:
                # min of a Brownian bridge from x to x + step over time h
                e = -2.0 * p.sigma2 * h * np.log1p(-rng.random(n_paths))
                low = x + 0.5 * (step - np.sqrt(step * step + e))
                np.minimum(run_min, low, out=run_min)
            x += step
            np.minimum(run_min, x, out=run_min)
        out[:, j] = x - run_min
        t_prev = tg
    return out


def rbm_params_from_queue(m: float, s2, beta: float) -> RBMParams:
    if s2 is INFINITE or not math.isfinite(s2):
        raise UnsupportedRegimeError("diffusion parameters need a finite second moment")
    if m <= 0 or s2 <= 0 or beta <= 0:
        raise ValueError("m, s2 and beta must be positive")
    return RBMParams(mu=-2.0 * m * beta / s2, sigma2=4.0 * m / s2)
