"""Service-time laws: sampling, exact moments, tail function and the
heavy-tail time constant ``c_r``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import lambertw


class UnsupportedRegimeError(ValueError):
    """Raised when an operation needs a finite second moment (or a heavy tail) it does not have."""


class _Infinite:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()
"""Marker returned as the second moment of infinite-variance laws."""


class ServiceDistribution:
    kind: str = ""

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def second_moment(self) -> float | _Infinite:
        raise NotImplementedError

    @property
    def has_finite_variance(self) -> bool:
        return self.second_moment is not INFINITE

    def tail(self, x):
        """Survival function P(S > x)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


def moments(sd: ServiceDistribution) -> tuple[float, float | _Infinite]:
    return sd.mean, sd.second_moment


def equilibrium_residual_mean(sd: ServiceDistribution) -> float:
    """Mean of the stationary residual (equilibrium) law, E[S^2] / (2 E[S])."""
    s2 = sd.second_moment
    if s2 is INFINITE:
        raise UnsupportedRegimeError(f"{sd!r} has infinite second moment")
    return s2 / (2.0 * sd.mean)


def sample(sd: ServiceDistribution, rng: np.random.Generator, size: int | None = None):
    return sd.sample(rng, size)


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    m: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        _check_positive(m=self.m)

    @property
    def mean(self):
        return self.m

    @property
    def second_moment(self):
        return 2.0 * self.m ** 2

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, np.exp(-np.maximum(x, 0.0) / self.m))

    def sample(self, rng, size=None):
        return rng.exponential(self.m, size)

    def to_config(self):
        return {"kind": self.kind, "mean": self.m}


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    m: float = 1.0
    kind = "deterministic"

    def __post_init__(self):
        _check_positive(m=self.m)

    @property
    def mean(self):
        return self.m

    @property
    def second_moment(self):
        return self.m ** 2

    def tail(self, x):
        return np.where(np.asarray(x, dtype=float) < self.m, 1.0, 0.0)

    def sample(self, rng, size=None):
        if size is None:
            return self.m
        return np.full(size, self.m)

    def to_config(self):
        return {"kind": self.kind, "mean": self.m}


@dataclass(frozen=True)
class Erlang(ServiceDistribution):
    """Sum of ``k`` exponential phases with total mean ``m``."""

    k: int = 2
    m: float = 1.0
    kind = "erlang"

    def __post_init__(self):
        _check_positive(m=self.m)
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"Erlang needs a positive integer k, got {self.k}")

    @property
    def mean(self):
        return self.m

    @property
    def second_moment(self):
        return self.m ** 2 * (self.k + 1) / self.k

    def tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        y = x * self.k / self.m
        term = np.ones_like(y)
        total = np.ones_like(y)
        for j in range(1, self.k):
            term = term * y / j
            total = total + term
        return np.exp(-y) * total

    def sample(self, rng, size=None):
        return rng.gamma(self.k, self.m / self.k, size)

    def to_config(self):
        return {"kind": self.kind, "k": self.k, "mean": self.m}


@dataclass(frozen=True)
class HyperExp(ServiceDistribution):
    """Mixture of exponentials: phase ``j`` chosen with probability ``probs[j]``."""

    probs: tuple[float, ...] = (0.5, 0.5)
    means: tuple[float, ...] = (0.5, 1.5)
    kind = "hyperexp"

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if len(self.probs) != len(self.means) or not self.probs:
            raise ValueError("probs and means must be nonempty and of equal length")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        _check_positive(**{f"means[{j}]": m for j, m in enumerate(self.means)})

    @classmethod
    def balanced(cls, mean: float, scv: float) -> "HyperExp":
        """Two-phase hyperexponential with balanced means and squared coefficient of variation ``scv`` > 1."""
        if scv <= 1:
            raise ValueError("a hyperexponential needs scv > 1")
        p = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
        return cls((p, 1.0 - p), (mean / (2 * p), mean / (2 * (1 - p))))

    @property
    def mean(self):
        return float(np.dot(self.probs, self.means))

    @property
    def second_moment(self):
        return float(2.0 * np.dot(self.probs, np.square(self.means)))

    def tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return sum(p * np.exp(-x / m) for p, m in zip(self.probs, self.means))

    def sample(self, rng, size=None):
        phase = rng.choice(len(self.probs), size=size, p=self.probs)
        return rng.exponential(1.0, size) * np.asarray(self.means)[phase]

    def to_config(self):
        return {"kind": self.kind, "probs": list(self.probs), "means": list(self.means)}


@dataclass(frozen=True)
class Pareto(ServiceDistribution):
    """Pareto law with tail ``(x / xmin) ** -alpha`` on ``[xmin, inf)``."""

    alpha: float = 1.5
    xmin: float = 1.0
    kind = "pareto"

    def __post_init__(self):
        _check_positive(xmin=self.xmin)
        if not self.alpha > 1:
            raise ValueError(f"Pareto needs alpha > 1 for a finite mean, got {self.alpha}")

    @classmethod
    def with_mean(cls, alpha: float, mean: float) -> "Pareto":
        return cls(alpha, mean * (alpha - 1.0) / alpha)

    @property
    def mean(self):
        return self.alpha * self.xmin / (self.alpha - 1.0)

    @property
    def second_moment(self):
        if self.alpha <= 2:
            return INFINITE
        return self.alpha * self.xmin ** 2 / (self.alpha - 2.0)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x < self.xmin, 1.0, (np.maximum(x, self.xmin) / self.xmin) ** -self.alpha)

    def inverse_tail(self, u):
        """Return x with P(S > x) = u, for u in (0, 1]."""
        return self.xmin * np.asarray(u, dtype=float) ** (-1.0 / self.alpha)

    def sample(self, rng, size=None):
        return self.inverse_tail(1.0 - rng.random(size))

    def to_config(self):
        return {"kind": self.kind, "alpha": self.alpha, "xmin": self.xmin}


@dataclass(frozen=True)
class ParetoLog(ServiceDistribution):
    """Regularly varying law with slowly varying factor ``1 + log(x / xmin)``.

    Tail: ``min(1, (1 + log(x/xmin)) * (x/xmin) ** -alpha)`` for x >= xmin.
    """

    alpha: float = 1.5
    xmin: float = 1.0
    kind = "paretolog"

    def __post_init__(self):
        _check_positive(xmin=self.xmin)
        if not self.alpha > 1:
            raise ValueError(f"ParetoLog needs alpha > 1 for a finite mean, got {self.alpha}")

    @classmethod
    def with_mean(cls, alpha: float, mean: float) -> "ParetoLog":
        a = alpha - 1.0
        return cls(alpha, mean / (1.0 + 1.0 / a + 1.0 / a ** 2))

    @property
    def mean(self):
        a = self.alpha - 1.0
        return self.xmin * (1.0 + 1.0 / a + 1.0 / a ** 2)

    @property
    def second_moment(self):
        if self.alpha <= 2:
            return INFINITE
        b = self.alpha - 2.0
        return self.xmin ** 2 * (1.0 + 2.0 * (1.0 / b + 1.0 / b ** 2))

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        y = np.maximum(x, self.xmin) / self.xmin
        t = (1.0 + np.log(y)) * y ** -self.alpha
        return np.where(x < self.xmin, 1.0, np.minimum(1.0, t))

    def inverse_tail(self, u):
        # (1 + log y) y^-alpha = u, solved on the y >= 1 branch via Lambert W_{-1}
        u = np.asarray(u, dtype=float)
        a = self.alpha
        w = lambertw(-a * u * math.exp(-a), k=-1).real
        z = np.maximum(-w / a, 1.0)
        return self.xmin * np.exp(z - 1.0)

    def sample(self, rng, size=None):
        return self.inverse_tail(1.0 - rng.random(size))

    def to_config(self):
        return {"kind": self.kind, "alpha": self.alpha, "xmin": self.xmin}


class CrSolution(NamedTuple):
    c_r: float
    at_boundary: bool


HEAVY_TAILED = (Pareto, ParetoLog)


def solve_cr(sd: ServiceDistribution, r: float, rtol: float = 1e-15) -> CrSolution:
    """Smallest ``x >= xmin`` with ``x * P(S > x) <= 1/r``.

    The map ``x -> x P(S > x)`` is unimodal for both heavy-tailed laws; a
    doubling search brackets the crossing on its decreasing branch and
    bisection refines it.
    """
    if not isinstance(sd, HEAVY_TAILED):
        raise UnsupportedRegimeError(f"c_r needs a Pareto-type law, got {type(sd).__name__}")
    if not 1.0 < sd.alpha < 2.0:
        raise UnsupportedRegimeError(f"c_r scaling requires alpha in (1,2), got {sd.alpha}")
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    target = 1.0 / r

    def g(x):
        return x * float(sd.tail(x))

    lo = sd.xmin
    if g(lo) <= target:
        return CrSolution(lo, True)
    hi = 2.0 * lo
    while g(hi) > target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) <= target:
            hi = mid
        else:
            lo = mid
    return CrSolution(hi, False)


def pareto_cr_closed_form(alpha: float, xmin: float, r: float) -> float:
    return xmin * (r * xmin) ** (1.0 / (alpha - 1.0))


def from_config(spec: dict) -> ServiceDistribution:
    """Build a law from ``{"kind": ..., ...}``; every kind accepts ``mean``."""
    kind = str(spec.get("kind", "")).lower()
    mean = spec.get("mean")
    if kind == "exponential":
        return Exponential(float(mean if mean is not None else 1.0))
    if kind == "deterministic":
        return Deterministic(float(mean if mean is not None else 1.0))
    if kind == "erlang":
        return Erlang(int(spec.get("k", 2)), float(mean if mean is not None else 1.0))
    if kind == "hyperexp":
        if "probs" in spec:
            hx = HyperExp(tuple(spec["probs"]), tuple(spec["means"]))
            if mean is not None:
                f = float(mean) / hx.mean
                hx = HyperExp(hx.probs, tuple(m * f for m in hx.means))
            return hx
        return HyperExp.balanced(float(mean if mean is not None else 1.0), float(spec.get("scv", 4.0)))
    if kind in ("pareto", "paretolog"):
        cls = Pareto if kind == "pareto" else ParetoLog
        alpha = float(spec.get("alpha", 1.5))
        if mean is not None:
            return cls.with_mean(alpha, float(mean))
        return cls(alpha, float(spec.get("xmin", 1.0)))
    raise ValueError(f"unknown service kind {kind!r}")


def _check_positive(**kw):
    for name, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")
